"""Proposal corpus machinery: typed documents, tokenization, vocabulary,
JSONL ingestion, optional pretrained-embedding import, and a synthetic
corpus generator that makes every experiment reproducible at desk scale.

Corpus file format: one JSON object per line,
``{"id": 7, "documents": [{"type": "title", "text": "..."}], "labels": ["A", "A01"]}``.
Text is kept raw; tokenization happens at load/encode time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .taxonomy import LabelPath, Taxonomy

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


@dataclass
class Document:
    doc_type: str
    tokens: list[str]

    @classmethod
    def from_text(cls, doc_type: str, text: str, mode: str = "latin") -> "Document":
        return cls(doc_type, tokenize(text, mode))


@dataclass
class Proposal:
    documents: list[Document]
    gold_path: LabelPath | None = None
    pid: int | None = None

    def __post_init__(self):
        if not self.documents:
            raise ValueError("a proposal needs at least one document")
        types = [d.doc_type for d in self.documents]
        if len(set(types)) != len(types):
            raise ValueError(f"duplicate document types in proposal: {types}")


def tokenize(text: str, mode: str = "latin") -> list[str]:
    """Deterministic segmentation.

    latin: alphanumeric runs become tokens, every other non-space
    character is its own token. char: each non-space character is a
    token (for scripts without word boundaries).
    """
    if mode == "char":
        return [c for c in text if not c.isspace()]
    if mode != "latin":
        raise ValueError(f"unknown tokenizer mode '{mode}'")
    tokens = []
    word = []
    for c in text:
        if c.isalnum() or c == "_":
            word.append(c)
            continue
        if word:
            tokens.append("".join(word))
            word = []
        if not c.isspace():
            tokens.append(c)
    if word:
        tokens.append("".join(word))
    return tokens


class Vocabulary:
    """Token ids: 0 pad, 1 unk, then one type token per document type,
    then words in sorted order (so the map is independent of corpus
    order). Type tokens use angle-bracket symbols the tokenizer cannot
    produce, keeping them disjoint from word ids.
    """

    def __init__(self, doc_types: list[str], words: list[str]):
        self.doc_types = tuple(sorted(doc_types))
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN]
        self.type_ids = {}
        for t in self.doc_types:
            self.type_ids[t] = len(self.id_to_token)
            self.id_to_token.append(f"<type:{t}>")
        self._first_word_id = len(self.id_to_token)
        self.id_to_token.extend(sorted(set(words)))
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}

    def __len__(self):
        return len(self.id_to_token)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def word_id(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def type_id(self, doc_type: str) -> int:
        if doc_type not in self.type_ids:
            raise ValueError(
                f"document type '{doc_type}' not in vocabulary (knows {list(self.doc_types)})"
            )
        return self.type_ids[doc_type]

    def to_dict(self) -> dict:
        return {
            "doc_types": list(self.doc_types),
            "words": self.id_to_token[self._first_word_id :],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["doc_types"], d["words"])


def build_vocabulary(proposals: list[Proposal]) -> Vocabulary:
    """Vocabulary from the training split only; other splits map unseen
    words to the unknown id."""
    types = sorted({d.doc_type for p in proposals for d in p.documents})
    words = {tok for p in proposals for d in p.documents for tok in d.tokens}
    return Vocabulary(types, sorted(words))


@dataclass
class EncodedDocument:
    ids: np.ndarray  # int64, length max_seq_len, [type, words..., pad...]
    n_real: int  # type token + non-pad words


def encode_document(doc: Document, vocab: Vocabulary, max_seq_len: int) -> EncodedDocument:
    if max_seq_len < 1:
        raise ValueError("max_seq_len must allow at least the type token")
    ids = [vocab.type_id(doc.doc_type)]
    ids.extend(vocab.word_id(t) for t in doc.tokens[: max_seq_len - 1])
    n_real = len(ids)
    ids.extend([vocab.pad_id] * (max_seq_len - n_real))
    return EncodedDocument(np.array(ids, dtype=np.int64), n_real)


def encode_proposal(p: Proposal, vocab: Vocabulary, max_seq_len: int) -> list[EncodedDocument]:
    """Per-document id sequences: [type_token, word ids...], truncated to
    max_seq_len (the type token survives truncation) and padded."""
    return [encode_document(d, vocab, max_seq_len) for d in p.documents]


def decode_ids(ids, vocab: Vocabulary) -> list[str]:
    """Tokens for the ids, skipping pad; unknown id renders as the unk symbol."""
    return [vocab.id_to_token[i] for i in ids if i != vocab.pad_id]


# -- corpus files -------------------------------------------------------


def save_corpus(proposals: list[Proposal], taxonomy: Taxonomy, path: str | Path):
    with open(path, "w", encoding="utf-8") as f:
        for p in proposals:
            rec = {
                "id": p.pid,
                "documents": [
                    {"type": d.doc_type, "text": " ".join(d.tokens)} for d in p.documents
                ],
            }
            if p.gold_path is not None:
                rec["labels"] = taxonomy.codes(p.gold_path)
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_corpus(path: str | Path, taxonomy: Taxonomy, mode: str = "latin") -> list[Proposal]:
    proposals = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: bad record: {e}") from None
            docs = [Document.from_text(d["type"], d["text"], mode) for d in rec["documents"]]
            gold = None
            if rec.get("labels"):
                codes = rec["labels"]
                gold = taxonomy.path_from_codes(
                    codes, terminated=len(codes) < taxonomy.max_depth
                )
            proposals.append(Proposal(docs, gold, rec.get("id")))
    return proposals


# -- pretrained embedding import ----------------------------------------


def import_embeddings(path: str | Path, vocab: Vocabulary, table) -> list[int]:
    """Overwrite matching vocabulary rows of an embedding table from a
    whitespace-separated text file ("token v1 .. vh" per line).

    Returns the replaced row ids. Rows for tokens missing from the file
    keep their random initialization.
    """
    h = table.data.shape[1]
    replaced = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != h:
                raise ValueError(
                    f"{path}:{lineno}: embedding has dimension {len(values)}, model uses {h}"
                )
            idx = vocab.token_to_id.get(token)
            if idx is None:
                continue
            table.data[idx] = np.array([float(v) for v in values])
            replaced.append(idx)
    return replaced


# -- synthetic corpus ----------------------------------------------------


@dataclass
class GeneratorConfig:
    """Knobs for the synthetic benchmark corpus.

    branching[0] is the number of level-1 labels; branching[i] the number
    of children under each level-i node. Each node owns
    ``signature_tokens`` dedicated vocabulary words; a proposal's tokens
    are drawn from its gold path's signatures with probability
    ``signal_strength`` and from a shared noise pool otherwise.
    ``short_path_fraction`` of gold paths stop before the deepest level,
    exercising stop prediction.
    """

    branching: tuple[int, ...] = (4, 3, 2)
    vocab_size: int = 200
    signature_tokens: int = 3
    signal_strength: float = 0.95
    short_path_fraction: float = 0.25
    doc_lengths: dict[str, int] = field(
        default_factory=lambda: {"title": 6, "keywords": 5, "fields": 4, "abstract": 12}
    )
    n_train: int = 2000
    n_valid: int = 250
    n_test: int = 250

    def level_sizes(self) -> list[int]:
        sizes = []
        total = 1
        for b in self.branching:
            total *= b
            sizes.append(total)
        return sizes


def _synthetic_taxonomy(config: GeneratorConfig) -> Taxonomy:
    """Discipline-style codes: level 1 is A, B, ...; deeper levels append
    two digits per level (A01, A0102, ...)."""
    specs = []
    parents = [None]
    codes = [""]
    for level, width in enumerate(config.branching, start=1):
        next_codes = []
        for parent in codes:
            for j in range(width):
                if level == 1:
                    code = chr(ord("A") + j)
                else:
                    code = f"{parent}{j + 1:02d}"
                specs.append((code, level, parent if level > 1 else None))
                next_codes.append(code)
        codes = next_codes
    return Taxonomy.from_specs(specs)


def generate_synthetic(config: GeneratorConfig, seed: int):
    """Build (taxonomy, train, valid, test) deterministically from seed."""
    taxonomy = _synthetic_taxonomy(config)
    n_nodes = sum(taxonomy.level_size(k) for k in range(1, taxonomy.max_depth + 1))
    need = n_nodes * config.signature_tokens
    if config.vocab_size <= need:
        raise ValueError(
            f"vocab_size {config.vocab_size} cannot give {n_nodes} labels distinct "
            f"{config.signature_tokens}-token signatures (needs > {need})"
        )
    width = len(str(config.vocab_size))
    pool = [f"w{i:0{width}d}" for i in range(config.vocab_size)]
    signatures: dict[int, list[str]] = {}
    cursor = 0
    for level in range(1, taxonomy.max_depth + 1):
        for node in taxonomy.level_nodes(level):
            signatures[node.id] = pool[cursor : cursor + config.signature_tokens]
            cursor += config.signature_tokens
    noise_pool = pool[cursor:]

    rng = np.random.default_rng(seed)
    H = taxonomy.max_depth

    def sample_path() -> LabelPath:
        depth = H
        if H > 1 and rng.random() < config.short_path_fraction:
            depth = int(rng.integers(1, H))
        labels = []
        parent = taxonomy.root.id
        for _ in range(depth):
            kids = taxonomy.children(parent)
            parent = kids[int(rng.integers(len(kids)))].id
            labels.append(parent)
        return LabelPath(tuple(labels), terminated=depth < H)

    def sample_proposal(pid: int) -> Proposal:
        gold = sample_path()
        path_sigs = [signatures[l] for l in gold.labels]
        docs = []
        for doc_type in sorted(config.doc_lengths):
            n = config.doc_lengths[doc_type]
            tokens = []
            for _ in range(n):
                if rng.random() < config.signal_strength:
                    sig = path_sigs[int(rng.integers(len(path_sigs)))]
                    tokens.append(sig[int(rng.integers(len(sig)))])
                else:
                    tokens.append(noise_pool[int(rng.integers(len(noise_pool)))])
            docs.append(Document(doc_type, tokens))
        return Proposal(docs, gold, pid)

    total = config.n_train + config.n_valid + config.n_test
    proposals = [sample_proposal(i) for i in range(total)]
    train = proposals[: config.n_train]
    valid = proposals[config.n_train : config.n_train + config.n_valid]
    test = proposals[config.n_train + config.n_valid :]
    return taxonomy, train, valid, test
