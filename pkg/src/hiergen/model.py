"""The proposal classifier network.

Encoder: a word-level transformer shared across document types (pooled
at the type-token position) feeding a document-level transformer whose
output rows are the proposal views consumed by the decoder's source
attention. Decoder: label embeddings + positions through decoder blocks
with a causal self-attention mask, pooled at the last position, then a
per-level head over that level's labels plus a trailing stop slot.

Training uses teacher forcing in a single causal pass per proposal; the
causal mask makes that pass bit-equal to per-step recomputation, which
is what inference does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .blocks import (
    BlockConfig,
    DecoderBlock,
    EncoderBlock,
    PositionalEmbedding,
    causal_mask,
    padding_mask,
)
from .corpus import EncodedDocument, Proposal, Vocabulary, encode_proposal
from .taxonomy import STOP_CODE, LabelPath, Taxonomy


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    encoder_layers: int = 8
    decoder_layers: int = 1
    num_heads: int = 8
    max_seq_len: int = 50
    dropout_p: float = 0.2
    ffn_dim: int = 0  # 0 -> 4 * hidden_dim
    epsilon: float = 1e-5

    def __post_init__(self):
        for name in ("hidden_dim", "encoder_layers", "decoder_layers", "num_heads", "max_seq_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def block_config(self) -> BlockConfig:
        return BlockConfig(
            hidden_dim=self.hidden_dim,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            dropout_p=self.dropout_p,
            epsilon=self.epsilon,
        )

    def to_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "encoder_layers": self.encoder_layers,
            "decoder_layers": self.decoder_layers,
            "num_heads": self.num_heads,
            "max_seq_len": self.max_seq_len,
            "dropout_p": self.dropout_p,
            "ffn_dim": self.ffn_dim,
            "epsilon": self.epsilon,
        }


@dataclass
class LevelPrediction:
    level: int
    code: str  # chosen label code, or "<stop>"
    prob: float
    alternatives: list[tuple[str, float]]
    distribution: np.ndarray  # over that level's labels + stop slot


@dataclass
class Prediction:
    path: LabelPath
    score: float  # product of the chosen step probabilities
    steps: list[LevelPrediction] = field(default_factory=list)


class _LevelHead:
    """Two-layer projection h -> h -> |C_k| + 1; the last slot is stop."""

    def __init__(self, hidden_dim: int, n_labels: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden_dim)
        self.w1 = ad.uniform_init(rng, (hidden_dim, hidden_dim), bound)
        self.b1 = ad.uniform_init(rng, (hidden_dim,), bound)
        self.w2 = ad.uniform_init(rng, (hidden_dim, n_labels + 1), bound)
        self.b2 = ad.uniform_init(rng, (n_labels + 1,), bound)

    def parameters(self) -> dict[str, Tensor]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def forward(self, x: Tensor) -> Tensor:
        return ad.matmul(ad.relu(ad.matmul(x, self.w1) + self.b1), self.w2) + self.b2


class ProposalClassifier:
    """Full network state: embeddings, encoder stacks, decoder stack,
    per-level heads. Frozen after training; predict() is re-entrant."""

    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        taxonomy: Taxonomy,
        seed: int = 0,
    ):
        self.config = config
        self.vocab = vocab
        self.taxonomy = taxonomy
        rng = np.random.default_rng(seed)
        h = config.hidden_dim
        bound = 1.0 / math.sqrt(h)
        blk = config.block_config()

        self.word_emb = ad.uniform_init(rng, (len(vocab), h), bound)
        self.word_pos = PositionalEmbedding(config.max_seq_len, h, rng)
        self.word_encoder = [EncoderBlock(blk, rng) for _ in range(config.encoder_layers)]
        self.doc_encoder = [EncoderBlock(blk, rng) for _ in range(config.encoder_layers)]
        # label embedding row index == taxonomy node id (row 0 is the root)
        n_nodes = max(self.taxonomy.nodes) + 1
        self.label_emb = ad.uniform_init(rng, (n_nodes, h), bound)
        self.dec_pos = PositionalEmbedding(taxonomy.max_depth + 1, h, rng)
        self.decoder = [DecoderBlock(blk, rng) for _ in range(config.decoder_layers)]
        self.heads = [
            _LevelHead(h, taxonomy.level_size(k), rng)
            for k in range(1, taxonomy.max_depth + 1)
        ]

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {
            "word_emb": self.word_emb,
            "word_pos.table": self.word_pos.table,
            "label_emb": self.label_emb,
            "dec_pos.table": self.dec_pos.table,
        }
        for i, b in enumerate(self.word_encoder):
            params.update({f"word_enc.{i}.{k}": v for k, v in b.parameters().items()})
        for i, b in enumerate(self.doc_encoder):
            params.update({f"doc_enc.{i}.{k}": v for k, v in b.parameters().items()})
        for i, b in enumerate(self.decoder):
            params.update({f"dec.{i}.{k}": v for k, v in b.parameters().items()})
        for k, head in enumerate(self.heads, start=1):
            params.update({f"head.{k}.{n}": v for n, v in head.parameters().items()})
        return params

    # -- encoder -----------------------------------------------------

    def _pool_documents(self, docs: list[EncodedDocument], dropout_rng=None) -> Tensor:
        """Word-level encoding of a stack of documents in one pass:
        [n_docs, seq] ids -> [n_docs, h] type-token outputs."""
        ids = np.stack([d.ids for d in docs])
        n_docs, seq = ids.shape
        x = ad.gather_rows(self.word_emb, ids) + self.word_pos.lookup_range(seq)
        mask = np.stack([padding_mask(seq, seq, d.n_real) for d in docs])
        for block in self.word_encoder:
            x = block.forward(x, mask, dropout_rng)
        pooled = ad.narrow(x, 1, 0, 1)  # type-token position carries the document
        return ad.reshape(pooled, (n_docs, self.config.hidden_dim))

    def encode(self, p: Proposal, dropout_rng=None) -> Tensor:
        """Proposal views: one row per document. The document-level stack
        adds no positional signal; document identity rides on the type
        tokens, so document order does not matter."""
        if not p.documents:
            raise ValueError("cannot encode a proposal with no documents")
        encoded = encode_proposal(p, self.vocab, self.config.max_seq_len)
        x = self._pool_documents(encoded, dropout_rng)
        for block in self.doc_encoder:
            x = block.forward(x, None, dropout_rng)
        return x

    # -- decoder -----------------------------------------------------

    def _decoder_pass(self, label_ids: list[int], views: Tensor, dropout_rng=None) -> Tensor:
        """Run [root, ancestors...] through the decoder stack with a causal
        self-attention mask; returns all positions' final states."""
        ids = np.array([self.taxonomy.root.id] + list(label_ids), dtype=np.int64)
        s = ad.gather_rows(self.label_emb, ids) + self.dec_pos.lookup_range(len(ids))
        mask = causal_mask(len(ids))
        for block in self.decoder:
            s = block.forward(s, views, mask, dropout_rng)
        return s

    def level_logits(self, state_row: Tensor, level: int) -> Tensor:
        return self.heads[level - 1].forward(state_row)

    def decode_step(self, views: Tensor, ancestors: list[int]) -> np.ndarray:
        """Probability vector over level-k labels + stop, where
        k = len(ancestors) + 1 and ancestors is the root-anchored prefix."""
        k = len(ancestors) + 1
        if k > self.taxonomy.max_depth:
            raise ValueError(
                f"level {k} beyond taxonomy depth {self.taxonomy.max_depth}"
            )
        states = self._decoder_pass(ancestors, views)
        last = ad.narrow(states, 0, len(ancestors), 1)
        probs = ad.softmax(self.level_logits(last, k), axis=-1)
        return probs.data[0].copy()

    # -- inference -----------------------------------------------------

    def _check_prefix(self, prefix: list[int]):
        path = LabelPath(tuple(prefix))
        if not self.taxonomy.validate_path(path):
            codes = self.taxonomy.codes(path)
            raise ValueError(f"expert prefix {codes} is not a valid taxonomy path")

    def predict(
        self,
        p: Proposal,
        expert_prefix: list[int] | None = None,
        mode: str = "greedy",
        top_k: int = 5,
    ) -> Prediction:
        """Generate a label path level by level.

        greedy picks the argmax over the full level distribution (ties
        break toward the lowest index); constrained renormalizes over the
        children of the previous label plus stop, so its output always
        validates. An expert prefix fixes the leading labels and decoding
        starts below them.
        """
        if mode not in ("greedy", "constrained"):
            raise ValueError(f"unknown decode mode '{mode}'")
        prefix = list(expert_prefix or [])
        self._check_prefix(prefix)
        H = self.taxonomy.max_depth
        labels = list(prefix)
        steps: list[LevelPrediction] = []
        score = 1.0
        terminated = False
        if len(labels) >= H:
            return Prediction(LabelPath(tuple(labels), False), 1.0, [])

        views = self.encode(p)
        for k in range(len(labels) + 1, H + 1):
            dist = self.decode_step(views, labels)
            level_nodes = self.taxonomy.level_nodes(k)
            stop_idx = len(level_nodes)
            if mode == "constrained":
                parent = labels[-1] if labels else self.taxonomy.root.id
                allowed = [
                    self.taxonomy.index_in_level(c.id)
                    for c in self.taxonomy.children(parent)
                ]
                allowed.append(stop_idx)
                keep = np.zeros_like(dist)
                keep[allowed] = dist[allowed]
                dist = keep / keep.sum()
            choice = int(np.argmax(dist))
            prob = float(dist[choice])
            order = np.argsort(-dist, kind="stable")[:top_k]
            alts = [
                (
                    STOP_CODE if i == stop_idx else level_nodes[i].code,
                    float(dist[i]),
                )
                for i in order
            ]
            score *= prob
            if choice == stop_idx:
                steps.append(LevelPrediction(k, STOP_CODE, prob, alts, dist))
                terminated = True
                break
            node = level_nodes[choice]
            labels.append(node.id)
            steps.append(LevelPrediction(k, node.code, prob, alts, dist))
        return Prediction(LabelPath(tuple(labels), terminated), score, steps)

    # -- training loss -------------------------------------------------

    def loss(
        self,
        batch: list[Proposal],
        start_level: int = 1,
        dropout_rng: np.random.Generator | None = None,
        stats_out: dict | None = None,
    ) -> Tensor:
        """Mean negative log-likelihood of the gold paths under teacher
        forcing. Paths shorter than the maximum depth contribute a stop
        target one level below their last label; full-depth paths do not
        (prediction auto-terminates at the deepest level).

        Proposals are grouped by (document count, path depth) so each
        group runs as one stacked causal pass; the causal mask keeps this
        equal to per-step decoding. ``stats_out`` accumulates per-level
        [nll_sum, n_correct, n_seen] as a side channel.
        """
        if not batch:
            raise ValueError("empty batch")
        H = self.taxonomy.max_depth
        golds: list[list[int]] = []
        for p in batch:
            if p.gold_path is None:
                raise ValueError("training proposal lacks a gold path")
            gold = list(p.gold_path.labels)
            depth = len(gold)
            last_level = depth if depth == H else depth + 1
            if start_level > last_level:
                raise ValueError(
                    f"start level {start_level} beyond supervised levels of a "
                    f"depth-{depth} path"
                )
            golds.append(gold)

        groups: dict[tuple[int, int], list[int]] = {}
        for i, p in enumerate(batch):
            groups.setdefault((len(p.documents), len(golds[i])), []).append(i)

        h = self.config.hidden_dim
        total: Tensor | None = None
        for (n_docs, depth), idxs in sorted(groups.items()):
            docs = []
            for i in idxs:
                docs.extend(encode_proposal(batch[i], self.vocab, self.config.max_seq_len))
            pooled = self._pool_documents(docs, dropout_rng)
            views = ad.reshape(pooled, (len(idxs), n_docs, h))
            for block in self.doc_encoder:
                views = block.forward(views, None, dropout_rng)

            ids = np.array(
                [[self.taxonomy.root.id] + golds[i] for i in idxs], dtype=np.int64
            )
            s = ad.gather_rows(self.label_emb, ids) + self.dec_pos.lookup_range(depth + 1)
            mask = causal_mask(depth + 1)
            for block in self.decoder:
                s = block.forward(s, views, mask, dropout_rng)

            last_level = depth if depth == H else depth + 1
            rows_idx = np.arange(len(idxs))
            for k in range(start_level, last_level + 1):
                row = ad.narrow(s, 1, k - 1, 1)
                logp = ad.log_softmax(self.level_logits(row, k), axis=-1)
                n_slots = self.taxonomy.level_size(k) + 1
                targets = np.array(
                    [
                        self.taxonomy.index_in_level(golds[i][k - 1])
                        if k <= depth
                        else self.taxonomy.level_size(k)  # stop slot
                        for i in idxs
                    ]
                )
                onehot = np.zeros((len(idxs), 1, n_slots))
                onehot[rows_idx, 0, targets] = 1.0
                term = -ad.tsum(ad.mul(logp, ad.constant(onehot)))
                total = term if total is None else total + term
                if stats_out is not None:
                    data = logp.data[:, 0, :]
                    rec = stats_out.setdefault(k, [0.0, 0, 0])
                    rec[0] += float(-data[rows_idx, targets].sum())
                    rec[1] += int((data.argmax(axis=1) == targets).sum())
                    rec[2] += len(idxs)
        return total * (1.0 / len(batch))

    # -- evaluation helpers ---------------------------------------------

    def teacher_forced_level_stats(self, batch: list[Proposal]) -> dict[int, tuple[float, int, int]]:
        """Per-level (nll_sum, n_correct, n_seen) with gold ancestors given;
        cheap per-epoch progress signal."""
        stats: dict = {}
        self.loss(batch, stats_out=stats)
        return {k: tuple(v) for k, v in sorted(stats.items())}

    def fingerprint(self) -> str:
        """Content hash over config and every parameter blob, in registry order."""
        import hashlib

        digest = hashlib.sha256()
        digest.update(repr(sorted(self.config.to_dict().items())).encode())
        for name, p in self.parameters().items():
            digest.update(name.encode())
            digest.update(p.data.tobytes())
        return digest.hexdigest()
