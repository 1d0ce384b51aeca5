"""Self-describing binary checkpoints.

Layout: magic bytes + format version, a length-prefixed JSON header
(model config, vocabulary, taxonomy fingerprint, parameter manifest),
then the raw little-endian float64 parameter blobs in manifest order.
Round-trips restore every parameter bit-exactly; loading against a
taxonomy with a different fingerprint is refused.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .model import ModelConfig, ProposalClassifier
from .taxonomy import Taxonomy

MAGIC = b"HGCK"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class FingerprintMismatch(CheckpointError):
    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(
            "checkpoint was trained against a different taxonomy: "
            f"checkpoint fingerprint {expected[:16]}..., given {actual[:16]}..."
        )


def save_checkpoint(model: ProposalClassifier, path: str | Path):
    params = model.parameters()
    header = {
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_dict(),
        "taxonomy_fingerprint": model.taxonomy.fingerprint(),
        "params": [
            {"name": name, "shape": list(t.data.shape)} for name, t in params.items()
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BI", VERSION, len(header_bytes)))
        f.write(header_bytes)
        for t in params.values():
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path, taxonomy: Taxonomy) -> ProposalClassifier:
    blob = Path(path).read_bytes()
    if len(blob) < 9 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    version, header_len = struct.unpack("<BI", blob[4:9])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(blob) < 9 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[9 : 9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from None

    actual = taxonomy.fingerprint()
    if header["taxonomy_fingerprint"] != actual:
        raise FingerprintMismatch(header["taxonomy_fingerprint"], actual)

    config = ModelConfig(**header["config"])
    vocab = Vocabulary.from_dict(header["vocab"])
    model = ProposalClassifier(config, vocab, taxonomy, seed=0)
    params = model.parameters()
    manifest = header["params"]
    if [m["name"] for m in manifest] != list(params.keys()):
        raise CheckpointError(f"{path}: parameter manifest does not match the model")

    offset = 9 + header_len
    for m in manifest:
        t = params[m["name"]]
        if list(t.data.shape) != m["shape"]:
            raise CheckpointError(
                f"{path}: parameter {m['name']} has shape {m['shape']}, expected "
                f"{list(t.data.shape)}"
            )
        n = t.data.size * 8
        if offset + n > len(blob):
            raise CheckpointError(f"{path}: truncated at parameter {m['name']}")
        t.data[...] = np.frombuffer(blob[offset : offset + n], dtype="<f8").reshape(
            t.data.shape
        )
        offset += n
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return model
