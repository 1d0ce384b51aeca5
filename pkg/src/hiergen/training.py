"""Mini-batch Adam training with teacher forcing.

Deterministic under a fixed seed: model init, batch shuffling, and
dropout all draw from seeded generators.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Adam
from .corpus import Proposal, Vocabulary, build_vocabulary
from .model import ModelConfig, ProposalClassifier
from .taxonomy import Taxonomy


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch_index: int, loss_value: float):
        self.snapshot = {"epoch": epoch, "batch": batch_index, "loss": loss_value}
        super().__init__(
            f"loss became non-finite ({loss_value}) at epoch {epoch}, batch {batch_index}"
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    weight_decay: float = 1e-5
    warmup_steps: int = 1000
    epochs: int = 10
    seed: int = 0
    start_level: int = 1


def train(
    train_set: list[Proposal],
    model_config: ModelConfig,
    train_config: TrainConfig,
    taxonomy: Taxonomy,
    vocab: Vocabulary | None = None,
    valid_set: list[Proposal] | None = None,
    log_path: str | Path | None = None,
) -> tuple[ProposalClassifier, list[dict]]:
    """Train a fresh model; returns it plus one metrics record per epoch.

    Records carry mean train loss, per-level teacher-forced loss/accuracy,
    and validation loss when a validation set is given. ``log_path``
    mirrors the records as JSON lines. With a validation set, the
    returned model carries the parameters of the best-validation epoch
    rather than the last one.
    """
    if not train_set:
        raise ValueError("empty training corpus")
    if vocab is None:
        vocab = build_vocabulary(train_set)
    model = ProposalClassifier(model_config, vocab, taxonomy, seed=train_config.seed)
    optimizer = Adam(
        model.parameters(),
        lr=train_config.learning_rate,
        weight_decay=train_config.weight_decay,
        warmup_steps=train_config.warmup_steps,
    )
    shuffle_rng = np.random.default_rng(train_config.seed + 1)
    dropout_rng = np.random.default_rng(train_config.seed + 2)
    use_dropout = model_config.dropout_p > 0.0

    history: list[dict] = []
    best_valid = float("inf")
    best_state: dict[str, np.ndarray] | None = None
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, train_config.epochs + 1):
            started = time.perf_counter()
            order = shuffle_rng.permutation(len(train_set))
            epoch_loss = 0.0
            n_batches = 0
            for b0 in range(0, len(order), train_config.batch_size):
                batch = [train_set[i] for i in order[b0 : b0 + train_config.batch_size]]
                loss = model.loss(
                    batch,
                    start_level=train_config.start_level,
                    dropout_rng=dropout_rng if use_dropout else None,
                )
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(epoch, n_batches, value)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                epoch_loss += value
                n_batches += 1

            record = {
                "epoch": epoch,
                "train_loss": epoch_loss / n_batches,
                "seconds": round(time.perf_counter() - started, 3),
            }
            level_stats = model.teacher_forced_level_stats(
                train_set[: min(len(train_set), 200)]
            )
            record["level_loss"] = {
                str(k): round(nll / n, 6) for k, (nll, _, n) in level_stats.items()
            }
            record["level_acc"] = {
                str(k): round(correct / n, 6) for k, (_, correct, n) in level_stats.items()
            }
            if valid_set:
                record["valid_loss"] = model.loss(valid_set).item()
                if record["valid_loss"] < best_valid:
                    best_valid = record["valid_loss"]
                    best_state = {
                        name: p.data.copy() for name, p in model.parameters().items()
                    }
            history.append(record)
            if log_file:
                # timing is machine noise; keep the log reproducible per seed
                logged = {k: v for k, v in record.items() if k != "seconds"}
                log_file.write(json.dumps(logged, sort_keys=True) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    if best_state is not None:
        for name, p in model.parameters().items():
            p.data[...] = best_state[name]
    return model, history


def write_curves_csv(history: list[dict], path: str | Path):
    """Flatten the per-epoch records into a plot-friendly CSV."""
    levels = sorted({k for rec in history for k in rec.get("level_acc", {})}, key=int)
    has_valid = any("valid_loss" in r for r in history)
    cols = ["epoch", "train_loss"] + (["valid_loss"] if has_valid else [])
    cols += [f"level{k}_loss" for k in levels] + [f"level{k}_acc" for k in levels]
    lines = [",".join(cols)]
    for rec in history:
        row = [str(rec["epoch"]), f"{rec['train_loss']:.6f}"]
        if has_valid:
            row.append(f"{rec.get('valid_loss', float('nan')):.6f}")
        row += [f"{rec['level_loss'].get(k, float('nan')):.6f}" for k in levels]
        row += [f"{rec['level_acc'].get(k, float('nan')):.6f}" for k in levels]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
