"""Evaluation protocols: level-wise and overall Micro/Macro-F1 with flat
pooling, path-length sensitivity counts, reasonable-path auditing, and
the expert-knowledge sweep.

Length-mismatch convention: if the truth has a level-k label but the
prediction stopped earlier, that is a false negative for the true class;
the reverse is a false positive for the predicted class. Macro-F1
averages per-class F1 over classes with truth support only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ProposalClassifier
from .taxonomy import ACC, OTHER, STOP_EARLY, STOP_LATE, LabelPath, Taxonomy, classify_result


def _confusion(
    predictions: list[LabelPath],
    truths: list[LabelPath],
    levels: set[int] | None = None,
) -> dict[int, dict[str, int]]:
    """Per-class {tp, fp, fn} over the selected levels (all when None).

    Classes are label node ids; a path contributes its level-k label as
    one assignment at level k.
    """
    counts: dict[int, dict[str, int]] = {}

    def bump(label: int, kind: str):
        rec = counts.setdefault(label, {"tp": 0, "fp": 0, "fn": 0})
        rec[kind] += 1

    for pred, truth in zip(predictions, truths):
        depth = max(len(pred), len(truth))
        for k in range(1, depth + 1):
            if levels is not None and k not in levels:
                continue
            p = pred.labels[k - 1] if k <= len(pred) else None
            t = truth.labels[k - 1] if k <= len(truth) else None
            if p == t:
                bump(t, "tp")
            else:
                if p is not None:
                    bump(p, "fp")
                if t is not None:
                    bump(t, "fn")
    return counts


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def _micro_macro(counts: dict[int, dict[str, int]]) -> tuple[float, float]:
    tp = sum(c["tp"] for c in counts.values())
    fp = sum(c["fp"] for c in counts.values())
    fn = sum(c["fn"] for c in counts.values())
    micro = _f1(tp, fp, fn)
    supported = [c for c in counts.values() if c["tp"] + c["fn"] > 0]
    macro = (
        sum(_f1(c["tp"], c["fp"], c["fn"]) for c in supported) / len(supported)
        if supported
        else 0.0
    )
    return micro, macro


def f1_scores(
    predictions: list[LabelPath],
    truths: list[LabelPath],
    level: int | None = None,
) -> tuple[float, float]:
    """(micro, macro) F1 at one level, or pooled over all levels when
    ``level`` is None."""
    if not predictions or len(predictions) != len(truths):
        raise ValueError("need equally many predictions and truths, at least one pair")
    levels = None if level is None else {level}
    return _micro_macro(_confusion(predictions, truths, levels))


def f1_over_levels(
    predictions: list[LabelPath], truths: list[LabelPath], levels: set[int]
) -> tuple[float, float]:
    """Pooled (micro, macro) F1 restricted to a level subset."""
    if not predictions:
        raise ValueError("empty evaluation set")
    return _micro_macro(_confusion(predictions, truths, levels))


def path_sensitivity(
    predictions: list[LabelPath], truths: list[LabelPath]
) -> dict[str, int]:
    counts = {ACC: 0, STOP_LATE: 0, STOP_EARLY: 0, OTHER: 0}
    for pred, truth in zip(predictions, truths):
        counts[classify_result(pred, truth)] += 1
    return counts


def hierarchy_dependency(predictions: list[LabelPath], taxonomy: Taxonomy) -> float:
    """Fraction of predictions forming a valid parent-child chain."""
    if not predictions:
        return 0.0
    valid = sum(taxonomy.validate_path(p) for p in predictions)
    return valid / len(predictions)


@dataclass
class ExpertGridRow:
    prefix_length: int
    per_level: dict[int, tuple[float, float]]
    overall: tuple[float, float]
    remaining_overall: tuple[float, float] | None  # levels > m pooled
    evaluated: int
    skipped: int
    predictions: list[LabelPath] = field(repr=False, default_factory=list)
    truths: list[LabelPath] = field(repr=False, default_factory=list)


def expert_knowledge_sweep(
    model: ProposalClassifier,
    test_set,
    prefix_lengths: list[int],
    mode: str = "greedy",
) -> list[ExpertGridRow]:
    """For each prefix length m, condition predictions on the first m gold
    labels and score the result. Proposals whose gold path is shorter
    than m are skipped for that row (and counted)."""
    H = model.taxonomy.max_depth
    rows = []
    for m in sorted(prefix_lengths):
        preds, truths = [], []
        skipped = 0
        for p in test_set:
            if p.gold_path is None or len(p.gold_path) < m:
                skipped += 1
                continue
            prefix = list(p.gold_path.labels[:m])
            preds.append(model.predict(p, expert_prefix=prefix, mode=mode).path)
            truths.append(p.gold_path)
        if not preds:
            rows.append(ExpertGridRow(m, {}, (0.0, 0.0), None, 0, skipped))
            continue
        per_level = {k: f1_scores(preds, truths, k) for k in range(1, H + 1)}
        overall = f1_scores(preds, truths)
        remaining = (
            f1_over_levels(preds, truths, set(range(m + 1, H + 1))) if m < H else None
        )
        rows.append(
            ExpertGridRow(m, per_level, overall, remaining, len(preds), skipped, preds, truths)
        )
    return rows


@dataclass
class MetricsReport:
    n_evaluated: int
    per_level: dict[int, tuple[float, float]]
    overall: tuple[float, float]
    path_counts: dict[str, int]
    reasonable_path_rate: float
    expert_grid: list[ExpertGridRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_evaluated": self.n_evaluated,
            "per_level": {
                str(k): {"micro_f1": m, "macro_f1": M}
                for k, (m, M) in sorted(self.per_level.items())
            },
            "overall": {"micro_f1": self.overall[0], "macro_f1": self.overall[1]},
            "path_counts": self.path_counts,
            "reasonable_path_rate": self.reasonable_path_rate,
            "expert_grid": [
                {
                    "prefix_length": row.prefix_length,
                    "evaluated": row.evaluated,
                    "skipped": row.skipped,
                    "per_level": {
                        str(k): {"micro_f1": m, "macro_f1": M}
                        for k, (m, M) in sorted(row.per_level.items())
                    },
                    "overall": {
                        "micro_f1": row.overall[0],
                        "macro_f1": row.overall[1],
                    },
                    "remaining_overall": (
                        None
                        if row.remaining_overall is None
                        else {
                            "micro_f1": row.remaining_overall[0],
                            "macro_f1": row.remaining_overall[1],
                        }
                    ),
                }
                for row in self.expert_grid
            ],
        }

    def to_text(self) -> str:
        lines = [f"evaluated proposals: {self.n_evaluated}", ""]
        lines.append(f"{'level':>8}  {'micro-F1':>9}  {'macro-F1':>9}")
        for k, (micro, macro) in sorted(self.per_level.items()):
            lines.append(f"{k:>8}  {micro:>9.4f}  {macro:>9.4f}")
        lines.append(f"{'overall':>8}  {self.overall[0]:>9.4f}  {self.overall[1]:>9.4f}")
        lines.append("")
        pc = self.path_counts
        lines.append(
            "path lengths: acc={acc} sl={sl} se={se} other={other}".format(**pc)
        )
        lines.append(f"reasonable-path rate: {self.reasonable_path_rate:.4f}")
        if self.expert_grid:
            lines.append("")
            header = f"{'prefix':>7}  " + "  ".join(
                f"L{k} micro" for k in sorted(self.per_level)
            )
            lines.append(header + "  overall")
            for row in self.expert_grid:
                cells = "  ".join(
                    f"{row.per_level.get(k, (float('nan'),))[0]:>8.4f}"
                    for k in sorted(self.per_level)
                )
                lines.append(f"{row.prefix_length:>7}  {cells}  {row.overall[0]:>7.4f}")
        return "\n".join(lines) + "\n"

    def expert_grid_csv(self) -> str:
        levels = sorted(self.per_level)
        cols = ["prefix_length", "evaluated", "skipped"]
        for k in levels:
            cols += [f"level{k}_micro", f"level{k}_macro"]
        cols += ["overall_micro", "overall_macro"]
        lines = [",".join(cols)]
        for row in self.expert_grid:
            cells = [str(row.prefix_length), str(row.evaluated), str(row.skipped)]
            for k in levels:
                micro, macro = row.per_level.get(k, (float("nan"), float("nan")))
                cells += [f"{micro:.6f}", f"{macro:.6f}"]
            cells += [f"{row.overall[0]:.6f}", f"{row.overall[1]:.6f}"]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def evaluate(
    model: ProposalClassifier,
    test_set,
    mode: str = "greedy",
    expert_prefix_lengths: list[int] | None = None,
) -> MetricsReport:
    """Run the full protocol on gold-labelled proposals."""
    labelled = [p for p in test_set if p.gold_path is not None]
    if not labelled:
        raise ValueError("evaluation needs gold labels")
    preds = [model.predict(p, mode=mode).path for p in labelled]
    truths = [p.gold_path for p in labelled]
    H = model.taxonomy.max_depth
    per_level = {k: f1_scores(preds, truths, k) for k in range(1, H + 1)}
    grid = (
        expert_knowledge_sweep(model, labelled, expert_prefix_lengths, mode)
        if expert_prefix_lengths
        else []
    )
    return MetricsReport(
        n_evaluated=len(labelled),
        per_level=per_level,
        overall=f1_scores(preds, truths),
        path_counts=path_sensitivity(preds, truths),
        reasonable_path_rate=hierarchy_dependency(preds, taxonomy=model.taxonomy),
        expert_grid=grid,
    )


def write_report(report: MetricsReport, out_dir: str | Path):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    if report.expert_grid:
        (out / "expert_grid.csv").write_text(report.expert_grid_csv(), encoding="utf-8")
