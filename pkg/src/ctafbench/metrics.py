"""Classification metrics and result reporting for the benchmark runs:
confusion counts, per-class/macro F1, accuracy, rank-based AUROC, PR/ROC
curves with step-interpolated average precision, latency summaries, and the
CSV/SVG report bundle.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

BINARY_CLASSES = ("nominal", "danger")
THREE_CLASSES = ("nominal", "warning", "hazard")


def classes_for(framing: str) -> tuple[str, ...]:
    if framing == "binary":
        return BINARY_CLASSES
    if framing == "three_class":
        return THREE_CLASSES
    raise ValueError(f"unknown framing: {framing}")


@dataclass(frozen=True)
class Condition:
    model: str
    framing: str  # binary | three_class
    strategy: str  # ZS | OS | FS
    protocol: str  # direct | cot
    variant: str = ""  # ablation tag, e.g. "mask_word@0.40"

    def key(self) -> str:
        return "/".join((self.model, self.framing, self.strategy, self.protocol,
                         self.variant))


@dataclass(frozen=True)
class EvalRecord:
    scenario_id: str
    condition: Condition
    gold: str
    pred: str
    confidence: float
    score_danger: float
    score_source: str  # logprob | confidence_fallback
    latency_s: float
    parse_failure: bool = False
    error: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["condition"] = asdict(self.condition)
        return json.dumps(d, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "EvalRecord":
        d = json.loads(line)
        d["condition"] = Condition(**d["condition"])
        return EvalRecord(**d)


def write_records(records: list[EvalRecord], path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path: Path | str) -> list[EvalRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EvalRecord.from_json(line))
    return out


@dataclass
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.counts:
            self.counts = {g: {p: 0 for p in self.classes} for g in self.classes}

    @property
    def total(self) -> int:
        return sum(sum(row.values()) for row in self.counts.values())

    def row_normalized(self) -> dict[str, dict[str, float]]:
        out = {}
        for g, row in self.counts.items():
            n = sum(row.values())
            out[g] = {p: (c / n if n else 0.0) for p, c in row.items()}
        return out


def confusion(records: list[EvalRecord]) -> ConfusionMatrix:
    """Exact gold-by-predicted counts for one homogeneous condition."""
    if not records:
        raise ValueError("cannot build a confusion matrix from no records")
    framings = {r.condition.framing for r in records}
    if len(framings) > 1:
        raise ValueError(f"records mix framings: {framings}")
    cm = ConfusionMatrix(classes=classes_for(framings.pop()))
    for r in records:
        cm.counts[r.gold][r.pred] += 1
    return cm


def per_class_f1(cm: ConfusionMatrix) -> dict[str, float]:
    """One-vs-rest F1 per class; a class with no support and no predictions
    scores 0 by convention."""
    out = {}
    for cls in cm.classes:
        tp = cm.counts[cls][cls]
        fn = sum(cm.counts[cls][p] for p in cm.classes if p != cls)
        fp = sum(cm.counts[g][cls] for g in cm.classes if g != cls)
        denom = 2 * tp + fp + fn
        out[cls] = (2 * tp / denom) if denom else 0.0
    return out


def macro_f1(cm: ConfusionMatrix) -> float:
    scores = per_class_f1(cm)
    return sum(scores.values()) / len(scores)


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if not total:
        return 0.0
    return sum(cm.counts[c][c] for c in cm.classes) / total


def _danger_indicator(record: EvalRecord) -> int:
    return 0 if record.gold == "nominal" else 1


def auroc(records: list[EvalRecord]) -> float:
    """Rank-based (Mann-Whitney) AUROC of score_danger against the danger
    side, with half credit for ties."""
    pairs = [(_danger_indicator(r), r.score_danger) for r in records]
    n_pos = sum(y for y, _ in pairs)
    n_neg = len(pairs) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined without both classes present")
    ranked = sorted(pairs, key=lambda p: p[1])
    # Midranks over tied scores.
    rank_sum_pos = 0.0
    i = 0
    while i < len(ranked):
        j = i
        while j < len(ranked) and ranked[j][1] == ranked[i][1]:
            j += 1
        midrank = (i + 1 + j) / 2.0  # average of ranks i+1 .. j
        rank_sum_pos += midrank * sum(y for y, _ in ranked[i:j])
        i = j
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    tpr: float  # recall
    fpr: float
    precision: float


@dataclass(frozen=True)
class PrCurve:
    points: tuple[CurvePoint, ...]
    average_precision: float


def pr_curve(records: list[EvalRecord]) -> PrCurve:
    """PR/ROC operating points at every distinct score threshold plus the
    step-interpolated average precision."""
    pairs = [(_danger_indicator(r), r.score_danger) for r in records]
    n_pos = sum(y for y, _ in pairs)
    n_neg = len(pairs) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("PR curve undefined without both classes present")
    pairs.sort(key=lambda p: -p[1])
    points: list[CurvePoint] = []
    ap = 0.0
    prev_recall = 0.0
    tp = fp = 0
    i = 0
    while i < len(pairs):
        j = i
        while j < len(pairs) and pairs[j][1] == pairs[i][1]:
            tp += pairs[j][0]
            fp += 1 - pairs[j][0]
            j += 1
        recall = tp / n_pos
        precision = tp / (tp + fp)
        points.append(CurvePoint(
            threshold=pairs[i][1], tpr=recall, fpr=fp / n_neg, precision=precision,
        ))
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return PrCurve(points=tuple(points), average_precision=ap)


def percentile(values: list[float], q: float) -> float:
    """Linear-interpolation percentile (inclusive), q in [0, 100]."""
    if not values:
        raise ValueError("no values")
    xs = sorted(values)
    if len(xs) == 1:
        return xs[0]
    pos = (len(xs) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def latency_summary(records: list[EvalRecord]) -> dict[str, dict[str, float]]:
    """Per-condition latency mean and percentiles (keyed by condition key)."""
    groups: dict[str, list[float]] = {}
    for r in records:
        groups.setdefault(r.condition.key(), []).append(r.latency_s)
    out = {}
    for key, vals in sorted(groups.items()):
        out[key] = {
            "n": float(len(vals)),
            "mean": sum(vals) / len(vals),
            "p50": percentile(vals, 50),
            "p90": percentile(vals, 90),
            "p99": percentile(vals, 99),
        }
    return out


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------

_STRATEGIES = ("ZS", "OS", "FS")
_PROTOCOLS = ("direct", "cot")


def group_by_condition(records: list[EvalRecord]) -> dict[Condition, list[EvalRecord]]:
    groups: dict[Condition, list[EvalRecord]] = {}
    for r in records:
        groups.setdefault(r.condition, []).append(r)
    return groups


def _condition_cells(groups: dict[Condition, list[EvalRecord]], framing: str,
                     model: str, fn) -> dict[str, str]:
    cells = {}
    for proto in _PROTOCOLS:
        for strat in _STRATEGIES:
            cond = [c for c in groups
                    if c.model == model and c.framing == framing
                    and c.strategy == strat and c.protocol == proto and not c.variant]
            if not cond:
                cells[f"{proto}_{strat}"] = ""
                continue
            try:
                cells[f"{proto}_{strat}"] = f"{fn(groups[cond[0]]):.3f}"
            except ValueError:
                cells[f"{proto}_{strat}"] = ""
    return cells


def _model_uses_fallback(groups: dict[Condition, list[EvalRecord]], model: str) -> bool:
    return any(
        r.score_source == "confidence_fallback"
        for cond, recs in groups.items() if cond.model == model
        for r in recs
    )


def _csv_string(rows: list[dict], fieldnames: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def summary_tables(records: list[EvalRecord]) -> dict[str, str]:
    """CSV tables per framing: macro metrics, per-class F1, and best-run
    confusion rates, mirroring the benchmark's reporting layout."""
    groups = group_by_condition(records)
    tables: dict[str, str] = {}
    framings = sorted({c.framing for c in groups})
    for framing in framings:
        models = sorted({c.model for c in groups if c.framing == framing})
        cols = [f"{p}_{s}" for p in _PROTOCOLS for s in _STRATEGIES]

        macro_rows = []
        for model in models:
            name = model + (" (conf*)" if _model_uses_fallback(groups, model) else "")
            for metric, fn in (
                ("macro_f1", lambda rs: macro_f1(confusion(rs))),
                ("accuracy", lambda rs: accuracy(confusion(rs))),
                ("auroc", auroc),
            ):
                row = {"model": name, "metric": metric}
                row.update(_condition_cells(groups, framing, model, fn))
                macro_rows.append(row)
        tables[f"{framing}_metrics"] = _csv_string(macro_rows, ["model", "metric"] + cols)

        class_rows = []
        for model in models:
            for cls in classes_for(framing):
                row = {"model": model, "class": cls}
                row.update(_condition_cells(
                    groups, framing, model,
                    lambda rs, c=cls: per_class_f1(confusion(rs))[c]))
                class_rows.append(row)
        tables[f"{framing}_per_class_f1"] = _csv_string(
            class_rows, ["model", "class"] + cols)

        if framing == "binary":
            conf_rows = []
            for model in models:
                best = _best_condition(groups, framing, model)
                if best is None:
                    continue
                cm = confusion(groups[best])
                tn = cm.counts["nominal"]["nominal"]
                fp = cm.counts["nominal"]["danger"]
                fn_ = cm.counts["danger"]["nominal"]
                tp = cm.counts["danger"]["danger"]
                n, d = tn + fp, fn_ + tp
                conf_rows.append({
                    "model": model,
                    "best_run": f"{best.strategy}+{best.protocol}",
                    "TN": tn, "FP": fp, "FN": fn_, "TP": tp,
                    "TN_rate": f"{tn / n:.3f}" if n else "",
                    "FP_rate": f"{fp / n:.3f}" if n else "",
                    "TP_rate": f"{tp / d:.3f}" if d else "",
                    "FN_rate": f"{fn_ / d:.3f}" if d else "",
                })
            tables["binary_confusion_best"] = _csv_string(
                conf_rows,
                ["model", "best_run", "TN", "FP", "FN", "TP",
                 "TN_rate", "FP_rate", "TP_rate", "FN_rate"])

        # Full gold-by-predicted grid of each model's best run, with
        # row-normalized recall percentages.
        grid_rows = []
        classes = classes_for(framing)
        for model in models:
            best = _best_condition(groups, framing, model)
            if best is None:
                continue
            cm = confusion(groups[best])
            norm = cm.row_normalized()
            for gold in classes:
                row = {"model": model, "best_run": f"{best.strategy}+{best.protocol}",
                       "gold": gold}
                for pred in classes:
                    row[f"pred_{pred}"] = cm.counts[gold][pred]
                    row[f"recall_{pred}"] = f"{100 * norm[gold][pred]:.1f}%"
                grid_rows.append(row)
        if grid_rows:
            tables[f"{framing}_confusion_grid"] = _csv_string(
                grid_rows, list(grid_rows[0].keys()))
    lat = latency_summary(records)
    lat_rows = [
        {"condition": k, **{m: f"{v:.3f}" for m, v in row.items()}}
        for k, row in lat.items()
    ]
    tables["latency"] = _csv_string(lat_rows, ["condition", "n", "mean", "p50",
                                               "p90", "p99"])
    return tables


def _best_condition(groups, framing: str, model: str):
    best, best_f1 = None, -1.0
    for cond, recs in groups.items():
        if cond.model != model or cond.framing != framing or cond.variant:
            continue
        try:
            f1 = macro_f1(confusion(recs))
        except ValueError:
            continue
        if f1 > best_f1:
            best, best_f1 = cond, f1
    return best


def write_report(records: list[EvalRecord], out_dir: Path | str,
                 plots: bool = True) -> list[Path]:
    """Write the CSV tables, curve data, and SVG figures for a record set."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name, text in summary_tables(records).items():
        p = out_dir / f"{name}.csv"
        p.write_text(text, encoding="utf-8")
        written.append(p)

    groups = group_by_condition(records)
    curve_rows = []
    curve_data = {}
    for framing in sorted({c.framing for c in groups}):
        for model in sorted({c.model for c in groups if c.framing == framing}):
            best = _best_condition(groups, framing, model)
            if best is None:
                continue
            try:
                curve = pr_curve(groups[best])
            except ValueError:
                continue
            label = model + (" (conf*)" if _model_uses_fallback(groups, model) else "")
            curve_data[(framing, label)] = curve
            for pt in curve.points:
                curve_rows.append({
                    "framing": framing, "model": label,
                    "best_run": f"{best.strategy}+{best.protocol}",
                    "threshold": f"{pt.threshold:.6f}", "tpr": f"{pt.tpr:.6f}",
                    "fpr": f"{pt.fpr:.6f}", "precision": f"{pt.precision:.6f}",
                    "average_precision": f"{curve.average_precision:.3f}",
                })
    if curve_rows:
        p = out_dir / "curves_best_run.csv"
        p.write_text(_csv_string(curve_rows, list(curve_rows[0].keys())),
                     encoding="utf-8")
        written.append(p)

    if plots and curve_data:
        written.extend(_plot_curves(curve_data, out_dir))
    return written


def _plot_curves(curve_data, out_dir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    framings = sorted({f for f, _ in curve_data})
    for framing in framings:
        fig, (ax_pr, ax_roc) = plt.subplots(1, 2, figsize=(10, 4.2))
        for (f, label), curve in sorted(curve_data.items()):
            if f != framing:
                continue
            recalls = [0.0] + [p.tpr for p in curve.points]
            precisions = [1.0] + [p.precision for p in curve.points]
            ax_pr.step(recalls, precisions, where="post",
                       label=f"{label} (AP={curve.average_precision:.3f})")
            fprs = [0.0] + [p.fpr for p in curve.points] + [1.0]
            tprs = [0.0] + [p.tpr for p in curve.points] + [1.0]
            ax_roc.plot(fprs, tprs, label=label)
        ax_pr.set_xlabel("Recall")
        ax_pr.set_ylabel("Precision")
        ax_pr.set_title(f"Precision-recall ({framing})")
        ax_pr.legend(fontsize=7)
        ax_roc.plot([0, 1], [0, 1], ls=":", c="gray", lw=0.8)
        ax_roc.set_xlabel("False positive rate")
        ax_roc.set_ylabel("True positive rate")
        ax_roc.set_title(f"ROC ({framing})")
        ax_roc.legend(fontsize=7)
        fig.tight_layout()
        p = out_dir / f"pr_roc_{framing}.svg"
        fig.savefig(p)
        plt.close(fig)
        written.append(p)
    return written
