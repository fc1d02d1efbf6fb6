"""Accuracy matrices, summary metrics, leakage diagnostics, and reports.

Local testing fills a full lower triangle A[i][j] (task j evaluated after
session i); global testing records one cumulative-task accuracy per session,
so its rows are singletons. AF deliberately divides by the session count n,
not n-1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sessions import EvalTask, SessionPlan

LOCAL = "local"
GLOBAL = "global"


@dataclass
class AccuracyMatrix:
    mode: str
    rows: list[list[float]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.rows)

    def add_row(self, row) -> None:
        row = [float(x) for x in row]
        if any(not (0.0 <= x <= 1.0) for x in row):
            raise ValueError("accuracy entries must lie in [0, 1]")
        expected = len(self.rows) + 1 if self.mode == LOCAL else 1
        if len(row) != expected:
            raise ValueError(f"row {self.n} must have {expected} entries, got {len(row)}")
        self.rows.append(row)

    def stage_accuracies(self) -> list[float]:
        """One accuracy per training stage: row mean (local) or the row (global)."""
        if self.mode == LOCAL:
            return [float(np.mean(r)) for r in self.rows]
        return [r[0] for r in self.rows]

    def validate(self) -> None:
        if self.n < 1:
            raise ValueError("matrix needs at least one row")
        for i, row in enumerate(self.rows):
            expected = i + 1 if self.mode == LOCAL else 1
            if len(row) != expected:
                raise ValueError(f"malformed triangle at row {i}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "rows": [list(r) for r in self.rows]}

    @staticmethod
    def from_dict(doc: dict) -> "AccuracyMatrix":
        m = AccuracyMatrix(mode=doc["mode"])
        for row in doc["rows"]:
            m.add_row(row)
        return m


def evaluate(predictor, task: EvalTask) -> float:
    """Fraction of eval nodes the predictor labels correctly.

    The predictor maps an EvalTask to one class id per eval node and must
    stay inside the task's cumulative class set.
    """
    if len(task.eval_nodes) == 0:
        raise ValueError("eval task has no nodes")
    preds = np.asarray(predictor(task), dtype=np.int64)
    if preds.shape != (len(task.eval_nodes),):
        raise ValueError("predictor must return one class id per eval node")
    allowed = set(task.class_ids)
    bad = [int(p) for p in np.unique(preds) if int(p) not in allowed]
    if bad:
        raise ValueError(f"prediction outside cumulative class set: {bad}")
    truth = task.graph.labels[task.eval_nodes]
    return float(np.mean(preds == truth))


def lenient_accuracy(preds: np.ndarray, truth: np.ndarray) -> float:
    """Plain agreement rate; out-of-set predictions just count as wrong.

    Used for routed task-specific heads, whose misrouted predictions may
    fall outside a local task's class set by construction.
    """
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    return float(np.mean(preds == truth))


def summarize(m: AccuracyMatrix) -> dict:
    """mean_acc / final_acc over stages, AA / AF over the final row.

    AA and AF need the full triangle, so they are None for global matrices.
    """
    m.validate()
    stages = m.stage_accuracies()
    out = {
        "mean_acc": float(np.mean(stages)),
        "final_acc": float(stages[-1]),
        "aa": None,
        "af": None,
    }
    if m.mode == LOCAL:
        n = m.n
        last = m.rows[-1]
        out["aa"] = float(np.sum(last) / n)
        out["af"] = float(sum(last[j] - m.rows[j][j] for j in range(n - 1)) / n)
    return out


# ---------------------------------------------------------------------------
# Task-ID leakage diagnostic
# ---------------------------------------------------------------------------


@dataclass
class LeakageReport:
    entries: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"entries": self.entries}

    def table(self) -> str:
        header = f"{'weighting':>11} {'k':>4} {'task_id_acc':>12} {'AA':>8} {'AF':>8}"
        lines = [header, "-" * len(header)]
        for e in self.entries:
            lines.append(
                f"{e['weighting']:>11} {e['k']:>4d} {e['task_id_accuracy']:>12.3f} "
                f"{e['aa']:>8.3f} {e['af']:>8.3f}"
            )
        return "\n".join(lines)


def leakage_diagnostic(
    plan: SessionPlan,
    X: np.ndarray | None = None,
    k_grid=(1, 2, 4, 8),
    config: dict | None = None,
) -> LeakageReport:
    """Probe how easily local testing reveals session identity.

    For each smoothing depth and each weighting, predicts the session of
    every test-node pool from stored train-pool prototypes, then scores
    session-specific MLP heads routed by that prediction (AA / AF over the
    full local triangle).
    """
    from .trainers import fit_task_heads, route_eval  # circular at module level

    from .prototypes import TaskPrototypeSet, predict_task_id, task_prototype

    config = dict(config or {})
    heads = fit_task_heads(plan, X=X, config=config)
    report = LeakageReport()
    for weighting in ("laplacian", "plain-mean"):
        for k in k_grid:
            protos = TaskPrototypeSet(k=k, weighting=weighting)
            queries = []
            for s in plan.sessions:
                feats = s.subgraph.features if X is None else X[s.node_map]
                protos.add(task_prototype(s.subgraph, s.local_ids(s.train_nodes),
                                          feats, k, weighting))
                queries.append(task_prototype(s.subgraph, s.local_ids(s.test_nodes),
                                              feats, k, weighting))
            hits = [predict_task_id(q, protos) == j for j, q in enumerate(queries)]
            task_id_acc = float(np.mean(hits))

            matrix = AccuracyMatrix(mode=LOCAL)
            for i in range(1, plan.num_sessions + 1):
                row = []
                for j in range(1, i + 1):
                    stage_protos = TaskPrototypeSet(k=k, weighting=weighting)
                    stage_protos.vectors = protos.vectors[:i]
                    acc = route_eval(plan, j, heads, stage_protos, X=X)
                    row.append(acc)
                matrix.add_row(row)
            summ = summarize(matrix)
            report.entries.append(
                {
                    "weighting": weighting,
                    "k": int(k),
                    "task_id_accuracy": task_id_acc,
                    "aa": summ["aa"],
                    "af": summ["af"],
                }
            )
    return report


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def write_report(results: list[dict], path, format: str = "json") -> None:
    """Write merged run results.

    json: the canonical full record (list of run documents).
    csv:  flat (method, dataset, session, metric, value) rows.
    md:   methods x datasets table of mean/final accuracy with fractional
          ranks (rank rule: mean over datasets and both metrics; ties share
          the average of their positions).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "json":
        path.write_text(json.dumps(results, indent=1, sort_keys=True), encoding="utf-8")
    elif format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "dataset", "session", "metric", "value"])
            for doc in results:
                run = doc["run"]
                matrix = AccuracyMatrix.from_dict(doc["matrix"])
                for i, acc in enumerate(matrix.stage_accuracies(), start=1):
                    w.writerow([run["method"], run["dataset"], i, "accuracy", f"{acc:.6f}"])
                for key in ("mean_acc", "final_acc", "aa", "af"):
                    val = doc["summary"].get(key)
                    w.writerow([run["method"], run["dataset"], "", key,
                                "" if val is None else f"{val:.6f}"])
    elif format == "md":
        path.write_text(_markdown_table(results), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {format!r}")


def _fractional_ranks(values: list[float]) -> list[float]:
    """Descending ranks; tied values share the mean of their positions."""
    order = np.argsort([-v for v in values], kind="stable")
    ranks = [0.0] * len(values)
    pos = 0
    while pos < len(order):
        end = pos
        while end + 1 < len(order) and values[order[end + 1]] == values[order[pos]]:
            end += 1
        avg = (pos + end) / 2 + 1
        for t in range(pos, end + 1):
            ranks[order[t]] = avg
        pos = end + 1
    return ranks


def _markdown_table(results: list[dict]) -> str:
    methods = sorted({doc["run"]["method"] for doc in results})
    datasets = sorted({doc["run"]["dataset"] for doc in results})
    cell: dict[tuple[str, str], tuple[float, float]] = {}
    for doc in results:
        key = (doc["run"]["method"], doc["run"]["dataset"])
        cell[key] = (doc["summary"]["mean_acc"], doc["summary"]["final_acc"])

    # Rank methods per dataset and metric, then average (fractional ties).
    rank_sum = {m: 0.0 for m in methods}
    rank_cnt = {m: 0 for m in methods}
    for d in datasets:
        present = [m for m in methods if (m, d) in cell]
        for metric in (0, 1):
            vals = [cell[(m, d)][metric] for m in present]
            for m, r in zip(present, _fractional_ranks(vals)):
                rank_sum[m] += r
                rank_cnt[m] += 1

    header = ["Method"]
    for d in datasets:
        header += [f"{d} mean", f"{d} final"]
    header.append("Rank")
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    for m in methods:
        row = [m]
        for d in datasets:
            if (m, d) in cell:
                a, f = cell[(m, d)]
                row += [f"{100 * a:.1f}", f"{100 * f:.1f}"]
            else:
                row += ["-", "-"]
        rank = rank_sum[m] / rank_cnt[m] if rank_cnt[m] else float("nan")
        row.append(f"{rank:.1f}")
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    lines.append("Rank rule: mean of per-dataset fractional ranks over both metrics "
                 "(ties share averaged positions). Accuracies are percentages "
                 "rounded to one decimal.")
    return "\n".join(lines) + "\n"
