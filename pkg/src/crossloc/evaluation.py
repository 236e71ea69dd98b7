"""Localization evaluation: per-query errors, inlier counting, PR sweeps.

Conventions, fixed here and documented in every report:
  - Position error is Euclidean distance to the true pose (heading ignored).
  - Error statistics (mean/std/median) cover inside-path queries only and use
    the population standard deviation.
  - A query's ground-truth label is positive iff it was taken inside the
    mapped area. A true positive is an inside query classified inlier with
    error <= inlier_radius. A false positive is any query classified inlier
    that is not a true positive (outside-path, or error beyond the radius).
    A false negative is any inside query that is not a true positive, so an
    inside query localized far from the truth while classified inlier counts
    as both a false positive and a false negative. recall = TP / #inside;
    precision = TP / #classified-inlier (0 when nothing is classified
    inlier).
  - The PR sweep visits every distinct confidence value as a threshold, from
    highest to lowest, so recall is non-decreasing along the sweep. The
    reported area under the curve is the step integral sum((r_i - r_{i-1}) *
    p_i) over that order starting from recall 0. The optimal threshold
    maximizes the precision * recall product, ties resolved toward the larger
    threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import Pose2D

DEFAULT_INLIER_RADIUS = 10.0


@dataclass(frozen=True)
class QueryTruth:
    query_id: str
    pose: Pose2D
    inside: bool


@dataclass(frozen=True)
class ResultRecord:
    """One localization outcome, as written to the results CSV."""

    query_id: str
    x: float
    y: float
    theta: float
    confidence: float
    inlier: bool


def record_from_result(result) -> ResultRecord:
    est = result.estimate
    return ResultRecord(
        query_id=result.query_id,
        x=float(est.x),
        y=float(est.y),
        theta=float(est.theta),
        confidence=float(result.confidence),
        inlier=bool(result.inlier),
    )


@dataclass(frozen=True)
class PRSweep:
    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray
    auc: float
    optimal_tau: float
    optimal_precision: float
    optimal_recall: float


@dataclass(frozen=True)
class EvalReport:
    query_ids: list[str]
    errors: np.ndarray
    inside: np.ndarray
    inlier: np.ndarray
    inlier_radius: float
    mean_error: float
    std_error: float
    median_error: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    pr: PRSweep | None

    def metrics_rows(self) -> list[tuple[str, object]]:
        """(name, value) rows for the metrics CSV; stats are inside-only and
        std is the population standard deviation."""
        rows = [
            ("n_queries", len(self.query_ids)),
            ("n_inside", int(self.inside.sum())),
            ("n_outside", int((~self.inside).sum())),
            ("inlier_radius", self.inlier_radius),
            ("mean_error_inside", self.mean_error),
            ("std_error_inside_population", self.std_error),
            ("median_error_inside", self.median_error),
            ("tp", self.tp),
            ("fp", self.fp),
            ("fn", self.fn),
            ("tn", self.tn),
            ("precision", self.precision),
            ("recall", self.recall),
        ]
        if self.pr is not None:
            rows += [
                ("pr_auc", self.pr.auc),
                ("optimal_tau", self.pr.optimal_tau),
                ("optimal_precision", self.pr.optimal_precision),
                ("optimal_recall", self.pr.optimal_recall),
            ]
        return rows


def _truth_map(truth) -> dict[str, QueryTruth]:
    table = {}
    for t in truth:
        if t.query_id in table:
            raise ValueError(f"duplicate ground truth for query '{t.query_id}'")
        table[t.query_id] = t
    return table


def _align(records, truth):
    table = _truth_map(truth)
    errors = np.empty(len(records))
    inside = np.empty(len(records), dtype=bool)
    inlier = np.empty(len(records), dtype=bool)
    conf = np.empty(len(records))
    for i, rec in enumerate(records):
        t = table.get(rec.query_id)
        if t is None:
            raise ValueError(f"no ground truth for query '{rec.query_id}'")
        errors[i] = math.hypot(rec.x - t.pose.x, rec.y - t.pose.y)
        inside[i] = t.inside
        inlier[i] = rec.inlier
        conf[i] = rec.confidence
    return errors, inside, inlier, conf


def _counts(inside, correct, predicted):
    tp = int(np.sum(predicted & inside & correct))
    fp = int(np.sum(predicted)) - tp
    fn = int(np.sum(inside)) - tp
    tn = int(np.sum(~predicted & ~inside))
    return tp, fp, fn, tn


def evaluate_localization(
    records, truth, inlier_radius: float = DEFAULT_INLIER_RADIUS
) -> EvalReport:
    """Score localization outcomes against ground truth.

    records: ResultRecord rows (or objects with the same fields).
    truth: QueryTruth rows covering every record's query_id.
    """
    records = list(records)
    if not records:
        raise ValueError("no results to evaluate")
    errors, inside, inlier, conf = _align(records, truth)

    correct = errors <= inlier_radius
    tp, fp, fn, tn = _counts(inside, correct, inlier)
    n_pred = tp + fp
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0

    inside_errors = errors[inside]
    if inside_errors.size:
        mean_e = float(inside_errors.mean())
        std_e = float(inside_errors.std())
        median_e = float(np.median(inside_errors))
    else:
        mean_e = std_e = median_e = float("nan")

    pr = None
    if inside.any() and (~inside).any():
        pr = pr_sweep(records, truth, inlier_radius=inlier_radius)

    return EvalReport(
        query_ids=[r.query_id for r in records],
        errors=errors,
        inside=inside,
        inlier=inlier,
        inlier_radius=inlier_radius,
        mean_error=mean_e,
        std_error=std_e,
        median_error=median_e,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        precision=precision,
        recall=recall,
        pr=pr,
    )


def pr_sweep(
    records, truth, inlier_radius: float = DEFAULT_INLIER_RADIUS
) -> PRSweep:
    """Precision/recall at every distinct confidence threshold.

    Requires at least one inside and one outside query; classification at
    threshold t predicts inlier iff confidence >= t.
    """
    records = list(records)
    if not records:
        raise ValueError("no results to sweep")
    errors, inside, _, conf = _align(records, truth)
    if not inside.any() or inside.all():
        raise ValueError(
            "pr_sweep needs at least one inside-path and one outside-path query"
        )
    correct = errors <= inlier_radius
    n_inside = int(inside.sum())

    thresholds = np.unique(conf)[::-1]
    precisions = np.empty(thresholds.size)
    recalls = np.empty(thresholds.size)
    auc = 0.0
    prev_recall = 0.0
    best = (-1.0, 0, 0.0, 0.0)
    for i, tau in enumerate(thresholds):
        predicted = conf >= tau
        tp = int(np.sum(predicted & inside & correct))
        precision = tp / int(np.sum(predicted))
        recall = tp / n_inside
        precisions[i] = precision
        recalls[i] = recall
        auc += (recall - prev_recall) * precision
        prev_recall = recall
        product = precision * recall
        # strict > keeps the earlier (larger) threshold on ties
        if product > best[0]:
            best = (product, i, precision, recall)

    return PRSweep(
        thresholds=thresholds,
        precisions=precisions,
        recalls=recalls,
        auc=float(auc),
        optimal_tau=float(thresholds[best[1]]),
        optimal_precision=float(best[2]),
        optimal_recall=float(best[3]),
    )


def save_truth_csv(path, truths) -> None:
    lines = ["query_id,x,y,theta,inside"]
    for t in truths:
        # float() keeps numpy scalars from serializing as np.float64(...)
        lines.append(
            f"{t.query_id},{float(t.pose.x)!r},{float(t.pose.y)!r},"
            f"{float(t.pose.theta)!r},{1 if t.inside else 0}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_truth_csv(path) -> list[QueryTruth]:
    truths = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("query_id,"):
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            pose = Pose2D(float(parts[1]), float(parts[2]), float(parts[3]))
            inside = bool(int(parts[4]))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        truths.append(QueryTruth(parts[0], pose, inside))
    return truths


def save_results_csv(path, records) -> None:
    lines = ["query_id,est_x,est_y,est_theta,confidence,inlier"]
    for r in records:
        lines.append(
            f"{r.query_id},{float(r.x)!r},{float(r.y)!r},{float(r.theta)!r},"
            f"{float(r.confidence)!r},{1 if r.inlier else 0}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_results_csv(path) -> list[ResultRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("query_id,"):
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            records.append(
                ResultRecord(
                    query_id=parts[0],
                    x=float(parts[1]),
                    y=float(parts[2]),
                    theta=float(parts[3]),
                    confidence=float(parts[4]),
                    inlier=bool(int(parts[5])),
                )
            )
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return records
