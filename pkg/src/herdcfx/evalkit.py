"""Evaluation protocols: horizon-recall curves and counterfactual
score-shift summaries over an instance table."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cfx
from .dataset import InstanceTable
from .features import FeatureCatalog
from .gbm import Ensemble

HORIZONS = tuple(range(1, 8))


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class HorizonCurve:
    # (horizon_days, proportion_found, n_infections)
    points: tuple[tuple[int, float, int], ...]

    def proportion(self, horizon: int) -> float:
        for h, p, _ in self.points:
            if h == horizon:
                return p
        raise EvalError(f"no point for horizon {horizon}")


@dataclass(frozen=True)
class ScoreShiftSummary:
    pairs: tuple[tuple[float, float], ...]   # (score_original, score_cf)
    quantiles_original: dict
    quantiles_cf: dict
    flip_rate: float


def _infection_groups(table: InstanceTable):
    """Map each pre-onset instance to its infection (cow, onset ordinal)."""
    groups: dict[tuple[str, int], list[int]] = {}
    finite = np.isfinite(table.days_to_onset)
    for i in np.flatnonzero(finite & (table.days_to_onset <= max(HORIZONS))):
        onset = int(table.day_ordinals[i] + table.days_to_onset[i])
        groups.setdefault((table.cow_ids[i], onset), []).append(int(i))
    return groups


def horizon_recall(model: Ensemble, table: InstanceTable,
                   threshold: float = 0.5) -> HorizonCurve:
    """Per-infection recall: an infection is found at horizon h when any of
    its instances at least h days before onset scores at or above the
    threshold."""
    groups = _infection_groups(table)
    if not groups:
        raise EvalError("no positive instances in the table")
    scores = model.predict_proba(table.X)
    points = []
    for h in HORIZONS:
        eligible = 0
        found = 0
        for _, idxs in groups.items():
            ahead = [i for i in idxs if table.days_to_onset[i] >= h]
            if not ahead:
                continue
            eligible += 1
            if any(scores[i] >= threshold for i in ahead):
                found += 1
        if eligible == 0:
            raise EvalError(f"no positive instances at horizon {h}")
        points.append((h, found / len(groups), len(groups)))
    return HorizonCurve(tuple(points))


def sample_high_confidence_healthy(model: Ensemble, table: InstanceTable,
                                   min_healthy_confidence: float, n: int,
                                   seed: int) -> list[int]:
    """Seeded uniform sample of instance indices with
    P(Sick) <= 1 - min_healthy_confidence."""
    if not 0.5 < min_healthy_confidence < 1:
        raise EvalError("min_healthy_confidence must be in (0.5, 1)")
    scores = model.predict_proba(table.X)
    pool = np.flatnonzero(scores <= 1.0 - min_healthy_confidence)
    if pool.size <= n:
        return [int(i) for i in pool]
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(pool, size=n, replace=False))


_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def _quantile_dict(values) -> dict:
    if not values:
        return {f"q{int(q * 100):02d}": None for q in _QUANTILES}
    arr = np.asarray(values)
    return {f"q{int(q * 100):02d}": float(np.quantile(arr, q))
            for q in _QUANTILES}


def score_shift_summary(model: Ensemble, table: InstanceTable,
                        sample_indices: list[int], catalog: FeatureCatalog,
                        weights: cfx.DistanceWeights,
                        config: cfx.CfxConfig | None = None) -> ScoreShiftSummary:
    """Run the counterfactual engine on each sampled instance and summarize
    (original, counterfactual) score pairs."""
    config = config or cfx.CfxConfig()
    pairs = []
    n_found = 0
    for i in sample_indices:
        result = cfx.find_counterfactual(model, table.X[i], catalog, weights,
                                         config)
        if result.status == cfx.CfxStatus.Found:
            n_found += 1
            pairs.append((result.score_original, result.score_cf))
    flip_rate = n_found / len(sample_indices) if sample_indices else 0.0
    return ScoreShiftSummary(
        pairs=tuple(pairs),
        quantiles_original=_quantile_dict([p[0] for p in pairs]),
        quantiles_cf=_quantile_dict([p[1] for p in pairs]),
        flip_rate=flip_rate,
    )


def export_report(curve: HorizonCurve | None, summary: ScoreShiftSummary | None,
                  directory: str | Path) -> None:
    """Write horizon_curve.csv, score_shift.csv, and summary.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if curve is not None:
        lines = ["horizon,proportion,n"]
        for h, p, n in curve.points:
            lines.append(f"{h},{p!r},{n}")
        (directory / "horizon_curve.csv").write_text("\n".join(lines) + "\n")
    if summary is not None:
        lines = ["score_original,score_cf"]
        for orig, after in summary.pairs:
            lines.append(f"{orig!r},{after!r}")
        (directory / "score_shift.csv").write_text("\n".join(lines) + "\n")
        doc = {
            "flip_rate": summary.flip_rate,
            "n_pairs": len(summary.pairs),
            "quantiles_original": summary.quantiles_original,
            "quantiles_cf": summary.quantiles_cf,
        }
        (directory / "summary.json").write_text(
            json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_report(directory: str | Path):
    """Reparse exported reports; inverse of export_report."""
    directory = Path(directory)
    curve = None
    summary = None
    curve_path = directory / "horizon_curve.csv"
    if curve_path.exists():
        rows = curve_path.read_text().strip().splitlines()[1:]
        points = []
        for row in rows:
            h, p, n = row.split(",")
            points.append((int(h), float(p), int(n)))
        curve = HorizonCurve(tuple(points))
    shift_path = directory / "score_shift.csv"
    if shift_path.exists():
        rows = shift_path.read_text().strip().splitlines()[1:]
        pairs = tuple((float(a), float(b))
                      for a, b in (row.split(",") for row in rows))
        doc = json.loads((directory / "summary.json").read_text())
        summary = ScoreShiftSummary(
            pairs=pairs,
            quantiles_original=doc["quantiles_original"],
            quantiles_cf=doc["quantiles_cf"],
            flip_rate=doc["flip_rate"],
        )
    return curve, summary


def auc_score(labels: np.ndarray, scores: np.ndarray) -> float:
    """Rank-based AUC (Mann-Whitney), ties counted half."""
    labels = np.asarray(labels, dtype=bool)
    pos = scores[labels]
    neg = scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise EvalError("AUC needs both classes")
    order = np.argsort(np.concatenate([pos, neg]), kind="stable")
    ranks = np.empty(order.size)
    ranks[order] = np.arange(1, order.size + 1)
    # midranks for ties
    allv = np.concatenate([pos, neg])
    sorted_v = allv[order]
    i = 0
    while i < sorted_v.size:
        j = i
        while j + 1 < sorted_v.size and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        if j > i:
            mid = (i + j) / 2 + 1
            ranks[order[i:j + 1]] = mid
        i = j + 1
    r_pos = ranks[:pos.size].sum()
    return float((r_pos - pos.size * (pos.size + 1) / 2)
                 / (pos.size * neg.size))
