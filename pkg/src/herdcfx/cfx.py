"""Counterfactual search: sparse, policy-compliant flips Healthy -> Sick.

The engine minimizes an inverse-MAD weighted Manhattan distance over a
sparse change vector, subject to the classifier crossing the decision
threshold (plus a margin). Cardinality is handled by exhaustive subset
enumeration over the small eligible feature set; each subset is solved
either continuously (COBYLA, then snapped to the policy step grid and
re-verified against the raw model) or directly on the step grid.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import cobyla
from .features import FeatureCatalog, eligible_features
from .gbm import Ensemble

MAD_FALLBACK_SCALE = 1e-6
QUANTIZE_DROP_FRACTION = 0.25
BRUTE_FORCE_GUARD = 10_000_000


class CfxError(ValueError):
    pass


class CfxStatus(enum.Enum):
    Found = "found"
    NotFound = "not_found"


@dataclass(frozen=True)
class DistanceWeights:
    w: np.ndarray
    mad: np.ndarray
    fallback_applied: frozenset[int]


@dataclass(frozen=True)
class CfxConfig:
    max_changes: int = 3
    flip_threshold: float = 0.5
    flip_margin: float = 0.05
    n_restarts: int = 3
    grid_mode: bool = False
    # features whose actionable window exceeds this are not perturbed
    # (e.g. genetic merit: a 5-year lever is useless on a 7-day horizon)
    max_actionable_days: int = 30
    solver_max_evals: int = 120
    max_grid_steps: int = 7

    def __post_init__(self) -> None:
        if self.max_changes < 1:
            raise CfxError("max_changes must be >= 1")
        if not 0 < self.flip_threshold < 1 or self.flip_margin < 0:
            raise CfxError("flip_threshold must be in (0,1), flip_margin >= 0")
        if self.flip_threshold + self.flip_margin >= 1:
            raise CfxError("flip_threshold + flip_margin must be < 1")
        if self.n_restarts < 0 or self.solver_max_evals < 1:
            raise CfxError("n_restarts must be >= 0 and solver_max_evals >= 1")


@dataclass
class CounterfactualResult:
    delta: dict[int, float]          # feature index -> signed change
    x_cf: np.ndarray
    score_original: float
    score_cf: float
    distance: float
    subsets_searched: int
    status: CfxStatus


def mad_weights(training_matrix: np.ndarray,
                catalog: FeatureCatalog) -> DistanceWeights:
    """Per-feature inverse median absolute deviation over training rows."""
    X = np.asarray(training_matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise CfxError("training matrix must have at least 2 rows")
    if X.shape[1] != len(catalog):
        raise CfxError(f"expected {len(catalog)} columns, got {X.shape[1]}")
    med = np.median(X, axis=0)
    mad = np.median(np.abs(X - med), axis=0)
    w = np.empty_like(mad)
    fallback = []
    for j, spec in enumerate(catalog):
        if mad[j] > 0:
            w[j] = 1.0 / mad[j]
        else:
            w[j] = 1.0 / (MAD_FALLBACK_SCALE
                          * (spec.upper_bound - spec.lower_bound))
            fallback.append(j)
    return DistanceWeights(w=w, mad=mad, fallback_applied=frozenset(fallback))


def weighted_manhattan(x, x_prime, weights: DistanceWeights) -> float:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_prime, dtype=np.float64)
    if a.shape != b.shape or a.shape != weights.w.shape:
        raise CfxError("dimension mismatch")
    return float(np.sum(weights.w * np.abs(a - b)))


def _delta_distance(delta: dict[int, float], weights: DistanceWeights) -> float:
    return float(sum(weights.w[j] * abs(d) for j, d in delta.items()))


def quantize_deltas(delta: dict[int, float],
                    catalog: FeatureCatalog) -> dict[int, float]:
    """Snap raw changes onto the policy step grid.

    Steps round away from zero to the next multiple of min_change; changes
    below a quarter step are dropped; step-free features keep 3 significant
    digits.
    """
    out: dict[int, float] = {}
    for j, d in sorted(delta.items()):
        if d == 0.0:
            continue
        spec = catalog.specs[j]
        step = spec.min_change
        if step is not None:
            if abs(d) < QUANTIZE_DROP_FRACTION * step:
                continue
            k = math.ceil(abs(d) / step - 1e-9)
            out[j] = math.copysign(k * step, d)
        else:
            mag = abs(d)
            exp = math.floor(math.log10(mag))
            q = round(mag, -exp + 2)
            if q > 0:
                out[j] = math.copysign(q, d)
    return out


def _perturbable(catalog: FeatureCatalog, config: CfxConfig) -> list[int]:
    idxs = []
    for name in eligible_features(catalog):
        spec = catalog.spec(name)
        if (spec.actionable_time_days is not None
                and spec.actionable_time_days > config.max_actionable_days):
            continue
        idxs.append(catalog.index(name))
    return idxs


def _grid_for(spec, x_j: float, config: CfxConfig) -> np.ndarray:
    """Candidate signed deltas on the step grid, staying inside bounds."""
    step = spec.min_change
    if step is None:
        step = (spec.upper_bound - spec.lower_bound) / (2 * config.max_grid_steps)
    deltas = []
    for sign in (1.0, -1.0):
        room = (spec.upper_bound - x_j) if sign > 0 else (x_j - spec.lower_bound)
        kmax = min(int(math.floor(room / step + 1e-9)), config.max_grid_steps)
        for k in range(1, kmax + 1):
            deltas.append(sign * k * step)
    return np.array(deltas)


def _clamp_quantized(delta: dict[int, float], x: np.ndarray,
                     catalog: FeatureCatalog) -> dict[int, float] | None:
    """Pull quantized steps back inside bounds; None if any feature dies."""
    out: dict[int, float] = {}
    for j, d in delta.items():
        spec = catalog.specs[j]
        step = spec.min_change
        lo = spec.lower_bound - x[j]
        hi = spec.upper_bound - x[j]
        if lo - 1e-12 <= d <= hi + 1e-12:
            out[j] = min(max(d, lo), hi) if step is None else d
            continue
        if step is None:
            out[j] = min(max(d, lo), hi)
            if out[j] == 0.0:
                return None
            continue
        k = math.floor((hi if d > 0 else -lo) / step + 1e-9)
        if k < 1:
            return None
        out[j] = math.copysign(k * step, d)
    return out if out else None


def _apply_delta(x: np.ndarray, delta: dict[int, float]) -> np.ndarray:
    x_cf = x.copy()
    for j, d in delta.items():
        x_cf[j] += d
    return x_cf


def _candidate_key(delta: dict[int, float], weights: DistanceWeights):
    support = tuple(sorted(delta))
    return (_delta_distance(delta, weights), len(support), support)


def _instance_seed(x: np.ndarray, subset: tuple[int, ...]) -> int:
    h = hashlib.sha256(x.tobytes() + bytes(subset)).digest()
    return int.from_bytes(h[:8], "big")


def _solve_subset_continuous(model, x, subset, catalog, weights, config,
                             margin: float) -> dict[int, float] | None:
    """Best raw (unquantized) delta for one subset via COBYLA, or None."""
    target = config.flip_threshold + margin
    scales = np.array([catalog.specs[j].upper_bound - catalog.specs[j].lower_bound
                       for j in subset])
    wsub = weights.w[list(subset)]
    lo = np.array([catalog.specs[j].lower_bound - x[j] for j in subset]) / scales
    hi = np.array([catalog.specs[j].upper_bound - x[j] for j in subset]) / scales
    xs = np.ascontiguousarray(x, dtype=np.float64)
    sub = np.array(subset, dtype=np.int64)

    def score_of(z: np.ndarray) -> float:
        x_cf = xs.copy()
        x_cf[sub] += z * scales
        return float(model.predict_proba(x_cf[None, :])[0])

    def objective(z: np.ndarray) -> float:
        return float(np.sum(wsub * np.abs(z) * scales))

    constraints = [lambda z: score_of(z) - target]
    for k in range(len(subset)):
        constraints.append(lambda z, k=k: hi[k] - z[k])
        constraints.append(lambda z, k=k: z[k] - lo[k])

    rng = np.random.default_rng(_instance_seed(xs, subset))
    starts = [np.zeros(len(subset))]
    for _ in range(config.n_restarts):
        starts.append(rng.uniform(-0.5, 0.5, len(subset)) * (hi - lo)
                      + (hi + lo) / 2 * 0.0)
    best = None
    best_obj = np.inf
    for z0 in starts:
        z0 = np.clip(z0, lo, hi)
        problem = cobyla.OptProblem(
            dimension=len(subset), objective=objective,
            constraints=constraints, x0=z0, rho_begin=0.25,
            rho_end=1e-6, max_evals=config.solver_max_evals)
        res = cobyla.minimize(problem)
        if res.max_violation <= cobyla.FEASIBILITY_TOL and res.f_best < best_obj:
            best = res.x_best
            best_obj = res.f_best
    if best is None:
        return None
    return {int(j): float(z * s) for j, z, s in zip(subset, best, scales)
            if z != 0.0}


def _verify(model, x_cf: np.ndarray, config: CfxConfig) -> float | None:
    score = float(model.predict_proba(x_cf[None, :])[0])
    if score >= config.flip_threshold + config.flip_margin:
        return score
    return None


def find_counterfactual(model: Ensemble, x, catalog: FeatureCatalog,
                        weights: DistanceWeights,
                        config: CfxConfig | None = None) -> CounterfactualResult:
    """Minimal-distance verified flip over all subsets of perturbable
    features up to max_changes; NotFound if nothing verifies."""
    config = config or CfxConfig()
    xv = np.ascontiguousarray(np.asarray(getattr(x, "values", x),
                                         dtype=np.float64))
    score_orig = float(model.predict_proba(xv[None, :])[0])
    if score_orig >= config.flip_threshold:
        raise CfxError("instance is already classified Sick; nothing to flip")

    idxs = _perturbable(catalog, config)
    best_delta: dict[int, float] | None = None
    best_key = None
    best_score = 0.0
    searched = 0
    for size in range(1, config.max_changes + 1):
        for subset in itertools.combinations(idxs, size):
            searched += 1
            if best_key is not None:
                lb = min((weights.w[j] * catalog.specs[j].min_change
                          for j in subset
                          if catalog.specs[j].min_change is not None),
                         default=0.0)
                if lb > best_key[0]:
                    continue
            if config.grid_mode:
                candidate, score = _solve_subset_grid(
                    model, xv, subset, catalog, weights, config)
            else:
                candidate, score = _solve_subset_with_retry(
                    model, xv, subset, catalog, weights, config)
            if candidate is None:
                continue
            key = _candidate_key(candidate, weights)
            if best_key is None or key < best_key:
                best_key, best_delta, best_score = key, candidate, score
    if best_delta is None:
        return CounterfactualResult({}, xv.copy(), score_orig, score_orig,
                                    math.inf, searched, CfxStatus.NotFound)
    return CounterfactualResult(best_delta, _apply_delta(xv, best_delta),
                                score_orig, best_score, best_key[0], searched,
                                CfxStatus.Found)


def _quantized_neighbors(delta: dict[int, float], catalog: FeatureCatalog):
    """The quantized candidate plus its one-step-smaller variants per
    feature (quantization rounds away from zero, so the optimum may sit
    one grid step closer)."""
    items = sorted(delta.items())
    options = []
    for j, d in items:
        step = catalog.specs[j].min_change
        alts = [d]
        if step is not None and abs(d) > step + 1e-12:
            alts.append(math.copysign(abs(d) - step, d))
        options.append([(j, a) for a in alts])
    for combo in itertools.product(*options):
        yield dict(combo)


def _solve_subset_with_retry(model, xv, subset, catalog, weights, config):
    """Continuous solve, quantize, re-verify; one retry at doubled margin."""
    for margin in (config.flip_margin, 2 * config.flip_margin):
        raw = _solve_subset_continuous(model, xv, subset, catalog, weights,
                                       config, margin)
        if raw is None:
            continue
        quantized = quantize_deltas(raw, catalog)
        clamped = _clamp_quantized(quantized, xv, catalog)
        if not clamped:
            continue
        best = None
        for candidate in _quantized_neighbors(clamped, catalog):
            score = _verify(model, _apply_delta(xv, candidate), config)
            if score is None:
                continue
            key = _candidate_key(candidate, weights)
            if best is None or key < best[0]:
                best = (key, candidate, score)
        if best is not None:
            return best[1], best[2]
        if config.flip_margin == 0:
            break
    return None, 0.0


def _solve_subset_grid(model, xv, subset, catalog, weights, config):
    """Exact search over the step grid restricted to one subset."""
    grids = [_grid_for(catalog.specs[j], xv[j], config) for j in subset]
    if any(g.size == 0 for g in grids):
        return None, 0.0
    combos = np.array(list(itertools.product(*grids)))
    X_cf = np.tile(xv, (combos.shape[0], 1))
    for k, j in enumerate(subset):
        X_cf[:, j] += combos[:, k]
    scores = model.predict_proba(X_cf)
    ok = scores >= config.flip_threshold + config.flip_margin
    if not ok.any():
        return None, 0.0
    wsub = weights.w[list(subset)]
    dists = np.abs(combos) @ wsub
    dists[~ok] = np.inf
    best = None
    for i in np.flatnonzero(ok):
        delta = {int(j): float(combos[i, k]) for k, j in enumerate(subset)}
        key = _candidate_key(delta, weights)
        if best is None or key < best[0]:
            best = (key, delta, float(scores[i]))
    return best[1], best[2]


def brute_force_counterfactual(model: Ensemble, x, catalog: FeatureCatalog,
                               weights: DistanceWeights,
                               config: CfxConfig | None = None
                               ) -> CounterfactualResult:
    """Exhaustive grid oracle: enumerates every step-grid change map with
    at most max_changes features and returns the exact minimum."""
    config = config or CfxConfig()
    xv = np.ascontiguousarray(np.asarray(getattr(x, "values", x),
                                         dtype=np.float64))
    score_orig = float(model.predict_proba(xv[None, :])[0])
    if score_orig >= config.flip_threshold:
        raise CfxError("instance is already classified Sick; nothing to flip")

    idxs = _perturbable(catalog, config)
    grids = {j: _grid_for(catalog.specs[j], xv[j], config) for j in idxs}
    total = 0
    for size in range(1, config.max_changes + 1):
        for subset in itertools.combinations(idxs, size):
            n = 1
            for j in subset:
                n *= max(grids[j].size, 1)
            total += n
    if total > BRUTE_FORCE_GUARD:
        raise CfxError(f"grid search space too large ({total} candidates)")

    target = config.flip_threshold + config.flip_margin
    best = None
    searched = 0
    for size in range(1, config.max_changes + 1):
        for subset in itertools.combinations(idxs, size):
            searched += 1
            sub_grids = [grids[j] for j in subset]
            if any(g.size == 0 for g in sub_grids):
                continue
            for combo in itertools.product(*sub_grids):
                x_cf = xv.copy()
                for j, d in zip(subset, combo):
                    x_cf[j] += d
                score = float(model.predict_proba(x_cf[None, :])[0])
                if score < target:
                    continue
                delta = {int(j): float(d) for j, d in zip(subset, combo)}
                key = _candidate_key(delta, weights)
                if best is None or key < best[0]:
                    best = (key, delta, score)
    if best is None:
        return CounterfactualResult({}, xv.copy(), score_orig, score_orig,
                                    math.inf, searched, CfxStatus.NotFound)
    key, delta, score = best
    return CounterfactualResult(delta, _apply_delta(xv, delta), score_orig,
                                score, key[0], searched, CfxStatus.Found)


def result_document(result: CounterfactualResult, catalog: FeatureCatalog,
                    x_names: bool = True) -> dict:
    """Wire format shared by the service and the CLI."""
    return {
        "status": result.status.value,
        "score_original": result.score_original,
        "score_cf": result.score_cf,
        "distance": None if math.isinf(result.distance) else result.distance,
        "subsets_searched": result.subsets_searched,
        "original": {spec.name: float(v)
                     for spec, v in zip(catalog, result.x_cf - _delta_as_vec(
                         result.delta, len(catalog)))} if x_names else None,
        "deltas": [
            {"feature": catalog.specs[j].name,
             "change": d,
             "unit": catalog.specs[j].unit}
            for j, d in sorted(result.delta.items())
        ],
    }


def _delta_as_vec(delta: dict[int, float], n: int) -> np.ndarray:
    v = np.zeros(n)
    for j, d in delta.items():
        v[j] = d
    return v
