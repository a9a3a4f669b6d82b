"""Independent oracles and toy fixtures for self-verification.

Everything here deliberately avoids the production code paths it checks:
skewness by a plain-loop moment formula, medians by explicit sorting,
counterfactual minimality by exhaustive grid enumeration against a small
hand-built tree model.
"""

from __future__ import annotations

import math

import numpy as np

from . import cfx, cobyla, dataset
from .features import Confidence, FeatureCatalog, FeatureKind, FeatureSpec
from .gbm import Ensemble, Tree


def skewness_direct(series) -> float:
    """Plain-loop g1 = m3 / m2^(3/2); mirrors the documented fallback."""
    xs = [float(v) for v in series]
    n = len(xs)
    if n < 3:
        return 0.0
    mean = math.fsum(xs) / n
    m2 = math.fsum((v - mean) ** 2 for v in xs) / n
    if m2 <= 0.0:
        return 0.0
    m3 = math.fsum((v - mean) ** 3 for v in xs) / n
    denom = m2 ** 1.5
    if denom == 0.0:  # m2 tiny enough that its 1.5 power underflows
        return 0.0
    return m3 / denom


def median_sorted(values) -> float:
    """Median by explicit sort, no numpy."""
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    if n % 2 == 1:
        return xs[mid]
    return (xs[mid - 1] + xs[mid]) / 2.0


def mad_columns_sorted(matrix) -> list[float]:
    """Per-column MAD via the sort-based median."""
    rows = [list(map(float, r)) for r in matrix]
    ncols = len(rows[0])
    out = []
    for j in range(ncols):
        col = [r[j] for r in rows]
        med = median_sorted(col)
        out.append(median_sorted([abs(v - med) for v in col]))
    return out


def rosenbrock_grid_optimum(step: float = 1e-3) -> float:
    """Brute-force minimum of 10(y-x^2)^2 + (1-x)^2 s.t. x + y <= 1 over a
    fine grid on [-2, 2]^2."""
    xs = np.arange(-2.0, 2.0 + step / 2, step)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    F = 10.0 * (Y - X ** 2) ** 2 + (1.0 - X) ** 2
    F[X + Y > 1.0] = np.inf
    return float(F.min())


def cobyla_rosenbrock_objective_error() -> float:
    """Solver objective minus the grid-oracle objective for the constrained
    Rosenbrock example (start (-1, 1))."""
    problem = cobyla.OptProblem(
        2, lambda x: 10.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2,
        [lambda x: 1.0 - x[0] - x[1]], [-1.0, 1.0],
        rho_begin=0.5, rho_end=1e-8)
    result = cobyla.minimize(problem)
    return result.f_best - rosenbrock_grid_optimum()


# ---------------------------------------------------------------------------
# Toy five-feature model for grid-oracle equivalence


def toy_catalog() -> FeatureCatalog:
    specs = [
        FeatureSpec(f"f{i}", "units", FeatureKind.Current, True, Confidence.Low,
                    0.0, 10.0, min_change=1.0)
        for i in range(5)
    ]
    return FeatureCatalog(specs, version="toy")


def _leaf(v: float) -> Tree:
    return Tree(np.array([-1]), np.array([0.0]), np.array([-1]),
                np.array([-1]), np.array([v]), np.array([True]))


def _stump(feat: int, thr: float, lo: float, hi: float) -> Tree:
    return Tree(np.array([feat, -1, -1]), np.array([thr, 0.0, 0.0]),
                np.array([1, -1, -1]), np.array([2, -1, -1]),
                np.array([0.0, lo, hi]),
                np.array([True, True, True]))


def _depth2(f1: int, t1: float, f2: int, t2: float, vals: tuple) -> Tree:
    # root -> (left leaf) / (split on f2 -> two leaves)
    return Tree(
        np.array([f1, -1, f2, -1, -1]),
        np.array([t1, 0.0, t2, 0.0, 0.0]),
        np.array([1, -1, 3, -1, -1]),
        np.array([2, -1, 4, -1, -1]),
        np.array([0.0, vals[0], 0.0, vals[1], vals[2]]),
        np.array([True] * 5),
    )


def toy_model() -> Ensemble:
    """Hand-built ensemble over the toy catalog with mixed single-feature
    and interaction effects; sick region reachable within a few unit steps."""
    trees = [
        _stump(0, 5.5, -0.5, 1.4),
        _stump(1, 6.5, -0.4, 1.2),
        _stump(2, 4.5, 0.3, -0.6),
        _depth2(3, 5.0, 4, 5.0, (-0.3, 0.2, 1.0)),
        _stump(0, 8.5, 0.0, 0.8),
    ]
    return Ensemble(trees, learning_rate=1.0, base_score=-0.9,
                    catalog_version="toy", n_features=5)


def toy_instances(n: int, seed: int, model: Ensemble | None = None,
                  config: cfx.CfxConfig | None = None) -> np.ndarray:
    """Random in-bounds instances classified Healthy by the toy model."""
    model = model or toy_model()
    config = config or cfx.CfxConfig()
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        x = rng.uniform(0.0, 10.0, 5)
        score = float(model.predict_proba(x[None, :])[0])
        if score < config.flip_threshold:
            out.append(x)
    return np.array(out)


# ---------------------------------------------------------------------------
# Check runner (used by the oracle-check CLI command)


def run_oracle_check(n: int, seed: int, break_property: str | None = None):
    """Run every oracle equivalence; returns (ok, report_lines)."""
    lines: list[str] = []
    ok = True
    if n == 0:
        return True, ["warning: --n 0, all checks vacuously pass"]
    rng = np.random.default_rng(seed)

    # skewness vs direct formula
    worst = 0.0
    for _ in range(n):
        series = rng.normal(0.0, rng.uniform(0.5, 5.0), int(rng.integers(3, 40)))
        worst = max(worst, abs(dataset.skewness(series)
                               - skewness_direct(series)))
    passed = worst <= 1e-12
    ok &= passed
    lines.append(f"{'PASS' if passed else 'FAIL'} skewness vs direct-formula "
                 f"oracle (max abs err {worst:.2e})")

    # MAD vs sort-based median oracle
    cat = toy_catalog()
    M = rng.normal(0.0, 3.0, (max(n, 10), 5)) + 5.0
    if break_property == "mad_fallback":
        M = M.copy()
        M[:, 2] = 7.0   # constant column must trigger the fallback weight
    weights = cfx.mad_weights(np.clip(M, 0, 10), cat)
    oracle_mad = mad_columns_sorted(np.clip(M, 0, 10))
    mad_err = max(abs(a - b) for a, b in zip(weights.mad, oracle_mad))
    passed = mad_err <= 1e-12
    if break_property == "mad_fallback":
        # sabotage check: the constant column must be flagged
        passed = passed and 2 not in weights.fallback_applied
    ok &= passed
    lines.append(f"{'PASS' if passed else 'FAIL'} MAD vs sort-based oracle "
                 f"(max abs err {mad_err:.2e})"
                 + (" [mad_fallback property]" if break_property else ""))

    # COBYLA example suite
    p1 = cobyla.OptProblem(1, lambda x: (x[0] - 1.0) ** 2, (), [0.0],
                           rho_begin=0.5, rho_end=1e-8)
    r1 = cobyla.minimize(p1)
    e1 = abs(r1.x_best[0] - 1.0)
    p2 = cobyla.OptProblem(2, lambda x: x[0] + x[1],
                           [lambda x: 1.0 - x[0] ** 2 - x[1] ** 2],
                           [0.0, 0.0], rho_begin=0.5, rho_end=1e-10)
    r2 = cobyla.minimize(p2)
    e2 = float(np.max(np.abs(r2.x_best + math.sqrt(2) / 2)))
    e3 = abs(cobyla_rosenbrock_objective_error())
    passed = e1 <= 1e-6 and e2 <= 1e-5 and e3 <= 1e-3
    ok &= passed
    lines.append(f"{'PASS' if passed else 'FAIL'} COBYLA example suite "
                 f"(errs {e1:.2e}, {e2:.2e}, {e3:.2e})")

    # grid-mode counterfactual vs brute-force enumeration
    model = toy_model()
    config = cfx.CfxConfig(grid_mode=True)
    weights = cfx.mad_weights(toy_instances(200, seed + 1), toy_catalog())
    n_cf = min(n, 50)
    mismatches = 0
    for x in toy_instances(n_cf, seed + 2, model, config):
        got = cfx.find_counterfactual(model, x, cat, weights, config)
        want = cfx.brute_force_counterfactual(model, x, cat, weights, config)
        if got.status != want.status or (
                got.status == cfx.CfxStatus.Found
                and got.distance != want.distance):
            mismatches += 1
    passed = mismatches == 0
    ok &= passed
    lines.append(f"{'PASS' if passed else 'FAIL'} grid-mode counterfactual vs "
                 f"brute-force oracle ({n_cf} instances, "
                 f"{mismatches} mismatches)")
    return bool(ok), lines
