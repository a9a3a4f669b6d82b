"""Raw herd records, feature engineering, labeling, and synthetic herds.

Feature engineering follows the catalog layout: current milk values by
last-observation-carried-forward (within 30 days, then cow median, then
population median), a 30-day skewness aggregate per milk characteristic,
static cow attributes, and infection-history counters. Labels mark a cow
sick at day d iff an infection onset falls within (d, d + horizon].

The synthetic generator stands in for unavailable farm data: it plants a
learnable signal (SCC ramps up and yield dips in the days before an
onset; low body condition raises infection hazard) so that a trained
model and the counterfactual engine have something real to find.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import MILK_CHARACTERISTICS, FeatureCatalog, FeatureKind

LOCF_WINDOW_DAYS = 30
SKEW_WINDOW_DAYS = 30
LACTATION_STAGE_BUCKET_DAYS = 30
POST_EPISODE_EXCLUSION_DAYS = 7


class DatasetError(ValueError):
    pass


class Label(str, enum.Enum):
    Sick = "Sick"
    Healthy = "Healthy"


@dataclass
class MilkRecording:
    cow_id: str
    date: dt.date
    yield_am: float | None = None
    yield_pm: float | None = None
    fat_pct: float | None = None
    protein_pct: float | None = None
    lactose_pct: float | None = None
    scc: float | None = None
    urea: float | None = None

    def __post_init__(self) -> None:
        for name in ("yield_am", "yield_pm", "scc"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DatasetError(f"{self.cow_id} {self.date}: {name} must be >= 0")
        for name in ("fat_pct", "protein_pct", "lactose_pct"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 15:
                raise DatasetError(
                    f"{self.cow_id} {self.date}: {name} must be in [0, 15]")


@dataclass
class CowRecord:
    cow_id: str
    farm_id: str
    parity: int
    calving_date: dt.date
    genetic_merit: float
    weight_series: list[tuple[dt.date, float]] = field(default_factory=list)
    bcs_series: list[tuple[dt.date, float]] = field(default_factory=list)
    infection_events: list[tuple[dt.date, dt.date | None]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.parity < 1:
            raise DatasetError(f"{self.cow_id}: parity must be >= 1")
        for _, v in self.bcs_series:
            if not 1 <= v <= 5:
                raise DatasetError(f"{self.cow_id}: bcs values must be in [1, 5]")
        onsets = [o for o, _ in self.infection_events]
        if onsets != sorted(onsets):
            raise DatasetError(f"{self.cow_id}: infection events must be sorted")


@dataclass
class FeatureVector:
    values: np.ndarray
    cow_id: str
    as_of_date: dt.date

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (self.cow_id == other.cow_id
                and self.as_of_date == other.as_of_date
                and np.array_equal(self.values, other.values))


@dataclass
class LabeledInstance:
    x: FeatureVector
    label: Label
    horizon_days: int


def skewness(series) -> float:
    """Sample skewness g1 = m3 / m2^(3/2); 0 for short or constant series."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < 3:
        return 0.0
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 <= 0.0:
        return 0.0
    m3 = float(np.mean(d * d * d))
    denom = m2 ** 1.5
    if denom == 0.0:  # m2 tiny enough that its 1.5 power underflows
        return 0.0
    return m3 / denom


# ---------------------------------------------------------------------------
# Herd-level context for history-derived counters and imputation fallbacks.


_IMPUTE_DEFAULTS = {
    "yield": 22.0, "fat_pct": 4.0, "protein_pct": 3.4, "lactose_pct": 4.6,
    "scc": 80.0, "urea": 25.0, "weight": 600.0, "bcs": 3.0,
}


class HerdContext:
    """Farm-wide lookup tables shared by all per-cow feature computations."""

    def __init__(self, cows: list[CowRecord], milk: list[MilkRecording]):
        # farm -> stage bucket -> sorted onset day ordinals
        self.farm_stage_onsets: dict[str, dict[int, np.ndarray]] = {}
        # (farm, calving_year) -> (sorted first-onset ordinals, n_cows)
        self.farm_year_first_onsets: dict[tuple[str, int], tuple[np.ndarray, int]] = {}
        per_farm: dict[str, dict[int, list[int]]] = {}
        per_fy: dict[tuple[str, int], list[list[int]]] = {}
        for cow in cows:
            fy = (cow.farm_id, cow.calving_date.year)
            firsts = per_fy.setdefault(fy, [[], []])
            firsts[1].append(0)
            if cow.infection_events:
                firsts[0].append(cow.infection_events[0][0].toordinal())
            stages = per_farm.setdefault(cow.farm_id, {})
            for onset, _ in cow.infection_events:
                dsc = (onset - cow.calving_date).days
                bucket = dsc // LACTATION_STAGE_BUCKET_DAYS
                stages.setdefault(bucket, []).append(onset.toordinal())
        for farm, stages in per_farm.items():
            self.farm_stage_onsets[farm] = {
                b: np.array(sorted(v), dtype=np.int64) for b, v in stages.items()}
        for fy, (onsets, counts) in per_fy.items():
            self.farm_year_first_onsets[fy] = (
                np.array(sorted(onsets), dtype=np.int64), len(counts))

        # population medians per milk characteristic (imputation fallback)
        self.pop_medians = dict(_IMPUTE_DEFAULTS)
        by_field: dict[str, list[float]] = {k: [] for k in MILK_CHARACTERISTICS}
        for rec in milk:
            tot = _daily_yield(rec)
            if tot is not None:
                by_field["yield"].append(tot)
            for name in ("fat_pct", "protein_pct", "lactose_pct", "scc", "urea"):
                v = getattr(rec, name)
                if v is not None:
                    by_field[name].append(v)
        for name, vals in by_field.items():
            if vals:
                self.pop_medians[name] = float(np.median(vals))


def build_context(cows: list[CowRecord], milk: list[MilkRecording]) -> HerdContext:
    return HerdContext(cows, milk)


def _daily_yield(rec: MilkRecording) -> float | None:
    if rec.yield_am is None and rec.yield_pm is None:
        return None
    return (rec.yield_am or 0.0) + (rec.yield_pm or 0.0)


# ---------------------------------------------------------------------------
# Vectorized per-cow feature engineering


def _obs_arrays(milk: list[MilkRecording]):
    """Per-characteristic (day ordinals, values) arrays, sorted by day."""
    recs = sorted(milk, key=lambda r: r.date)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name in MILK_CHARACTERISTICS:
        days, vals = [], []
        for r in recs:
            v = _daily_yield(r) if name == "yield" else getattr(r, name)
            if v is not None:
                days.append(r.date.toordinal())
                vals.append(float(v))
        out[name] = (np.array(days, dtype=np.int64), np.array(vals))
    return out


def _locf(obs_d: np.ndarray, obs_v: np.ndarray, days: np.ndarray,
          max_age: int | None, fallback: float) -> np.ndarray:
    if obs_d.size == 0:
        return np.full(days.shape, fallback)
    j = np.searchsorted(obs_d, days, side="right") - 1
    jc = np.clip(j, 0, None)
    vals = obs_v[jc]
    ok = j >= 0
    if max_age is not None:
        ok &= (days - obs_d[jc]) <= max_age
    cow_fallback = float(np.median(obs_v))
    return np.where(ok, vals, cow_fallback)


def _window_skew(obs_d: np.ndarray, obs_v: np.ndarray, days: np.ndarray) -> np.ndarray:
    """Sample skewness of observations in [d-29, d] for each day d.

    Values are centered on the cow-level mean before the prefix sums so a
    constant window yields exactly zero variance.
    """
    n_days = days.shape[0]
    if obs_d.size == 0:
        return np.zeros(n_days)
    v = obs_v - obs_v.mean()
    s1 = np.concatenate(([0.0], np.cumsum(v)))
    s2 = np.concatenate(([0.0], np.cumsum(v * v)))
    s3 = np.concatenate(([0.0], np.cumsum(v * v * v)))
    lo = np.searchsorted(obs_d, days - (SKEW_WINDOW_DAYS - 1), side="left")
    hi = np.searchsorted(obs_d, days, side="right")
    n = (hi - lo).astype(np.float64)
    out = np.zeros(n_days)
    ok = n >= 3
    if not ok.any():
        return out
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = (s1[hi] - s1[lo]) / n
        raw2 = (s2[hi] - s2[lo]) / n
        raw3 = (s3[hi] - s3[lo]) / n
        m2 = raw2 - mu * mu
        m3 = raw3 - 3.0 * mu * raw2 + 2.0 * mu ** 3
        nonconst = m2 > 1e-12 * (raw2 + 1e-300)
        sel = ok & nonconst
        out[sel] = m3[sel] / m2[sel] ** 1.5
    return out


def _series_locf(series: list[tuple[dt.date, float]], days: np.ndarray,
                 fallback: float) -> np.ndarray:
    srt = sorted(series, key=lambda p: p[0])
    obs_d = np.array([d.toordinal() for d, _ in srt], dtype=np.int64)
    obs_v = np.array([v for _, v in srt])
    return _locf(obs_d, obs_v, days, None, fallback)


def _count_before(sorted_days: np.ndarray, days: np.ndarray) -> np.ndarray:
    return np.searchsorted(sorted_days, days, side="left").astype(np.float64)


def _cow_feature_matrix(cow: CowRecord, milk: list[MilkRecording],
                        days: np.ndarray, catalog: FeatureCatalog,
                        context: HerdContext | None):
    """Feature matrix (len(days), len(catalog)) for one cow; returns
    (matrix, clamp_count, has_history mask)."""
    obs = _obs_arrays(milk)
    pop = context.pop_medians if context is not None else _IMPUTE_DEFAULTS
    cols: dict[str, np.ndarray] = {}

    for name in MILK_CHARACTERISTICS:
        obs_d, obs_v = obs[name]
        cols[name] = _locf(obs_d, obs_v, days, LOCF_WINDOW_DAYS, pop[name])
        cols[f"{name}_skew30"] = _window_skew(obs_d, obs_v, days)

    cols["bcs"] = _series_locf(cow.bcs_series, days, pop["bcs"])
    cols["weight"] = _series_locf(cow.weight_series, days, pop["weight"])
    cols["genetic_merit"] = np.full(days.shape, cow.genetic_merit)
    cols["parity"] = np.full(days.shape, float(cow.parity))
    calving = cow.calving_date.toordinal()
    dsc = (days - calving).astype(np.float64)
    cols["days_since_calving"] = dsc
    months = (days - dt.date(1, 1, 1).toordinal()).astype("timedelta64[D]")
    as_dates = np.datetime64("0001-01-01") + months
    cols["calendar_month"] = (as_dates.astype("datetime64[M]").astype(int) % 12
                              + 1).astype(np.float64)

    onsets = np.array([o.toordinal() for o, _ in cow.infection_events],
                      dtype=np.int64)
    cols["infections_cow"] = _count_before(onsets, days)
    buckets = np.maximum(dsc, 0.0).astype(np.int64) // LACTATION_STAGE_BUCKET_DAYS
    onset_buckets = ((onsets - calving) // LACTATION_STAGE_BUCKET_DAYS
                     if onsets.size else onsets)
    cow_stage = np.zeros(days.shape)
    farm_stage = np.zeros(days.shape)
    prop = np.zeros(days.shape)
    farm_lookup = (context.farm_stage_onsets.get(cow.farm_id, {})
                   if context is not None else {})
    for b in np.unique(buckets):
        mask = buckets == b
        if onsets.size:
            mine = np.sort(onsets[onset_buckets == b])
            cow_stage[mask] = _count_before(mine, days[mask])
        if context is not None:
            theirs = farm_lookup.get(int(b))
            if theirs is not None:
                farm_stage[mask] = _count_before(theirs, days[mask])
        else:
            farm_stage[mask] = cow_stage[mask]
    cols["infections_lactation_stage_cow"] = cow_stage
    cols["infections_lactation_stage_farm"] = farm_stage
    if context is not None:
        fy = (cow.farm_id, cow.calving_date.year)
        entry = context.farm_year_first_onsets.get(fy)
        if entry is not None:
            firsts, n_fy = entry
            prop = _count_before(firsts, days) / max(n_fy, 1)
    else:
        prop = np.where(cols["infections_cow"] > 0, 1.0, 0.0)
    cols["proportion_infected_farm_calving_year"] = prop

    matrix = np.empty((days.shape[0], len(catalog)))
    clamped = 0
    for i, spec in enumerate(catalog):
        col = cols[spec.name]
        out_of_bounds = (col < spec.lower_bound) | (col > spec.upper_bound)
        clamped += int(out_of_bounds.sum())
        matrix[:, i] = np.clip(col, spec.lower_bound, spec.upper_bound)

    yd, _ = obs["yield"]
    lo = np.searchsorted(yd, days - (LOCF_WINDOW_DAYS - 1), side="left")
    hi = np.searchsorted(yd, days, side="right")
    has_history = hi > lo
    return matrix, clamped, has_history


def engineer_features(cow: CowRecord, milk: list[MilkRecording], as_of: dt.date,
                      catalog: FeatureCatalog,
                      context: HerdContext | None = None) -> FeatureVector:
    """Feature vector for one cow on one day. Pure and deterministic."""
    if as_of < cow.calving_date:
        raise DatasetError(
            f"{cow.cow_id}: as_of {as_of} is before calving {cow.calving_date}")
    own = [r for r in milk if r.cow_id == cow.cow_id]
    days = np.array([as_of.toordinal()], dtype=np.int64)
    matrix, _, has_history = _cow_feature_matrix(cow, own, days, catalog, context)
    if not has_history[0]:
        raise DatasetError(
            f"{cow.cow_id}: no milk recording within {LOCF_WINDOW_DAYS} days "
            f"of {as_of}")
    return FeatureVector(matrix[0], cow.cow_id, as_of)


# ---------------------------------------------------------------------------
# Instance tables and labeling


class InstanceTable:
    """Columnar instance set: one row per eligible (cow, day)."""

    def __init__(self, X: np.ndarray, cow_ids: list[str], day_ordinals: np.ndarray,
                 days_to_onset: np.ndarray, n_clamped: int):
        self.X = X
        self.cow_ids = cow_ids
        self.day_ordinals = day_ordinals
        self.days_to_onset = days_to_onset
        self.n_clamped = n_clamped

    def __len__(self) -> int:
        return self.X.shape[0]

    def labels(self, horizon_days: int) -> np.ndarray:
        """Boolean Sick labels at the given horizon."""
        if not 1 <= horizon_days <= 7:
            raise DatasetError("horizon_days must be in 1..7")
        return self.days_to_onset <= horizon_days

    def date_of(self, i: int) -> dt.date:
        return dt.date.fromordinal(int(self.day_ordinals[i]))


def build_instance_table(cows: list[CowRecord], milk: list[MilkRecording],
                         catalog: FeatureCatalog,
                         context: HerdContext | None = None) -> InstanceTable:
    if not cows or not milk:
        raise DatasetError("empty input")
    if context is None:
        context = build_context(cows, milk)
    milk_by_cow: dict[str, list[MilkRecording]] = {}
    for rec in milk:
        milk_by_cow.setdefault(rec.cow_id, []).append(rec)

    mats, ids, dayss, dtns = [], [], [], []
    clamped = 0
    for cow in cows:
        own = milk_by_cow.get(cow.cow_id, [])
        if not own:
            continue
        first = min(r.date for r in own).toordinal()
        last = max(r.date for r in own).toordinal()
        start = max(first, cow.calving_date.toordinal())
        if last < start:
            continue
        days = np.arange(start, last + 1, dtype=np.int64)
        matrix, c, has_history = _cow_feature_matrix(cow, own, days, catalog,
                                                     context)
        clamped += c
        keep = has_history.copy()
        onsets = np.array([o.toordinal() for o, _ in cow.infection_events],
                          dtype=np.int64)
        # drop active-episode days and the post-episode washout window
        for onset, end in cow.infection_events:
            o = onset.toordinal()
            e = end.toordinal() if end is not None else last
            keep &= ~((days >= o) & (days <= e + POST_EPISODE_EXCLUSION_DAYS))
        if not keep.any():
            continue
        days = days[keep]
        matrix = matrix[keep]
        if onsets.size:
            k = np.searchsorted(onsets, days, side="right")
            nxt = np.where(k < onsets.size, onsets[np.clip(k, 0, onsets.size - 1)],
                           np.iinfo(np.int64).max)
            dtn = np.where(nxt == np.iinfo(np.int64).max, np.inf,
                           (nxt - days).astype(np.float64))
        else:
            dtn = np.full(days.shape, np.inf)
        mats.append(matrix)
        dayss.append(days)
        dtns.append(dtn)
        ids.extend([cow.cow_id] * days.shape[0])
    if not mats:
        raise DatasetError("no instances with sufficient history")
    return InstanceTable(np.ascontiguousarray(np.concatenate(mats)), ids,
                         np.concatenate(dayss), np.concatenate(dtns), clamped)


def label_instances(cows: list[CowRecord], milk: list[MilkRecording],
                    horizon_days: int, catalog: FeatureCatalog,
                    context: HerdContext | None = None) -> list[LabeledInstance]:
    if not 1 <= horizon_days <= 7:
        raise DatasetError("horizon_days must be in 1..7")
    table = build_instance_table(cows, milk, catalog, context)
    labels = table.labels(horizon_days)
    out = []
    for i in range(len(table)):
        fv = FeatureVector(table.X[i], table.cow_ids[i], table.date_of(i))
        out.append(LabeledInstance(fv, Label.Sick if labels[i] else Label.Healthy,
                                   horizon_days))
    return out


# ---------------------------------------------------------------------------
# Synthetic herd generator


@dataclass(frozen=True)
class SynthConfig:
    n_cows: int = 300
    n_days: int = 730
    n_farms: int = 3
    start_date: dt.date = dt.date(2022, 1, 1)
    infection_rate: float = 0.004   # base daily hazard scale
    measurement_interval: int = 7   # fat/protein/lactose/scc/urea cadence
    body_interval: int = 14         # weight/bcs cadence

    def __post_init__(self) -> None:
        if self.n_cows < 1:
            raise DatasetError("n_cows must be >= 1")
        if self.n_days < 60:
            raise DatasetError("n_days must be >= 60")
        if self.n_farms < 1:
            raise DatasetError("n_farms must be >= 1")
        if self.infection_rate < 0:
            raise DatasetError("infection_rate must be >= 0")
        if self.measurement_interval < 1 or self.body_interval < 1:
            raise DatasetError("measurement intervals must be >= 1")


def _wood_curve(t: np.ndarray, peak: float) -> np.ndarray:
    """Lactation curve shape scaled so its maximum is `peak` kg/day."""
    tt = np.maximum(t, 1.0)
    shape = tt ** 0.2 * np.exp(-0.0035 * tt)
    ref = (0.2 / 0.0035) ** 0.2 * np.exp(-0.2)
    return peak * shape / ref


def generate_herd(config: SynthConfig, seed: int):
    """Deterministic synthetic herd: (cows, milk recordings)."""
    rng = np.random.default_rng(seed)
    start = config.start_date.toordinal()
    cows: list[CowRecord] = []
    milk: list[MilkRecording] = []

    scc_threshold = 200.0
    for ci in range(config.n_cows):
        cow_id = f"cow{ci:04d}"
        farm_id = f"farm{int(rng.integers(config.n_farms)):02d}"
        parity = int(rng.integers(1, 6))
        calving_off = int(rng.integers(-60, max(config.n_days - 300, 0) + 1))
        calving = start + calving_off
        genetic_merit = float(np.clip(rng.normal(0.0, 1.0), -5.0, 5.0))

        peak_yield = float(rng.normal(26.0, 4.0) + 1.5 * genetic_merit)
        peak_yield = max(peak_yield, 12.0)
        base_scc = float(np.exp(rng.normal(np.log(60.0), 0.25)))
        base_bcs = float(np.clip(rng.normal(3.1, 0.35), 1.8, 4.5))
        frailty = float(np.exp(rng.normal(0.0, 0.5)))

        day0 = max(start, calving)
        n = config.n_days - (day0 - start)
        if n <= 0:
            n = config.n_days
            day0 = start
        t = np.arange(n, dtype=np.float64) + (day0 - calving)

        # body condition: post-calving dip then slow recovery, AR noise
        bcs_curve = base_bcs - 0.5 * np.exp(-t / 60.0) + 0.25 * (1 - np.exp(-t / 200.0))
        bcs_noise = np.zeros(n)
        eps = rng.normal(0.0, 0.02, n)
        for i in range(1, n):
            bcs_noise[i] = 0.97 * bcs_noise[i - 1] + eps[i]
        bcs_daily = np.clip(bcs_curve + bcs_noise, 1.0, 5.0)

        yield_base = _wood_curve(t, peak_yield)
        scc_ar = np.zeros(n)
        eps = rng.normal(0.0, 0.06, n)
        for i in range(1, n):
            scc_ar[i] = 0.9 * scc_ar[i - 1] + eps[i]

        # infection episodes: hazard driven by low BCS, frailty, and prior
        # infections; each episode ramps SCC up and pulls yield down.
        ramp = np.zeros(n)
        episode_until = -1
        refractory_until = -1
        n_prior = 0
        triggers: list[int] = []
        u = rng.random(n)
        for i in range(n):
            if i <= episode_until:
                continue
            if i <= refractory_until:
                continue
            hazard = config.infection_rate * frailty * math.exp(
                1.1 * max(3.0 - bcs_daily[i], 0.0) + 0.25 * min(n_prior, 3))
            if u[i] < min(hazard, 0.25):
                triggers.append(i)
                n_prior += 1
                rise, hold, fall = 18, 14, 12
                dur = rise + hold + fall
                for j in range(i, min(i + dur, n)):
                    tau = j - i
                    if tau < rise:
                        level = 2.6 * (tau + 1) / rise
                    elif tau < rise + hold:
                        level = 2.6
                    else:
                        level = 2.6 * (1 - (tau - rise - hold) / fall)
                    ramp[j] = max(ramp[j], level)
                episode_until = i + dur
                refractory_until = episode_until + 30
        scc_daily = base_scc * np.exp(scc_ar + ramp)
        yield_daily = np.clip(
            yield_base * (1 - 0.32 * ramp / 2.6)
            + rng.normal(0.0, 1.0, n), 0.5, 79.0)
        fat_daily = np.clip(rng.normal(4.1, 0.25) + 0.1 * scc_ar
                            + rng.normal(0.0, 0.15, n), 1.0, 9.0)
        protein_daily = np.clip(rng.normal(3.4, 0.2) + rng.normal(0.0, 0.1, n),
                                1.0, 8.0)
        lactose_daily = np.clip(rng.normal(4.6, 0.15) - 0.14 * ramp
                                + rng.normal(0.0, 0.08, n), 1.0, 8.0)
        urea_daily = np.clip(rng.normal(26.0, 4.0) + rng.normal(0.0, 2.0, n),
                             2.0, 80.0)

        phase = int(rng.integers(config.measurement_interval))
        meas_days = np.arange(phase, n, config.measurement_interval)
        body_phase = int(rng.integers(config.body_interval))
        body_days = np.arange(body_phase, n, config.body_interval)

        # derive onset events from the measurement rule: first of two
        # consecutive SCC measurements at or above the threshold
        scc_meas = scc_daily[meas_days] * np.exp(rng.normal(0.0, 0.05,
                                                            meas_days.size))
        events: list[tuple[dt.date, dt.date | None]] = []
        k = 0
        while k + 1 < meas_days.size:
            if scc_meas[k] >= scc_threshold and scc_meas[k + 1] >= scc_threshold:
                onset_i = int(meas_days[k])
                e = k + 2
                while e < meas_days.size and scc_meas[e] >= scc_threshold:
                    e += 1
                end_i = int(meas_days[e]) if e < meas_days.size else None
                events.append((
                    dt.date.fromordinal(day0 + onset_i),
                    dt.date.fromordinal(day0 + end_i) if end_i is not None else None,
                ))
                k = e + 1
            else:
                k += 1

        weight_base = float(rng.normal(560.0, 50.0) + 15.0 * parity)
        weight_series = [
            (dt.date.fromordinal(day0 + int(i)),
             round(float(np.clip(weight_base + rng.normal(0.0, 8.0), 250.0,
                                 1100.0)), 1))
            for i in body_days
        ]
        bcs_series = [
            (dt.date.fromordinal(day0 + int(i)),
             round(float(np.clip(
                 np.round(bcs_daily[int(i)] / 0.25) * 0.25, 1.0, 5.0)), 2))
            for i in body_days
        ]

        cows.append(CowRecord(
            cow_id=cow_id, farm_id=farm_id, parity=parity,
            calving_date=dt.date.fromordinal(calving),
            genetic_merit=round(genetic_merit, 3),
            weight_series=weight_series, bcs_series=bcs_series,
            infection_events=events,
        ))

        meas_set = set(int(i) for i in meas_days)
        meas_index = {int(d): j for j, d in enumerate(meas_days)}
        for i in range(n):
            rec = MilkRecording(
                cow_id=cow_id,
                date=dt.date.fromordinal(day0 + i),
                yield_am=round(float(yield_daily[i]) * 0.52, 2),
                yield_pm=round(float(yield_daily[i]) * 0.48, 2),
            )
            if i in meas_set:
                j = meas_index[i]
                rec.fat_pct = round(float(fat_daily[i]), 2)
                rec.protein_pct = round(float(protein_daily[i]), 2)
                rec.lactose_pct = round(float(lactose_daily[i]), 2)
                rec.scc = round(float(min(scc_meas[j], 4999.0)), 1)
                rec.urea = round(float(urea_daily[i]), 1)
            milk.append(rec)
    return cows, milk


# ---------------------------------------------------------------------------
# CSV round-trip (milk.csv, cows.csv, events.csv, body.csv)


_MILK_COLS = ("cow_id", "date", "yield_am", "yield_pm", "fat_pct",
              "protein_pct", "lactose_pct", "scc", "urea")
_COW_COLS = ("cow_id", "farm_id", "parity", "calving_date", "genetic_merit")
_EVENT_COLS = ("cow_id", "onset_date", "end_date")
_BODY_COLS = ("cow_id", "date", "weight", "bcs")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(int(v)) if v.is_integer() else repr(v)
    return str(v)


def _parse_float(raw: str, col: str, row: int) -> float | None:
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise DatasetError(f"row {row}: bad numeric value {raw!r} in {col!r}") from None


def _parse_date(raw: str, col: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError:
        raise DatasetError(f"row {row}: bad ISO date {raw!r} in {col!r}") from None


def save_csv(cows: list[CowRecord], milk: list[MilkRecording],
             directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    with open(directory / "milk.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_MILK_COLS)
        for r in milk:
            w.writerow([r.cow_id, r.date.isoformat(), _fmt(r.yield_am),
                        _fmt(r.yield_pm), _fmt(r.fat_pct), _fmt(r.protein_pct),
                        _fmt(r.lactose_pct), _fmt(r.scc), _fmt(r.urea)])
    with open(directory / "cows.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_COW_COLS)
        for c in cows:
            w.writerow([c.cow_id, c.farm_id, c.parity,
                        c.calving_date.isoformat(), _fmt(c.genetic_merit)])
    with open(directory / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_EVENT_COLS)
        for c in cows:
            for onset, end in c.infection_events:
                w.writerow([c.cow_id, onset.isoformat(),
                            end.isoformat() if end is not None else ""])
    with open(directory / "body.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_BODY_COLS)
        for c in cows:
            by_date: dict[dt.date, list] = {}
            for d, v in c.weight_series:
                by_date.setdefault(d, [None, None])[0] = v
            for d, v in c.bcs_series:
                by_date.setdefault(d, [None, None])[1] = v
            for d in sorted(by_date):
                weight, bcs = by_date[d]
                w.writerow([c.cow_id, d.isoformat(), _fmt(weight), _fmt(bcs)])


def _read_rows(path: Path, expected_cols: tuple[str, ...]):
    if not path.exists():
        raise DatasetError(f"missing file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path.name}: empty file") from None
        missing = [c for c in expected_cols if c not in header]
        if missing:
            raise DatasetError(f"{path.name}: missing required column(s) "
                               f"{', '.join(missing)}")
        idx = [header.index(c) for c in expected_cols]
        for rownum, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path.name} row {rownum}: expected "
                                   f"{len(header)} columns, got {len(row)}")
            yield rownum, [row[i] for i in idx]


def load_csv(directory: str | Path):
    """Load (cows, milk) from the four-file CSV layout."""
    directory = Path(directory)
    cows: dict[str, CowRecord] = {}
    for rownum, (cow_id, farm_id, parity, calving, gm) in _read_rows(
            directory / "cows.csv", _COW_COLS):
        try:
            parity_i = int(parity)
        except ValueError:
            raise DatasetError(f"cows.csv row {rownum}: bad parity {parity!r}") \
                from None
        gm_v = _parse_float(gm, "genetic_merit", rownum)
        if gm_v is None:
            raise DatasetError(f"cows.csv row {rownum}: genetic_merit required")
        try:
            cows[cow_id] = CowRecord(cow_id, farm_id, parity_i,
                                     _parse_date(calving, "calving_date", rownum),
                                     gm_v)
        except DatasetError as exc:
            raise DatasetError(f"cows.csv row {rownum}: {exc}") from None

    milk: list[MilkRecording] = []
    for rownum, vals in _read_rows(directory / "milk.csv", _MILK_COLS):
        cow_id, date = vals[0], _parse_date(vals[1], "date", rownum)
        nums = [_parse_float(v, c, rownum)
                for v, c in zip(vals[2:], _MILK_COLS[2:])]
        try:
            milk.append(MilkRecording(cow_id, date, *nums))
        except DatasetError as exc:
            raise DatasetError(f"milk.csv row {rownum}: {exc}") from None

    events_path = directory / "events.csv"
    if events_path.exists():
        for rownum, (cow_id, onset, end) in _read_rows(events_path, _EVENT_COLS):
            if cow_id not in cows:
                raise DatasetError(f"events.csv row {rownum}: unknown cow "
                                   f"{cow_id!r}")
            cows[cow_id].infection_events.append((
                _parse_date(onset, "onset_date", rownum),
                _parse_date(end, "end_date", rownum) if end else None))
        for c in cows.values():
            c.infection_events.sort(key=lambda e: e[0])

    body_path = directory / "body.csv"
    if body_path.exists():
        for rownum, (cow_id, date, weight, bcs) in _read_rows(body_path,
                                                              _BODY_COLS):
            if cow_id not in cows:
                raise DatasetError(f"body.csv row {rownum}: unknown cow "
                                   f"{cow_id!r}")
            d = _parse_date(date, "date", rownum)
            wv = _parse_float(weight, "weight", rownum)
            bv = _parse_float(bcs, "bcs", rownum)
            if wv is not None:
                cows[cow_id].weight_series.append((d, wv))
            if bv is not None:
                if not 1 <= bv <= 5:
                    raise DatasetError(f"body.csv row {rownum}: bcs {bv} out "
                                       f"of [1, 5]")
                cows[cow_id].bcs_series.append((d, bv))
    return list(cows.values()), milk
