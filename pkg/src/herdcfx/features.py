"""Feature schema and per-feature counterfactual policy.

The catalog fixes the canonical feature order used by every array in the
system (feature vectors, model inputs, distance weights). Each feature
carries the domain policy used by the counterfactual engine: whether the
farmer can act on it, how much confidence it builds, the minimum sensible
step size, and hard physical bounds.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable


class Confidence(enum.IntEnum):
    """Ordered confidence levels; higher means more trust-building."""

    Low = 0
    Medium = 1
    High = 2
    VeryHigh = 3


class FeatureKind(enum.Enum):
    Current = "current"
    Skew30 = "skew30"
    Static = "static"
    HistoryDerived = "history_derived"


class CatalogError(ValueError):
    """Invalid catalog definition or policy file."""


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    unit: str
    kind: FeatureKind
    actionable: bool
    confidence: Confidence
    lower_bound: float
    upper_bound: float
    actionable_time_days: int | None = None
    min_change: float | None = None
    immutable: bool = False

    def __post_init__(self) -> None:
        if not self.name or not self.name.replace("_", "").isalnum():
            raise CatalogError(f"invalid feature name: {self.name!r}")
        if not self.lower_bound < self.upper_bound:
            raise CatalogError(
                f"{self.name}: lower_bound {self.lower_bound} must be < "
                f"upper_bound {self.upper_bound}"
            )
        if self.min_change is not None:
            if self.min_change <= 0:
                raise CatalogError(f"{self.name}: min_change must be positive")
            if self.min_change >= self.upper_bound - self.lower_bound:
                raise CatalogError(
                    f"{self.name}: min_change {self.min_change} must be smaller "
                    f"than the bound range"
                )
        if self.actionable_time_days is not None and self.actionable_time_days < 0:
            raise CatalogError(f"{self.name}: actionable_time_days must be >= 0")
        if self.immutable and self.actionable:
            raise CatalogError(f"{self.name}: immutable features cannot be actionable")


class FeatureCatalog:
    """Ordered, immutable collection of FeatureSpec; canonical vector layout."""

    def __init__(self, specs: Iterable[FeatureSpec], version: str = "v1"):
        self.specs: tuple[FeatureSpec, ...] = tuple(specs)
        self.version = version
        names = [s.name for s in self.specs]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise CatalogError(f"duplicate feature names: {sorted(dupes)}")
        self._index = {s.name: i for i, s in enumerate(self.specs)}

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureCatalog):
            return NotImplemented
        return self.version == other.version and self.specs == other.specs

    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CatalogError(f"unknown feature: {name!r}") from None

    def spec(self, name: str) -> FeatureSpec:
        return self.specs[self.index(name)]


MILK_CHARACTERISTICS = ("yield", "fat_pct", "protein_pct", "lactose_pct", "scc", "urea")

# Default step sizes for features the policy table leaves blank; both are
# overridable through the policy file.
_DEFAULT_SCC_STEP = 25.0
_DEFAULT_UREA_STEP = 1.0


def default_catalog() -> FeatureCatalog:
    """The canonical feature schema with the domain-expert policy."""
    C, K = Confidence, FeatureKind
    specs = [
        FeatureSpec("scc", "x1000 cells/ml", K.Current, False, C.VeryHigh,
                    0.0, 5000.0, min_change=_DEFAULT_SCC_STEP),
        FeatureSpec("yield", "kg", K.Current, True, C.Low, 0.0, 80.0,
                    min_change=2.0),
        FeatureSpec("fat_pct", "percentage units", K.Current, True, C.Low,
                    0.0, 15.0, actionable_time_days=2, min_change=0.05),
        FeatureSpec("protein_pct", "percentage units", K.Current, True, C.Low,
                    0.0, 15.0, actionable_time_days=2, min_change=0.05),
        FeatureSpec("lactose_pct", "percentage units", K.Current, False, C.Low,
                    0.0, 15.0),
        FeatureSpec("urea", "mg/dl", K.Current, True, C.Low, 0.0, 100.0,
                    min_change=_DEFAULT_UREA_STEP),
        FeatureSpec("bcs", "units", K.Current, True, C.VeryHigh, 1.0, 5.0,
                    actionable_time_days=14, min_change=0.25),
        FeatureSpec("weight", "kg", K.Current, True, C.Medium, 200.0, 1200.0,
                    actionable_time_days=7, min_change=10.0),
        FeatureSpec("genetic_merit", "index", K.Static, True, C.VeryHigh,
                    -5.0, 5.0, actionable_time_days=1825),
        FeatureSpec("parity", "calvings", K.Static, False, C.VeryHigh,
                    1.0, 15.0, immutable=True),
        FeatureSpec("days_since_calving", "days", K.Static, False, C.VeryHigh,
                    0.0, 700.0, immutable=True),
        FeatureSpec("calendar_month", "month", K.Static, False, C.Low,
                    1.0, 12.0, immutable=True),
        FeatureSpec("infections_lactation_stage_farm", "count", K.HistoryDerived,
                    False, C.VeryHigh, 0.0, 10000.0, immutable=True),
        FeatureSpec("infections_lactation_stage_cow", "count", K.HistoryDerived,
                    False, C.VeryHigh, 0.0, 1000.0, immutable=True),
        FeatureSpec("infections_cow", "count", K.HistoryDerived,
                    False, C.VeryHigh, 0.0, 1000.0, immutable=True),
        FeatureSpec("proportion_infected_farm_calving_year", "fraction",
                    K.HistoryDerived, False, C.VeryHigh, 0.0, 1.0,
                    immutable=True),
    ]
    skew_bounds = {
        "yield": (-10.0, 10.0), "fat_pct": (-10.0, 10.0),
        "protein_pct": (-10.0, 10.0), "lactose_pct": (-10.0, 10.0),
        "scc": (-10.0, 10.0), "urea": (-10.0, 10.0),
    }
    for base in MILK_CHARACTERISTICS:
        lo, hi = skew_bounds[base]
        specs.append(FeatureSpec(f"{base}_skew30", "skewness", K.Skew30,
                                 False, C.Low, lo, hi, immutable=True))
    return FeatureCatalog(specs, version="v1")


def eligible_features(catalog: FeatureCatalog) -> list[str]:
    """Features the counterfactual engine may touch, in catalog order.

    A feature qualifies if the farmer can act on it, or if it is
    non-immutable and builds very high confidence (e.g. SCC, which farmers
    track themselves even though they cannot directly change it).
    """
    return [
        s.name for s in catalog
        if s.actionable or (s.confidence == Confidence.VeryHigh and not s.immutable)
    ]


# ---------------------------------------------------------------------------
# Policy file I/O: comma-separated text, '#' comments, one row per feature.

_COLUMNS = ("name", "unit", "kind", "actionable", "actionable_time_days",
            "confidence", "min_change", "lower", "upper", "immutable")

_KIND_BY_NAME = {k.value: k for k in FeatureKind}
_CONF_BY_NAME = {c.name: c for c in Confidence}


def _fmt_num(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() else repr(float(x))


def save_catalog(catalog: FeatureCatalog, path: str | Path) -> None:
    lines = [f"# herdcfx feature policy, version={catalog.version}",
             ",".join(_COLUMNS)]
    for s in catalog:
        lines.append(",".join([
            s.name,
            s.unit,
            s.kind.value,
            "yes" if s.actionable else "no",
            "" if s.actionable_time_days is None else str(s.actionable_time_days),
            s.confidence.name,
            "" if s.min_change is None else _fmt_num(s.min_change),
            _fmt_num(s.lower_bound),
            _fmt_num(s.upper_bound),
            "yes" if s.immutable else "no",
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_bool(raw: str, field: str, name: str, lineno: int) -> bool:
    if raw.lower() in ("yes", "true", "1"):
        return True
    if raw.lower() in ("no", "false", "0"):
        return False
    raise CatalogError(f"line {lineno}, feature {name!r}: bad {field} value {raw!r}")


def load_catalog(path: str | Path) -> FeatureCatalog:
    path = Path(path)
    version = "v1"
    specs: list[FeatureSpec] = []
    seen: set[str] = set()
    header_seen = False
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("#"):
            if "version=" in stripped:
                version = stripped.split("version=", 1)[1].strip()
            continue
        if not stripped:
            continue
        parts = [p.strip() for p in line.split(",")]
        if not header_seen:
            if tuple(parts) != _COLUMNS:
                raise CatalogError(
                    f"line {lineno}: expected header {','.join(_COLUMNS)}")
            header_seen = True
            continue
        if len(parts) != len(_COLUMNS):
            raise CatalogError(f"line {lineno}: expected {len(_COLUMNS)} columns, "
                               f"got {len(parts)}")
        row = dict(zip(_COLUMNS, parts))
        name = row["name"]
        if name in seen:
            raise CatalogError(f"line {lineno}: duplicate feature {name!r}")
        seen.add(name)
        if row["kind"] not in _KIND_BY_NAME:
            raise CatalogError(f"line {lineno}, feature {name!r}: unknown kind "
                               f"{row['kind']!r}")
        if row["confidence"] not in _CONF_BY_NAME:
            raise CatalogError(f"line {lineno}, feature {name!r}: unknown "
                               f"confidence {row['confidence']!r}")
        try:
            spec = FeatureSpec(
                name=name,
                unit=row["unit"],
                kind=_KIND_BY_NAME[row["kind"]],
                actionable=_parse_bool(row["actionable"], "actionable", name, lineno),
                actionable_time_days=(int(row["actionable_time_days"])
                                      if row["actionable_time_days"] else None),
                confidence=_CONF_BY_NAME[row["confidence"]],
                min_change=float(row["min_change"]) if row["min_change"] else None,
                lower_bound=float(row["lower"]),
                upper_bound=float(row["upper"]),
                immutable=_parse_bool(row["immutable"], "immutable", name, lineno),
            )
        except CatalogError as exc:
            raise CatalogError(f"line {lineno}: {exc}") from None
        except ValueError as exc:
            raise CatalogError(f"line {lineno}, feature {name!r}: {exc}") from None
        specs.append(spec)
    if not specs:
        raise CatalogError(f"{path}: no feature rows found")
    return FeatureCatalog(specs, version=version)


def override_spec(catalog: FeatureCatalog, name: str, **changes) -> FeatureCatalog:
    """Return a new catalog with one spec's fields replaced."""
    i = catalog.index(name)
    specs = list(catalog.specs)
    specs[i] = replace(specs[i], **changes)
    return FeatureCatalog(specs, version=catalog.version)
