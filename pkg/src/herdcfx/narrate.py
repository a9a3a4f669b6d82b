"""Natural-language rendering of counterfactual results.

Two phrasings are supported: delta phrasing ("an increase of one and a
half units with respect to Yield") and absolute phrasing ("a somatic cell
count of 150"). Amounts are passed through exactly as given; narration
never re-rounds.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .cfx import CfxStatus, CounterfactualResult, DistanceWeights
from .features import FeatureCatalog


class NarrationError(ValueError):
    pass


class NumberStyle(enum.Enum):
    Words = "words"
    Digits = "digits"


_DISPLAY_NAMES = {
    "scc": "Somatic cell count",
    "yield": "Yield",
    "fat_pct": "Fat percentage",
    "protein_pct": "Protein percentage",
    "lactose_pct": "Lactose percentage",
    "urea": "Urea",
    "bcs": "Body condition score",
    "weight": "Weight",
    "genetic_merit": "Genetic merit",
    "parity": "Parity",
    "days_since_calving": "Days since calving",
    "calendar_month": "Calendar month",
    "infections_lactation_stage_farm": "Infections for this lactation stage (farm)",
    "infections_lactation_stage_cow": "Infections for this lactation stage (cow)",
    "infections_cow": "Infections for this cow",
    "proportion_infected_farm_calving_year":
        "Proportion of cows infected per farm and calving year",
}
for _base, _label in (("yield", "Yield"), ("fat_pct", "Fat percentage"),
                      ("protein_pct", "Protein percentage"),
                      ("lactose_pct", "Lactose percentage"),
                      ("scc", "Somatic cell count"), ("urea", "Urea")):
    _DISPLAY_NAMES[f"{_base}_skew30"] = f"{_label} skewness (30 days)"

# value suffix for absolute phrasing (percent features read "5%")
_VALUE_SUFFIX = {"fat_pct": "%", "protein_pct": "%", "lactose_pct": "%"}


@dataclass(frozen=True)
class NarrationStyle:
    number_style: NumberStyle = NumberStyle.Digits
    display_names: dict = field(default_factory=lambda: dict(_DISPLAY_NAMES))
    increase_word: str = "an increase"
    decrease_word: str = "a decrease"
    unit_phrase: str = "units"


WORDS_STYLE = NarrationStyle(number_style=NumberStyle.Words)
DIGITS_STYLE = NarrationStyle(number_style=NumberStyle.Digits)

_SMALL_WORDS = ["zero", "one", "two", "three", "four", "five", "six", "seven",
                "eight", "nine", "ten", "eleven", "twelve", "thirteen",
                "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
                "nineteen", "twenty"]


def _digits(amount: float) -> str:
    if float(amount).is_integer():
        return str(int(amount))
    return repr(float(amount))


def _amount_text(amount: float, style: NarrationStyle) -> str:
    amount = abs(amount)
    if style.number_style == NumberStyle.Words:
        doubled = amount * 2
        if float(amount).is_integer() and amount <= 20:
            return _SMALL_WORDS[int(amount)]
        if doubled.is_integer() and doubled <= 41 and not float(amount).is_integer():
            whole = int(amount)
            if whole == 0:
                return "a half"
            return f"{_SMALL_WORDS[whole]} and a half"
    return _digits(amount)


def _join_clauses(clauses: list[str]) -> str:
    if len(clauses) == 1:
        return clauses[0]
    return ", ".join(clauses[:-1]) + " and " + clauses[-1]


def render(cow_id, result: CounterfactualResult, catalog: FeatureCatalog,
           style: NarrationStyle = WORDS_STYLE,
           weights: DistanceWeights | None = None) -> str:
    """One sentence describing the counterfactual's changes.

    Clauses are ordered by descending weighted-distance contribution when
    weights are given, else by descending absolute change.
    """
    if result.status != CfxStatus.Found or not result.delta:
        raise NarrationError("cannot narrate a NotFound result")
    items = list(result.delta.items())
    if weights is not None:
        items.sort(key=lambda jd: (-weights.w[jd[0]] * abs(jd[1]), jd[0]))
    else:
        items.sort(key=lambda jd: (-abs(jd[1]), jd[0]))
    clauses = []
    for j, d in items:
        name = catalog.specs[j].name
        display = style.display_names.get(name)
        if display is None:
            raise NarrationError(f"no display name for feature {name!r}")
        direction = style.increase_word if d > 0 else style.decrease_word
        clauses.append(f"{direction} of {_amount_text(d, style)} "
                       f"{style.unit_phrase} with respect to {display}")
    return (f"If cow #{cow_id} had {_join_clauses(clauses)} "
            f"she would be likely to succumb to mastitis.")


_INTRO_FIXTURE = {"scc": 150.0, "protein_pct": 5.0}


def render_intro_example(cow_id="42",
                         values: dict[str, float] | None = None) -> str:
    """Absolute-value phrasing variant ("had a somatic cell count of 150")."""
    if values is None:
        values = dict(_INTRO_FIXTURE)
    if not values:
        raise NarrationError("cannot narrate an empty change set")
    clauses = []
    for name, value in values.items():
        display = _DISPLAY_NAMES.get(name)
        if display is None:
            raise NarrationError(f"no display name for feature {name!r}")
        phrase = display[0].lower() + display[1:]
        article = "an" if phrase[0] in "aeiou" else "a"
        suffix = _VALUE_SUFFIX.get(name, "")
        clauses.append(f"{article} {phrase} of {_digits(value)}{suffix}")
    return (f"If cow #{cow_id} had {_join_clauses(clauses)} "
            f"she would be likely to succumb to mastitis")
