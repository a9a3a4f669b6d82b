"""Narration: golden sentences, grammar rules, amount fidelity."""

import numpy as np
import pytest

from herdcfx import narrate
from herdcfx.cfx import CfxStatus, CounterfactualResult, DistanceWeights
from herdcfx.features import default_catalog

GOLDEN_DELTA = ("If cow #42 had an increase of one and a half units with "
                "respect to Yield she would be likely to succumb to mastitis.")
GOLDEN_INTRO = ("If cow #42 had a somatic cell count of 150 and a protein "
                "percentage of 5% she would be likely to succumb to mastitis")
GOLDEN_TWO_CLAUSE = ("If cow #7 had an increase of 50 units with respect to "
                     "Somatic cell count and a decrease of 0.25 units with "
                     "respect to Body condition score she would be likely to "
                     "succumb to mastitis.")


def _result(catalog, delta):
    idx_delta = {catalog.index(name): d for name, d in delta.items()}
    x_cf = np.zeros(len(catalog))
    return CounterfactualResult(idx_delta, x_cf, 0.1, 0.6, 1.0, 10,
                                CfxStatus.Found)


def _weights(catalog, overrides=None):
    w = np.ones(len(catalog))
    for name, val in (overrides or {}).items():
        w[catalog.index(name)] = val
    return DistanceWeights(w=w, mad=1.0 / w, fallback_applied=frozenset())


class TestGoldenSentences:
    def test_delta_phrasing_words_style(self):
        catalog = default_catalog()
        result = _result(catalog, {"yield": 1.5})
        sentence = narrate.render("42", result, catalog, narrate.WORDS_STYLE)
        assert sentence == GOLDEN_DELTA

    def test_intro_absolute_phrasing(self):
        assert narrate.render_intro_example() == GOLDEN_INTRO

    def test_two_clause_digits_style_ordered_by_contribution(self):
        catalog = default_catalog()
        result = _result(catalog, {"scc": 50.0, "bcs": -0.25})
        weights = _weights(catalog, {"scc": 0.1, "bcs": 4.0})
        # scc contributes 0.1*50 = 5 > bcs 4*0.25 = 1, so scc leads
        sentence = narrate.render("7", result, catalog, narrate.DIGITS_STYLE,
                                  weights)
        assert sentence == GOLDEN_TWO_CLAUSE


class TestGrammar:
    def test_single_clause_has_no_conjunction(self):
        catalog = default_catalog()
        sentence = narrate.render("3", _result(catalog, {"weight": 10.0}),
                                  catalog, narrate.DIGITS_STYLE)
        assert " and " not in sentence

    def test_three_clauses_comma_then_and(self):
        catalog = default_catalog()
        result = _result(catalog, {"yield": 2.0, "scc": 25.0, "bcs": 0.25})
        weights = _weights(catalog, {"yield": 3.0, "scc": 0.1, "bcs": 4.0})
        sentence = narrate.render("9", result, catalog, narrate.DIGITS_STYLE,
                                  weights)
        assert sentence.count(", ") == 1
        assert sentence.count(" and ") == 1
        # descending contribution: yield (6) > scc (2.5) > bcs (1)
        assert sentence.index("Yield") < sentence.index("Somatic cell count")
        assert (sentence.index("Somatic cell count")
                < sentence.index("Body condition score"))

    def test_intro_single_feature_no_conjunction(self):
        sentence = narrate.render_intro_example("5", {"scc": 150.0})
        assert " and " not in sentence
        assert sentence.startswith("If cow #5 had a somatic cell count of 150")

    def test_decrease_direction_word(self):
        catalog = default_catalog()
        sentence = narrate.render("4", _result(catalog, {"yield": -2.0}),
                                  catalog, narrate.DIGITS_STYLE)
        assert "a decrease of 2 units" in sentence


class TestAmountFidelity:
    def test_digits_preserve_quantized_value_exactly(self):
        catalog = default_catalog()
        sentence = narrate.render("8", _result(catalog, {"fat_pct": 0.15}),
                                  catalog, narrate.DIGITS_STYLE)
        assert "an increase of 0.15 units" in sentence

    def test_integer_amounts_rendered_without_decimal(self):
        catalog = default_catalog()
        sentence = narrate.render("8", _result(catalog, {"weight": 20.0}),
                                  catalog, narrate.DIGITS_STYLE)
        assert "an increase of 20 units" in sentence

    def test_words_style_small_integers(self):
        catalog = default_catalog()
        sentence = narrate.render("8", _result(catalog, {"yield": 2.0}),
                                  catalog, narrate.WORDS_STYLE)
        assert "an increase of two units" in sentence

    def test_words_style_falls_back_to_digits(self):
        catalog = default_catalog()
        sentence = narrate.render("8", _result(catalog, {"scc": 75.0}),
                                  catalog, narrate.WORDS_STYLE)
        assert "an increase of 75 units" in sentence

    def test_deterministic(self):
        catalog = default_catalog()
        result = _result(catalog, {"yield": 1.5, "bcs": -0.25})
        a = narrate.render("42", result, catalog, narrate.DIGITS_STYLE)
        b = narrate.render("42", result, catalog, narrate.DIGITS_STYLE)
        assert a == b


class TestErrors:
    def test_not_found_result_rejected(self):
        catalog = default_catalog()
        result = CounterfactualResult({}, np.zeros(len(catalog)), 0.1, 0.1,
                                      float("inf"), 5, CfxStatus.NotFound)
        with pytest.raises(narrate.NarrationError):
            narrate.render("42", result, catalog)

    def test_empty_intro_values_rejected(self):
        with pytest.raises(narrate.NarrationError):
            narrate.render_intro_example("42", {})

    def test_unknown_feature_rejected(self):
        with pytest.raises(narrate.NarrationError):
            narrate.render_intro_example("42", {"bogus": 1.0})
