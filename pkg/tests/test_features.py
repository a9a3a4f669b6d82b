"""Feature catalog: policy values, eligibility rule, policy file round trip."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from herdcfx.features import (
    CatalogError,
    Confidence,
    FeatureCatalog,
    FeatureKind,
    FeatureSpec,
    MILK_CHARACTERISTICS,
    default_catalog,
    eligible_features,
    load_catalog,
    override_spec,
    save_catalog,
)


class TestDefaultCatalog:
    def test_policy_step_sizes(self):
        cat = default_catalog()
        assert cat.spec("bcs").min_change == 0.25
        assert cat.spec("weight").min_change == 10
        assert cat.spec("yield").min_change == 2.0
        assert cat.spec("fat_pct").min_change == 0.05
        assert cat.spec("protein_pct").min_change == 0.05

    def test_scc_policy_row(self):
        scc = default_catalog().spec("scc")
        assert scc.actionable is False
        assert scc.confidence == Confidence.VeryHigh

    def test_actionability_flags(self):
        cat = default_catalog()
        for name in ("yield", "fat_pct", "protein_pct", "urea", "bcs",
                     "weight", "genetic_merit"):
            assert cat.spec(name).actionable, name
        for name in ("scc", "lactose_pct", "parity", "days_since_calving",
                     "calendar_month"):
            assert not cat.spec(name).actionable, name

    def test_every_base_feature_has_a_skew_companion(self):
        names = set(default_catalog().names())
        for base in MILK_CHARACTERISTICS:
            assert f"{base}_skew30" in names

    def test_catalog_size_and_unique_names(self):
        cat = default_catalog()
        assert len(cat) == 16 + len(MILK_CHARACTERISTICS)
        assert len(set(cat.names())) == len(cat)

    def test_skew_features_never_perturbable(self):
        cat = default_catalog()
        for base in MILK_CHARACTERISTICS:
            spec = cat.spec(f"{base}_skew30")
            assert spec.immutable and not spec.actionable

    def test_confidence_total_order(self):
        assert (Confidence.Low < Confidence.Medium < Confidence.High
                < Confidence.VeryHigh)
        assert len(Confidence) == 4


class TestEligibility:
    def test_contains_actionable(self):
        assert "yield" in eligible_features(default_catalog())

    def test_contains_confidence_building_scc(self):
        assert "scc" in eligible_features(default_catalog())

    def test_excludes_immutable_even_at_very_high_confidence(self):
        elig = eligible_features(default_catalog())
        assert "parity" not in elig
        assert "infections_cow" not in elig

    def test_never_contains_immutable(self):
        cat = default_catalog()
        for name in eligible_features(cat):
            assert not cat.spec(name).immutable

    def test_order_matches_catalog(self):
        cat = default_catalog()
        elig = eligible_features(cat)
        assert elig == sorted(elig, key=cat.index)


class TestSpecValidation:
    def test_bounds_must_be_ordered(self):
        with pytest.raises(CatalogError, match="lower_bound"):
            FeatureSpec("x", "u", FeatureKind.Current, False, Confidence.Low,
                        5.0, 1.0)

    def test_min_change_must_be_positive(self):
        with pytest.raises(CatalogError, match="min_change"):
            FeatureSpec("x", "u", FeatureKind.Current, False, Confidence.Low,
                        0.0, 1.0, min_change=-1.0)

    def test_min_change_must_fit_in_range(self):
        with pytest.raises(CatalogError, match="min_change"):
            FeatureSpec("x", "u", FeatureKind.Current, False, Confidence.Low,
                        0.0, 1.0, min_change=2.0)

    def test_immutable_cannot_be_actionable(self):
        with pytest.raises(CatalogError, match="immutable"):
            FeatureSpec("x", "u", FeatureKind.Current, True, Confidence.Low,
                        0.0, 1.0, immutable=True)

    def test_duplicate_names_rejected(self):
        spec = FeatureSpec("x", "u", FeatureKind.Current, False,
                           Confidence.Low, 0.0, 1.0)
        with pytest.raises(CatalogError, match="duplicate"):
            FeatureCatalog([spec, spec])


class TestPolicyFile:
    def test_round_trip_identity(self, tmp_path):
        cat = default_catalog()
        path = tmp_path / "policy.txt"
        save_catalog(cat, path)
        assert load_catalog(path) == cat

    def test_serialization_is_stable(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        save_catalog(default_catalog(), a)
        save_catalog(load_catalog(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_duplicate_rows_rejected_with_line(self, tmp_path):
        path = tmp_path / "policy.txt"
        save_catalog(default_catalog(), path)
        lines = path.read_text().splitlines()
        yield_row = next(l for l in lines if l.startswith("yield,"))
        path.write_text("\n".join(lines + [yield_row]) + "\n")
        with pytest.raises(CatalogError, match="duplicate feature 'yield'"):
            load_catalog(path)

    def test_negative_min_change_reported_with_name(self, tmp_path):
        path = tmp_path / "policy.txt"
        save_catalog(default_catalog(), path)
        path.write_text(path.read_text().replace("yield,kg,current,yes,,Low,2",
                                                 "yield,kg,current,yes,,Low,-1"))
        with pytest.raises(CatalogError, match="min_change"):
            load_catalog(path)

    def test_comments_and_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "policy.txt"
        save_catalog(default_catalog(), path)
        body = path.read_text()
        path.write_text("# leading comment\n\n" + body + "\n# trailing\n")
        assert load_catalog(path) == default_catalog()

    def test_version_survives_round_trip(self, tmp_path):
        cat = FeatureCatalog(default_catalog().specs, version="v2-custom")
        path = tmp_path / "policy.txt"
        save_catalog(cat, path)
        assert load_catalog(path).version == "v2-custom"

    def test_override_spec_changes_only_target(self):
        cat = default_catalog()
        cat2 = override_spec(cat, "urea", min_change=2.5)
        assert cat2.spec("urea").min_change == 2.5
        assert cat2.spec("yield") == cat.spec("yield")
        assert cat.spec("urea").min_change == 1.0

    @given(st.floats(min_value=0.001, max_value=9.9))
    def test_round_trip_preserves_arbitrary_min_change(self, tmp_path_factory, step):
        path = tmp_path_factory.mktemp("policy") / "p.txt"
        cat = override_spec(default_catalog(), "urea", min_change=step)
        save_catalog(cat, path)
        assert load_catalog(path).spec("urea").min_change == step
