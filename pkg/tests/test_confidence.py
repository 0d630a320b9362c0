import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sevarb.confidence import (
    MarginRecord,
    TriageCategory,
    TriageThresholds,
    format_profile_table,
    margin,
    margin_record,
    profile,
    triage,
)
from sevarb.core import ProbTriple, SeverityLabel, ValidationError, softmax


def rec(margin_value, truth=SeverityLabel.MODERATE, th=TriageThresholds(), rid="x"):
    # build a synthetic misclassified record with the given margin
    pred = SeverityLabel.MILD if truth != SeverityLabel.MILD else SeverityLabel.SEVERE
    return MarginRecord(
        id=rid, predicted=pred, truth=truth, margin=margin_value, triage=triage(margin_value, th)
    )


class TestMargin:
    def test_overconfident_case(self):
        got = margin(ProbTriple.from_values(0.9, 0.05, 0.05), SeverityLabel.MODERATE)
        assert got is not None
        predicted, m = got
        assert predicted is SeverityLabel.MILD
        assert m == pytest.approx(0.85, abs=1e-12)

    def test_narrow_case(self):
        got = margin(ProbTriple.from_values(0.34, 0.33, 0.33), SeverityLabel.MODERATE)
        assert got[1] == pytest.approx(0.01, abs=1e-12)

    def test_correct_prediction_none(self):
        assert margin(ProbTriple.from_values(0.2, 0.5, 0.3), SeverityLabel.MODERATE) is None

    def test_tie_break_gives_zero_margin(self):
        # argmax ties break to mild; truth mild means correct, truth moderate
        # gives margin exactly p_mild - p_moderate = 0
        got = margin(ProbTriple.from_values(0.4, 0.4, 0.2), SeverityLabel.MODERATE)
        assert got[0] is SeverityLabel.MILD
        assert got[1] == 0.0


class TestTriage:
    def test_defaults(self):
        assert triage(0.85) is TriageCategory.OVERCONFIDENT
        assert triage(0.0) is TriageCategory.AMBIGUOUS
        assert triage(0.3) is TriageCategory.MEDIUM

    def test_boundaries_inclusive(self):
        th = TriageThresholds(m_hi=0.5, m_lo=0.1)
        assert triage(0.5, th) is TriageCategory.OVERCONFIDENT
        assert triage(0.1, th) is TriageCategory.AMBIGUOUS
        assert triage(0.10001, th) is TriageCategory.MEDIUM
        assert triage(0.49999, th) is TriageCategory.MEDIUM

    def test_threshold_validation(self):
        with pytest.raises(ValidationError):
            TriageThresholds(m_hi=0.1, m_lo=0.5)
        with pytest.raises(ValidationError):
            TriageThresholds(m_hi=1.5, m_lo=0.1)

    @settings(max_examples=200)
    @given(st.floats(0, 1), st.floats(0.01, 0.98), st.floats(0.0, 0.5))
    def test_partition_every_margin_in_one_bucket(self, m, hi_raw, lo_raw):
        m_lo = min(lo_raw, hi_raw - 0.01)
        if m_lo < 0:
            return
        th = TriageThresholds(m_hi=hi_raw, m_lo=m_lo)
        cats = [c for c in TriageCategory if triage(m, th) is c]
        assert len(cats) == 1

    @settings(max_examples=100)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0.3, 0.9))
    def test_monotone_in_thresholds(self, margins, hi):
        base = TriageThresholds(m_hi=hi, m_lo=0.05)
        raised = TriageThresholds(m_hi=min(hi + 0.05, 1.0), m_lo=0.05)
        over_base = sum(triage(m, base) is TriageCategory.OVERCONFIDENT for m in margins)
        over_raised = sum(triage(m, raised) is TriageCategory.OVERCONFIDENT for m in margins)
        assert over_raised <= over_base
        lo_raised = TriageThresholds(m_hi=hi, m_lo=0.1)
        amb_base = sum(triage(m, base) is TriageCategory.AMBIGUOUS for m in margins)
        amb_raised = sum(triage(m, lo_raised) is TriageCategory.AMBIGUOUS for m in margins)
        assert amb_raised >= amb_base


class TestMarginRecord:
    def test_rejects_correct_prediction(self):
        with pytest.raises(ValidationError):
            MarginRecord(
                id="a",
                predicted=SeverityLabel.MILD,
                truth=SeverityLabel.MILD,
                margin=0.2,
                triage=TriageCategory.MEDIUM,
            )

    def test_builder_returns_none_for_correct(self):
        assert margin_record("a", ProbTriple.from_values(0.1, 0.8, 0.1), SeverityLabel.MODERATE) is None

    def test_builder_full_record(self):
        got = margin_record("a", ProbTriple.from_values(0.9, 0.05, 0.05), SeverityLabel.SEVERE)
        assert got.triage is TriageCategory.OVERCONFIDENT
        assert got.margin == pytest.approx(0.85, abs=1e-12)


class TestProfile:
    def test_all_overconfident(self):
        rep = profile([rec(0.9, rid=f"r{i}") for i in range(10)])
        assert rep.triage_pct[TriageCategory.OVERCONFIDENT] == 100.0
        assert rep.triage_pct[TriageCategory.MEDIUM] == 0.0

    def test_mixed_margins_counted(self):
        rep = profile([rec(m, rid=f"r{i}") for i, m in enumerate([0.9, 0.3, 0.05, 0.05])])
        assert rep.triage_pct[TriageCategory.OVERCONFIDENT] == pytest.approx(25.0)
        assert rep.triage_pct[TriageCategory.MEDIUM] == pytest.approx(25.0)
        assert rep.triage_pct[TriageCategory.AMBIGUOUS] == pytest.approx(50.0)

    def test_empty_flagged(self):
        rep = profile([])
        assert rep.no_errors
        assert all(v == 0.0 for v in rep.triage_pct.values())
        assert all(v == 0.0 for v in rep.truth_pct.values())

    def test_shares_sum_to_100(self):
        rng = np.random.default_rng(5)
        records = [
            rec(float(m), truth=SeverityLabel(int(t)), rid=f"r{i}")
            for i, (m, t) in enumerate(zip(rng.uniform(0, 1, 500), rng.integers(0, 3, 500)))
        ]
        rep = profile(records)
        assert sum(rep.triage_pct.values()) == pytest.approx(100.0, abs=0.01)
        assert sum(rep.truth_pct.values()) == pytest.approx(100.0, abs=0.01)

    def test_duplication_invariance(self):
        records = [rec(m, rid=f"r{i}") for i, m in enumerate([0.9, 0.3, 0.05])]
        a = profile(records)
        b = profile(records + [rec(m, rid=f"d{i}") for i, m in enumerate([0.9, 0.3, 0.05])])
        assert a.triage_pct == b.triage_pct
        assert a.truth_pct == b.truth_pct

    def test_flat_softmax_kills_overconfidence(self):
        # temperature -> infinity: logits shrink toward zero, margins -> 0,
        # mirroring the zero overconfident share of well-calibrated models
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((200, 3))
        records = []
        for i, row in enumerate(logits):
            p = ProbTriple.from_array(softmax(row / 1e6))
            truth = SeverityLabel(int((np.argmax(row) + 1) % 3))  # force wrong
            got = margin_record(f"r{i}", p, truth)
            if got is not None:
                records.append(got)
        rep = profile(records)
        assert rep.n_errors > 0
        assert rep.triage_pct[TriageCategory.OVERCONFIDENT] == 0.0


class TestProfileFormats:
    def test_json_fields(self):
        rep = profile([rec(0.9), rec(0.02)])
        d = rep.to_dict()
        for key in (
            "overconfident_pct",
            "medium_pct",
            "ambiguous_pct",
            "mild_mis_pct",
            "moderate_mis_pct",
            "severe_mis_pct",
            "n_errors",
            "no_errors",
        ):
            assert key in d

    def test_table_column_order(self):
        # report-format fixture: renders shares like the published profile
        # (70.58 / 21.04 / 8.38) in the canonical column order
        records = (
            [rec(0.9, rid=f"o{i}") for i in range(7058)]
            + [rec(0.3, rid=f"m{i}") for i in range(2104)]
            + [rec(0.01, rid=f"a{i}") for i in range(838)]
        )
        txt = format_profile_table([("image_baseline", profile(records))])
        lines = txt.strip().split("\n")
        assert lines[0].split() == [
            "Model",
            "Overconfident",
            "Medium",
            "Ambiguous",
            "Mild",
            "Mis",
            "Moderate",
            "Mis",
            "Severe",
            "Mis",
        ]
        assert "70.58%" in lines[1] and "21.04%" in lines[1] and "8.38%" in lines[1]
