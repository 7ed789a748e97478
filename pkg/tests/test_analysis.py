import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as scipy_stats

from compo.analysis import (
    BiasReport,
    ContingencyTable,
    bias_ratios,
    bias_report_csv,
    chi_squared_test,
    detection_tallies,
    regularized_gamma_q,
    sequence_invariance_test,
)
from compo.errors import (
    DegenerateTable,
    InvalidParameter,
    NumericalError,
    ProtocolError,
)
from compo.prompts import sample_prompts
from compo.scoring import ScoreRecord

mpmath.mp.dps = 30


def gamma_q_oracle(a, x):
    return float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))


def test_gamma_q_analytic_points():
    # Q(1, x) = exp(-x); Q(0.5, x) = erfc(sqrt(x)); integer a via Poisson sums.
    assert math.isclose(regularized_gamma_q(1.0, 1.0), math.exp(-1.0), rel_tol=1e-14)
    assert regularized_gamma_q(1.0, 1.0) == pytest.approx(0.36787944117144233, abs=1e-15)
    assert math.isclose(
        regularized_gamma_q(0.5, 2.0), math.erfc(math.sqrt(2.0)), rel_tol=1e-12
    )
    for a in (2, 3, 7):
        for x in (0.5, 2.0, 11.0):
            poisson = math.exp(-x) * sum(x**n / math.factorial(n) for n in range(a))
            assert math.isclose(regularized_gamma_q(float(a), x), poisson, rel_tol=1e-12)


def test_gamma_q_frozen_values():
    assert regularized_gamma_q(5.5, 3.2) == pytest.approx(0.845387536838019, abs=1e-12)
    assert regularized_gamma_q(498.0, 503.38) == pytest.approx(0.3993054843, abs=1e-9)


def test_gamma_q_matches_mpmath_grid():
    for a in (0.3, 0.5, 1.0, 2.5, 10.0, 100.0, 498.0, 1500.0):
        for x in (0.0, 1e-6, 0.1, 1.0, 10.0, 99.0, 501.0, 2000.0):
            got = regularized_gamma_q(a, x)
            expected = gamma_q_oracle(a, x)
            assert got == pytest.approx(expected, abs=1e-12), (a, x)


def test_gamma_q_matches_scipy_chi2_sf():
    for df in (1, 2, 5, 30, 996):
        for stat in (0.1, 1.0, 10.0, 500.0, 1006.76):
            got = regularized_gamma_q(df / 2.0, stat / 2.0)
            assert got == pytest.approx(scipy_stats.chi2.sf(stat, df), abs=1e-11)


def test_gamma_q_bounds_and_edges():
    assert regularized_gamma_q(3.0, 0.0) == 1.0
    assert regularized_gamma_q(2.0, 1e8) == 0.0
    values = [regularized_gamma_q(4.0, x) for x in (0.0, 0.5, 1.0, 4.0, 10.0, 40.0)]
    assert values == sorted(values, reverse=True)
    assert all(0.0 <= v <= 1.0 for v in values)


def test_gamma_q_validation():
    with pytest.raises(InvalidParameter):
        regularized_gamma_q(0.0, 1.0)
    with pytest.raises(InvalidParameter):
        regularized_gamma_q(-2.0, 1.0)
    with pytest.raises(InvalidParameter):
        regularized_gamma_q(1.0, -0.5)
    with pytest.raises(NumericalError):
        regularized_gamma_q(float("nan"), 1.0)
    with pytest.raises(NumericalError):
        regularized_gamma_q(1.0, float("inf"))


@settings(max_examples=200, deadline=None)
@given(
    a=st.floats(min_value=0.05, max_value=2000.0),
    x=st.floats(min_value=0.0, max_value=4000.0),
)
def test_gamma_q_property_vs_mpmath(a, x):
    assert regularized_gamma_q(a, x) == pytest.approx(gamma_q_oracle(a, x), abs=5e-12)


def test_chi_squared_hand_fixture():
    table = ContingencyTable(("a", "b"), ("x", "y"), np.array([[10, 20], [20, 10]]))
    result = chi_squared_test(table)
    assert result.statistic == pytest.approx(20.0 / 3.0, rel=1e-12)
    assert result.df == 1
    assert result.n_total == 60
    assert result.p_value == pytest.approx(gamma_q_oracle(0.5, 10.0 / 3.0), abs=1e-12)
    assert result.low_expected is False


def test_chi_squared_matches_scipy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        counts = rng.integers(1, 60, size=(rng.integers(2, 6), rng.integers(2, 5)))
        table = ContingencyTable(
            tuple(range(counts.shape[0])), tuple(range(counts.shape[1])), counts
        )
        result = chi_squared_test(table)
        stat, p, df, _ = scipy_stats.chi2_contingency(counts, correction=False)
        assert result.statistic == pytest.approx(float(stat), rel=1e-10)
        assert result.df == int(df)
        assert result.p_value == pytest.approx(float(p), abs=1e-10)


def test_chi_squared_drops_zero_marginals():
    full = ContingencyTable(
        ("a", "z", "b"), ("x", "y"), np.array([[10, 20], [0, 0], [20, 10]])
    )
    trimmed = ContingencyTable(("a", "b"), ("x", "y"), np.array([[10, 20], [20, 10]]))
    r_full = chi_squared_test(full)
    r_trim = chi_squared_test(trimmed)
    assert r_full.statistic == r_trim.statistic
    assert r_full.df == r_trim.df == 1
    with_dead_col = ContingencyTable(
        ("a", "b"), ("x", "dead", "y"), np.array([[10, 0, 20], [20, 0, 10]])
    )
    assert chi_squared_test(with_dead_col).df == 1


def test_chi_squared_identical_columns_is_exactly_zero():
    counts = np.array([[13, 13], [7, 7], [29, 29]])
    result = chi_squared_test(ContingencyTable(("a", "b", "c"), ("x", "y"), counts))
    assert result.statistic == 0.0
    assert result.p_value == 1.0


def test_chi_squared_degenerate_tables():
    with pytest.raises(DegenerateTable):
        chi_squared_test(ContingencyTable(("a",), ("x", "y"), np.array([[5, 5]])))
    with pytest.raises(DegenerateTable):
        chi_squared_test(
            ContingencyTable(("a", "b"), ("x", "y"), np.array([[5, 0], [7, 0]]))
        )
    with pytest.raises(DegenerateTable):
        chi_squared_test(
            ContingencyTable(("a", "b"), ("x", "y"), np.array([[0, 0], [0, 0]]))
        )


def test_chi_squared_low_expected_flag(caplog):
    counts = np.array([[2, 3], [3, 2]])
    with caplog.at_level("WARNING", logger="compo.analysis"):
        result = chi_squared_test(ContingencyTable(("a", "b"), ("x", "y"), counts))
    assert result.low_expected is True
    assert any("expected count" in rec.getMessage() for rec in caplog.records)


def test_contingency_table_validation():
    with pytest.raises(InvalidParameter):
        ContingencyTable(("a",), ("x", "y"), np.array([[1, 2], [3, 4]]))
    with pytest.raises(InvalidParameter):
        ContingencyTable(("a", "b"), ("x", "y"), np.array([[1, -2], [3, 4]]))


def _mask_records(prompt, masks):
    return [
        ScoreRecord(prompt.prompt_id, i, None, mask, bin(mask).count("1"),
                    bin(mask).count("1") / prompt.k)
        for i, mask in enumerate(masks)
    ]


def test_detection_tallies(vocab):
    prompts = sample_prompts(vocab, k=3, m=2, seed=0)
    records = _mask_records(prompts[0], [0b101, 0b001]) + _mask_records(prompts[1], [0b111])
    tallies = detection_tallies(records, prompts)
    c0 = prompts[0].component_indices
    c1 = prompts[1].component_indices
    expected = {c0[0]: 2, c0[2]: 1}
    for idx in c1:
        expected[idx] = expected.get(idx, 0) + 1
    assert tallies == expected
    with pytest.raises(ProtocolError):
        detection_tallies([ScoreRecord(99, 0, None, 0, 0, 0.0)], prompts)


def test_sequence_invariance_identical_runs(vocab):
    prompts = sample_prompts(vocab, k=4, m=10, seed=1)
    records = []
    for p in prompts:
        records.extend(_mask_records(p, [0b1111, 0b0011, 0b0101]))
    result = sequence_invariance_test(records, records, prompts, prompts)
    assert result.chi.statistic == 0.0
    assert result.chi.p_value == 1.0
    assert result.verdict == "fail to reject"
    assert result.table.col_labels == ("original", "shuffled")


def test_sequence_invariance_detects_shift(vocab):
    # Condition flips which side of the prompt gets detected: big effect.
    prompts = sample_prompts(vocab, k=2, m=30, seed=2)
    orig, shuf = [], []
    for p in prompts:
        orig.extend(_mask_records(p, [0b01] * 10))
        shuf.extend(_mask_records(p, [0b10] * 10))
    result = sequence_invariance_test(orig, shuf, prompts, prompts)
    assert result.verdict == "reject"
    assert result.chi.p_value < 1e-6


def test_sequence_invariance_protocol_errors(vocab):
    prompts = sample_prompts(vocab, k=2, m=3, seed=3)
    records = []
    for p in prompts:
        records.extend(_mask_records(p, [0b11]))
    with pytest.raises(ProtocolError):
        sequence_invariance_test(records, records, prompts, prompts[:-1])
    other = sample_prompts(vocab, k=2, m=3, seed=99)
    if any(
        sorted(a.component_indices) != sorted(b.component_indices)
        for a, b in zip(prompts, other)
    ):
        with pytest.raises(ProtocolError):
            sequence_invariance_test(records, records, prompts, other)


def test_bias_ratios_hand_counts(vocab):
    prompts = sample_prompts(vocab, k=2, m=1, seed=4)
    p = prompts[0]
    lo, hi = p.component_indices
    records = _mask_records(p, [0b01, 0b01, 0b11, 0b00])
    report = bias_ratios(records, prompts)
    by_index = {e.label_index: e for e in report.entries}
    assert by_index[lo].included == 4
    assert by_index[lo].detected == 3
    assert by_index[lo].ratio == 0.75
    assert by_index[hi].detected == 1
    assert by_index[hi].ratio == 0.25
    assert report.entries[0].label_index == lo  # sorted descending by ratio
    assert report.quantiles["max"] == 0.75
    assert report.quantiles["min"] == 0.25
    assert set(report.quantiles) == {"min", "q25", "median", "q75", "max"}


def test_bias_ratios_tie_breaks_by_index(vocab):
    prompts = sample_prompts(vocab, k=2, m=1, seed=5)
    p = prompts[0]
    records = _mask_records(p, [0b11, 0b00])
    report = bias_ratios(records, prompts)
    assert [e.label_index for e in report.entries] == sorted(p.component_indices)


def test_bias_ratios_rejects_small_k(vocab):
    prompts = sample_prompts(vocab, k=1, m=2, seed=6)
    with pytest.raises(InvalidParameter):
        bias_ratios([], prompts)


def test_bias_ratios_unknown_prompt(vocab):
    prompts = sample_prompts(vocab, k=2, m=1, seed=7)
    with pytest.raises(ProtocolError):
        bias_ratios([ScoreRecord(42, 0, None, 0, 0, 0.0)], prompts)


def test_bias_ratios_recover_detection_probs(vocab):
    # End-to-end: planted detection probabilities should surface as ratios.
    from compo.backends.contracts import ImageRef
    from compo.backends.mock import MockEmbeddingBackend, MockWorldConfig
    from compo.scoring import evaluate

    probs = {i: 0.2 + 0.6 * (i / (len(vocab) - 1)) for i in range(len(vocab))}
    config = MockWorldConfig(vocab=vocab, seed=8, detection_probs=probs)
    backend = MockEmbeddingBackend(config)
    prompts = sample_prompts(vocab, k=4, m=120, seed=9)
    source = {
        p.prompt_id: [ImageRef(p.prompt_id, i, planted=p.component_indices) for i in range(4)]
        for p in prompts
    }
    _, records = evaluate(prompts, source, backend)
    report = bias_ratios(records, prompts)
    for entry in report.entries:
        if entry.included >= 80:
            assert abs(entry.ratio - probs[entry.label_index]) < 0.2
    # Ranking should roughly follow the planted gradient: top quartile mean
    # ratio above bottom quartile mean ratio.
    ratios = [e.ratio for e in report.entries]
    quarter = max(1, len(ratios) // 4)
    assert np.mean(ratios[:quarter]) > np.mean(ratios[-quarter:])


def test_bias_report_csv(vocab):
    prompts = sample_prompts(vocab, k=2, m=1, seed=10)
    records = _mask_records(prompts[0], [0b01, 0b11])
    text = bias_report_csv(bias_ratios(records, prompts))
    lines = text.strip().split("\n")
    assert lines[0] == "label_index,name,included,detected,ratio"
    assert len(lines) == 3
    assert lines[1].endswith("1.000000")


def test_bias_report_type():
    assert BiasReport(entries=(), quantiles={}) is not None
