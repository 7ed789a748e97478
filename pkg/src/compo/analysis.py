"""Statistical analyses over score records: chi-squared sequence-invariance
testing and per-component generation-rate (bias) reporting.

The upper regularized incomplete gamma function is implemented here directly
(series plus continued fraction) so p-values carry no dependency beyond the
standard library's log-gamma.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTable,
    InvalidParameter,
    NumericalError,
    ProtocolError,
)
from .prompts import PromptSpec
from .scoring import ScoreRecord

log = logging.getLogger(__name__)

_GAMMA_EPS = 1e-15
_GAMMA_ITMAX = 10000
_FPMIN = 1e-300
LOW_EXPECTED_THRESHOLD = 5.0
DEFAULT_ALPHA = 0.05


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).

    Series expansion of P(a, x) for x < a+1, continued fraction (modified
    Lentz) for Q(a, x) otherwise; absolute accuracy about 1e-12 for a up to
    a few thousand.
    """
    if not (math.isfinite(a) and math.isfinite(x)):
        raise NumericalError(f"non-finite gamma arguments a={a}, x={x}")
    if a <= 0:
        raise InvalidParameter(f"shape a must be > 0, got {a}")
    if x < 0:
        raise InvalidParameter(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 1.0
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # P(a,x) series: sum_n x^n / (a (a+1) ... (a+n)), scaled by the prefactor.
        term = 1.0 / a
        total = term
        for n in range(1, _GAMMA_ITMAX + 1):
            term *= x / (a + n)
            total += term
            if abs(term) < abs(total) * _GAMMA_EPS:
                break
        else:
            raise NumericalError(f"gamma series did not converge for a={a}, x={x}")
        p = total * math.exp(log_prefactor)
        return min(1.0, max(0.0, 1.0 - p))
    # Q(a,x) continued fraction: x^a e^-x / Gamma(a) * 1/(x+1-a- 1(1-a)/(x+3-a- ...)).
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:
        raise NumericalError(f"gamma continued fraction did not converge for a={a}, x={x}")
    q = math.exp(log_prefactor) * h
    return min(1.0, max(0.0, q))


@dataclass(frozen=True)
class ContingencyTable:
    """Counts indexed by component label rows and condition columns."""

    row_labels: tuple
    col_labels: tuple
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.row_labels), len(self.col_labels)):
            raise InvalidParameter(
                f"counts shape {counts.shape} does not match "
                f"{len(self.row_labels)} rows x {len(self.col_labels)} cols"
            )
        if np.any(counts < 0):
            raise InvalidParameter("contingency counts must be non-negative")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class ChiSquaredResult:
    statistic: float
    df: int
    p_value: float
    n_total: int
    low_expected: bool = False


def chi_squared_test(table: ContingencyTable) -> ChiSquaredResult:
    """Pearson chi-squared test of independence, no continuity correction.

    Rows and columns with zero marginals are dropped before computing
    expected counts, and the degrees of freedom reflect the retained shape.
    A warning is logged when any expected count falls below 5.
    """
    counts = table.counts
    n_total = int(counts.sum())
    if n_total <= 0:
        raise DegenerateTable("contingency table has zero total count")
    row_keep = counts.sum(axis=1) > 0
    col_keep = counts.sum(axis=0) > 0
    counts = counts[np.ix_(row_keep, col_keep)]
    if counts.shape[0] < 2 or counts.shape[1] < 2:
        raise DegenerateTable(
            f"need at least 2x2 after dropping zero marginals, got {counts.shape}"
        )
    row_sums = counts.sum(axis=1, keepdims=True).astype(np.float64)
    col_sums = counts.sum(axis=0, keepdims=True).astype(np.float64)
    expected = row_sums @ col_sums / n_total
    low_expected = bool((expected < LOW_EXPECTED_THRESHOLD).any())
    if low_expected:
        log.warning(
            "chi-squared: %d cells have expected count < %g; the approximation may be poor",
            int((expected < LOW_EXPECTED_THRESHOLD).sum()),
            LOW_EXPECTED_THRESHOLD,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        cells = np.where(expected > 0, (counts - expected) ** 2 / expected, 0.0)
    statistic = float(cells.sum())
    df = (counts.shape[0] - 1) * (counts.shape[1] - 1)
    p_value = regularized_gamma_q(df / 2.0, statistic / 2.0)
    return ChiSquaredResult(
        statistic=statistic, df=df, p_value=p_value, n_total=n_total, low_expected=low_expected
    )


def detection_tallies(records: list[ScoreRecord], prompts: list[PromptSpec]) -> dict[int, int]:
    """Per-label detection counts decoded from record argmax masks."""
    by_id = {p.prompt_id: p for p in prompts}
    tallies: dict[int, int] = {}
    for rec in records:
        prompt = by_id.get(rec.prompt_id)
        if prompt is None:
            raise ProtocolError(f"record references unknown prompt_id {rec.prompt_id}")
        for i, comp in enumerate(prompt.components):
            if rec.argmax_entry >> i & 1:
                tallies[comp.index] = tallies.get(comp.index, 0) + 1
    return tallies


@dataclass(frozen=True)
class SequenceInvarianceResult:
    chi: ChiSquaredResult
    verdict: str
    table: ContingencyTable


def sequence_invariance_test(
    original_records: list[ScoreRecord],
    shuffled_records: list[ScoreRecord],
    original_prompts: list[PromptSpec],
    shuffled_prompts: list[PromptSpec],
    alpha: float = DEFAULT_ALPHA,
) -> SequenceInvarianceResult:
    """Chi-squared independence test of detection counts across conditions.

    The two runs must cover the same prompts up to component order. Rows are
    the labels detected in either condition; verdict is "reject" iff
    p < alpha.
    """
    orig_by_id = {p.prompt_id: p for p in original_prompts}
    shuf_by_id = {p.prompt_id: p for p in shuffled_prompts}
    if orig_by_id.keys() != shuf_by_id.keys():
        raise ProtocolError("original and shuffled runs cover different prompt_ids")
    for pid, orig in orig_by_id.items():
        if sorted(orig.component_indices) != sorted(shuf_by_id[pid].component_indices):
            raise ProtocolError(
                f"prompt {pid}: shuffled components are not a permutation of the original"
            )
    tallies_orig = detection_tallies(original_records, original_prompts)
    tallies_shuf = detection_tallies(shuffled_records, shuffled_prompts)
    labels = sorted(set(tallies_orig) | set(tallies_shuf))
    if not labels:
        raise DegenerateTable("no components detected in either condition")
    counts = np.array(
        [[tallies_orig.get(lab, 0), tallies_shuf.get(lab, 0)] for lab in labels],
        dtype=np.int64,
    )
    table = ContingencyTable(
        row_labels=tuple(labels), col_labels=("original", "shuffled"), counts=counts
    )
    chi = chi_squared_test(table)
    verdict = "reject" if chi.p_value < alpha else "fail to reject"
    return SequenceInvarianceResult(chi=chi, verdict=verdict, table=table)


@dataclass(frozen=True)
class BiasEntry:
    label_index: int
    name: str
    included: int
    detected: int
    ratio: float


@dataclass(frozen=True)
class BiasReport:
    """Per-component generation rates, sorted descending by ratio."""

    entries: tuple[BiasEntry, ...]
    quantiles: dict[str, float]


def bias_ratios(
    records: list[ScoreRecord], prompts: list[PromptSpec], min_k: int = 2
) -> BiasReport:
    """Detection/inclusion ratio per component over a k >= min_k run.

    Inclusion counts every (prompt, image) record whose prompt contains the
    label; detection counts those whose argmax mask includes it. Labels never
    included are omitted.
    """
    by_id = {p.prompt_id: p for p in prompts}
    if prompts and prompts[0].k < min_k:
        raise InvalidParameter(
            f"bias analysis needs k >= {min_k}; single-component runs rank trivially"
        )
    included: dict[int, int] = {}
    detected: dict[int, int] = {}
    names: dict[int, str] = {}
    for rec in records:
        prompt = by_id.get(rec.prompt_id)
        if prompt is None:
            raise ProtocolError(f"record references unknown prompt_id {rec.prompt_id}")
        for i, comp in enumerate(prompt.components):
            included[comp.index] = included.get(comp.index, 0) + 1
            names[comp.index] = comp.name
            if rec.argmax_entry >> i & 1:
                detected[comp.index] = detected.get(comp.index, 0) + 1
    entries = [
        BiasEntry(
            label_index=idx,
            name=names[idx],
            included=inc,
            detected=detected.get(idx, 0),
            ratio=detected.get(idx, 0) / inc,
        )
        for idx, inc in included.items()
        if inc > 0
    ]
    entries.sort(key=lambda e: (-e.ratio, e.label_index))
    ratios = np.array([e.ratio for e in entries], dtype=np.float64)
    quantiles = {
        "min": float(ratios.min()),
        "q25": float(np.quantile(ratios, 0.25)),
        "median": float(np.quantile(ratios, 0.5)),
        "q75": float(np.quantile(ratios, 0.75)),
        "max": float(ratios.max()),
    }
    return BiasReport(entries=tuple(entries), quantiles=quantiles)


def bias_report_csv(report: BiasReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label_index", "name", "included", "detected", "ratio"])
    for e in report.entries:
        writer.writerow([e.label_index, e.name, e.included, e.detected, f"{e.ratio:.6f}"])
    return buf.getvalue()
