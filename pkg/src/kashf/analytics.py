"""Dataset analytics: persona/bidder bid tables, intent uplift ratios,
winning-bid tables, and zero-bid prevalence with significance testing.

Cell statistics are kept in micro-USD so weighted averages over calibrated
medians stay exact; conversion to USD happens at presentation time. All
standard deviations here are population-style, matching the discretizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .ecosystem import CONTROL_PERSONA, PERSONA_CATEGORIES
from .experiment import ExperimentRecord

# 0.05 critical value of the chi-square distribution with one degree of
# freedom (two-proportion test threshold).
CHI2_CRITICAL_1DF_05 = 3.841458820694124


class AnalyticsError(ValueError):
    pass


def weighted_mean_std(
    values: Sequence[float], weights: Sequence[float]
) -> tuple[float, float]:
    """Weighted mean and population-style weighted standard deviation."""
    if len(values) != len(weights):
        raise AnalyticsError("values and weights differ in length")
    if any(w < 0 for w in weights):
        raise AnalyticsError("weights must be non-negative")
    total = math.fsum(weights)
    if total <= 0:
        raise AnalyticsError("weights must not all be zero")
    mean = math.fsum(v * w for v, w in zip(values, weights)) / total
    var = math.fsum(w * (v - mean) ** 2 for v, w in zip(values, weights)) / total
    return mean, math.sqrt(var)


def chi_square_two_proportions(
    success_a: int, n_a: int, success_b: int, n_b: int
) -> tuple[float | None, bool]:
    """2x2 chi-square test of equal proportions.

    Returns (statistic, significant at 0.05). The statistic is None when
    any margin of the table is zero, where the test is undefined.
    """
    if n_a <= 0 or n_b <= 0:
        raise AnalyticsError("group sizes must be positive")
    if not (0 <= success_a <= n_a and 0 <= success_b <= n_b):
        raise AnalyticsError("successes exceed trials")
    a, b = success_a, n_a - success_a
    c, d = success_b, n_b - success_b
    margins = (a + b, c + d, a + c, b + d)
    if any(m == 0 for m in margins):
        return None, False
    n = n_a + n_b
    stat = n * (a * d - b * c) ** 2 / (margins[0] * margins[1] * margins[2] * margins[3])
    return float(stat), bool(stat > CHI2_CRITICAL_1DF_05)


def _median(values: Sequence[int]) -> float:
    vals = sorted(values)
    n = len(vals)
    mid = n // 2
    if n % 2:
        return float(vals[mid])
    return (vals[mid - 1] + vals[mid]) / 2.0


@dataclass(frozen=True)
class Cell:
    value_micro: float | None  # None renders as "-" / "N/A"
    count: int

    @property
    def usd(self) -> float | None:
        return None if self.value_micro is None else self.value_micro / 1_000_000


@dataclass
class PersonaBidderTable:
    """Persona-by-bidder statistic grid with weighted margins and markers.

    Markers compare each cell against the weighted mean +/- std of its
    comparison group: `among_categories` against the cell's bidder column,
    `among_bidders` against the cell's persona row (+1 above, -1 below,
    0 inside the band). Weights are bid counts.
    """

    rows: tuple[str, ...]
    cols: tuple[str, ...]
    cells: dict[tuple[str, str], Cell]
    unit_scale: float = 1_000_000.0  # micro per presentation unit
    row_avg: dict[str, float | None] = field(default_factory=dict)
    row_std: dict[str, float | None] = field(default_factory=dict)
    col_avg: dict[str, float | None] = field(default_factory=dict)
    col_std: dict[str, float | None] = field(default_factory=dict)
    among_categories: dict[tuple[str, str], int] = field(default_factory=dict)
    among_bidders: dict[tuple[str, str], int] = field(default_factory=dict)
    overall_row_avg: float | None = None   # stats across the per-persona averages
    overall_row_std: float | None = None
    overall_col_avg: float | None = None   # stats across the per-bidder averages
    overall_col_std: float | None = None

    def cell(self, row: str, col: str) -> Cell:
        return self.cells.get((row, col), Cell(None, 0))

    def value(self, row: str, col: str) -> float | None:
        usd = self.cells.get((row, col), Cell(None, 0)).value_micro
        return None if usd is None else usd / self.unit_scale

    def average(self, row: str) -> float | None:
        v = self.row_avg.get(row)
        return None if v is None else v / self.unit_scale

    def bidder_average(self, col: str) -> float | None:
        v = self.col_avg.get(col)
        return None if v is None else v / self.unit_scale

    def finalize(self) -> "PersonaBidderTable":
        def stats(pairs: list[tuple[float, float]]) -> tuple[float | None, float | None]:
            pairs = [(v, w) for v, w in pairs if w > 0]
            if not pairs:
                return None, None
            mean, std = weighted_mean_std([v for v, _ in pairs], [w for _, w in pairs])
            return mean, std

        for r in self.rows:
            vals = [
                (c.value_micro, c.count)
                for col in self.cols
                if (c := self.cell(r, col)).value_micro is not None
            ]
            self.row_avg[r], self.row_std[r] = stats(vals)
        for col in self.cols:
            vals = [
                (c.value_micro, c.count)
                for r in self.rows
                if (c := self.cell(r, col)).value_micro is not None
            ]
            self.col_avg[col], self.col_std[col] = stats(vals)

        for r in self.rows:
            for col in self.cols:
                c = self.cell(r, col)
                if c.value_micro is None:
                    self.among_categories[(r, col)] = 0
                    self.among_bidders[(r, col)] = 0
                    continue
                self.among_categories[(r, col)] = _band_flag(
                    c.value_micro, self.col_avg[col], self.col_std[col]
                )
                self.among_bidders[(r, col)] = _band_flag(
                    c.value_micro, self.row_avg[r], self.row_std[r]
                )

        row_pairs = [
            (self.row_avg[r], sum(self.cell(r, c).count for c in self.cols))
            for r in self.rows
            if self.row_avg[r] is not None
        ]
        col_pairs = [
            (self.col_avg[c], sum(self.cell(r, c).count for r in self.rows))
            for c in self.cols
            if self.col_avg[c] is not None
        ]
        if row_pairs:
            self.overall_row_avg, self.overall_row_std = weighted_mean_std(
                [v for v, _ in row_pairs], [w for _, w in row_pairs]
            )
        if col_pairs:
            self.overall_col_avg, self.overall_col_std = weighted_mean_std(
                [v for v, _ in col_pairs], [w for _, w in col_pairs]
            )
        return self


def _band_flag(value: float, mean: float | None, std: float | None) -> int:
    if mean is None or std is None:
        return 0
    if value > mean + std:
        return 1
    if value < mean - std:
        return -1
    return 0


def _persona_rows(records: Iterable[ExperimentRecord]) -> tuple[str, ...]:
    present = {rec.spec.category for rec in records}
    rows = [c for c in PERSONA_CATEGORIES if c in present]
    if CONTROL_PERSONA in present:
        rows.append(CONTROL_PERSONA)
    return tuple(rows)


def median_cpm_table(
    records: Sequence[ExperimentRecord],
    bidders: Sequence[str],
    include_zero_bids: bool = False,
) -> PersonaBidderTable:
    """Median CPM per (persona, bidder) with weighted margins.

    Zero bids are excluded from the medians by default (they are analyzed
    separately by zero_bid_stats); pass include_zero_bids=True to treat
    them as ordinary bids.
    """
    if not records:
        raise AnalyticsError("no records to analyze")
    groups: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        cat = rec.spec.category
        for bidder, value in rec.bids.items():
            if value == 0 and not include_zero_bids:
                continue
            groups.setdefault((cat, bidder), []).append(value)

    cells = {
        key: Cell(value_micro=_median(vals), count=len(vals))
        for key, vals in groups.items()
        if vals
    }
    table = PersonaBidderTable(
        rows=_persona_rows(records), cols=tuple(bidders), cells=cells
    )
    return table.finalize()


def intent_ratio_table(
    no_intent_records: Sequence[ExperimentRecord],
    intent_records: Sequence[ExperimentRecord],
    bidders: Sequence[str],
    include_zero_bids: bool = False,
) -> PersonaBidderTable:
    """Cell = median(intent bids) / median(no-intent bids) per persona and
    bidder. Cells with a zero or missing denominator are N/A and excluded
    from the weighted margins. Counts combine both arms."""
    no_intent = median_cpm_table(no_intent_records, bidders, include_zero_bids)
    intent = median_cpm_table(intent_records, bidders, include_zero_bids)
    rows = tuple(r for r in no_intent.rows if r in set(intent.rows))

    cells: dict[tuple[str, str], Cell] = {}
    for r in rows:
        for b in bidders:
            denom = no_intent.cell(r, b)
            numer = intent.cell(r, b)
            if (
                denom.value_micro is None
                or numer.value_micro is None
                or denom.value_micro == 0
            ):
                continue
            cells[(r, b)] = Cell(
                value_micro=numer.value_micro / denom.value_micro,
                count=denom.count + numer.count,
            )
    table = PersonaBidderTable(
        rows=rows, cols=tuple(bidders), cells=cells, unit_scale=1.0
    )
    return table.finalize()


def winning_bid_table(
    records: Sequence[ExperimentRecord], bidders: Sequence[str]
) -> PersonaBidderTable:
    """Median clearing price per (persona, winning bidder); bidders that
    never win a persona's auctions get a '-' cell."""
    if not records:
        raise AnalyticsError("no records to analyze")
    groups: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        if rec.winner is None:
            continue
        groups.setdefault((rec.spec.category, rec.winner), []).append(rec.price_micro)
    cells = {
        key: Cell(value_micro=_median(vals), count=len(vals))
        for key, vals in groups.items()
    }
    table = PersonaBidderTable(
        rows=_persona_rows(records), cols=tuple(bidders), cells=cells
    )
    return table.finalize()


@dataclass(frozen=True)
class ZeroBidRow:
    bidder: str
    n_no_intent: int
    zeros_no_intent: int
    n_intent: int
    zeros_intent: int
    chi_square: float | None
    significant: bool

    def pct(self, zeros: int, n: int) -> float | None:
        return None if n == 0 else 100.0 * zeros / n

    @property
    def pct_no_intent(self) -> float | None:
        return self.pct(self.zeros_no_intent, self.n_no_intent)

    @property
    def pct_intent(self) -> float | None:
        return self.pct(self.zeros_intent, self.n_intent)

    @property
    def pct_total(self) -> float | None:
        n = self.n_no_intent + self.n_intent
        return self.pct(self.zeros_no_intent + self.zeros_intent, n)


@dataclass(frozen=True)
class ZeroBidSummary:
    per_bidder: tuple[ZeroBidRow, ...]
    overall: ZeroBidRow


def zero_bid_stats(
    records: Sequence[ExperimentRecord], bidders: Sequence[str]
) -> ZeroBidSummary:
    """Zero-bid percentages per bidder, split by intent arm, with a
    chi-square flag for whether intent significantly shifts the rate."""
    if not records:
        raise AnalyticsError("no records to analyze")
    counts = {b: [0, 0, 0, 0] for b in bidders}  # n_no, z_no, n_int, z_int
    for rec in records:
        off = 2 if rec.spec.intent else 0
        for bidder, value in rec.bids.items():
            if bidder not in counts:
                continue
            counts[bidder][off] += 1
            if value == 0:
                counts[bidder][off + 1] += 1

    def build(bidder: str, n_no: int, z_no: int, n_int: int, z_int: int) -> ZeroBidRow:
        if n_no > 0 and n_int > 0:
            stat, sig = chi_square_two_proportions(z_no, n_no, z_int, n_int)
        else:
            stat, sig = None, False
        return ZeroBidRow(
            bidder=bidder,
            n_no_intent=n_no,
            zeros_no_intent=z_no,
            n_intent=n_int,
            zeros_intent=z_int,
            chi_square=stat,
            significant=sig,
        )

    rows = tuple(build(b, *counts[b]) for b in bidders)
    totals = [sum(counts[b][i] for b in bidders) for i in range(4)]
    return ZeroBidSummary(per_bidder=rows, overall=build("Total", *totals))
