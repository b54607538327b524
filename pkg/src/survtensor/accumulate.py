"""Bounded-memory (sum, count) accumulator keyed by (stay, hour, feature).

Sums are held as Shewchuk-style expansions (non-overlapping partials), so
folding a value and merging two accumulators are exact operations on real
numbers. Rounding happens once, at read-out, which makes the final aggregate
bit-identical for any chunk size, file order, or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import fsum, isfinite


def _fold(cell: list, x: float) -> None:
    # cell layout: [count, partial0, partial1, ...]; partials stay
    # non-overlapping, so their fsum is the correctly rounded total.
    i = 1
    for j in range(1, len(cell)):
        y = cell[j]
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            cell[i] = lo
            i += 1
        x = hi
    cell[i:] = [x]


@dataclass
class IngestDiagnostics:
    """Tally of rows dropped while streaming; malformed rows are not fatal."""

    rows_seen: int = 0
    rows_folded: int = 0
    rows_malformed: int = 0
    rows_out_of_window: int = 0
    rows_not_in_cohort: int = 0
    rows_unknown_item: int = 0

    def merge(self, other: "IngestDiagnostics") -> None:
        self.rows_seen += other.rows_seen
        self.rows_folded += other.rows_folded
        self.rows_malformed += other.rows_malformed
        self.rows_out_of_window += other.rows_out_of_window
        self.rows_not_in_cohort += other.rows_not_in_cohort
        self.rows_unknown_item += other.rows_unknown_item

    def as_dict(self) -> dict[str, int]:
        return {
            "rows_seen": self.rows_seen,
            "rows_folded": self.rows_folded,
            "rows_malformed": self.rows_malformed,
            "rows_out_of_window": self.rows_out_of_window,
            "rows_not_in_cohort": self.rows_not_in_cohort,
            "rows_unknown_item": self.rows_unknown_item,
        }


class HourlyAccumulator:
    """Accumulates (sum, count) per (stay_id, hour, feature) cell."""

    __slots__ = ("_cells",)

    def __init__(self) -> None:
        self._cells: dict[tuple[str, int, str], list] = {}

    def __len__(self) -> int:
        return len(self._cells)

    def add(self, stay_id: str, hour: int, feature: str, value: float) -> None:
        key = (stay_id, hour, feature)
        cell = self._cells.get(key)
        if cell is None:
            self._cells[key] = [1, value]
        else:
            cell[0] += 1
            _fold(cell, value)

    def merge(self, other: "HourlyAccumulator") -> None:
        cells = self._cells
        for key, ocell in other._cells.items():
            cell = cells.get(key)
            if cell is None:
                cells[key] = list(ocell)
            else:
                cell[0] += ocell[0]
                for partial in ocell[1:]:
                    _fold(cell, partial)

    def finalize(self, diagnostics: IngestDiagnostics | None = None) -> "HourlyAggregate":
        entries = {key: (fsum(cell[1:]), cell[0]) for key, cell in self._cells.items()}
        return HourlyAggregate(entries=entries,
                               diagnostics=diagnostics or IngestDiagnostics())


@dataclass
class HourlyAggregate:
    """Finalized hourly aggregate: (stay, hour, feature) -> (sum, count)."""

    entries: dict[tuple[str, int, str], tuple[float, int]]
    diagnostics: IngestDiagnostics = field(default_factory=IngestDiagnostics)

    def __len__(self) -> int:
        return len(self.entries)

    def mean(self, stay_id: str, hour: int, feature: str) -> float:
        total, count = self.entries[(stay_id, hour, feature)]
        return total / count

    def feature_names(self) -> list[str]:
        return sorted({feature for (_, _, feature) in self.entries})

    def check_invariants(self, max_hours: int, cohort_stays: set[str]) -> None:
        for (stay_id, hour, _), (total, count) in self.entries.items():
            if count < 1:
                raise AssertionError("aggregate entry with count < 1")
            if not 0 <= hour < max_hours:
                raise AssertionError(f"aggregate hour {hour} outside [0, {max_hours})")
            if stay_id not in cohort_stays:
                raise AssertionError(f"aggregate stay {stay_id} not in cohort")
            if not isfinite(total / count):
                raise AssertionError("aggregate mean is not finite")
