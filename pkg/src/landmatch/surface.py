"""Crosscut extraction and the search for a stable extraction height."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import LandmatchError, RowMaskedError, SurfaceTooShortError, XOutOfRangeError
from .x3p_io import Surface

if TYPE_CHECKING:
    from .loess import Signature

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Profile:
    """Heights along y at one fixed height ``x_height`` of a land."""

    x_height: float
    ys: np.ndarray
    values: np.ndarray
    source_id: str = ""

    def __len__(self):
        return len(self.ys)

    @property
    def increment(self) -> float:
        return float(self.ys[1] - self.ys[0]) if len(self.ys) > 1 else float("nan")


@dataclass(frozen=True)
class StabilityReport:
    chosen_x: float | None
    ccf_trace: list[tuple[float, float]]

    @property
    def flagged(self) -> bool:
        return self.chosen_x is None


def snap_row(surface: Surface, x: float) -> int:
    """Grid row nearest to height ``x``; exact halves go to the lower row."""
    m = surface.meta
    if not math.isfinite(x) or x < 0 or x > surface.x_extent * (1 + 1e-12):
        raise XOutOfRangeError(f"x = {x} outside [0, {surface.x_extent}]",
                               surface.source_id)
    q = x / m.increment_x
    row = math.ceil(q - 0.5)
    return min(max(row, 0), m.size_x - 1)


def crosscut(surface: Surface, x: float) -> Profile:
    """Profile at the grid row nearest to ``x``.

    Masked runs touching either end are dropped; interior masked cells are
    filled by linear interpolation between their nearest valid neighbours.
    """
    row = snap_row(surface, x)
    return _row_profile(surface, row)


def _row_profile(surface: Surface, row: int) -> Profile:
    m = surface.meta
    valid = surface.valid[row]
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        raise RowMaskedError(f"row {row} is entirely masked", surface.source_id)
    lo, hi = idx[0], idx[-1] + 1
    values = np.array(surface.heights[row, lo:hi])
    ok = valid[lo:hi]
    positions = np.arange(lo, hi)
    if not ok.all():
        values[~ok] = np.interp(positions[~ok], positions[ok], values[ok])
    ys = positions * m.increment_y
    return Profile(x_height=row * m.increment_x, ys=ys, values=values,
                   source_id=surface.source_id)


def lowest_valid_x(surface: Surface) -> float:
    rows = np.flatnonzero(surface.valid.any(axis=1))
    if rows.size == 0:
        raise RowMaskedError("surface is entirely masked", surface.source_id)
    return rows[0] * surface.meta.increment_x


def find_stable_region(
    surface: Surface,
    pipeline: Callable[[Profile], "Signature"],
    step: float = 25.0,
    threshold: float = 0.95,
    start: float | None = None,
    max_x: float | None = None,
    max_lag: int = 120,
) -> StabilityReport:
    """Lowest height whose signature agrees with the one ``step`` above it.

    Levels ``start, start + step, ...`` up to ``max_x`` (default 75% of the
    scanned height) are tried in order.  A level is stable when the aligned
    cross-correlation of the signatures at ``x`` and ``x + step`` reaches
    ``threshold``.  Levels where ``pipeline`` fails count as unstable and
    appear in the trace with a NaN correlation.
    """
    from .align import align_pair

    m = surface.meta
    step_rows = max(1, round(step / m.increment_x))
    if start is None:
        start = lowest_valid_x(surface)
    if max_x is None:
        max_x = 0.75 * surface.x_extent
    first = snap_row(surface, start)
    last = min(snap_row(surface, min(max_x, surface.x_extent)), m.size_x - 1 - step_rows)
    levels = list(range(first, last + 1, step_rows))
    if len(levels) == 0 or first + step_rows > m.size_x - 1:
        raise SurfaceTooShortError(
            "fewer than two candidate levels for the stability scan", surface.source_id)

    cache: dict[int, object] = {}

    def signature_at(row):
        if row not in cache:
            try:
                cache[row] = pipeline(_row_profile(surface, row))
            except LandmatchError as exc:
                logger.debug("%s: no signature at row %d: %s", surface.source_id, row, exc)
                cache[row] = None
        return cache[row]

    trace = []
    for row in levels:
        a, b = signature_at(row), signature_at(row + step_rows)
        ccf = float("nan")
        if a is not None and b is not None:
            try:
                ccf = align_pair(a, b, max_lag=max_lag).ccf
            except LandmatchError:
                pass
        x = row * m.increment_x
        trace.append((x, ccf))
        if ccf >= threshold:
            return StabilityReport(chosen_x=x, ccf_trace=trace)
    return StabilityReport(chosen_x=None, ccf_trace=trace)


def sd_of_signature(surface: Surface, x: float,
                    pipeline: Callable[[Profile], "Signature"]) -> float:
    """Standard deviation of the signature extracted at height ``x``."""
    sig = pipeline(crosscut(surface, x))
    return float(np.std(sig.residuals))
