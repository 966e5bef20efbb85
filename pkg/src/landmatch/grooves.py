"""Shoulder detection and trimming of a profile to the land impression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyAfterTrimError, NoPeakFoundError, NoValleyFoundError, SmoothingFactorError
from .surface import Profile


@dataclass(frozen=True)
class GrooveBounds:
    p_left: float
    v_left: float
    v_right: float
    p_right: float
    s: int

    def as_dict(self) -> dict:
        return {"p_left": self.p_left, "v_left": self.v_left,
                "v_right": self.v_right, "p_right": self.p_right}


def check_window(s: int, n: int, minimum: int = 3) -> None:
    if s % 2 == 0:
        raise SmoothingFactorError(f"smoothing factor must be odd, got {s}")
    if s < minimum:
        raise SmoothingFactorError(f"smoothing factor must be at least {minimum}, got {s}")
    if s > n:
        raise SmoothingFactorError(f"smoothing factor {s} exceeds sequence length {n}")


def rolling_mean(values, s: int) -> np.ndarray:
    """Centered moving average of odd width ``s``.

    Near the ends the window shrinks symmetrically to
    ``min(s, 2 * distance_to_edge + 1)`` so the output keeps the input length.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    check_window(s, n, minimum=1)
    i = np.arange(n)
    half = np.minimum(np.minimum(i, n - 1 - i), s // 2)
    csum = np.concatenate(([0.0], np.cumsum(v)))
    return (csum[i + half + 1] - csum[i - half]) / (2 * half + 1)


def double_smooth(values, s: int) -> np.ndarray:
    """Rolling mean of width ``s`` applied twice (triangular weights)."""
    check_window(s, len(values))
    return rolling_mean(rolling_mean(values, s), s)


def _window_extremum(sm: np.ndarray, s: int, start: int, stop: int, kind: str) -> int | None:
    """First index in ``[start, stop)`` that is the extremum of its window.

    Windows are ``s`` wide, clipped at the ends; the index must be the first
    position of the window attaining the extreme value.  The two end samples
    of the sequence never qualify.
    """
    n = sm.size
    h = s // 2
    cmp = sm if kind == "max" else -sm
    for i in range(max(start, 1), min(stop, n - 1)):
        lo, hi = max(0, i - h), min(n, i + h + 1)
        w = cmp[lo:hi]
        if cmp[i] == w.max() and int(np.argmax(w)) == i - lo:
            return i
    return None


def _one_side(values: np.ndarray, s: int, source_id: str):
    sm = double_smooth(values, s)
    n = sm.size
    peak = _window_extremum(sm, s, 1, n // 2, "max")
    if peak is None:
        raise NoPeakFoundError("no shoulder peak found", source_id)
    valley = _window_extremum(sm, s, peak + 1, n - 1, "min")
    if valley is None:
        raise NoValleyFoundError("no shoulder valley found", source_id)
    return peak, valley


def find_groove_indices(values, s: int = 35, source_id: str = "") -> tuple[int, int, int, int]:
    """Sample indices ``(p_left, v_left, v_right, p_right)`` of the shoulders."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n <= 2 * s:
        raise SmoothingFactorError(
            f"profile of {n} samples too short for smoothing factor {s}", source_id)
    check_window(s, n)
    pl, vl = _one_side(v, s, source_id)
    pr_rev, vr_rev = _one_side(v[::-1], s, source_id)
    pr, vr = n - 1 - pr_rev, n - 1 - vr_rev
    if not vl < vr:
        raise NoValleyFoundError(
            f"shoulder valleys cross (left {vl}, right {vr})", source_id)
    return pl, vl, vr, pr


def find_grooves(profile: Profile, s: int = 35) -> GrooveBounds:
    """Locate the left and right shoulder peaks and valleys of a profile.

    Scanning from the left edge on the doubly smoothed profile, the peak is
    the first window maximum in the left half and the valley the first window
    minimum after it.  The right shoulder is found the same way on the
    reversed profile.
    """
    pl, vl, vr, pr = find_groove_indices(profile.values, s, profile.source_id)
    ys = profile.ys
    return GrooveBounds(p_left=float(ys[pl]), v_left=float(ys[vl]),
                        v_right=float(ys[vr]), p_right=float(ys[pr]), s=s)


def trim_to_land(profile: Profile, bounds: GrooveBounds) -> Profile:
    keep = (profile.ys >= bounds.v_left) & (profile.ys <= bounds.v_right)
    if bounds.v_left >= bounds.v_right or keep.sum() < 2:
        raise EmptyAfterTrimError("nothing left between the shoulder valleys",
                                  profile.source_id)
    return Profile(x_height=profile.x_height, ys=profile.ys[keep],
                   values=profile.values[keep], source_id=profile.source_id)
