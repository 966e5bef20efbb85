"""Local quadratic regression (loess) and the closed-form circle fit."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import CollinearPointsError, WindowRankDeficientError
from .surface import Profile

logger = logging.getLogger(__name__)

COND_LIMIT = 1e12
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class Signature:
    """Residuals of a profile around its loess trend."""

    ys: np.ndarray
    residuals: np.ndarray
    x_height: float = 0.0
    source_id: str = ""

    def __len__(self):
        return len(self.ys)

    @property
    def increment(self) -> float:
        return float(self.ys[1] - self.ys[0]) if len(self.ys) > 1 else float("nan")

    def with_residuals(self, residuals) -> "Signature":
        return Signature(ys=self.ys, residuals=np.asarray(residuals, dtype=np.float64),
                         x_height=self.x_height, source_id=self.source_id)


def tricube(d):
    d = np.clip(np.abs(d), 0.0, 1.0)
    return (1.0 - d ** 3) ** 3


def window_starts(ys: np.ndarray, k: int) -> np.ndarray:
    """First index of the ``k`` nearest neighbours of every point.

    On sorted positions the neighbourhood is contiguous.  When the points
    just outside the window on either side are equally far, the lower index
    is kept.
    """
    n = ys.size
    if k >= n:
        return np.zeros(n, dtype=np.intp)
    # window [lo, lo+k) is right iff y[lo+k] - y_i >= y_i - y[lo]
    s = ys[k:] + ys[:n - k]
    return np.searchsorted(s, 2.0 * ys, side="left").astype(np.intp)


def loess_fit(ys, values, span: float = 0.75, degree: int = 2) -> np.ndarray:
    """Fitted values of a single-pass loess smoother at every input point.

    Each point gets a weighted least-squares polynomial of ``degree`` over its
    ``ceil(span * n)`` nearest neighbours, with tricube weights on the
    distance scaled by the largest distance in the window.
    """
    ys = np.asarray(ys, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    n = ys.size
    if v.shape != ys.shape:
        raise ValueError("ys and values must have the same length")
    if not 0 < span <= 1:
        raise ValueError(f"span must be in (0, 1], got {span}")
    if degree not in (0, 1, 2):
        raise ValueError("degree must be 0, 1 or 2")
    k = math.ceil(span * n - 1e-9)
    if k < degree + 2:
        raise WindowRankDeficientError(
            f"window of {k} points too small for degree {degree}")

    p = degree + 1
    starts = window_starts(ys, k)
    offs = np.arange(k)
    fitted = np.empty(n)
    for c0 in range(0, n, _CHUNK):
        rows = slice(c0, min(n, c0 + _CHUNK))
        idx = starts[rows, None] + offs
        dy = ys[idx] - ys[rows, None]
        scale = np.abs(dy).max(axis=1)
        if np.any(scale <= 0):
            raise WindowRankDeficientError("all window points coincide")
        u = dy / scale[:, None]
        w = tricube(u)
        powers = [np.ones_like(u)]
        for _ in range(2 * degree):
            powers.append(powers[-1] * u)
        moments = np.stack([(w * pw).sum(axis=1) for pw in powers], axis=1)
        wv = w * v[idx]
        rhs = np.stack([(wv * powers[j]).sum(axis=1) for j in range(p)], axis=1)
        normal = np.empty((moments.shape[0], p, p))
        for a in range(p):
            for b in range(p):
                normal[:, a, b] = moments[:, a + b]
        # Jacobi scaling before the conditioning check
        d = 1.0 / np.sqrt(np.diagonal(normal, axis1=1, axis2=2))
        scaled = normal * d[:, :, None] * d[:, None, :]
        if np.any(~np.isfinite(d)) or np.any(np.linalg.cond(scaled) > COND_LIMIT):
            raise WindowRankDeficientError("local design matrix is singular")
        sol = np.linalg.solve(scaled, (rhs * d)[:, :, None])[:, :, 0] * d
        fitted[rows] = sol[:, 0]
    return fitted


def extract_signature(profile: Profile, span: float = 0.75) -> Signature:
    """Signature of a trimmed profile: the residuals of its loess fit."""
    trend = loess_fit(profile.ys, profile.values, span=span, degree=2)
    resid = profile.values - trend
    spread = float(np.std(resid))
    if spread > 0 and abs(resid.mean()) > 0.1 * spread:
        logger.debug("%s: signature mean %.3g is large relative to sd %.3g",
                     profile.source_id, resid.mean(), spread)
    return Signature(ys=np.array(profile.ys), residuals=resid,
                     x_height=profile.x_height, source_id=profile.source_id)


@dataclass(frozen=True)
class CircleFit:
    a: float
    b: float
    r: float
    rss: float

    def upper_arc(self, ys) -> np.ndarray:
        """Heights of the upper half of the circle at horizontal positions ``ys``."""
        ys = np.asarray(ys, dtype=np.float64)
        return self.b + np.sqrt(np.maximum(self.r ** 2 - (ys - self.a) ** 2, 0.0))

    def arc_degrees(self, ys) -> float:
        ys = np.asarray(ys, dtype=np.float64)
        half = np.clip((ys - self.a) / self.r, -1.0, 1.0)
        return float(np.degrees(np.arcsin(half.max()) - np.arcsin(half.min())))


def fit_circle(ys, values) -> CircleFit:
    """Least-squares circle through points ``(ys[i], values[i])``.

    Minimizes the sum of ``(r^2 - (y - a)^2 - (z - b)^2)^2`` in closed form
    on centered data.  ``rss`` is the sum of squared radial distances
    ``(|p - c| - r)^2``.
    """
    x = np.asarray(ys, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 3 or y.size != n:
        raise CollinearPointsError("need at least three points")
    mx, my = x.mean(), y.mean()
    xc, yc = x - mx, y - my
    sxx, syy, sxy = xc @ xc, yc @ yc, xc @ yc
    c1 = np.sum(xc ** 3 + xc * yc ** 2)
    c2 = np.sum(xc ** 2 * yc + yc ** 3)
    den = 2.0 * (sxx * syy - sxy ** 2)
    if not abs(den) > 1e-12 * 2.0 * sxx * syy or sxx == 0 or syy == 0:
        raise CollinearPointsError("points are collinear")
    a = (c1 * syy - c2 * sxy) / den
    b = (c2 * sxx - c1 * sxy) / den
    r = math.sqrt(sxx / n + syy / n + a * a + b * b)
    resid = np.hypot(xc - a, yc - b) - r
    return CircleFit(a=float(a + mx), b=float(b + my), r=float(r), rss=float(resid @ resid))


def circle_residuals(profile: Profile) -> Signature:
    """Residuals of a profile around its fitted circle (diagnostic detrend)."""
    fit = fit_circle(profile.ys, profile.values)
    resid = profile.values - fit.upper_arc(profile.ys)
    return Signature(ys=np.array(profile.ys), residuals=resid,
                     x_height=profile.x_height, source_id=profile.source_id)
