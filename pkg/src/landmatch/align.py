"""Signature smoothing and lag alignment by normalized cross-correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySignatureError, InsufficientOverlapError, WindowRankDeficientError
from .loess import Signature, loess_fit


@dataclass(frozen=True, eq=False)
class AlignedPair:
    """Two smoothed signatures cut to their overlap at the best lag.

    ``f[t]`` is the first signature and ``g[t]`` the second one shifted by
    ``lag`` samples; ``ys`` is the overlap grid measured from its own start,
    so the pair looks the same whichever signature came first.
    """

    lag: int
    ys: np.ndarray
    f: np.ndarray
    g: np.ndarray
    ccf: float
    id_a: str = ""
    id_b: str = ""

    @property
    def overlap_n(self) -> int:
        return int(self.f.size)


def smooth_signature(sig: Signature, span: float = 0.03) -> Signature:
    """Loess smooth (quadratic, tricube) of the residuals with a small span."""
    n = len(sig)
    if n == 0:
        raise EmptySignatureError("empty signature", sig.source_id)
    if span * n < 4:
        raise WindowRankDeficientError(
            f"span {span} covers fewer than 4 of {n} samples", sig.source_id)
    return sig.with_residuals(loess_fit(sig.ys, sig.residuals, span=span, degree=2))


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Correlation of two equal-length arrays; 0 when either is constant.

    Written so that swapping the arguments gives a bit-identical result.
    """
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx <= 0.0 or syy <= 0.0:
        return 0.0
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def overlap_slices(n_a: int, n_b: int, k: int) -> tuple[slice, slice]:
    """Index ranges pairing ``a[t]`` with ``b[t + k]``."""
    t0 = max(0, -k)
    t1 = min(n_a, n_b - k)
    return slice(t0, max(t0, t1)), slice(t0 + k, max(t0, t1) + k)


def ccf_at_lags(a: np.ndarray, b: np.ndarray, max_lag: int,
                min_overlap: int) -> dict[int, float]:
    out = {}
    for k in range(-max_lag, max_lag + 1):
        sa, sb = overlap_slices(a.size, b.size, k)
        if sa.stop - sa.start < min_overlap:
            continue
        out[k] = pearson(a[sa], b[sb])
    return out


def best_lag(ccfs: dict[int, float]) -> int:
    # highest ccf, then smallest |k|, then the negative lag
    return min(ccfs, key=lambda k: (-ccfs[k], abs(k), k))


def align_pair(a: Signature, b: Signature, max_lag: int = 120,
               min_overlap_frac: float = 0.5) -> AlignedPair:
    """Shift ``b`` against ``a`` to maximize their Pearson correlation.

    A positive lag means ``b`` is shifted to the right of ``a``.  Lags whose
    overlap is shorter than ``min_overlap_frac`` of the shorter signature are
    not considered.
    """
    fa = np.asarray(a.residuals, dtype=np.float64)
    fb = np.asarray(b.residuals, dtype=np.float64)
    if fa.size == 0 or fb.size == 0:
        raise EmptySignatureError("cannot align an empty signature",
                                  a.source_id if fa.size == 0 else b.source_id)
    min_overlap = max(2, math.ceil(min_overlap_frac * min(fa.size, fb.size)))
    ccfs = ccf_at_lags(fa, fb, max_lag, min_overlap)
    if not ccfs:
        raise InsufficientOverlapError(
            f"no lag within +-{max_lag} leaves {min_overlap} overlapping samples",
            f"{a.source_id}|{b.source_id}")
    k = best_lag(ccfs)
    sa, sb = overlap_slices(fa.size, fb.size, k)
    f, g = fa[sa].copy(), fb[sb].copy()
    inc = a.increment if len(a) > 1 else b.increment
    return AlignedPair(lag=k, ys=np.arange(f.size) * inc, f=f, g=g, ccf=ccfs[k],
                       id_a=a.source_id, id_b=b.source_id)
