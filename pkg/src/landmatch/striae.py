"""Peak/valley detection on signatures and matching of striae between two."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoExtremaError, SignatureTooShortError
from .grooves import check_window, rolling_mean
from .loess import Signature

PEAK = "peak"
VALLEY = "valley"
MIXED = "mixed"


@dataclass(frozen=True)
class Extremum:
    kind: str
    location: float
    height: float
    lo: float
    hi: float
    index: int = -1
    side: int = 0  # 0 for the first signature of a pair, 1 for the second


@dataclass(frozen=True)
class StriaMatch:
    lo: float
    hi: float
    kind: str
    matched: bool
    members: tuple[Extremum, ...] = field(default_factory=tuple)

    @property
    def joint_interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)


def turning_points(values: np.ndarray) -> list[tuple[int, str]]:
    """Indices where the first difference changes sign.

    Zero differences carry the previous sign, so a plateau yields a single
    extremum at its far end.  Successive points alternate in kind.
    """
    d = np.sign(np.diff(values))
    nz = np.flatnonzero(d)
    if nz.size == 0:
        return []
    # forward fill zeros; leading zeros take the first non-zero sign
    fill = np.maximum.accumulate(np.where(d != 0, np.arange(d.size), 0))
    fill[:nz[0]] = nz[0]
    s = d[fill]
    change = np.flatnonzero(s[1:] != s[:-1]) + 1
    return [(int(i), PEAK if s[i - 1] > 0 else VALLEY) for i in change]


def find_extrema(sig: Signature, smooth_s: int = 25, side: int = 0) -> list[Extremum]:
    """Peaks and valleys of a signature after a single rolling average.

    Each extremum's interval reaches one third of the way to its neighbours
    (to the signature ends for the outermost ones).  Heights are read from
    the signature itself, not from the rolling average.
    """
    n = len(sig)
    if n <= 2 * smooth_s:
        raise SignatureTooShortError(
            f"signature of {n} samples too short for smoothing {smooth_s}", sig.source_id)
    check_window(smooth_s, n, minimum=1)
    sm = rolling_mean(sig.residuals, smooth_s)
    tps = turning_points(sm)
    if not tps:
        raise NoExtremaError("signature has no peaks or valleys", sig.source_id)
    ys = np.asarray(sig.ys, dtype=np.float64)
    locs = [float(ys[i]) for i, _ in tps]
    bounds = [float(ys[0])] + locs + [float(ys[-1])]
    out = []
    for j, (i, kind) in enumerate(tps):
        loc = locs[j]
        lo = loc - (loc - bounds[j]) / 3.0
        hi = loc + (bounds[j + 2] - loc) / 3.0
        out.append(Extremum(kind=kind, location=loc, height=float(sig.residuals[i]),
                            lo=lo, hi=hi, index=i, side=side))
    return out


def match_striae(ea: list[Extremum], eb: list[Extremum]) -> list[StriaMatch]:
    """Group overlapping extremum intervals of two signatures into striae.

    Intervals from both lists that overlap (transitively) form one joint
    interval spanning all of them.  A joint interval is a matching stria when
    exactly one extremum from each signature takes part and both are of the
    same kind; every other group, including lone extrema, is a non-match.
    """
    tagged = [(e.lo, e.hi, 0, e) for e in ea] + [(e.lo, e.hi, 1, e) for e in eb]
    tagged.sort(key=lambda t: (t[0], t[1], t[2]))
    groups: list[list[tuple]] = []
    hi_cur = -np.inf
    for item in tagged:
        if groups and item[0] < hi_cur:
            groups[-1].append(item)
            hi_cur = max(hi_cur, item[1])
        else:
            groups.append([item])
            hi_cur = item[1]

    out = []
    for g in groups:
        members = tuple(t[3] for t in g)
        kinds = {e.kind for e in members}
        sides = [t[2] for t in g]
        matched = sides.count(0) == 1 and sides.count(1) == 1 and len(kinds) == 1
        kind = kinds.pop() if len(kinds) == 1 else MIXED
        out.append(StriaMatch(lo=min(t[0] for t in g), hi=max(t[1] for t in g),
                              kind=kind, matched=matched, members=members))
    return out
