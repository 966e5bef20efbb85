"""The seven comparison features of an aligned signature pair."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .align import AlignedPair
from .errors import SchemaMismatchError
from .striae import StriaMatch

# serialization order; also the column order of feature matrices
FEATURE_NAMES = ("ccf", "n_matches", "S", "n_nonmatches", "D", "cms", "cnms")
CSV_HEADER = ("id_a", "id_b", "label") + FEATURE_NAMES
LABELS = ("match", "nonmatch", "unknown")


@dataclass(frozen=True)
class FeatureVector:
    ccf: float
    n_matches: int
    S: float
    n_nonmatches: int
    D: float
    cms: int
    cnms: int
    id_a: str = ""
    id_b: str = ""
    label: str = "unknown"

    @property
    def pair_id(self) -> tuple[str, str]:
        return (self.id_a, self.id_b)

    def values(self) -> list[float]:
        return [float(getattr(self, name)) for name in FEATURE_NAMES]

    def with_label(self, label: str) -> "FeatureVector":
        return FeatureVector(**{**self.__dict__, "label": label})


def feature_D(pair: AlignedPair) -> float:
    """Root-mean-square vertical distance between the aligned signatures."""
    diff = pair.f - pair.g
    return math.sqrt(float(diff @ diff) / diff.size)


def feature_S(matches: list[StriaMatch]) -> float:
    total = 0.0
    for m in matches:
        if m.matched:
            total += sum(abs(e.height) for e in m.members) / len(m.members)
    return total


def longest_run(flags, value: bool) -> int:
    best = run = 0
    for f in flags:
        run = run + 1 if f == value else 0
        best = max(best, run)
    return best


def feature_runs(matches: list[StriaMatch]) -> tuple[int, int, int, int]:
    """``(cms, cnms, n_matches, n_nonmatches)`` of a position-sorted list."""
    flags = [m.matched for m in matches]
    n_match = sum(flags)
    return (longest_run(flags, True), longest_run(flags, False),
            n_match, len(flags) - n_match)


def extract_features(pair: AlignedPair, matches: list[StriaMatch],
                     label: str = "unknown") -> FeatureVector:
    cms, cnms, n_match, n_non = feature_runs(matches)
    return FeatureVector(ccf=pair.ccf, n_matches=n_match, S=feature_S(matches),
                         n_nonmatches=n_non, D=feature_D(pair), cms=cms, cnms=cnms,
                         id_a=pair.id_a, id_b=pair.id_b, label=label)


def feature_matrix(fvs) -> np.ndarray:
    return np.array([fv.values() for fv in fvs], dtype=np.float64).reshape(-1, len(FEATURE_NAMES))


def write_features_csv(fvs, path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for fv in fvs:
            w.writerow([fv.id_a, fv.id_b, fv.label, repr(float(fv.ccf)), fv.n_matches,
                        repr(float(fv.S)), fv.n_nonmatches, repr(float(fv.D)), fv.cms, fv.cnms])
    finally:
        if own:
            fh.close()


def read_features_csv(path) -> list[FeatureVector]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise SchemaMismatchError(f"unexpected feature CSV header {header}")
        out = []
        for row in reader:
            if not row:
                continue
            id_a, id_b, label, ccf, nm, s, nn, d, cms, cnms = row
            if label not in LABELS:
                raise SchemaMismatchError(f"unknown label {label!r}")
            out.append(FeatureVector(ccf=float(ccf), n_matches=int(nm), S=float(s),
                                     n_nonmatches=int(nn), D=float(d), cms=int(cms),
                                     cnms=int(cnms), id_a=id_a, id_b=id_b, label=label))
    return out
