"""Composition of the stages: surface to signature, signature pair to features."""
from __future__ import annotations

from dataclasses import dataclass

from .align import AlignedPair, align_pair, smooth_signature
from .config import Config
from .features import FeatureVector, extract_features
from .grooves import find_grooves, trim_to_land
from .loess import Signature, extract_signature
from .striae import Extremum, StriaMatch, find_extrema, match_striae
from .surface import Profile, StabilityReport, crosscut, find_stable_region
from .x3p_io import Surface


def profile_signature(profile: Profile, cfg: Config = Config()) -> Signature:
    """Trim a raw crosscut to the land and remove its curvature."""
    bounds = find_grooves(profile, cfg.groove_smooth)
    return extract_signature(trim_to_land(profile, bounds), cfg.loess_span)


def stability_pipeline(cfg: Config = Config()):
    def run(profile: Profile) -> Signature:
        return smooth_signature(profile_signature(profile, cfg), cfg.smooth_span)
    return run


def stable_region(surface: Surface, cfg: Config = Config(), **kw) -> StabilityReport:
    return find_stable_region(surface, stability_pipeline(cfg), step=cfg.stability_step,
                              threshold=cfg.stability_threshold, max_lag=cfg.max_lag, **kw)


def land_signature(surface: Surface, x: float | None = None,
                   cfg: Config = Config()) -> tuple[Signature, StabilityReport | None]:
    """Signature at height ``x``, or at the stable height when ``x`` is None.

    The report is None when ``x`` was given.  A flagged land raises nothing;
    callers check ``report.flagged`` and get ``(None, report)``.
    """
    report = None
    if x is None:
        report = stable_region(surface, cfg)
        if report.flagged:
            return None, report
        x = report.chosen_x
    return profile_signature(crosscut(surface, x), cfg), report


@dataclass(frozen=True)
class Comparison:
    pair: AlignedPair
    extrema_a: list[Extremum]
    extrema_b: list[Extremum]
    matches: list[StriaMatch]
    features: FeatureVector


def compare_smoothed(sa: Signature, sb: Signature, cfg: Config = Config(),
                     label: str = "unknown") -> Comparison:
    pair = align_pair(sa, sb, max_lag=cfg.max_lag, min_overlap_frac=cfg.min_overlap_frac)
    fa = Signature(ys=pair.ys, residuals=pair.f, source_id=pair.id_a)
    fb = Signature(ys=pair.ys, residuals=pair.g, source_id=pair.id_b)
    ea = find_extrema(fa, cfg.striae_smooth, side=0)
    eb = find_extrema(fb, cfg.striae_smooth, side=1)
    matches = match_striae(ea, eb)
    return Comparison(pair, ea, eb, matches, extract_features(pair, matches, label))


def compare_signatures(a: Signature, b: Signature, cfg: Config = Config(),
                       label: str = "unknown") -> Comparison:
    """Smooth, align, detect and match striae, and extract the features."""
    return compare_smoothed(smooth_signature(a, cfg.smooth_span),
                            smooth_signature(b, cfg.smooth_span), cfg, label)
