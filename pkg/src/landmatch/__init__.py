"""Automatic matching of bullet land impressions from 3D surface scans."""

__version__ = "0.1.0"

from .align import AlignedPair, align_pair, smooth_signature
from .classify import Forest, fit_forest, fit_tree, importance, predict
from .config import Config
from .evaluation import bullet_decision, roc, run_study
from .features import FEATURE_NAMES, FeatureVector, extract_features
from .grooves import GrooveBounds, double_smooth, find_grooves, trim_to_land
from .loess import CircleFit, Signature, extract_signature, fit_circle, loess_fit
from .pipeline import compare_signatures, land_signature
from .striae import Extremum, StriaMatch, find_extrema, match_striae
from .surface import Profile, StabilityReport, crosscut, find_stable_region
from .x3p_io import Surface, X3pMeta, read_x3p, write_x3p
