"""ROC analysis, bullet-level decisions and the batch study runner."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import Forest, fit_forest, importance, predict_array, training_arrays
from .config import Config
from .errors import CorpusEmptyError, LandmatchError, OneClassOnlyError
from .features import FEATURE_NAMES, FeatureVector, feature_matrix, write_features_csv
from .loess import Signature
from .pipeline import compare_smoothed, land_signature
from .align import smooth_signature
from .synth import MANIFEST_HEADER, CorpusEntry
from .x3p_io import read_x3p

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
N_BINS = 40
# features where a smaller value points to a match; their ROC uses -value
LOWER_IS_MATCH = ("n_nonmatches", "D", "cnms")


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    eer: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


def roc(scores, labels) -> RocCurve:
    """ROC over every distinct score; a pair is positive when score >= threshold.

    The first point (threshold +inf) is the origin.  AUC is the trapezoid
    area; EER is where the false positive rate equals the miss rate, linearly
    interpolated between the two bracketing points.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnlyError("ROC needs both matches and non-matches")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    last = np.r_[np.flatnonzero(s_sorted[1:] != s_sorted[:-1]), s_sorted.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thr = np.r_[np.inf, s_sorted[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thr, auc=auc, eer=_eer(fpr, tpr))


def _eer(fpr: np.ndarray, tpr: np.ndarray) -> float:
    d = (1.0 - tpr) - fpr  # decreasing from 1 to -1 along the curve
    j = int(np.flatnonzero(d <= 0)[0])
    if d[j] == 0 or j == 0:
        return float(fpr[j])
    t = d[j - 1] / (d[j - 1] - d[j])
    return float(fpr[j - 1] + t * (fpr[j] - fpr[j - 1]))


def feature_roc(fvs: list[FeatureVector], name: str) -> RocCurve:
    rows = [fv for fv in fvs if fv.label in ("match", "nonmatch")]
    vals = np.array([float(getattr(fv, name)) for fv in rows])
    if name in LOWER_IS_MATCH:
        vals = -vals
    return roc(vals, [fv.label == "match" for fv in rows])


def histograms(fvs: list[FeatureVector], bins: int = N_BINS) -> list[tuple]:
    """Per-feature density histograms of known matches and non-matches.

    Both classes share the bin edges spanning the feature's observed range.
    Rows are ``(feature, label, bin_lo, bin_hi, density)``.
    """
    out = []
    for name in FEATURE_NAMES:
        vals = np.array([float(getattr(fv, name)) for fv in fvs
                         if fv.label in ("match", "nonmatch")])
        if vals.size == 0:
            continue
        lo, hi = float(vals.min()), float(vals.max())
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
        for label in ("match", "nonmatch"):
            v = np.array([float(getattr(fv, name)) for fv in fvs if fv.label == label])
            if v.size == 0:
                continue
            dens, _ = np.histogram(v, bins=edges, density=True)
            for j in range(bins):
                out.append((name, label, float(edges[j]), float(edges[j + 1]), float(dens[j])))
    return out


@dataclass(frozen=True)
class BulletDecision:
    match: bool
    rotation: int
    n_above: int


def bullet_decision(land_predictions: dict, cutoff: float = 0.5, min_lands: int = 2,
                    n_lands: int = 6) -> BulletDecision:
    """Match two bullets when enough land pairs agree under one rotation.

    ``land_predictions`` maps ``(land_a, land_b)`` (1-based) to a match
    probability; missing pairs are skipped.  Rotation ``r`` pairs land ``i``
    of the first bullet with land ``(i - 1 + r) % n_lands + 1`` of the second.
    The rotation with most probabilities above ``cutoff`` wins, then the
    larger probability sum, then the smaller ``r``.
    """
    best = None
    for r in range(n_lands):
        above, total = 0, 0.0
        for i in range(1, n_lands + 1):
            p = land_predictions.get((i, (i - 1 + r) % n_lands + 1))
            if p is None or not math.isfinite(p):
                continue
            above += p > cutoff
            total += p
        key = (-above, -total, r)
        if best is None or key < best[0]:
            best = (key, r, above)
    _, r, above = best
    return BulletDecision(match=above >= min_lands, rotation=r, n_above=above)


# study runner

@dataclass
class LandResult:
    land_id: str
    chosen_x: float | None
    flagged: bool
    reason: str = ""
    ccf_trace: list = field(default_factory=list)
    signature: Signature | None = None


@dataclass
class StudyResult:
    lands: list[LandResult]
    features: list[FeatureVector]
    probabilities: np.ndarray
    cutoff: float
    confusion: dict
    bullets: list[dict]
    failed_pairs: list[tuple[str, str, str]]
    model: object = None
    oob_probabilities: np.ndarray | None = None

    @property
    def flagged(self) -> list[str]:
        return [l.land_id for l in self.lands if l.flagged]

    def feature_rocs(self) -> dict[str, RocCurve]:
        out = {}
        for name in FEATURE_NAMES:
            try:
                out[name] = feature_roc(self.features, name)
            except OneClassOnlyError:
                pass
        return out

    def prediction_roc(self) -> RocCurve | None:
        y = [fv.label for fv in self.features]
        keep = [i for i, lab in enumerate(y) if lab in ("match", "nonmatch")]
        try:
            return roc(self.probabilities[keep], [y[i] == "match" for i in keep])
        except OneClassOnlyError:
            return None


def read_manifest(path) -> list[CorpusEntry]:
    """Corpus entries from a manifest CSV; paths are relative to the manifest."""
    path = Path(path)
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_HEADER) - set(reader.fieldnames or ())
        if missing - {"barrel", "barrel_land"}:
            raise LandmatchError(f"manifest lacks columns {sorted(missing)}")
        for row in reader:
            bl = (row.get("barrel_land") or "").strip()
            entries.append(CorpusEntry(
                land_id=row["land_id"], bullet_id=row["bullet_id"], land=int(row["land"]),
                barrel=(row.get("barrel") or "").strip(),
                barrel_land=int(bl) if bl else 0,
                role=row["role"].strip(), path=str(path.parent / row["path"])))
    return entries


def pair_label(a: CorpusEntry, b: CorpusEntry) -> str:
    if not a.barrel or not b.barrel:
        return "unknown"
    if a.barrel != b.barrel:
        return "nonmatch"
    if not a.barrel_land or not b.barrel_land:
        return "unknown"
    return "match" if a.barrel_land == b.barrel_land else "nonmatch"


def pair_set(entries: list[CorpusEntry], mode: str) -> list[tuple[int, int]]:
    """Index pairs to compare: ``known-unknown`` or ``all``."""
    if mode == "all":
        order = sorted(range(len(entries)), key=lambda i: entries[i].land_id)
        return [(order[i], order[j]) for i in range(len(order))
                for j in range(i + 1, len(order))]
    if mode == "known-unknown":
        unknown = sorted((i for i, e in enumerate(entries) if e.role == "unknown"),
                         key=lambda i: entries[i].land_id)
        known = sorted((i for i, e in enumerate(entries) if e.role == "known"),
                       key=lambda i: entries[i].land_id)
        return [(u, k) for u in unknown for k in known]
    raise ValueError(f"unknown pair mode {mode!r}")


def expected_pair_count(n_known: int, n_unknown: int, mode: str) -> int:
    if mode == "all":
        n = n_known + n_unknown
        return n * (n - 1) // 2
    return n_known * n_unknown


def _process_land(args) -> LandResult:
    entry, cfg, swap_axes = args
    try:
        surface = entry.surface if entry.surface is not None else \
            read_x3p(entry.path, swap_axes=swap_axes, source_id=entry.land_id)
        sig, report = land_signature(surface, None, cfg)
        if report.flagged:
            return LandResult(entry.land_id, None, True, "no stable region", report.ccf_trace)
        smooth = smooth_signature(sig, cfg.smooth_span)
        smooth = Signature(ys=smooth.ys, residuals=smooth.residuals,
                           x_height=smooth.x_height, source_id=entry.land_id)
        return LandResult(entry.land_id, report.chosen_x, False, "", report.ccf_trace, smooth)
    except LandmatchError as exc:
        return LandResult(entry.land_id, None, True, str(exc))


def _process_pair(args):
    sa, sb, cfg, label = args
    try:
        return compare_smoothed(sa, sb, cfg, label).features, None
    except LandmatchError as exc:
        return None, str(exc)


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    return [fn(t) for t in tasks]


def run_study(entries: list[CorpusEntry], cfg: Config = Config(), pairs: str = "known-unknown",
              model=None, jobs: int = 1, swap_axes: bool = False) -> StudyResult:
    """Quality-check every land, compare the chosen pairs, score and aggregate.

    Lands without a stable region (or whose signature cannot be extracted)
    are flagged and left out of all comparisons.  Without ``model`` a forest
    is trained on the labelled comparisons and used to score them.
    """
    if len(entries) < 2:
        raise CorpusEmptyError("a study needs at least two lands")
    lands = _map(_process_land, [(e, cfg, swap_axes) for e in entries], jobs)
    for lr in lands:
        if lr.flagged:
            logger.warning("%s flagged: %s", lr.land_id, lr.reason)
    usable = [i for i, lr in enumerate(lands) if not lr.flagged]
    sub = [entries[i] for i in usable]
    sigs = [lands[i].signature for i in usable]

    index_pairs = pair_set(sub, pairs)
    tasks = [(sigs[a], sigs[b], cfg, pair_label(sub[a], sub[b])) for a, b in index_pairs]
    results = _map(_process_pair, tasks, jobs)
    fvs, failed = [], []
    for (a, b), (fv, err) in zip(index_pairs, results):
        if fv is None:
            failed.append((sub[a].land_id, sub[b].land_id, err))
        else:
            fvs.append(fv)
    fvs.sort(key=lambda fv: fv.pair_id)

    oob_prob = None
    if model is None:
        X, y = training_arrays(fvs)
        if len(set(y.tolist())) < 2:
            raise OneClassOnlyError("cannot train a model: labelled pairs cover one class")
        model = fit_forest(X, y, n_trees=cfg.n_trees, mtry=cfg.mtry, seed=cfg.seed, jobs=jobs)
        oob = np.full(len(fvs), np.nan)
        lab_idx = [i for i, fv in enumerate(fvs) if fv.label in ("match", "nonmatch")]
        oob[lab_idx] = model.oob["probabilities"]
        oob_prob = oob
    prob = predict_array(model, feature_matrix(fvs)) if fvs else np.zeros(0)

    confusion = {"tp": 0, "fp": 0, "tn": 0, "fn": 0, "unlabelled": 0}
    for fv, p in zip(fvs, prob):
        pred = p > cfg.cutoff
        if fv.label == "unknown":
            confusion["unlabelled"] += 1
        elif fv.label == "match":
            confusion["tp" if pred else "fn"] += 1
        else:
            confusion["fp" if pred else "tn"] += 1

    bullets = _bullet_level(sub, fvs, prob, cfg.cutoff)
    return StudyResult(lands=lands, features=fvs, probabilities=prob, cutoff=cfg.cutoff,
                       confusion=confusion, bullets=bullets, failed_pairs=failed,
                       model=model, oob_probabilities=oob_prob)


def _bullet_level(entries, fvs, prob, cutoff) -> list[dict]:
    by_id = {e.land_id: e for e in entries}
    grouped: dict[tuple[str, str], dict] = {}
    for fv, p in zip(fvs, prob):
        ea, eb = by_id[fv.id_a], by_id[fv.id_b]
        if ea.bullet_id == eb.bullet_id:
            continue
        if ea.bullet_id > eb.bullet_id:
            ea, eb = eb, ea
        grouped.setdefault((ea.bullet_id, eb.bullet_id), {})[(ea.land, eb.land)] = float(p)
    barrel_of = {e.bullet_id: e.barrel for e in entries}
    out = []
    for (ba, bb), preds in sorted(grouped.items()):
        dec = bullet_decision(preds, cutoff=cutoff)
        truth = None
        if barrel_of[ba] and barrel_of[bb]:
            truth = barrel_of[ba] == barrel_of[bb]
        out.append({"bullet_a": ba, "bullet_b": bb, "match": dec.match,
                    "rotation": dec.rotation, "n_above": dec.n_above, "truth": truth,
                    "error": None if truth is None else dec.match != truth})
    return out


def summarize(result: StudyResult) -> dict:
    c = result.confusion
    n_pos, n_neg = c["tp"] + c["fn"], c["tn"] + c["fp"]
    bullet_errors = [b for b in result.bullets if b["error"]]
    scored_bullets = [b for b in result.bullets if b["error"] is not None]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "n_lands": len(result.lands),
        "flagged_lands": result.flagged,
        "n_pairs": len(result.features),
        "failed_pairs": [list(f) for f in result.failed_pairs],
        "cutoff": result.cutoff,
        "confusion": c,
        "false_positive_rate": c["fp"] / n_neg if n_neg else None,
        "false_negative_rate": c["fn"] / n_pos if n_pos else None,
        "error_rate": (c["fp"] + c["fn"]) / (n_pos + n_neg) if n_pos + n_neg else None,
        "bullet_pairs": len(result.bullets),
        "bullet_errors": len(bullet_errors),
        "bullet_error_rate": len(bullet_errors) / len(scored_bullets) if scored_bullets else None,
        "bullet_matches": [[b["bullet_a"], b["bullet_b"]] for b in result.bullets if b["match"]],
        "feature_auc": {k: r.auc for k, r in result.feature_rocs().items()},
        "feature_eer": {k: r.eer for k, r in result.feature_rocs().items()},
    }
    pr = result.prediction_roc()
    summary["prediction_auc"] = None if pr is None else pr.auc
    if isinstance(result.model, Forest):
        m = result.model
        summary["model"] = {"kind": "forest", "n_trees": m.n_trees, "seed": m.seed,
                            "oob": {k: v for k, v in m.oob.items() if k != "probabilities"},
                            "importance": [[k, v] for k, v in importance(m)]}
    return summary


def _num(v: float) -> str:
    return repr(float(v))


def write_study(result: StudyResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_features_csv(result.features, out / "features.csv")
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id_a", "id_b", "label", "probability", "predicted"])
        for fv, p in zip(result.features, result.probabilities):
            w.writerow([fv.id_a, fv.id_b, fv.label, _num(p),
                        "match" if p > result.cutoff else "nonmatch"])
    for name, curve in result.feature_rocs().items():
        with open(out / f"roc_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fpr", "tpr", "threshold"])
            for f, t, th in curve.points:
                w.writerow([_num(f), _num(t), _num(th)])
    with open(out / "densities.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "label", "bin_lo", "bin_hi", "density"])
        for name, label, lo, hi, d in histograms(result.features):
            w.writerow([name, label, _num(lo), _num(hi), _num(d)])
    with open(out / "lands.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["land_id", "chosen_x_um", "flagged", "reason"])
        for lr in sorted(result.lands, key=lambda l: l.land_id):
            w.writerow([lr.land_id, "" if lr.chosen_x is None else _num(lr.chosen_x),
                        int(lr.flagged), lr.reason])
    with open(out / "summary.json", "w") as fh:
        json.dump(summarize(result), fh, indent=1, sort_keys=True)
        fh.write("\n")
