"""Command line interface: ``landmatch <command> ...``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .align import align_pair, smooth_signature
from .classify import (fit_forest, fit_tree, importance, load_model, model_to_dict,
                       predict, predict_array, save_model, training_arrays)
from .config import Config, load_config
from .errors import LandmatchError
from .evaluation import read_manifest, run_study, summarize, write_study
from .features import FEATURE_NAMES, feature_matrix, read_features_csv
from .grooves import find_grooves, trim_to_land
from .loess import Signature, circle_residuals, fit_circle
from .pipeline import compare_signatures, land_signature, stable_region
from .striae import find_extrema
from .surface import crosscut
from .synth import Damage, ShotConfig, synth_corpus, write_corpus
from .x3p_io import read_x3p

SCHEMA_VERSION = 1
COMMANDS = ("inspect", "crosscut", "grooves", "signature", "align", "striae", "compare",
            "train", "predict", "study", "synth")

log = logging.getLogger("landmatch")

# (flag, Config field, type)
TUNABLES = [
    ("--groove-smooth", "groove_smooth", int),
    ("--striae-smooth", "striae_smooth", int),
    ("--loess-span", "loess_span", float),
    ("--smooth-span", "smooth_span", float),
    ("--stability-step", "stability_step", float),
    ("--stability-threshold", "stability_threshold", float),
    ("--max-lag", "max_lag", int),
    ("--cutoff", "cutoff", float),
    ("--n-trees", "n_trees", int),
    ("--mtry", "mtry", int),
]


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", type=Path, help="key = value file with pipeline settings")
    g.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    g.add_argument("--jobs", type=int, default=1, help="worker processes")
    g.add_argument("--swap-axes", action="store_true",
                   help="x3p files store the bullet axis along CY")
    g.add_argument("--out", type=Path, help="output file or directory")
    g.add_argument("-v", "--verbose", action="store_true")
    for flag, dest, typ in TUNABLES:
        g.add_argument(flag, dest=dest, type=typ, default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="landmatch",
                                     description="Bullet land impression matching")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", parents=[common], help="show x3p metadata")
    p.add_argument("file", type=Path)

    p = sub.add_parser("crosscut", parents=[common], help="profile at a fixed height")
    p.add_argument("file", type=Path)
    p.add_argument("--x", type=float, required=True, help="height in um")

    for name, text in (("grooves", "shoulder locations"), ("signature", "loess signature")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("file", type=Path)
        p.add_argument("--x", type=float, help="height in um (default: stable region)")
        if name == "signature":
            p.add_argument("--detrend", choices=("loess", "circle"), default="loess")

    p = sub.add_parser("align", parents=[common], help="align two signatures")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)

    p = sub.add_parser("striae", parents=[common], help="peaks and valleys of a signature")
    p.add_argument("file", type=Path)

    p = sub.add_parser("compare", parents=[common], help="features of a land pair")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.add_argument("--model", type=Path)

    p = sub.add_parser("train", parents=[common], help="fit a forest or tree")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--tree", action="store_true", help="single tree instead of a forest")

    p = sub.add_parser("predict", parents=[common], help="score a feature table")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)

    p = sub.add_parser("study", parents=[common], help="run a whole comparison study")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--pairs", choices=("known-unknown", "all"), default="known-unknown")
    p.add_argument("--model", type=Path)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--barrels", type=int, default=4)
    p.add_argument("--bullets-per-barrel", type=int, default=3)
    p.add_argument("--unknown-per-barrel", type=int, default=1)
    p.add_argument("--noise-sd", type=float, default=0.1)
    p.add_argument("--damage", action="append", default=[], metavar="LAND_ID",
                   help="give this land full-height scratch damage (repeatable)")
    return parser


def make_config(args, parser) -> Config:
    try:
        cfg = load_config(args.config) if args.config else Config()
        changes = {dest: getattr(args, dest) for _, dest, _ in TUNABLES}
        changes["seed"] = args.seed
        return cfg.updated(**changes)
    except (ValueError, OSError) as exc:
        parser.error(str(exc))


def _emit_text(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _emit_json(obj, out) -> None:
    _emit_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", out)


def _emit_csv(header, rows, out) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _emit_text(buf.getvalue(), out)


def _num(v) -> str:
    return repr(float(v))


def read_signature_csv(path: Path) -> Signature:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["y_um", "residual_um"]:
            raise LandmatchError(f"{path}: expected header y_um,residual_um")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    arr = np.array(rows, dtype=np.float64).reshape(-1, 2)
    return Signature(ys=arr[:, 0], residuals=arr[:, 1], source_id=path.stem)


def load_signature(path: Path, args, cfg: Config) -> Signature:
    """Signature from a ``y_um,residual_um`` CSV or from an x3p scan."""
    if path.suffix.lower() == ".csv":
        return read_signature_csv(path)
    surface = read_x3p(path, swap_axes=args.swap_axes)
    sig, report = land_signature(surface, getattr(args, "x", None), cfg)
    if sig is None:
        raise LandmatchError("no stable region found; land is flagged", surface.source_id)
    return sig


def _height(surface, args, cfg) -> float:
    if args.x is not None:
        return args.x
    report = stable_region(surface, cfg)
    if report.flagged:
        raise LandmatchError("no stable region found; land is flagged", surface.source_id)
    return report.chosen_x


def cmd_inspect(args, cfg):
    s = read_x3p(args.file, swap_axes=args.swap_axes)
    m = s.meta
    _emit_json({"schema_version": SCHEMA_VERSION, "source_id": s.source_id,
                "size_x": m.size_x, "size_y": m.size_y,
                "increment_x_um": m.increment_x, "increment_y_um": m.increment_y,
                "x_extent_um": s.x_extent, "y_extent_um": s.y_extent,
                "masked_fraction": float(1.0 - s.valid.mean()),
                "creator": m.creator, "instrument": m.instrument}, args.out)


def cmd_crosscut(args, cfg):
    prof = crosscut(read_x3p(args.file, swap_axes=args.swap_axes), args.x)
    _emit_csv(("y_um", "value_um"), ((_num(y), _num(v)) for y, v in zip(prof.ys, prof.values)),
              args.out)


def cmd_grooves(args, cfg):
    s = read_x3p(args.file, swap_axes=args.swap_axes)
    x = _height(s, args, cfg)
    prof = crosscut(s, x)
    b = find_grooves(prof, cfg.groove_smooth)
    _emit_json({"schema_version": SCHEMA_VERSION, "x_um": prof.x_height, "s": b.s,
                **b.as_dict()}, args.out)


def cmd_signature(args, cfg):
    s = read_x3p(args.file, swap_axes=args.swap_axes)
    x = _height(s, args, cfg)
    prof = crosscut(s, x)
    if args.detrend == "circle":
        trimmed = trim_to_land(prof, find_grooves(prof, cfg.groove_smooth))
        fit = fit_circle(trimmed.ys, trimmed.values)
        log.info("circle centre (%.3f, %.3f) radius %.3f um", fit.a, fit.b, fit.r)
        sig = circle_residuals(trimmed)
    else:
        sig, _ = land_signature(s, prof.x_height, cfg)
    _emit_csv(("y_um", "residual_um"),
              ((_num(y), _num(r)) for y, r in zip(sig.ys, sig.residuals)), args.out)


def cmd_align(args, cfg):
    a = smooth_signature(load_signature(args.a, args, cfg), cfg.smooth_span)
    b = smooth_signature(load_signature(args.b, args, cfg), cfg.smooth_span)
    pair = align_pair(a, b, max_lag=cfg.max_lag, min_overlap_frac=cfg.min_overlap_frac)
    _emit_json({"schema_version": SCHEMA_VERSION, "lag": pair.lag, "ccf": pair.ccf,
                "overlap_n": pair.overlap_n}, args.out)


def cmd_striae(args, cfg):
    sig = smooth_signature(load_signature(args.file, args, cfg), cfg.smooth_span)
    ext = find_extrema(sig, cfg.striae_smooth)
    _emit_csv(("kind", "location_um", "height_um", "lo_um", "hi_um"),
              ((e.kind, _num(e.location), _num(e.height), _num(e.lo), _num(e.hi))
               for e in ext), args.out)


def cmd_compare(args, cfg):
    a = load_signature(args.a, args, cfg)
    b = load_signature(args.b, args, cfg)
    c = compare_signatures(a, b, cfg)
    fv = c.features
    prob = predict(load_model(args.model), fv) if args.model else None
    _emit_json({"schema_version": SCHEMA_VERSION, "id_a": fv.id_a, "id_b": fv.id_b,
                "lag": c.pair.lag, "overlap_n": c.pair.overlap_n,
                "features": {k: getattr(fv, k) for k in FEATURE_NAMES},
                "probability": prob}, args.out)


def cmd_train(args, cfg):
    X, y = training_arrays(read_features_csv(args.features))
    if X.shape[0] == 0:
        raise LandmatchError(f"{args.features}: no labelled rows")
    if args.tree:
        model = fit_tree(X, y, min_leaf=cfg.min_leaf)
        report = {"kind": "tree"}
    else:
        model = fit_forest(X, y, n_trees=cfg.n_trees, mtry=cfg.mtry, seed=cfg.seed,
                           jobs=args.jobs)
        report = {"kind": "forest", "n_trees": model.n_trees, "seed": model.seed,
                  "oob": model_to_dict(model)["oob"],
                  "importance": [[k, v] for k, v in importance(model)]}
    out = args.out or Path("model.json")
    save_model(model, out)
    sys.stdout.write(json.dumps({"schema_version": SCHEMA_VERSION, "model": str(out),
                                 **report}, indent=1, sort_keys=True) + "\n")


def cmd_predict(args, cfg):
    model = load_model(args.model)
    fvs = read_features_csv(args.features)
    prob = predict_array(model, feature_matrix(fvs))
    _emit_csv(("id_a", "id_b", "label", "probability", "predicted"),
              ((fv.id_a, fv.id_b, fv.label, _num(p),
                "match" if p > cfg.cutoff else "nonmatch") for fv, p in zip(fvs, prob)),
              args.out)


def cmd_study(args, cfg):
    entries = read_manifest(args.manifest)
    model = load_model(args.model) if args.model else None
    result = run_study(entries, cfg, pairs=args.pairs, model=model, jobs=args.jobs,
                       swap_axes=args.swap_axes)
    out = args.out or Path("study_out")
    write_study(result, out)
    if args.model is None:
        save_model(result.model, out / "model.json")
    s = summarize(result)
    sys.stdout.write(json.dumps({k: s[k] for k in ("n_pairs", "confusion", "bullet_errors",
                                                   "flagged_lands")},
                                indent=1, sort_keys=True) + "\n")


def cmd_synth(args, cfg):
    damaged = {land: Damage() for land in args.damage}
    entries = synth_corpus(args.barrels, args.bullets_per_barrel, seed=cfg.seed,
                           n_unknown_per_barrel=args.unknown_per_barrel,
                           cfg=ShotConfig(noise_sd=args.noise_sd), damaged=damaged)
    manifest = write_corpus(entries, args.out or Path("synth_out"))
    sys.stdout.write(f"{manifest}\n")


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    cfg = make_config(args, parser)
    try:
        HANDLERS[args.command](args, cfg)
    except (LandmatchError, OSError) as exc:
        print(f"landmatch {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
