"""Synthetic barrels and land scans with known ground truth.

The forward model is additive: a circular arc of the bullet radius, raised
shoulders on both sides of the land, the barrel's latent striation pattern
(tilted along the bullet axis and fading with height), per-shot amplitude
jitter, white noise, and optionally a band of scratch damage.  It exists to
exercise the matching pipeline, not to be metrologically realistic.
"""
from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .x3p_io import Surface, X3pMeta, write_x3p

N_LANDS = 6


def _rng(*keys) -> np.random.Generator:
    words = []
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


@dataclass(frozen=True, eq=False)
class LatentLand:
    """Sum of Gaussian bumps along y, measured from the left land edge."""

    centers: np.ndarray
    widths: np.ndarray
    amplitudes: np.ndarray

    def evaluate(self, y: np.ndarray, gains: np.ndarray | None = None) -> np.ndarray:
        amps = self.amplitudes if gains is None else self.amplitudes * gains
        out = np.zeros(np.shape(y))
        for c, w, a in zip(self.centers, self.widths, amps):
            sigma = w / 4.0
            out += a * np.exp(-0.5 * ((y - c) / sigma) ** 2)
        return out


@dataclass(frozen=True, eq=False)
class BarrelModel:
    barrel_id: str
    lands: tuple[LatentLand, ...]
    tilt_deg: float = 2.0
    land_width: float = 2000.0


def make_barrel(barrel_id: str, seed: int = 0, land_width: float = 2000.0,
                tilt_deg: float = 2.0, n_bumps: tuple[int, int] = (40, 80),
                widths: tuple[float, float] = (20.0, 200.0),
                amplitudes: tuple[float, float] = (0.2, 3.0)) -> BarrelModel:
    lands = []
    for land in range(N_LANDS):
        rng = _rng(seed, barrel_id, land, 1)
        k = int(rng.integers(n_bumps[0], n_bumps[1] + 1))
        lands.append(LatentLand(
            centers=rng.uniform(0.0, land_width, k),
            widths=rng.uniform(*widths, k),
            amplitudes=rng.uniform(*amplitudes, k) * rng.choice([-1.0, 1.0], k),
        ))
    return BarrelModel(barrel_id=barrel_id, lands=tuple(lands), tilt_deg=tilt_deg,
                       land_width=land_width)


@dataclass(frozen=True)
class Damage:
    """Scratches across the striae between heights ``x_lo`` and ``x_hi``.

    The amplitude is constant up to ``x_hi - fade`` and falls linearly to
    zero at ``x_hi``.
    """

    x_lo: float = 0.0
    x_hi: float = float("inf")
    amplitude: float = 4.0
    n_scratches: int = 15
    fade: float = 0.0


@dataclass(frozen=True)
class ShotConfig:
    noise_sd: float = 0.1
    signature_decay_rate: float = 0.2  # fraction of amplitude lost per 100 um of height
    jitter_sd: float = 0.2  # per-shot multiplicative jitter of bump amplitudes
    damage: Damage | None = None
    radius: float = 4666.0
    shoulder_width: float = 150.0
    shoulder_height: float = 40.0
    groove_margin: float = 80.0
    offset_sd: float = 15.0
    increment_x: float = 6.25
    increment_y: float = 1.5625
    scan_height: float = 375.0
    rotation: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if not 0 <= self.signature_decay_rate < 1:
            raise ValueError("signature_decay_rate must be in [0, 1)")


@dataclass(frozen=True)
class LandTruth:
    barrel_land: int  # 1-based land of the barrel
    v_left: float
    v_right: float


def land_surface(latent: LatentLand, barrel: BarrelModel, cfg: ShotConfig,
                 rng: np.random.Generator, source_id: str = "") -> tuple[Surface, LandTruth]:
    w = barrel.land_width
    margin = cfg.shoulder_width + cfg.groove_margin
    span_y = w + 2 * margin
    ny = int(round(span_y / cfg.increment_y)) + 1
    nx = int(round(cfg.scan_height / cfg.increment_x)) + 1
    y = np.arange(ny) * cfg.increment_y
    x = np.arange(nx) * cfg.increment_x

    offset = float(np.clip(rng.normal(0.0, cfg.offset_sd), -0.4 * cfg.groove_margin,
                           0.4 * cfg.groove_margin))
    v_l = margin + offset
    v_r = v_l + w
    yc = 0.5 * (v_l + v_r)

    r = cfg.radius
    arc = np.sqrt(np.maximum(r * r - (y - yc) ** 2, 0.0)) - r
    sw, a = cfg.shoulder_width, cfg.shoulder_height
    left = a * (1.0 - ((y - (v_l - sw / 2)) / (sw / 2)) ** 2)
    right = a * (1.0 - ((y - (v_r + sw / 2)) / (sw / 2)) ** 2)
    shoulders = np.where(y < v_l, np.maximum(left, -a), 0.0) + \
        np.where(y > v_r, np.maximum(right, -a), 0.0)
    base = arc + shoulders

    gains = rng.normal(1.0, cfg.jitter_sd, latent.amplitudes.size)
    shift = math.tan(math.radians(barrel.tilt_deg))
    decay = (1.0 - cfg.signature_decay_rate) ** (x / 100.0)
    heights = np.empty((nx, ny))
    for i, xi in enumerate(x):
        heights[i] = base + decay[i] * latent.evaluate(y - v_l - xi * shift, gains)
    if cfg.noise_sd > 0:
        heights += rng.normal(0.0, cfg.noise_sd, heights.shape)
    if cfg.damage is not None:
        heights += scratches(x, y, cfg.damage, rng)

    meta = X3pMeta(size_x=nx, size_y=ny, increment_x=cfg.increment_x,
                   increment_y=cfg.increment_y)
    return (Surface(meta=meta, heights=heights, source_id=source_id),
            LandTruth(barrel_land=0, v_left=v_l, v_right=v_r))


def scratches(x: np.ndarray, y: np.ndarray, dmg: Damage, rng) -> np.ndarray:
    """Slanted grooves crossing the striae, limited to a band of heights."""
    env = np.zeros_like(x)
    inside = (x >= dmg.x_lo) & (x < dmg.x_hi)
    env[inside] = 1.0
    if dmg.fade > 0 and math.isfinite(dmg.x_hi):
        ramp = (dmg.x_hi - x) / dmg.fade
        env = np.where(inside, np.minimum(env, np.clip(ramp, 0.0, 1.0)), 0.0)
    out = np.zeros((x.size, y.size))
    for _ in range(dmg.n_scratches):
        y0 = rng.uniform(y[0], y[-1])
        slope = math.tan(math.radians(rng.uniform(55.0, 80.0))) * rng.choice([-1.0, 1.0])
        depth = dmg.amplitude * rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0])
        sigma = rng.uniform(5.0, 15.0)
        centre = y0 + slope * (x - x[0])
        out += depth * np.exp(-0.5 * ((y[None, :] - centre[:, None]) / sigma) ** 2)
    return out * env[:, None]


def fire(barrel: BarrelModel, cfg: ShotConfig = ShotConfig(),
         bullet_id: str = "bullet") -> list[Surface]:
    """Six land scans of one bullet fired through ``barrel``.

    Scan ``i`` (0-based) carries barrel land ``(i + cfg.rotation) % 6``.
    Identical inputs give bit-identical surfaces.
    """
    return fire_with_truth(barrel, cfg, bullet_id)[0]


def fire_with_truth(barrel: BarrelModel, cfg: ShotConfig = ShotConfig(),
                    bullet_id: str = "bullet") -> tuple[list[Surface], list[LandTruth]]:
    surfaces, truths = [], []
    for i in range(N_LANDS):
        land = (i + cfg.rotation) % N_LANDS
        rng = _rng(cfg.seed, barrel.barrel_id, bullet_id, i, 2)
        surf, t = land_surface(barrel.lands[land], barrel, cfg, rng,
                               source_id=f"{bullet_id}-{i + 1}")
        surfaces.append(surf)
        truths.append(replace(t, barrel_land=land + 1))
    return surfaces, truths


MANIFEST_HEADER = ("path", "land_id", "bullet_id", "land", "barrel", "barrel_land", "role")


@dataclass
class CorpusEntry:
    land_id: str
    bullet_id: str
    land: int
    barrel: str
    barrel_land: int
    role: str
    surface: Surface | None = None
    path: str = ""


def synth_corpus(n_barrels: int = 4, bullets_per_barrel: int = 3, seed: int = 0,
                 n_unknown_per_barrel: int = 1, cfg: ShotConfig = ShotConfig(),
                 damaged: dict | None = None) -> list[CorpusEntry]:
    """Lands of ``n_barrels * bullets_per_barrel`` bullets with random land rotations.

    The last ``n_unknown_per_barrel`` bullets of every barrel get the role
    ``unknown``.  ``damaged`` maps land ids to a :class:`Damage`.
    """
    damaged = damaged or {}
    entries = []
    for b in range(n_barrels):
        barrel = make_barrel(f"barrel{b + 1}", seed=seed)
        for k in range(bullets_per_barrel):
            bullet_id = f"B{b + 1}-{k + 1}"
            rot = int(_rng(seed, bullet_id, 3).integers(N_LANDS))
            shot = replace(cfg, rotation=rot, seed=seed)
            role = "unknown" if k >= bullets_per_barrel - n_unknown_per_barrel else "known"
            for i in range(N_LANDS):
                land_id = f"{bullet_id}-{i + 1}"
                land_cfg = replace(shot, damage=damaged[land_id]) if land_id in damaged else shot
                rng = _rng(seed, barrel.barrel_id, bullet_id, i, 2)
                bl = (i + rot) % N_LANDS
                surf, _ = land_surface(barrel.lands[bl], barrel, land_cfg, rng,
                                       source_id=land_id)
                entries.append(CorpusEntry(land_id=land_id, bullet_id=bullet_id, land=i + 1,
                                           barrel=barrel.barrel_id, barrel_land=bl + 1,
                                           role=role, surface=surf))
    return entries


def write_corpus(entries: list[CorpusEntry], out_dir) -> Path:
    """Write every land as x3p plus ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in entries:
            name = f"{e.land_id}.x3p"
            write_x3p(e.surface, out / name)
            w.writerow([name, e.land_id, e.bullet_id, e.land, e.barrel, e.barrel_land, e.role])
    return manifest
