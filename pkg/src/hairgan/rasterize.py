"""Ground-truth volumes and 2D captures from a hair model.

strands_to_volume walks every strand segment through the voxel grid (3D DDA)
and accumulates length-weighted unit tangents; hair_mask / render_strands /
bust_depth_map produce the raw image-plane captures; make_training_pairs
drives the full per-rotation pipeline that assembles network inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import InvalidBust
from .mspace import ModelSpace, encode_dir, project_to_image
from .strands import BustModel, HairModel, resample_model, rotate_bust, rotate_model

# Rotation augmentation ranges, degrees, per axis.
ROT_RANGES = ((-15.0, 15.0), (-30.0, 30.0), (-20.0, 20.0))


@dataclass
class Map2D:
    ms: ModelSpace
    data: np.ndarray  # (h, w) or (h, w, c), values in [0, 1]
    name: str = ""


@dataclass
class OrientVolume:
    ms: ModelSpace
    rgb: np.ndarray  # (nx, ny, nz, 3), color-encoded directions

    def decoded(self) -> np.ndarray:
        return 2.0 * self.rgb - 1.0

    def occupancy(self) -> np.ndarray:
        d = self.decoded()
        return np.clip(np.sqrt((d * d).sum(axis=-1)), 0.0, 1.0)


class TrainingPair(NamedTuple):
    x: "object"          # orient2d.InputMaps
    y: OrientVolume
    euler: tuple
    iters: int
    render_seed: int


# ------------------------------------------------------------- voxelization

def _segments(m: HairModel):
    """All strand segments as (p0, p1) arrays, concatenated in strand order."""
    p0, p1 = [], []
    for s in m.strands:
        if len(s) >= 2:
            p0.append(s[:-1])
            p1.append(s[1:])
    if not p0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.concatenate(p0), np.concatenate(p1)


def strands_to_volume(m: HairModel, ms: ModelSpace) -> OrientVolume:
    """Length-weighted tangent accumulation per traversed voxel.

    Growth direction is authoritative: tangents are summed as-is, never
    sign-flipped.  Untouched voxels keep the empty code.
    """
    nx, ny, nz = ms.vol_res
    p0w, p1w = _segments(m)
    acc = np.zeros((nx * ny * nz, 3))
    if len(p0w):
        edge = ms.voxel_edge
        a = (p0w - ms.box_min) / edge   # continuous voxel coords
        b = (p1w - ms.box_min) / edge
        d = b - a
        seg_world = p1w - p0w
        seg_len = np.linalg.norm(seg_world, axis=1)
        keep = seg_len > 0
        a, d, seg_world, seg_len = a[keep], d[keep], seg_world[keep], seg_len[keep]
        tangents = seg_world / seg_len[:, None]

        n = len(a)
        # Segments are <= 2 voxel edges long, so each axis contributes at
        # most two integer-plane crossings; 8 sorted t values cover all
        # sub-intervals.
        ts = np.ones((n, 8))
        ts[:, 0] = 0.0
        for ax in range(3):
            da = d[:, ax]
            pa = a[:, ax]
            with np.errstate(divide="ignore", invalid="ignore"):
                first = np.where(da > 0, np.floor(pa) + 1.0,
                                 np.ceil(pa) - 1.0)
                stepd = np.where(da > 0, 1.0, -1.0)
                t1 = (first - pa) / da
                t2 = (first + stepd - pa) / da
            t1 = np.where(np.isfinite(t1), t1, 1.0)
            t2 = np.where(np.isfinite(t2), t2, 1.0)
            ts[:, 2 + 2 * ax] = np.clip(t1, 0.0, 1.0)
            ts[:, 3 + 2 * ax] = np.clip(t2, 0.0, 1.0)
        ts.sort(axis=1)

        res = np.array([nx, ny, nz])
        for i in range(7):
            lo, hi = ts[:, i], ts[:, i + 1]
            w = (hi - lo) * seg_len
            sel = w > 0
            if not sel.any():
                continue
            tm = 0.5 * (lo[sel] + hi[sel])
            pm = a[sel] + tm[:, None] * d[sel]
            # points outside the box do not rasterize; the max face itself
            # is closed (belongs to the last cell)
            inside = ((pm >= 0.0) & (pm <= res)).all(axis=1)
            if not inside.any():
                continue
            idx = np.floor(pm[inside]).astype(np.int64)
            np.minimum(idx, res - 1, out=idx)
            flat = (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]
            np.add.at(acc, flat, w[sel][inside, None] * tangents[sel][inside])

    norms = np.linalg.norm(acc, axis=1)
    hit = norms > 0
    dirs = np.zeros_like(acc)
    dirs[hit] = acc[hit] / norms[hit, None]
    rgb = encode_dir(dirs.reshape(nx, ny, nz, 3))
    return OrientVolume(ms, rgb)


def mirror_volume_x(vol: OrientVolume) -> OrientVolume:
    """Reference mirror: reverse the x axis and negate decoded x."""
    rgb = vol.rgb[::-1].copy()
    rgb[..., 0] = 1.0 - rgb[..., 0]
    return OrientVolume(vol.ms, rgb)


# --------------------------------------------------------- image-plane rasters

def _seg_pixels(img_shape, u0, v0, u1, v1, reach):
    """Pixel window and distances from pixel centers to one segment."""
    h, w = img_shape
    lo_u = max(int(np.floor(min(u0, u1) - reach)), 0)
    hi_u = min(int(np.ceil(max(u0, u1) + reach)) + 1, w)
    lo_v = max(int(np.floor(min(v0, v1) - reach)), 0)
    hi_v = min(int(np.ceil(max(v0, v1) + reach)) + 1, h)
    if lo_u >= hi_u or lo_v >= hi_v:
        return None
    us = np.arange(lo_u, hi_u) + 0.5
    vs = np.arange(lo_v, hi_v) + 0.5
    pu, pv = np.meshgrid(us, vs)
    du, dv = u1 - u0, v1 - v0
    ll = du * du + dv * dv
    if ll > 0:
        t = np.clip(((pu - u0) * du + (pv - v0) * dv) / ll, 0.0, 1.0)
    else:
        t = 0.0
    dist = np.hypot(pu - (u0 + t * du), pv - (v0 + t * dv))
    return (slice(lo_v, hi_v), slice(lo_u, hi_u)), dist


def hair_mask(m: HairModel, ms: ModelSpace) -> Map2D:
    """Binary strand-coverage mask, sealed with a radius-2 closing."""
    res = ms.img_res
    mask = np.zeros((res, res), dtype=bool)
    for s in m.strands:
        uv = project_to_image(s, ms)
        for i in range(len(s) - 1):
            hit = _seg_pixels((res, res), uv[i, 0], uv[i, 1],
                              uv[i + 1, 0], uv[i + 1, 1], 1.0)
            if hit is None:
                continue
            window, dist = hit
            mask[window] |= dist <= 0.75
    if mask.any():
        yy, xx = np.mgrid[-2:3, -2:3]
        disk = (yy * yy + xx * xx) <= 4
        mask = ndimage.binary_closing(mask, structure=disk)
    return Map2D(ms, mask.astype(np.float64), "mask")


def render_strands(m: HairModel, ms: ModelSpace, seed: int = 0) -> Map2D:
    """Stylized stroke raster over a 0.15 gray background.

    Anti-aliased 1-px strokes, per-strand intensity in [0.6, 1.0] drawn from
    the seed, painted far-to-near so close hair wins.  The output only feeds
    orientation estimation, so no shading model is attempted.
    """
    res = ms.img_res
    img = np.full((res, res), 0.15)
    if not m.strands:
        return Map2D(ms, img, "render")
    rng = np.random.default_rng(seed)
    tones = 0.6 + 0.4 * rng.random(len(m.strands))
    mean_z = np.array([s[:, 2].mean() for s in m.strands])
    order = np.argsort(mean_z, kind="stable")  # far (-z) first
    for si in order:
        s = m.strands[si]
        uv = project_to_image(s, ms)
        tone = tones[si]
        for i in range(len(s) - 1):
            hit = _seg_pixels((res, res), uv[i, 0], uv[i, 1],
                              uv[i + 1, 0], uv[i + 1, 1], 1.0)
            if hit is None:
                continue
            window, dist = hit
            alpha = np.clip(1.0 - dist, 0.0, 1.0)
            img[window] = img[window] * (1.0 - alpha) + tone * alpha
    return Map2D(ms, img, "render")


def tangent_hint_map(m: HairModel, ms: ModelSpace) -> np.ndarray:
    """(h, w, 2) projected strand growth directions at covered pixels.

    Used to disambiguate estimated orientations for synthetic data; zero
    where no strand projects.
    """
    res = ms.img_res
    acc = np.zeros((res * res, 2))
    p0, p1 = _segments(m)
    if len(p0):
        mid = 0.5 * (p0 + p1)
        uv = project_to_image(mid, ms)
        col = np.floor(uv[:, 0]).astype(np.int64)
        row = np.floor(uv[:, 1]).astype(np.int64)
        ok = (col >= 0) & (col < res) & (row >= 0) & (row < res)
        t2 = (p1 - p0)[:, :2]
        ln = np.linalg.norm(t2, axis=1)
        ok &= ln > 1e-12
        t2 = t2[ok] / ln[ok, None]
        np.add.at(acc, row[ok] * res + col[ok], t2)
    norms = np.linalg.norm(acc, axis=1)
    nz = norms > 0
    acc[nz] /= norms[nz, None]
    return acc.reshape(res, res, 2)


def bust_depth_map(bust: BustModel, ms: ModelSpace) -> Map2D:
    """Orthographic z-buffer depth, normalized by the box depth.

    depth = (distance from the box front face to the first hit) / Dz,
    clipped to [0, 1]; rays that miss the bust read 1.0.
    """
    if len(bust.faces) == 0:
        raise InvalidBust("bust mesh has no faces")
    res = ms.img_res
    zbuf = np.full((res, res), -np.inf)
    uv = project_to_image(bust.vertices, ms)
    zs = bust.vertices[:, 2]
    for f in bust.faces:
        (u0, v0), (u1, v1), (u2, v2) = uv[f]
        z0, z1, z2 = zs[f]
        area = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if area == 0.0:
            continue
        lo_u = max(int(np.floor(min(u0, u1, u2))), 0)
        hi_u = min(int(np.ceil(max(u0, u1, u2))) + 1, res)
        lo_v = max(int(np.floor(min(v0, v1, v2))), 0)
        hi_v = min(int(np.ceil(max(v0, v1, v2))) + 1, res)
        if lo_u >= hi_u or lo_v >= hi_v:
            continue
        pu = np.arange(lo_u, hi_u) + 0.5
        pv = np.arange(lo_v, hi_v) + 0.5
        gu, gv = np.meshgrid(pu, pv)
        w0 = ((u1 - u0) * (gv - v0) - (gu - u0) * (v1 - v0)) / area
        w1 = ((gu - u0) * (v2 - v0) - (u2 - u0) * (gv - v0)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        z = w2 * z0 + w1 * z1 + w0 * z2
        window = zbuf[lo_v:hi_v, lo_u:hi_u]
        np.maximum(window, np.where(inside, z, -np.inf), out=window)
    depth = np.where(np.isfinite(zbuf),
                     np.clip((ms.dz / 2.0 - zbuf) / ms.dz, 0.0, 1.0), 1.0)
    return Map2D(ms, depth, "depth")


# ------------------------------------------------------------- pair builder

def build_pair(m: HairModel, bust: BustModel, ms: ModelSpace, euler,
               iters: int, render_seed: int) -> TrainingPair:
    """One (X, Y) pair for a fixed rotation; deterministic."""
    from . import orient2d

    mr = rotate_model(m, euler)
    mr = resample_model(mr, ms)
    br = rotate_bust(bust, euler)

    vol = strands_to_volume(mr, ms)
    img = render_strands(mr, ms, seed=render_seed)
    mask = hair_mask(mr, ms)
    field = orient2d.estimate_orientation(img.data, mask.data, iters)
    hint = tangent_hint_map(mr, ms)
    field = orient2d.disambiguate(field, hint)
    field = orient2d.diffuse_orientation(field, mask.data)
    depth = bust_depth_map(br, ms)
    x = orient2d.assemble_input(field, depth.data, ms)
    return TrainingPair(x, vol, tuple(euler), iters, render_seed)


def make_training_pairs(m: HairModel, bust: BustModel, ms: ModelSpace,
                        n_rot: int, seed: int) -> list[TrainingPair]:
    """n_rot independent random rotations in the augmentation ranges."""
    if n_rot < 1:
        raise ValueError("n_rot must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_rot):
        euler = tuple(rng.uniform(lo, hi) for lo, hi in ROT_RANGES)
        iters = int(rng.integers(3, 6))
        render_seed = int(rng.integers(0, 2**31 - 1))
        pairs.append(build_pair(m, bust, ms, euler, iters, render_seed))
    return pairs
