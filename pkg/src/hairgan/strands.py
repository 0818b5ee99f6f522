"""Strand-based hair representation, the procedural hairstyle generator, and
rigid model transforms (rotation augmentation, sagittal flip).

A hairstyle is a list of polyline strands rooted on the scalp cap of a bust
mesh.  The generator grows each strand by integrating a direction field:

    normalize( gravity * (0,-1,0) + fading scalp normal + helix + noise )

which spans limp-straight to tightly curled styles.  Constrained styles
(braids, ties) are never produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBust, InvalidInput
from .mspace import ModelSpace

# Growth step in model units; fine enough that strand segments satisfy the
# <= 2 voxel-edge bound for every grid up to the default 128^3.
GROW_STEP_FRAC = 1.0 / 128.0


@dataclass
class HairModel:
    strands: list[np.ndarray]
    style_meta: dict = field(default_factory=dict)

    def n_points(self) -> int:
        return sum(len(s) for s in self.strands)


@dataclass
class BustModel:
    vertices: np.ndarray   # (nv, 3)
    faces: np.ndarray      # (nf, 3) int
    scalp: np.ndarray      # face indices forming the scalp cap

    def __post_init__(self):
        if len(self.faces) == 0:
            raise InvalidBust("bust mesh has no faces")

    def face_normals(self) -> np.ndarray:
        v = self.vertices
        a, b, c = (v[self.faces[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(ln, 1e-30)

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        a, b, c = (v[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


# ----------------------------------------------------------- bust generation

def _uv_sphere(center, radii, n_lat=16, n_lon=24):
    """Lat-long sphere/ellipsoid with an exactly x-mirror-symmetric vertex
    set and face lattice (needed so flipped captures mirror bit-tightly)."""
    cx, cy, cz = center
    rx, ry, rz = radii
    assert n_lon % 2 == 0
    half = n_lon // 2
    # sin/cos tables built for one half and mirrored by explicit negation
    sin_t = np.zeros(n_lon)
    cos_t = np.zeros(n_lon)
    for j in range(half + 1):
        t = 2.0 * np.pi * j / n_lon
        sin_t[j] = np.sin(t)
        cos_t[j] = np.cos(t)
    # vertices on the mirror plane must have exactly zero x
    sin_t[0] = 0.0
    cos_t[0] = 1.0
    sin_t[half] = 0.0
    cos_t[half] = -1.0
    for j in range(1, half):
        sin_t[n_lon - j] = -sin_t[j]
        cos_t[n_lon - j] = cos_t[j]

    verts = [(cx, cy + ry, cz)]
    rows = []
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        sp, cp = np.sin(phi), np.cos(phi)
        row = []
        for j in range(n_lon):
            # x from sin(theta): theta -> -theta mirrors x exactly
            row.append(len(verts))
            verts.append((cx + rx * sp * sin_t[j],
                          cy + ry * cp,
                          cz + rz * sp * cos_t[j]))
        rows.append(row)
    south = len(verts)
    verts.append((cx, cy - ry, cz))

    faces = []
    top = 0
    for j in range(n_lon):
        faces.append((top, rows[0][j], rows[0][(j + 1) % n_lon]))
    for i in range(len(rows) - 1):
        r0, r1 = rows[i], rows[i + 1]
        for j in range(n_lon):
            j1 = (j + 1) % n_lon
            a, b = r0[j], r0[j1]
            c, d = r1[j1], r1[j]
            # mirror-symmetric diagonal choice
            if j < half:
                faces.append((a, b, c))
                faces.append((a, c, d))
            else:
                faces.append((a, b, d))
                faces.append((b, c, d))
    for j in range(n_lon):
        faces.append((south, rows[-1][(j + 1) % n_lon], rows[-1][j]))
    return np.array(verts), np.array(faces, dtype=np.int64)


def make_default_bust(ms: ModelSpace | None = None) -> BustModel:
    """Low-poly head + neck + shoulders fitting the default bounding box.

    Head sphere centered at (0, 0.15, 0)*H with radius 0.16*H; the scalp is
    the upper cap of the head (centroid direction y-component >= 0.35).
    """
    h = (ms.h if ms is not None else 1.0)
    head_c = np.array([0.0, 0.15, 0.0]) * h
    head_r = 0.16 * h
    hv, hf = _uv_sphere(head_c, (head_r, head_r, head_r))
    nv, nf = _uv_sphere((0.0, -0.02 * h, 0.0),
                        (0.065 * h, 0.16 * h, 0.065 * h), n_lat=8, n_lon=16)
    sv, sf = _uv_sphere((0.0, -0.30 * h, 0.0),
                        (0.30 * h, 0.14 * h, 0.12 * h), n_lat=10, n_lon=24)

    verts = np.concatenate([hv, nv, sv])
    faces = np.concatenate([hf, nf + len(hv), sf + len(hv) + len(nv)])

    cent = verts[faces].mean(axis=1)
    head_faces = np.arange(len(hf))
    updir = (cent[head_faces] - head_c) / head_r
    scalp = head_faces[updir[:, 1] >= 0.35]
    return BustModel(verts, faces, scalp)


def load_bust(path, scalp_indices=None) -> BustModel:
    """Read an OFF mesh; without explicit scalp indices the scalp is
    auto-detected as the upper cap of the topmost sphere-ish blob."""
    from .fileio import read_off
    verts, faces = read_off(path)
    if scalp_indices is None:
        cent = verts[faces].mean(axis=1)
        y_top = verts[:, 1].max()
        y_span = y_top - verts[:, 1].min()
        scalp_indices = np.nonzero(cent[:, 1] >= y_top - 0.18 * y_span)[0]
    return BustModel(verts, faces, np.asarray(scalp_indices, dtype=np.int64))


def save_bust(path, bust: BustModel) -> None:
    from .fileio import write_off
    write_off(path, bust.vertices, bust.faces)


# ----------------------------------------------------------------- sampling

def sample_on_faces(verts, faces, areas, n, rng):
    """n area-uniform samples; returns (points, face_indices, normals)."""
    cdf = np.cumsum(areas)
    if cdf[-1] <= 0:
        raise InvalidBust("selected faces have zero total area")
    cdf = cdf / cdf[-1]
    fi = np.searchsorted(cdf, rng.random(n), side="right")
    fi = np.minimum(fi, len(faces) - 1)
    a, b, c = (verts[faces[fi, i]] for i in range(3))
    r1 = np.sqrt(rng.random((n, 1)))
    r2 = rng.random((n, 1))
    pts = (1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c
    nrm = np.cross(b - a, c - a)
    nrm /= np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-30)
    return pts, fi, nrm


# ---------------------------------------------------------------- generator

@dataclass
class StyleParams:
    n_strands: int = 400
    length_mean: float = 0.45
    length_sigma: float = 0.08
    curl_radius: float = 0.0
    curl_freq: float = 0.0
    gravity: float = 1.0
    waviness: float = 0.0


def gen_hairstyle(params: StyleParams, seed: int,
                  bust: BustModel | None = None,
                  ms: ModelSpace | None = None) -> HairModel:
    """Deterministic procedural hairstyle rooted on the bust scalp."""
    if params.n_strands < 1:
        raise InvalidInput("n_strands must be >= 1")
    for name in ("length_mean", "length_sigma", "curl_radius", "curl_freq",
                 "gravity", "waviness"):
        if getattr(params, name) < 0:
            raise InvalidInput(f"{name} must be non-negative")
    ms = ms or ModelSpace()
    bust = bust or make_default_bust(ms)
    if len(bust.scalp) == 0:
        raise InvalidBust("bust has an empty scalp")

    rng = np.random.default_rng(seed)
    areas = bust.face_areas()[bust.scalp]
    roots, _, normals = sample_on_faces(
        bust.vertices, bust.faces[bust.scalp], areas, params.n_strands, rng)

    step = ms.h * GROW_STEP_FRAC
    lo, hi = ms.box_min, ms.box_max
    down = np.array([0.0, -1.0, 0.0])
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 0.0, 1.0])
    omega = 2.0 * np.pi * params.curl_freq / ms.h

    strands = []
    for i in range(params.n_strands):
        length = np.clip(rng.normal(params.length_mean, params.length_sigma),
                         0.05 * ms.h, 3.0 * ms.h)
        n_steps = max(3, int(np.ceil(length / step)))
        phase = rng.uniform(0, 2 * np.pi)
        # smooth per-strand noise: three random sinusoids per axis
        nf_ = rng.uniform(2.0, 8.0, size=(3, 3)) * 2 * np.pi / ms.h
        nph = rng.uniform(0, 2 * np.pi, size=(3, 3))
        namp = rng.uniform(0.3, 1.0, size=(3, 3))
        namp /= namp.sum(axis=0, keepdims=True)

        p = roots[i].copy()
        nrm = normals[i]
        pts = [p.copy()]
        for j in range(n_steps):
            s = j * step
            d = params.gravity * down
            blend = max(0.0, 1.0 - j / 3.0)
            d = d + blend * nrm
            if params.curl_radius > 0 and omega > 0:
                amp = params.curl_radius * omega
                d = d + amp * (np.cos(omega * s + phase) * e1
                               + np.sin(omega * s + phase) * e2)
            if params.waviness > 0:
                wob = (namp * np.sin(nf_ * s + nph)).sum(axis=0)
                d = d + params.waviness * wob
            norm = np.linalg.norm(d)
            if norm < 1e-9:
                break
            p = p + step * (d / norm)
            if (p < lo).any() or (p > hi).any():
                break
            pts.append(p.copy())
        if len(pts) >= 2:
            strands.append(np.array(pts))

    meta = {
        "seed": seed,
        "length_class": ("short" if params.length_mean < 0.3 else
                         "long" if params.length_mean > 0.55 else "medium"),
        "curliness": ("straight" if params.curl_radius == 0 else
                      "curly" if params.curl_radius > 0.02 else "wavy"),
    }
    return HairModel(strands, meta)


# --------------------------------------------------------------- transforms

def rotation_matrix(euler_deg) -> np.ndarray:
    """Rotation applying X, then Y, then Z, angles in degrees."""
    rx, ry, rz = np.deg2rad(np.asarray(euler_deg, dtype=np.float64))
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def rotate_points(pts, euler_deg, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    r = rotation_matrix(euler_deg)
    c = np.asarray(center, dtype=np.float64)
    return (np.asarray(pts, dtype=np.float64) - c) @ r.T + c


def rotate_model(m: HairModel, euler_deg,
                 center=(0.0, 0.0, 0.0)) -> HairModel:
    """Rigid rotation of every strand about the box center (X, then Y,
    then Z)."""
    return HairModel([rotate_points(s, euler_deg, center) for s in m.strands],
                     dict(m.style_meta))


def rotate_bust(bust: BustModel, euler_deg,
                center=(0.0, 0.0, 0.0)) -> BustModel:
    return BustModel(rotate_points(bust.vertices, euler_deg, center),
                     bust.faces.copy(), bust.scalp.copy())


def flip_model(m: HairModel, cx: float = 0.0) -> HairModel:
    """Mirror across the bust's sagittal plane x = cx; strand order kept."""
    out = []
    for s in m.strands:
        t = s.copy()
        t[:, 0] = 2.0 * cx - t[:, 0]
        out.append(t)
    return HairModel(out, dict(m.style_meta))


# --------------------------------------------------------------- resampling

def resample_strand(points: np.ndarray, max_seg: float) -> np.ndarray:
    """Split segments longer than max_seg; drops exact duplicate points."""
    pts = [points[0]]
    for q in points[1:]:
        p = pts[-1]
        d = np.linalg.norm(q - p)
        if d == 0.0:
            continue
        n = int(np.ceil(d / max_seg))
        for t in range(1, n + 1):
            pts.append(p + (q - p) * (t / n))
    return np.array(pts)


def resample_model(m: HairModel, ms: ModelSpace) -> HairModel:
    max_seg = 2.0 * ms.voxel_edge
    out = []
    for s in m.strands:
        r = resample_strand(s, max_seg)
        if len(r) >= 2:
            out.append(r)
    return HairModel(out, dict(m.style_meta))
