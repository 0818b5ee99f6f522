"""From a predicted orientation volume to a strand-level hair model.

Stages: occupancy extraction, iso-surface ("rough shape") via marching
cubes, Taubin mesh smoothing, tangent-plane cleanup of the near-surface
orientation field, optional image-guided refinement, scalp-seeded strand
tracing (midpoint rule), and in-image-plane strand deformation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .errors import EmptyShape, InvalidInput, NoSeeds
from .mspace import TAU_OCC, ModelSpace, encode_dir, project_to_image
from .orient2d import OrientationField2D
from .rasterize import OrientVolume
from .strands import BustModel, HairModel, sample_on_faces


@dataclass
class SynthParams:
    iso: float = 0.5
    smooth_iters: int = 20
    step_h: float = 0.5           # trace step, in voxel edges
    max_strand_len: float = 1.5   # model units
    seed_count: int = 600
    deform_weight: float = 0.5

    def __post_init__(self):
        if self.step_h <= 0:
            raise InvalidInput("trace step must be positive")
        if not 0.0 < self.iso < 1.0:
            raise InvalidInput("iso level must lie in (0, 1)")


@dataclass
class RoughShape:
    vertices: np.ndarray
    faces: np.ndarray
    occ: np.ndarray            # the field the surface was extracted from
    iso: float
    ms: ModelSpace

    def contains(self, pts) -> np.ndarray:
        """Inside test: trilinear occupancy lookup >= iso."""
        return trilinear(self.occ, pts, self.ms) >= self.iso

    def area(self) -> float:
        return float(_face_areas(self.vertices, self.faces).sum())

    def euler_characteristic(self) -> int:
        edges = set()
        for a, b, c in self.faces:
            edges.add((min(a, b), max(a, b)))
            edges.add((min(b, c), max(b, c)))
            edges.add((min(a, c), max(a, c)))
        return int(len(self.vertices) - len(edges) + len(self.faces))

    def volume(self) -> float:
        v = self.vertices
        a, b, c = v[self.faces[:, 0]], v[self.faces[:, 1]], v[self.faces[:, 2]]
        return float(np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)).sum()) / 6.0)


def _face_areas(verts, faces):
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


# ------------------------------------------------------------------- fields

def occupancy_field(vol: OrientVolume) -> np.ndarray:
    """Per-voxel occupancy: clamped magnitude of the decoded direction."""
    return vol.occupancy()


def trilinear(grid: np.ndarray, pts, ms: ModelSpace) -> np.ndarray:
    """Trilinear interpolation of a voxel-center grid at world points.

    Works for scalar grids (nx,ny,nz) and vector grids (nx,ny,nz,c);
    samples outside the box clamp to the boundary voxels.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    f = (pts - ms.box_min) / ms.voxel_edge - 0.5
    res = np.array(grid.shape[:3])
    f = np.clip(f, 0.0, res - 1.000001)
    i0 = np.floor(f).astype(np.int64)
    i0 = np.minimum(i0, res - 2)
    t = f - i0
    out = 0.0
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        for dy in (0, 1):
            wy = t[:, 1] if dy else 1.0 - t[:, 1]
            for dz in (0, 1):
                wz = t[:, 2] if dz else 1.0 - t[:, 2]
                w = wx * wy * wz
                g = grid[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
                out = out + (w[:, None] * g if g.ndim > 1 else w * g)
    return out


def _grid_normals(occ: np.ndarray) -> np.ndarray:
    """Outward normals from the occupancy gradient (occ falls outward)."""
    g = np.stack(np.gradient(occ), axis=-1)
    n = -g
    ln = np.linalg.norm(n, axis=-1, keepdims=True)
    return n / np.maximum(ln, 1e-12)


# -------------------------------------------------------------- iso-surface

def extract_surface(occ: np.ndarray, ms: ModelSpace,
                    iso: float = 0.5) -> RoughShape:
    """Marching cubes over the occupancy, zero-padded so hair touching the
    box still closes; connected components below 1% of the total surface
    area are dropped."""
    if not 0.0 < iso < 1.0:
        raise InvalidInput("iso level must lie in (0, 1)")
    if occ.max() <= iso:
        raise EmptyShape("occupancy never reaches the iso level")
    padded = np.pad(occ, 1, mode="constant")
    verts, faces, _, _ = measure.marching_cubes(padded, level=iso)
    if len(faces) == 0:
        raise EmptyShape("no surface produced")
    # padded index -> world: voxel centers sit at index + 0.5 (pre-pad)
    world = ms.box_min + (verts - 1.0 + 0.5) * ms.voxel_edge
    faces = faces.astype(np.int64)

    # connected components by shared vertices
    parent = np.arange(len(world))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b, c in faces:
        ra, rb, rc = find(a), find(b), find(c)
        parent[rb] = ra
        parent[rc] = ra
    comp = np.array([find(i) for i in range(len(world))])
    areas = _face_areas(world, faces)
    fcomp = comp[faces[:, 0]]
    total = areas.sum()
    keep_faces = np.ones(len(faces), dtype=bool)
    for cid in np.unique(fcomp):
        sel = fcomp == cid
        if areas[sel].sum() < 0.01 * total:
            keep_faces[sel] = False
    faces = faces[keep_faces]
    used = np.unique(faces)
    remap = -np.ones(len(world), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return RoughShape(world[used], remap[faces], occ, iso, ms)


def smooth_mesh(shape: RoughShape, iters: int = 20, lam: float = 0.5,
                mu: float = -0.53) -> RoughShape:
    """Taubin smoothing: a shrink step then an inflate step per iteration,
    so the enclosed volume stays put while surface noise goes away."""
    if iters == 0:
        return shape
    v = shape.vertices.copy()
    n = len(v)
    neigh: list = [[] for _ in range(n)]
    for a, b, c in shape.faces:
        neigh[a] += [b, c]
        neigh[b] += [a, c]
        neigh[c] += [a, b]
    idx = [np.unique(ns) if len(ns) else np.array([i])
           for i, ns in enumerate(neigh)]
    counts = np.array([len(i) for i in idx])
    flat = np.concatenate(idx)
    starts = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])

    def laplace(verts):
        sums = np.add.reduceat(verts[flat], starts[:-1])
        return sums / counts[:, None] - verts

    for _ in range(iters):
        v = v + lam * laplace(v)
        v = v + mu * laplace(v)
    return RoughShape(v, shape.faces, shape.occ, shape.iso, shape.ms)


# ---------------------------------------------------------- field smoothing

def smooth_field(vol: OrientVolume, shape: RoughShape) -> OrientVolume:
    """Project near-surface directions onto the surface tangent plane, then
    run one 3^3 direction-averaging pass over the occupied voxels."""
    ms = vol.ms
    occ = vol.occupancy()
    occupied = occ >= TAU_OCC
    dirs = vol.decoded()

    nx, ny, nz = ms.vol_res
    centers = _voxel_centers(ms)
    tree = cKDTree(shape.vertices)
    dist, _ = tree.query(centers.reshape(-1, 3))
    band = (dist.reshape(nx, ny, nz) <= 2.0 * ms.voxel_edge) & occupied

    normals = _grid_normals(occ)
    if band.any():
        d = dirs[band]
        nrm = normals[band]
        proj = d - (d * nrm).sum(axis=1, keepdims=True) * nrm
        ln = np.linalg.norm(proj, axis=1, keepdims=True)
        ok = ln[:, 0] > 1e-6
        d[ok] = proj[ok] / ln[ok]
        dirs[band] = d

    summed = np.zeros_like(dirs)
    dmask = dirs * occupied[:, :, :, None]
    for sx in (-1, 0, 1):
        for sy in (-1, 0, 1):
            for sz in (-1, 0, 1):
                summed += _shift3(dmask, sx, sy, sz)
    ln = np.linalg.norm(summed, axis=-1, keepdims=True)
    ok = occupied & (ln[:, :, :, 0] > 1e-9)
    out = dirs.copy()
    out[ok] = summed[ok] / ln[ok]
    out[~occupied] = 0.0
    return OrientVolume(ms, encode_dir(out))


def _voxel_centers(ms: ModelSpace) -> np.ndarray:
    nx, ny, nz = ms.vol_res
    ax = [ms.box_min[i] + (np.arange(n) + 0.5) * ms.voxel_edge
          for i, n in enumerate((nx, ny, nz))]
    gx, gy, gz = np.meshgrid(*ax, indexing="ij")
    return np.stack([gx, gy, gz], axis=-1)


def _shift3(a, sx, sy, sz):
    out = np.zeros_like(a)
    src = [slice(max(0, -s), a.shape[i] - max(0, s))
           for i, s in enumerate((sx, sy, sz))]
    dst = [slice(max(0, s), a.shape[i] - max(0, -s))
           for i, s in enumerate((sx, sy, sz))]
    out[tuple(dst)] = a[tuple(src)]
    return out


def warp_image_orientation(field: OrientationField2D, shape: RoughShape,
                           vol: OrientVolume) -> OrientVolume:
    """Blend image-space directions into front-facing surface voxels.

    The 2D directed vector is lifted into the surface tangent plane (the
    unique tangent direction that projects back onto it) and mixed in with
    the image confidence as weight.
    """
    ms = vol.ms
    occ = vol.occupancy()
    occupied = occ >= TAU_OCC
    dirs = vol.decoded()
    normals = _grid_normals(occ)

    nx, ny, nz = ms.vol_res
    centers = _voxel_centers(ms)
    tree = cKDTree(shape.vertices)
    dist, _ = tree.query(centers.reshape(-1, 3))
    near = (dist.reshape(nx, ny, nz) <= 1.5 * ms.voxel_edge) & occupied
    front = near & (normals[:, :, :, 2] > 1e-6)
    if not front.any():
        return OrientVolume(ms, vol.rgb.copy())

    pts = centers[front]
    uv = project_to_image(pts, ms)
    col = np.clip(np.floor(uv[:, 0]).astype(int), 0, ms.img_res - 1)
    row = np.clip(np.floor(uv[:, 1]).astype(int), 0, ms.img_res - 1)
    conf = field.conf[row, col] * field.mask[row, col]
    d2 = field.directed[row, col]
    ok = (conf > 0) & (np.linalg.norm(d2, axis=1) > 1e-9)

    n = normals[front]
    lift = np.zeros_like(pts)
    lift[:, 0] = d2[:, 0]
    lift[:, 1] = d2[:, 1]
    lift[:, 2] = -(d2[:, 0] * n[:, 0] + d2[:, 1] * n[:, 1]) / \
        np.maximum(n[:, 2], 1e-6)
    ln = np.linalg.norm(lift, axis=1, keepdims=True)
    lift = lift / np.maximum(ln, 1e-12)

    old = dirs[front]
    w = (conf * ok)[:, None]
    blend = (1.0 - w) * old + w * lift
    bl = np.linalg.norm(blend, axis=1, keepdims=True)
    blend = np.where(bl > 1e-9, blend / np.maximum(bl, 1e-12), old)
    dirs[front] = blend
    dirs[~occupied] = 0.0
    return OrientVolume(ms, encode_dir(dirs))


# ------------------------------------------------------------------ tracing

def trace_strands(vol: OrientVolume, shape: RoughShape, bust: BustModel,
                  p: SynthParams, seed: int = 0) -> HairModel:
    """Grow strands from scalp seeds inside the rough shape.

    The first steps blend the scalp normal into the field (over 5 steps);
    integration is the midpoint rule on the trilinearly interpolated decoded
    direction; strands stop outside the shape, on weak occupancy, or at the
    length cap.  Strands shorter than 5 points are dropped.
    """
    ms = vol.ms
    rng = np.random.default_rng(seed)
    areas = bust.face_areas()[bust.scalp]
    roots, _, normals = sample_on_faces(
        bust.vertices, bust.faces[bust.scalp], areas, p.seed_count, rng)
    inside = shape.contains(roots)
    if not inside.any():
        raise NoSeeds("no scalp sample lies inside the rough shape")
    roots, normals = roots[inside], normals[inside]

    dirs = vol.decoded()
    h = p.step_h * ms.voxel_edge
    max_steps = max(5, int(np.ceil(p.max_strand_len / h)))

    def sample_dir(pt):
        d = trilinear(dirs, pt[None, :], ms)[0]
        m = np.linalg.norm(d)
        if m < TAU_OCC:
            return None
        return d / m

    strands = []
    for r_, n_ in zip(roots, normals):
        pt = r_.copy()
        pts = [pt.copy()]
        for step in range(max_steps):
            blend = max(0.0, 1.0 - step / 5.0)

            def direction(q):
                d = sample_dir(q)
                if d is None:
                    return None
                if blend > 0.0:
                    d = (1.0 - blend) * d + blend * n_
                    m = np.linalg.norm(d)
                    if m < 1e-9:
                        return None
                    d = d / m
                return d

            d1 = direction(pt)
            if d1 is None:
                break
            mid = pt + 0.5 * h * d1
            d2 = direction(mid)
            if d2 is None:
                break
            nxt = pt + h * d2
            if not shape.contains(nxt[None, :])[0]:
                break
            pt = nxt
            pts.append(pt.copy())
        if len(pts) >= 5:
            strands.append(np.array(pts))
    return HairModel(strands, {"traced": True, "seed": seed})


# --------------------------------------------------------------- deformation

def deform_strands(m: HairModel, field: OrientationField2D, ms: ModelSpace,
                   weight: float) -> HairModel:
    """Rotate segments in the image plane toward the 2D directed field.

    Per vertex the correction is weight * angular error, capped at 10
    degrees; segment lengths and roots are preserved exactly and z stays
    untouched.
    """
    if weight == 0.0:
        return HairModel([s.copy() for s in m.strands], dict(m.style_meta))
    cap = np.deg2rad(10.0)
    res = ms.img_res
    out = []
    for s in m.strands:
        segs = np.diff(s, axis=0)
        new = [s[0].copy()]
        for i, seg in enumerate(segs):
            base = new[-1]
            cand = base + seg
            uv = project_to_image(cand, ms)
            col, row = int(np.floor(uv[0])), int(np.floor(uv[1]))
            seg2 = seg.copy()
            if 0 <= row < res and 0 <= col < res \
                    and field.mask[row, col] and field.conf[row, col] >= 0.4:
                d2 = field.directed[row, col]
                sx, sy = seg[0], seg[1]
                norm_xy = np.hypot(sx, sy)
                if norm_xy > 1e-12 and np.linalg.norm(d2) > 1e-9:
                    err = np.arctan2(sx * d2[1] - sy * d2[0],
                                     sx * d2[0] + sy * d2[1])
                    rot = np.clip(weight * err, -cap, cap)
                    cr, sr = np.cos(rot), np.sin(rot)
                    seg2[0] = cr * sx - sr * sy
                    seg2[1] = sr * sx + cr * sy
            new.append(base + seg2)
        out.append(np.array(new))
    return HairModel(out, dict(m.style_meta))
