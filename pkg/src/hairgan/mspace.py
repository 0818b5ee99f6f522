"""Unified model space: bounding box, voxel grid, orthographic camera, and
the color encoding of direction vectors.

The box is axis-aligned and centered on the origin, W x H x Dz with W == H.
The camera sits on the +z side looking along -z; the image plane is centered
on the box center and pixels scale as img_res / H.  Voxel (0,0,0) is the box
corner with minimal coordinates; cells are half-open [lo, hi) except that the
maximal face of the box is closed.

Everything here is a pure function of immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

EMPTY_CODE = np.array([0.5, 0.5, 0.5])

# Index returned by world_to_voxel for points outside the box.
OUTSIDE = (-1, -1, -1)


@dataclass(frozen=True)
class ModelSpace:
    h: float = 1.0
    dz: float = 0.75
    vol_res: tuple[int, int, int] = (128, 128, 96)
    img_res: int = 1024

    def __post_init__(self):
        nx, ny, nz = self.vol_res
        if nx != ny:
            raise InvalidInput("vol_res must have nx == ny")
        if abs(nz / nx - self.dz / self.h) > 1e-12:
            raise InvalidInput("voxels must be cubic: nz/nx must equal dz/h")
        if self.img_res % nx != 0:
            raise InvalidInput("img_res must be an integer multiple of nx")

    @property
    def scale(self) -> float:
        """Pixels per model unit."""
        return self.img_res / self.h

    @property
    def voxel_edge(self) -> float:
        return self.h / self.vol_res[0]

    @property
    def box_min(self) -> np.ndarray:
        return np.array([-self.h / 2, -self.h / 2, -self.dz / 2])

    @property
    def box_max(self) -> np.ndarray:
        return np.array([self.h / 2, self.h / 2, self.dz / 2])

    def scaled(self, k: int) -> "ModelSpace":
        """Model space with voxel and image resolutions divided by k."""
        nx, ny, nz = self.vol_res
        if nx % k or ny % k or nz % k or self.img_res % k:
            raise InvalidInput(f"resolutions not divisible by k={k}")
        return ModelSpace(self.h, self.dz, (nx // k, ny // k, nz // k),
                          self.img_res // k)


def encode_dir(d) -> np.ndarray:
    """Map a unit direction (or the zero vector) to RGB in [0,1]^3.

    c = (d + 1) / 2; the zero vector maps to the empty code (0.5, 0.5, 0.5).
    Works on a single 3-vector or an (..., 3) array.
    """
    d = np.asarray(d, dtype=np.float64)
    if not np.isfinite(d).all():
        raise InvalidInput("direction has non-finite components")
    return (d + 1.0) / 2.0


def decode_dir(c) -> np.ndarray:
    """Inverse of encode_dir: d = 2c - 1.  Components must lie in [0,1]."""
    c = np.asarray(c, dtype=np.float64)
    if not np.isfinite(c).all() or c.min() < 0.0 or c.max() > 1.0:
        raise InvalidInput("color components must be finite and in [0,1]")
    return 2.0 * c - 1.0


# Occupancy threshold on |decode_dir(c)|: ground truth stores unit or zero
# vectors, so the margin midpoint separates the two.
TAU_OCC = 0.5


def world_to_voxel(p, ms: ModelSpace):
    """Voxel index containing point p, or OUTSIDE.

    Cells are half-open along each axis; points exactly on the maximal box
    face fall into the last cell.
    """
    p = np.asarray(p, dtype=np.float64)
    lo, hi = ms.box_min, ms.box_max
    if (p < lo).any() or (p > hi).any():
        return OUTSIDE
    n = np.asarray(ms.vol_res)
    idx = np.floor((p - lo) / ms.voxel_edge).astype(int)
    idx = np.minimum(idx, n - 1)  # close the max face
    return (int(idx[0]), int(idx[1]), int(idx[2]))


def world_to_voxel_f(p, ms: ModelSpace) -> np.ndarray:
    """Continuous voxel coordinates (voxel centers at integer + 0.5)."""
    p = np.asarray(p, dtype=np.float64)
    return (p - ms.box_min) / ms.voxel_edge


def voxel_center(idx, ms: ModelSpace) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.float64)
    return ms.box_min + (idx + 0.5) * ms.voxel_edge


def project_to_image(p, ms: ModelSpace) -> np.ndarray:
    """Orthographic projection to continuous pixel coordinates (u, v).

    u grows with +x, v grows with -y (image rows run downward); the box
    center lands on the image center.  Works on (..., 3) arrays.
    """
    p = np.asarray(p, dtype=np.float64)
    c = ms.img_res / 2.0
    u = c + ms.scale * p[..., 0]
    v = c - ms.scale * p[..., 1]
    return np.stack([u, v], axis=-1)


def pixel_to_world_xy(uv, ms: ModelSpace) -> np.ndarray:
    """Inverse of project_to_image for the planar components."""
    uv = np.asarray(uv, dtype=np.float64)
    c = ms.img_res / 2.0
    x = (uv[..., 0] - c) / ms.scale
    y = (c - uv[..., 1]) / ms.scale
    return np.stack([x, y], axis=-1)
