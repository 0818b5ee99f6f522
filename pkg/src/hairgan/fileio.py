"""Binary and text file formats used across the pipeline.

All multi-byte integers and floats are little-endian.

.strands   "HGSTR1\\0"  u32 count, then per strand: u32 npts, npts x 3 f32
.vol3d     "HGVOL1\\0"  u32 nx,ny,nz, then nx*ny*nz x 3 f32, x-fastest
.map2d     "HGMAP1\\0"  u32 w,h,c, then row-major f32
checkpoint "HGCKPT1\\0" u32 tensor count, per tensor: u16 name length +
           name bytes, u8 rank, rank x u32 extents, f64 data

Bust meshes use ASCII OFF.  PPM/PGM exports are 8-bit binary (P6/P5).
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError

STRANDS_MAGIC = b"HGSTR1\x00"
VOL3D_MAGIC = b"HGVOL1\x00"
MAP2D_MAGIC = b"HGMAP1\x00"
CKPT_MAGIC = b"HGCKPT1\x00"


def _expect_magic(f, magic, path):
    got = f.read(len(magic))
    if got != magic:
        raise DataError(f"{path}: bad magic {got!r}, expected {magic!r}")


def _read_exact(f, n, path):
    buf = f.read(n)
    if len(buf) != n:
        raise DataError(f"{path}: truncated file")
    return buf


# ------------------------------------------------------------------ strands

def write_strands(path, strands) -> None:
    """strands: iterable of (n, 3) float arrays, root first."""
    strands = [np.asarray(s, dtype="<f4") for s in strands]
    with open(path, "wb") as f:
        f.write(STRANDS_MAGIC)
        f.write(struct.pack("<I", len(strands)))
        for s in strands:
            if s.ndim != 2 or s.shape[1] != 3:
                raise DataError("each strand must be an (n, 3) array")
            f.write(struct.pack("<I", s.shape[0]))
            f.write(np.ascontiguousarray(s).tobytes())


def read_strands(path) -> list[np.ndarray]:
    with open(path, "rb") as f:
        _expect_magic(f, STRANDS_MAGIC, path)
        (count,) = struct.unpack("<I", _read_exact(f, 4, path))
        out = []
        for _ in range(count):
            (npts,) = struct.unpack("<I", _read_exact(f, 4, path))
            buf = _read_exact(f, npts * 12, path)
            out.append(np.frombuffer(buf, dtype="<f4").reshape(npts, 3)
                       .astype(np.float64))
        return out


# -------------------------------------------------------------------- vol3d

def write_vol3d(path, rgb: np.ndarray) -> None:
    """rgb: (nx, ny, nz, 3) array; stored x-fastest, z-slowest."""
    nx, ny, nz, c = rgb.shape
    if c != 3:
        raise DataError("volume must have 3 color channels")
    with open(path, "wb") as f:
        f.write(VOL3D_MAGIC)
        f.write(struct.pack("<III", nx, ny, nz))
        flat = np.ascontiguousarray(rgb.transpose(2, 1, 0, 3), dtype="<f4")
        f.write(flat.tobytes())


def read_vol3d(path) -> np.ndarray:
    with open(path, "rb") as f:
        _expect_magic(f, VOL3D_MAGIC, path)
        nx, ny, nz = struct.unpack("<III", _read_exact(f, 12, path))
        buf = _read_exact(f, nx * ny * nz * 12, path)
        flat = np.frombuffer(buf, dtype="<f4").reshape(nz, ny, nx, 3)
        return flat.transpose(2, 1, 0, 3).astype(np.float64)


# -------------------------------------------------------------------- map2d

def write_map2d(path, planes: np.ndarray) -> None:
    """planes: (h, w, c) or (h, w) array."""
    planes = np.asarray(planes)
    if planes.ndim == 2:
        planes = planes[:, :, None]
    h, w, c = planes.shape
    with open(path, "wb") as f:
        f.write(MAP2D_MAGIC)
        f.write(struct.pack("<III", w, h, c))
        f.write(np.ascontiguousarray(planes, dtype="<f4").tobytes())


def read_map2d(path) -> np.ndarray:
    with open(path, "rb") as f:
        _expect_magic(f, MAP2D_MAGIC, path)
        w, h, c = struct.unpack("<III", _read_exact(f, 12, path))
        buf = _read_exact(f, w * h * c * 4, path)
        return (np.frombuffer(buf, dtype="<f4").reshape(h, w, c)
                .astype(np.float64))


# --------------------------------------------------------------- checkpoint

def write_checkpoint(path, tensors: dict) -> None:
    """tensors: name -> numpy array (stored as f64)."""
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            if len(nb) > 0xFFFF:
                raise DataError(f"tensor name too long: {name!r}")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for e in arr.shape:
                f.write(struct.pack("<I", e))
            f.write(np.ascontiguousarray(arr).tobytes())


def read_checkpoint(path) -> dict:
    out = {}
    with open(path, "rb") as f:
        _expect_magic(f, CKPT_MAGIC, path)
        (count,) = struct.unpack("<I", _read_exact(f, 4, path))
        for _ in range(count):
            (nlen,) = struct.unpack("<H", _read_exact(f, 2, path))
            name = _read_exact(f, nlen, path).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, path))
            shape = tuple(struct.unpack("<I", _read_exact(f, 4, path))[0]
                          for _ in range(rank))
            n = int(np.prod(shape)) if shape else 1
            buf = _read_exact(f, n * 8, path)
            out[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return out


def write_meta(path, entries: dict) -> None:
    """Plain key = value text sidecar (one entry per line)."""
    with open(path, "w") as f:
        for k, v in entries.items():
            f.write(f"{k} = {v}\n")


def read_meta(path) -> dict:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}: malformed line {line!r}")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# ---------------------------------------------------------------------- OFF

def write_off(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{len(vertices)} {len(faces)} 0\n")
        for v in vertices:
            f.write(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for face in faces:
            f.write("3 " + " ".join(str(int(i)) for i in face) + "\n")


def read_off(path):
    with open(path) as f:
        tokens = []
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise DataError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos:pos + nv * 3], dtype=np.float64).reshape(nv, 3)
    pos += nv * 3
    faces = []
    for _ in range(nf):
        cnt = int(tokens[pos])
        idx = [int(t) for t in tokens[pos + 1:pos + 1 + cnt]]
        pos += 1 + cnt
        # fan-triangulate polygons
        for i in range(1, cnt - 1):
            faces.append((idx[0], idx[i], idx[i + 1]))
    return verts, np.array(faces, dtype=np.int64)


# ------------------------------------------------------------- PPM/PGM, OBJ

def write_pgm(path, gray: np.ndarray) -> None:
    g = np.clip(np.asarray(gray), 0.0, 1.0)
    b = (g * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{b.shape[1]} {b.shape[0]}\n255\n".encode())
        f.write(b.tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    c = np.clip(np.asarray(rgb), 0.0, 1.0)
    b = (c * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{b.shape[1]} {b.shape[0]}\n255\n".encode())
        f.write(np.ascontiguousarray(b).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(2) != b"P5":
            raise DataError(f"{path}: not a binary PGM")
        vals = []
        while len(vals) < 3:
            line = f.readline()
            if not line:
                raise DataError(f"{path}: truncated header")
            line = line.split(b"#", 1)[0]
            vals.extend(int(t) for t in line.split())
        w, h, maxv = vals[:3]
        buf = _read_exact(f, w * h, path)
        return np.frombuffer(buf, dtype=np.uint8).reshape(h, w) / float(maxv)


def write_obj_mesh(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w") as f:
        for v in vertices:
            f.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for a, b, c in faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")


def write_obj_polylines(path, strands) -> None:
    with open(path, "w") as f:
        base = 1
        for s in strands:
            for p in s:
                f.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            idx = " ".join(str(base + i) for i in range(len(s)))
            f.write(f"l {idx}\n")
            base += len(s)
