"""Shared test utilities: finite-difference oracle, stripe images, geometry
helpers.  These stay independent of the code paths they check."""

import numpy as np

from hairgan import autodiff as ad


def fd_gradient(f, xs, h=1e-5):
    """Central finite differences of a scalar function of numpy arrays.

    Returns (analytic, numeric) gradient lists; f maps Tensors to a scalar
    Tensor and is re-evaluated from scratch for every probe.
    """
    ts = [ad.Tensor(x) for x in xs]
    out = f(*ts)
    analytic = [g.data for g in ad.backward(out, ts)]
    numeric = []
    for j, x in enumerate(xs):
        flat = x.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(*[ad.Tensor(v) for v in xs]).data)
            flat[i] = orig - h
            fm = float(f(*[ad.Tensor(v) for v in xs]).data)
            flat[i] = orig
            num[i] = (fp - fm) / (2.0 * h)
        numeric.append(num.reshape(x.shape))
    return analytic, numeric


def fd_rel_err(f, xs, h=1e-5):
    analytic, numeric = fd_gradient(f, xs, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = max(np.abs(n).max(), np.abs(a).max(), 1e-8)
        worst = max(worst, np.abs(a - n).max() / denom)
    return worst


def sampled_fd_rel_err(f, arrays, coords_per_array=8, h=1e-5, seed=0):
    """Like fd_rel_err but probes only a few random coordinates per array;
    for losses where full FD is too slow."""
    ts = [ad.Tensor(x) for x in arrays]
    out = f(*ts)
    analytic = [g.data for g in ad.backward(out, ts)]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for j, x in enumerate(arrays):
        flat = x.reshape(-1)
        n_probe = min(coords_per_array, flat.size)
        idx = rng.choice(flat.size, size=n_probe, replace=False)
        scale = max(np.abs(analytic[j]).max(), 1e-6)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(*[ad.Tensor(v) for v in arrays]).data)
            flat[i] = orig - h
            fm = float(f(*[ad.Tensor(v) for v in arrays]).data)
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            worst = max(worst, abs(analytic[j].reshape(-1)[i] - num) / scale)
    return worst


def stripe_image(res, theta_deg, wavelength=4.0):
    """Sinusoidal stripes whose ridge direction is theta (world convention,
    y up) — the analytic oracle for orientation estimation."""
    th = np.deg2rad(theta_deg)
    normal = np.array([-np.sin(th), np.cos(th)])
    rows, cols = np.mgrid[0:res, 0:res].astype(np.float64)
    x = cols + 0.5
    y = -(rows + 0.5)
    return 0.5 + 0.5 * np.cos(2 * np.pi * (x * normal[0] + y * normal[1])
                              / wavelength)


def point_triangle_distance(p, a, b, c):
    """Exact distance from a point to a triangle."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return np.linalg.norm(ap)
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return np.linalg.norm(bp)
    vc = d1 * d4 - d3 * d2
    if vc <= 0 <= d1 and d3 <= 0:
        t = d1 / (d1 - d3)
        return np.linalg.norm(ap - t * ab)
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return np.linalg.norm(cp)
    vb = d5 * d2 - d1 * d6
    if vb <= 0 <= d2 and d6 <= 0:
        t = d2 / (d2 - d6)
        return np.linalg.norm(ap - t * ac)
    va = d3 * d6 - d5 * d4
    if va <= 0 and d4 - d3 >= 0 and d5 - d6 >= 0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.linalg.norm(p - (b + t * (c - b)))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return np.linalg.norm(p - (a + ab * v + ac * w))


def dist_to_faces(p, verts, faces):
    return min(point_triangle_distance(p, verts[f[0]], verts[f[1]],
                                       verts[f[2]]) for f in faces)


def brute_voxelize(strand, ms, n_sub=4000):
    """Independent voxelization oracle: dense sampling along segments,
    accumulating length-weighted tangents per containing voxel."""
    from hairgan.mspace import world_to_voxel
    acc = {}
    for i in range(len(strand) - 1):
        p0, p1 = strand[i], strand[i + 1]
        seg = p1 - p0
        ln = np.linalg.norm(seg)
        if ln == 0:
            continue
        tan = seg / ln
        for t in np.linspace(0, 1, n_sub, endpoint=False) + 0.5 / n_sub:
            idx = world_to_voxel(p0 + t * seg, ms)
            if idx[0] < 0:
                continue
            w, s = acc.get(idx, (0.0, np.zeros(3)))
            acc[idx] = (w + ln / n_sub, s + tan * (ln / n_sub))
    return acc
