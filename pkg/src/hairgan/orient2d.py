"""Per-pixel 2D hair orientation estimation and the network input assembly.

The estimator filters the image with a bank of 32 even-symmetric Gabor
kernels (wavelength 4 px, envelope sigma 2 px, 13x13 taps) and keeps, per
pixel, the best-responding angle (parabolic sub-bin refinement) and a
sharpness confidence.  Iterating re-filters the ridge-strength image of the
previous pass, which sharpens the estimate on stroke renders and noisy
photos alike.

Angles and direction vectors are in world XY convention (y up); image rows
run along -y, and the conversion happens inside this module only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import (AmbiguityUnresolved, DiffusionUnderconstrained,
                     InvalidInput, ShapeError)
from .mspace import ModelSpace

N_ANGLES = 32
KERNEL_SIZE = 13
WAVELENGTH = 4.0
SIGMA = 2.0

_bank_cache: dict = {}


@dataclass
class OrientationField2D:
    theta: np.ndarray      # (h, w), undirected angle in [0, pi)
    conf: np.ndarray       # (h, w), confidence in [0, 1]
    directed: np.ndarray   # (h, w, 2), unit world vectors after disambiguation
    mask: np.ndarray       # (h, w), 1 inside the hair region


@dataclass
class InputMaps:
    ms: ModelSpace
    data: np.ndarray       # (h, w, 4): orient R, orient G, confidence, depth


def gabor_bank(n=N_ANGLES, size=KERNEL_SIZE, wavelength=WAVELENGTH,
               sigma=SIGMA) -> np.ndarray:
    """Zero-mean, L2-normalized even Gabor kernels.

    Kernels for mirrored angles are exact x-flips of each other, which keeps
    the whole pair builder mirror-equivariant to rounding error.
    """
    key = (n, size, wavelength, sigma)
    if key in _bank_cache:
        return _bank_cache[key]
    half = size // 2
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1]
    env = np.exp(-(xs * xs + ys * ys) / (2.0 * sigma * sigma))
    bank = np.zeros((n, size, size))
    for k in range(n // 2 + 1):
        th = np.pi * k / n
        nx, ny = -np.sin(th), np.cos(th)   # across-stripe normal, array coords
        g = env * np.cos(2.0 * np.pi * (xs * nx + ys * ny) / wavelength)
        g -= g.mean()
        g /= np.linalg.norm(g)
        bank[k] = g
    for k in range(1, n - n // 2):
        bank[n - k] = bank[k][:, ::-1]
    _bank_cache[key] = bank
    return bank


_fft_cache: dict = {}


def _responses(img: np.ndarray) -> np.ndarray:
    """Signed filter responses, shape (K, h, w); FFT convolution with the
    kernel spectra cached per image size."""
    bank = gabor_bank()
    h, w = img.shape
    kh, kw = bank.shape[1:]
    ph, pw = kh // 2, kw // 2
    # edge-replicate padding: a constant image stays constant, so borders
    # produce no fake oriented energy
    imgp = np.pad(img, ((ph, ph), (pw, pw)), mode="edge")
    fh, fw = h + 2 * ph + kh - 1, w + 2 * pw + kw - 1
    key = (fh, fw, id(bank))
    if key not in _fft_cache:
        _fft_cache[key] = np.fft.rfft2(bank, s=(fh, fw))
    bank_f = _fft_cache[key]
    img_f = np.fft.rfft2(imgp, s=(fh, fw))
    full = np.fft.irfft2(img_f[None] * bank_f, s=(fh, fw))
    return full[:, 2 * ph:2 * ph + h, 2 * pw:2 * pw + w]


def estimate_orientation(img: np.ndarray, mask: np.ndarray,
                         iters: int) -> OrientationField2D:
    """Undirected angle + confidence from a grayscale image.

    Each iteration re-filters the normalized best-response map of the
    previous pass.  Pixels outside the mask get zero confidence.
    """
    if iters < 1:
        raise InvalidInput("iters must be >= 1")
    img = np.asarray(img, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if img.shape != mask.shape:
        raise ShapeError("image and mask resolutions differ")

    work = img
    r = None
    rows, cols = np.indices(img.shape)
    for _ in range(iters):
        signed = _responses(work)
        r = np.abs(signed)
        # reconstruction for the next pass: the signed response along the
        # winning angle, rescaled to [0, 1]; keeps ridge spacing intact
        k0 = r.argmax(axis=0)
        best = signed[k0, rows, cols]
        peak = np.abs(best).max()
        if peak <= 1e-9 * max(1.0, np.abs(work).max()):
            break  # no oriented energy at all; iterating would amplify noise
        work = 0.5 + 0.5 * best / peak

    k0 = r.argmax(axis=0)
    n = r.shape[0]
    r0 = r[k0, rows, cols]
    rm = r[(k0 - 1) % n, rows, cols]
    rp = r[(k0 + 1) % n, rows, cols]
    denom = rm - 2.0 * r0 + rp
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = 0.5 * (rm - rp) / denom
    delta = np.where(np.abs(denom) > 1e-300, delta, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    theta_arr = (k0 + delta) * (np.pi / n) % np.pi

    mean_r = r.mean(axis=0)
    conf = np.clip((r0 - mean_r) / (r0 + 1e-8), 0.0, 1.0)
    # a response profile symmetric between theta and pi-theta (stroke
    # crossings, symmetric flanks) has no preferred angle; zero confidence
    # lets the diffusion stage fill those pixels
    mirror_peak = r[(n - k0) % n, rows, cols]
    sym_tie = (np.abs(r0 - mirror_peak) <= 1e-9 * r0) & ((n - k0) % n != k0)
    conf = np.where(sym_tie, 0.0, conf)
    conf = conf * (mask > 0)

    theta_world = (-theta_arr) % np.pi
    return OrientationField2D(theta_world, conf,
                              np.zeros(img.shape + (2,)), (mask > 0))


def _base_vectors(field: OrientationField2D) -> np.ndarray:
    return np.stack([np.cos(field.theta), np.sin(field.theta)], axis=-1)


def disambiguate(field: OrientationField2D,
                 hint: np.ndarray) -> OrientationField2D:
    """Pick per-pixel signs for the undirected angles.

    Hinted pixels keep the sign agreeing with their own hint; everywhere
    else the sparse hint vectors are diffused harmonically across the mask
    and the sign follows the diffused growth direction.  The order-free
    solve keeps the choice coherent along ridges and exactly reproducible
    (a traversal-based flood would depend on visit order, which breaks the
    pair builder's mirror equivariance).
    """
    hint = np.asarray(hint, dtype=np.float64)
    mask = field.mask
    hinted = (np.linalg.norm(hint, axis=-1) > 1e-12) & mask
    if not hinted.any():
        raise AmbiguityUnresolved("no direction hints inside the mask")

    base = _base_vectors(field)
    hv = np.where(hinted[:, :, None], hint, 0.0)
    free = mask & ~hinted
    if free.any():
        hv = _solve_laplace(hv, hinted, free)
    dot = (base * hv).sum(axis=-1)
    sign = np.where(dot >= 0.0, 1.0, -1.0)

    directed = base * sign[:, :, None]
    directed[~mask] = 0.0
    return OrientationField2D(field.theta, field.conf, directed, mask)


def diffuse_orientation(field: OrientationField2D, mask=None,
                        conf_thresh: float = 0.4) -> OrientationField2D:
    """Fill low-confidence pixels by harmonic interpolation.

    Pixels with conf >= conf_thresh are Dirichlet constraints (kept exactly);
    the remaining masked pixels solve the mask-restricted Laplace equation
    per directed component (Jacobi, residual < 1e-4), then renormalize.
    """
    mask = field.mask if mask is None else (np.asarray(mask) > 0)
    fixed = mask & (field.conf >= conf_thresh) \
        & (np.linalg.norm(field.directed, axis=-1) > 1e-12)
    if not fixed.any():
        raise DiffusionUnderconstrained(
            f"no pixel reaches confidence {conf_thresh}")
    free = mask & ~fixed
    if not free.any():
        return field

    v = np.where(fixed[:, :, None], field.directed, 0.0)
    v = _solve_laplace(v, fixed, free)

    directed = field.directed.copy()
    norms = np.linalg.norm(v, axis=-1)
    ok = free & (norms > 1e-12)
    directed[ok] = v[ok] / norms[ok, None]
    directed[~mask] = 0.0
    return OrientationField2D(field.theta, field.conf, directed, mask)


def _solve_laplace(v, fixed, free, tol=1e-4):
    """Coarse-to-fine Jacobi solve of the mask-restricted Laplace problem."""
    h, w = fixed.shape
    if min(h, w) >= 32 and (h % 2 == 0) and (w % 2 == 0):
        fx = fixed.reshape(h // 2, 2, w // 2, 2).any(axis=(1, 3))
        fr = free.reshape(h // 2, 2, w // 2, 2).any(axis=(1, 3)) & ~fx
        vc = np.zeros((h // 2, w // 2, v.shape[2]))
        cnt = fixed.reshape(h // 2, 2, w // 2, 2).sum(axis=(1, 3))
        vs = (v * fixed[:, :, None]).reshape(h // 2, 2, w // 2, 2, -1).sum(axis=(1, 3))
        nz = cnt > 0
        vc[nz] = vs[nz] / cnt[nz, None]
        coarse = _solve_laplace(vc, fx, fr, tol)
        up = np.repeat(np.repeat(coarse, 2, axis=0), 2, axis=1)
        v = np.where(fixed[:, :, None], v, up * free[:, :, None])
    return _jacobi_noroll(v, fixed, free, tol, max_iter=4000)


def _jacobi_noroll(v, fixed, free, tol, max_iter):
    h, w = fixed.shape
    m = np.zeros((h + 2, w + 2))
    m[1:-1, 1:-1] = (fixed | free).astype(np.float64)
    vals = np.zeros((h + 2, w + 2, v.shape[2]))
    vals[1:-1, 1:-1] = v
    freec = free
    for _ in range(max_iter):
        vm = vals * m[:, :, None]
        s = (vm[:-2, 1:-1] + vm[2:, 1:-1] + vm[1:-1, :-2] + vm[1:-1, 2:])
        cnt = (m[:-2, 1:-1] + m[2:, 1:-1] + m[1:-1, :-2] + m[1:-1, 2:])
        upd = s / np.maximum(cnt, 1.0)[:, :, None]
        inner = vals[1:-1, 1:-1]
        new = np.where((freec & (cnt > 0))[:, :, None], upd, inner)
        delta = np.abs(new - inner).max()
        vals[1:-1, 1:-1] = new
        if delta < tol:
            break
    return vals[1:-1, 1:-1]


def assemble_input(field: OrientationField2D, depth: np.ndarray,
                   ms: ModelSpace) -> InputMaps:
    """4-channel network input: encoded direction RG, confidence, depth."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != field.conf.shape:
        raise ShapeError("depth resolution differs from the orientation field")
    h, w = depth.shape
    data = np.empty((h, w, 4))
    data[:, :, 0] = (field.directed[:, :, 0] + 1.0) / 2.0
    data[:, :, 1] = (field.directed[:, :, 1] + 1.0) / 2.0
    data[:, :, 2] = field.conf * field.mask
    data[:, :, 3] = depth
    return InputMaps(ms, np.clip(data, 0.0, 1.0))
