"""Command line: dataset building, training, inference, synthesis, eval.

Configuration is a flat `key = value` text file (see README for the key
list); command-line flags override config values.  Exit codes: 0 success,
2 invalid config/arguments, 3 data error, 4 numeric fault.  HAIRGAN_THREADS
caps the worker count for dataset building.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys

import numpy as np

from . import autodiff as ad
from . import fileio, gan, orient2d, synth
from .errors import (AmbiguityUnresolved, DataError, HairganError,
                     InvalidConfig, InvalidInput, NumericFault)
from .mspace import ModelSpace, decode_dir, encode_dir, project_to_image
from .rasterize import (OrientVolume, bust_depth_map, hair_mask,
                        make_training_pairs, tangent_hint_map)
from .strands import (BustModel, HairModel, StyleParams, flip_model,
                      gen_hairstyle, load_bust, make_default_bust,
                      rotate_bust, save_bust)

DEFAULT_BUST = os.path.join(os.path.dirname(__file__), "assets", "bust.off")


# ------------------------------------------------------------ configuration

def parse_config(path) -> dict:
    if not os.path.exists(path):
        raise InvalidConfig(f"config file {path} does not exist")
    raw = fileio.read_meta(path)
    return raw


def cfg_get(cfg, key, cast, default):
    if key not in cfg or cfg[key] == "":
        return default
    try:
        if cast is bool:
            return cfg[key].strip().lower() in ("1", "true", "yes", "on")
        return cast(cfg[key])
    except ValueError as e:
        raise InvalidConfig(f"bad value for {key}: {cfg[key]!r}") from e


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("HAIRGAN_THREADS", "1")))
    except ValueError:
        return 1


def _bust_for(ms, path=None) -> BustModel:
    if path:
        if not os.path.exists(path):
            raise DataError(f"bust mesh {path} not found")
        return load_bust(path)
    if os.path.exists(DEFAULT_BUST):
        return load_bust(DEFAULT_BUST)
    return make_default_bust(ms)


def _scaled_space(k: int) -> ModelSpace:
    return ModelSpace().scaled(k)


# ---------------------------------------------------------------- make-data

def _style_for(rng, n_strands) -> StyleParams:
    curly = rng.random() < 0.5
    return StyleParams(
        n_strands=n_strands,
        length_mean=float(rng.uniform(0.25, 0.62)),
        length_sigma=float(rng.uniform(0.04, 0.1)),
        curl_radius=float(rng.uniform(0.01, 0.05)) if curly else 0.0,
        curl_freq=float(rng.uniform(3.0, 9.0)) if curly else 0.0,
        gravity=1.0,
        waviness=float(rng.uniform(0.0, 0.3)),
    )


def _build_model_task(args):
    (style, model_seed, pair_seed, n_rot, k, bust_path) = args
    ms = _scaled_space(k)
    bust = _bust_for(ms, bust_path)
    model = gen_hairstyle(style, model_seed, bust, ms)
    if pair_seed < 0:  # flipped twin
        model = flip_model(model)
    pairs = make_training_pairs(model, bust, ms, n_rot, abs(pair_seed))
    return pairs


def cmd_make_data(args):
    cfg = parse_config(args.config) if args.config else {}
    k = args.k or cfg_get(cfg, "k", int, 8)
    seed = args.seed if args.seed is not None else cfg_get(cfg, "seed", int, 0)
    n_styles = args.styles or cfg_get(cfg, "data.n_styles", int, 4)
    n_rot = args.rotations or cfg_get(cfg, "data.n_rot", int, 12)
    flips = cfg_get(cfg, "data.flips", bool, True)
    if args.no_flips:
        flips = False
    n_strands = cfg_get(cfg, "data.n_strands", int, 300)
    bust_path = args.bust or cfg_get(cfg, "data.bust", str, "")
    out = args.out or cfg_get(cfg, "data.out", str, "dataset")

    os.makedirs(out, exist_ok=True)
    ms = _scaled_space(k)

    rng = np.random.default_rng(seed)
    styles = [_style_for(rng, n_strands) for _ in range(n_styles)]
    model_seeds = [int(rng.integers(0, 2**31 - 1)) for _ in range(n_styles)]
    pair_seeds = [int(rng.integers(0, 2**31 - 1))
                  for _ in range(n_styles * (2 if flips else 1))]

    tasks = []
    ti = 0
    for si in range(n_styles):
        for flip in ((0, 1) if flips else (0,)):
            ps = pair_seeds[ti]
            ti += 1
            tasks.append((styles[si], model_seeds[si],
                          -ps if flip else ps, n_rot, k, bust_path or None))

    workers = n_workers()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_build_model_task, tasks))
    else:
        results = [_build_model_task(t) for t in tasks]

    manifest = os.path.join(out, "manifest.csv")
    with open(manifest, "w", newline="") as mf:
        wr = csv.writer(mf)
        wr.writerow(["id", "style", "flip", "rot_x", "rot_y", "rot_z",
                     "iters", "render_seed", "x_file", "y_file", "sha256"])
        pid = 0
        for tix, pairs in enumerate(results):
            style_idx = tix // (2 if flips else 1)
            flip = tix % 2 if flips else 0
            for pr in pairs:
                xf = f"pair_{pid:05d}.x.map2d"
                yf = f"pair_{pid:05d}.y.vol3d"
                fileio.write_map2d(os.path.join(out, xf), pr.x.data)
                fileio.write_vol3d(os.path.join(out, yf), pr.y.rgb)
                sha = hashlib.sha256()
                sha.update(pr.x.data.astype("<f4").tobytes())
                sha.update(pr.y.rgb.astype("<f4").tobytes())
                wr.writerow([pid, style_idx, flip,
                             f"{pr.euler[0]:.6f}", f"{pr.euler[1]:.6f}",
                             f"{pr.euler[2]:.6f}", pr.iters, pr.render_seed,
                             xf, yf, sha.hexdigest()])
                pid += 1
    fileio.write_meta(os.path.join(out, "dataset.meta"), {
        "k": k, "seed": seed, "n_styles": n_styles, "n_rot": n_rot,
        "flips": int(flips), "n_strands": n_strands, "pairs": pid,
    })
    print(f"wrote {pid} pairs to {out}")
    return 0


def load_dataset(path):
    meta_path = os.path.join(path, "dataset.meta")
    manifest = os.path.join(path, "manifest.csv")
    if not (os.path.exists(meta_path) and os.path.exists(manifest)):
        raise DataError(f"{path} is not a dataset directory")
    meta = fileio.read_meta(meta_path)
    pairs = []
    with open(manifest, newline="") as mf:
        for row in csv.DictReader(mf):
            x = fileio.read_map2d(os.path.join(path, row["x_file"]))
            y = fileio.read_vol3d(os.path.join(path, row["y_file"]))
            pairs.append((x, y))
    return pairs, meta


# -------------------------------------------------------------------- train

def cmd_train(args):
    cfg = parse_config(args.config) if args.config else {}
    dataset, dmeta = load_dataset(args.data)
    dataset = [(gan.net_input(x), y) for x, y in dataset]
    k = int(dmeta["k"])
    chan_div = args.chan_div or cfg_get(cfg, "train.chan_div", int, k)
    n_iter = args.iters or cfg_get(cfg, "train.n_iter", int, 2000)
    seed = args.seed if args.seed is not None \
        else cfg_get(cfg, "train.seed", int, 0)
    objective = args.objective or cfg_get(cfg, "train.objective", str, "star")
    hyper = gan.Hyper(
        alpha=cfg_get(cfg, "train.alpha", float, 1e-2),
        beta=cfg_get(cfg, "train.beta", float, 5.0),
        lam=cfg_get(cfg, "train.lambda", float, 10.0),
        lr_g=cfg_get(cfg, "train.lr_g", float, 1e-4),
        lr_d=cfg_get(cfg, "train.lr_d", float, 3e-4),
        batch=cfg_get(cfg, "train.batch", int, 4),
    )
    ckpt_interval = args.ckpt_interval or \
        cfg_get(cfg, "train.ckpt_interval", int, 500)

    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, "model")
    if args.resume:
        state = gan.load_state(args.resume)
        if state.scale.k != k:
            raise InvalidConfig(
                f"checkpoint k={state.scale.k} does not match dataset k={k}")
    else:
        state = gan.init_state(gan.ScaleConfig(k, chan_div), seed,
                               hyper=hyper, objective=objective)
    metrics = os.path.join(args.out, "metrics.csv")

    def log(it, ld, lg, c, s, ms_):
        if args.verbose:
            print(f"iter {it}: L_D {ld:.4f} L*_G {lg:.5f} "
                  f"content {c:.2f} style {s:.5f} ({ms_:.0f} ms)")

    gan.train(dataset, state, n_iter, metrics_path=metrics, ckpt_stem=stem,
              ckpt_interval=ckpt_interval, log=log)
    print(f"trained to iteration {state.iteration}; checkpoint at {stem}.ckpt")
    return 0


# -------------------------------------------------------------------- infer

def _read_gray(path):
    if path.endswith(".pgm"):
        return fileio.read_pgm(path)
    arr = fileio.read_map2d(path)
    return arr[:, :, 0]


def cmd_infer(args):
    state = gan.load_state(args.checkpoint)
    k = state.scale.k
    res = state.scale.img_res
    img = _read_gray(args.image)
    if img.shape != (res, res):
        raise InvalidConfig(
            f"image resolution {img.shape} does not match checkpoint "
            f"k={k} (expected {(res, res)})")
    if not args.mask:
        raise AmbiguityUnresolved(
            "a hair mask is required; pass --mask <file.map2d>")
    mask = _read_gray(args.mask)
    if not args.hint:
        raise AmbiguityUnresolved(
            "direction hints are required to fix hair growth direction; "
            "pass --hint <file.map2d> (2 channels, 0.5/0.5 = no hint)")
    hint_enc = fileio.read_map2d(args.hint)
    if hint_enc.shape[2] != 2:
        raise DataError("hint file must have exactly 2 channels")
    hint = decode_dir(np.clip(hint_enc, 0.0, 1.0))

    ms = _scaled_space(k)
    if args.depth:
        depth = _read_gray(args.depth)
    elif args.bust:
        bust = _bust_for(ms, args.bust)
        if args.bust_rot:
            euler = tuple(float(t) for t in args.bust_rot.split(","))
            bust = rotate_bust(bust, euler)
        depth = bust_depth_map(bust, ms).data
    else:
        raise DataError("provide --depth <map2d> or --bust <off mesh>")
    if depth.shape != (res, res) or mask.shape != (res, res):
        raise InvalidConfig("mask/depth resolution does not match checkpoint")

    field = orient2d.estimate_orientation(img, mask, args.iters)
    field = orient2d.disambiguate(field, hint)
    field = orient2d.diffuse_orientation(field, mask)
    x = orient2d.assemble_input(field, depth, ms)
    with ad.no_grad():
        y = gan.generator_forward(ad.constant(gan.net_input(x.data)),
                                  state.params, state.scale)
    rgb = np.clip(y.data, 0.0, 1.0)
    fileio.write_vol3d(args.out, rgb)
    print(f"wrote volume {args.out} shape {rgb.shape}")
    return 0


# --------------------------------------------------------------- synthesize

def _field_from_input_maps(path, res):
    maps = fileio.read_map2d(path)
    if maps.shape[2] < 3:
        raise DataError("input-maps file needs orientation RG + confidence")
    directed = 2.0 * maps[:, :, 0:2] - 1.0
    conf = maps[:, :, 2]
    mask = conf > 0
    ln = np.linalg.norm(directed, axis=-1)
    nz = ln > 1e-9
    directed[nz] /= ln[nz, None]
    directed[~mask] = 0.0
    theta = np.arctan2(directed[:, :, 1], directed[:, :, 0]) % np.pi
    return orient2d.OrientationField2D(theta, conf, directed, mask)


def cmd_synthesize(args):
    rgb = fileio.read_vol3d(args.volume)
    nx, ny, nz = rgb.shape[:3]
    base = ModelSpace()
    if base.vol_res[0] % nx or nz * base.vol_res[0] != nx * base.vol_res[2]:
        raise DataError(f"volume resolution {rgb.shape[:3]} does not match "
                        "the model-space aspect")
    ms = base.scaled(base.vol_res[0] // nx)
    vol = OrientVolume(ms, np.clip(rgb, 0.0, 1.0))
    bust = _bust_for(ms, args.bust)
    p = synth.SynthParams(iso=args.iso, smooth_iters=args.smooth_iters,
                          step_h=args.step, max_strand_len=args.max_len,
                          seed_count=args.seeds,
                          deform_weight=args.deform_weight)

    occ = synth.occupancy_field(vol)
    shape = synth.extract_surface(occ, ms, p.iso)
    shape = synth.smooth_mesh(shape, p.smooth_iters)
    vol = synth.smooth_field(vol, shape)
    field = None
    if args.input_maps:
        field = _field_from_input_maps(args.input_maps, ms.img_res)
        vol = synth.warp_image_orientation(field, shape, vol)
    model = synth.trace_strands(vol, shape, bust, p, seed=args.seed)
    if field is not None and p.deform_weight > 0:
        model = synth.deform_strands(model, field, ms, p.deform_weight)
    fileio.write_strands(args.out, model.strands)
    if args.obj:
        fileio.write_obj_mesh(args.obj, shape.vertices, shape.faces)
    if args.strands_obj:
        fileio.write_obj_polylines(args.strands_obj, model.strands)
    print(f"wrote {len(model.strands)} strands to {args.out}")
    return 0


# --------------------------------------------------------------------- eval

def _volume_front_projection(vol: OrientVolume):
    """Per-(x, y) column: mask and decoded direction of the voxel nearest
    the camera (largest z)."""
    occ = vol.occupancy() >= 0.5
    nx, ny, nz = occ.shape
    dirs = vol.decoded()
    zidx = np.arange(nz)
    masked = np.where(occ, zidx, -1)
    front = masked.max(axis=2)
    cols = front >= 0
    d = np.zeros((nx, ny, 3))
    ix, iy = np.nonzero(cols)
    d[ix, iy] = dirs[ix, iy, front[ix, iy]]
    return cols, d


def _mask_from_volume(vol: OrientVolume, res):
    cols, d = _volume_front_projection(vol)
    nx, ny = cols.shape
    scalef = res // nx
    mask = np.zeros((res, res))
    orient = np.zeros((res, res, 2))
    for ix in range(nx):
        for iy in range(ny):
            if not cols[ix, iy]:
                continue
            u = ix * scalef
            v = (ny - 1 - iy) * scalef
            mask[v:v + scalef, u:u + scalef] = 1.0
            vec = d[ix, iy, :2]
            ln = np.hypot(vec[0], vec[1])
            if ln > 1e-9:
                orient[v:v + scalef, u:u + scalef] = vec / ln
    return mask, orient


def _angdiff_deg(a, b):
    """Angle between undirected 2D orientations, degrees in [0, 90]."""
    dot = np.abs((a * b).sum(axis=-1))
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    c = np.clip(dot / np.maximum(na * nb, 1e-12), 0.0, 1.0)
    return np.rad2deg(np.arccos(c))


def cmd_eval(args):
    ref_mask = _read_gray(args.mask) > 0.5
    res = ref_mask.shape[0]
    ms = ModelSpace(img_res=res, vol_res=(res // 8, res // 8,
                                          (res // 8) * 3 // 4))

    if args.result.endswith(".strands"):
        model = HairModel([s for s in fileio.read_strands(args.result)])
        rmask = hair_mask(model, ms).data > 0.5
        rorient = tangent_hint_map(model, ms)
    elif args.result.endswith(".vol3d"):
        rgb = fileio.read_vol3d(args.result)
        nxv = rgb.shape[0]
        base = ModelSpace()
        vms = base.scaled(base.vol_res[0] // nxv)
        vol = OrientVolume(vms, np.clip(rgb, 0.0, 1.0))
        m, o = _mask_from_volume(vol, vms.img_res)
        if vms.img_res != res:
            raise InvalidConfig(f"volume k implies image {vms.img_res}, "
                                f"reference mask is {res}")
        rmask, rorient = m > 0.5, o
    else:
        raise DataError("result must be a .strands or .vol3d file")

    inter = (rmask & ref_mask).sum()
    union = (rmask | ref_mask).sum()
    iou = inter / union if union else 1.0
    print(f"mask_iou {iou:.4f}")

    if args.orient:
        enc = fileio.read_map2d(args.orient)
        ref_o = 2.0 * enc[:, :, :2] - 1.0
        both = rmask & ref_mask & (np.linalg.norm(ref_o, axis=-1) > 1e-6) \
            & (np.linalg.norm(rorient, axis=-1) > 1e-6)
        if both.any():
            diff = _angdiff_deg(rorient[both], ref_o[both])
            print(f"mean_orient_diff_deg {diff.mean():.3f}")
            if args.diff_out:
                img = np.zeros(ref_mask.shape)
                img[both] = diff / 90.0
                fileio.write_pgm(args.diff_out, img)
        else:
            print("mean_orient_diff_deg nan")

    if args.truth:
        t = fileio.read_vol3d(args.truth)
        if not args.result.endswith(".vol3d"):
            raise DataError("--truth comparison needs a .vol3d result")
        r = fileio.read_vol3d(args.result)
        if t.shape != r.shape:
            raise DataError("truth/result volume shapes differ")
        ot = np.linalg.norm(2 * t - 1, axis=-1) >= 0.5
        orr = np.linalg.norm(2 * np.clip(r, 0, 1) - 1, axis=-1) >= 0.5
        ou = (ot | orr).sum()
        oiou = (ot & orr).sum() / ou if ou else 1.0
        print(f"occupancy_iou {oiou:.4f}")
        both = ot & orr
        if both.any():
            dt = (2 * t - 1)[both]
            dr = (2 * np.clip(r, 0, 1) - 1)[both]
            dot = np.abs((dt * dr).sum(axis=-1))
            c = np.clip(dot / np.maximum(np.linalg.norm(dt, axis=-1)
                                         * np.linalg.norm(dr, axis=-1),
                                         1e-12), 0, 1)
            print(f"voxel_angle_deg {np.rad2deg(np.arccos(c)).mean():.3f}")
    return 0


# ------------------------------------------------------------------- export

def cmd_export(args):
    src, dst = args.input, args.out
    if src.endswith(".vol3d") and dst.endswith(".ppm"):
        rgb = fileio.read_vol3d(src)
        nxv = rgb.shape[0]
        base = ModelSpace()
        vms = base.scaled(base.vol_res[0] // nxv)
        vol = OrientVolume(vms, np.clip(rgb, 0, 1))
        cols, d = _volume_front_projection(vol)
        img = np.full(cols.shape[::-1] + (3,), 0.5)
        ix, iy = np.nonzero(cols)
        img[cols.shape[1] - 1 - iy, ix] = (d[ix, iy] + 1.0) / 2.0
        fileio.write_ppm(dst, img)
    elif src.endswith(".vol3d") and dst.endswith(".obj"):
        rgb = fileio.read_vol3d(src)
        nxv = rgb.shape[0]
        base = ModelSpace()
        vms = base.scaled(base.vol_res[0] // nxv)
        vol = OrientVolume(vms, np.clip(rgb, 0, 1))
        shape = synth.extract_surface(synth.occupancy_field(vol), vms, 0.5)
        fileio.write_obj_mesh(dst, shape.vertices, shape.faces)
    elif src.endswith(".map2d") and dst.endswith((".pgm", ".ppm")):
        arr = fileio.read_map2d(src)
        if dst.endswith(".pgm"):
            fileio.write_pgm(dst, arr[:, :, 0])
        else:
            rgb = arr[:, :, :3] if arr.shape[2] >= 3 else \
                np.repeat(arr[:, :, :1], 3, axis=2)
            fileio.write_ppm(dst, rgb)
    elif src.endswith(".strands") and dst.endswith(".obj"):
        fileio.write_obj_polylines(dst, fileio.read_strands(src))
    else:
        raise InvalidConfig(f"unsupported export {src} -> {dst}")
    print(f"exported {dst}")
    return 0


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hairgan",
        description="2D hair maps to 3D orientation volumes and strands")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("make-data", help="build synthetic training pairs")
    d.add_argument("--config")
    d.add_argument("--out")
    d.add_argument("--k", type=int)
    d.add_argument("--seed", type=int)
    d.add_argument("--styles", type=int)
    d.add_argument("--rotations", type=int)
    d.add_argument("--no-flips", action="store_true")
    d.add_argument("--bust")
    d.set_defaults(fn=cmd_make_data)

    t = sub.add_parser("train", help="train the networks on a dataset")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--iters", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--chan-div", type=int, dest="chan_div")
    t.add_argument("--objective", choices=("star", "wgan"))
    t.add_argument("--ckpt-interval", type=int, dest="ckpt_interval")
    t.add_argument("--resume")
    t.add_argument("--verbose", action="store_true")
    t.set_defaults(fn=cmd_train)

    i = sub.add_parser("infer", help="image maps -> orientation volume")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--mask")
    i.add_argument("--hint")
    i.add_argument("--depth")
    i.add_argument("--bust")
    i.add_argument("--bust-rot", dest="bust_rot")
    i.add_argument("--iters", type=int, default=3)
    i.add_argument("--out", required=True)
    i.set_defaults(fn=cmd_infer)

    s = sub.add_parser("synthesize", help="orientation volume -> strands")
    s.add_argument("--volume", required=True)
    s.add_argument("--bust")
    s.add_argument("--out", required=True)
    s.add_argument("--obj")
    s.add_argument("--strands-obj", dest="strands_obj")
    s.add_argument("--input-maps", dest="input_maps")
    s.add_argument("--iso", type=float, default=0.5)
    s.add_argument("--smooth-iters", type=int, default=20, dest="smooth_iters")
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--max-len", type=float, default=1.5, dest="max_len")
    s.add_argument("--seeds", type=int, default=600)
    s.add_argument("--deform-weight", type=float, default=0.5,
                   dest="deform_weight")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_synthesize)

    e = sub.add_parser("eval", help="compare a result against references")
    e.add_argument("--result", required=True)
    e.add_argument("--mask", required=True)
    e.add_argument("--orient")
    e.add_argument("--truth")
    e.add_argument("--diff-out", dest="diff_out")
    e.set_defaults(fn=cmd_eval)

    x = sub.add_parser("export", help="preview exports (PPM/PGM/OBJ)")
    x.add_argument("--input", required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(fn=cmd_export)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (InvalidConfig, InvalidInput) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericFault as e:
        print(f"numeric fault: {e}", file=sys.stderr)
        return 4
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except HairganError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
