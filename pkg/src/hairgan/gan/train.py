"""Training loop: one critic update then one generator update per iteration
(two-timescale rule), ADAM with beta1=0, beta2=0.9, batches sampled uniformly
from the dataset with the state's generator.

Checkpoints pair a binary tensor container with a text meta sidecar; saving
then loading reproduces forward passes bit-for-bit, including the sampler
state, so training can resume mid-run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidConfig, InvalidInput, ShapeError
from ..fileio import read_checkpoint, read_meta, write_checkpoint, write_meta
from . import losses
from .networks import (ScaleConfig, discriminator_features, generator_forward,
                       init_discriminator, init_generator, init_pnet,
                       pnet_forward)


@dataclass(frozen=True)
class Hyper:
    alpha: float = 1e-2
    beta: float = 5.0
    lam: float = 10.0
    lr_g: float = 1e-4
    lr_d: float = 3e-4
    batch: int = 4
    beta1: float = 0.0
    beta2: float = 0.9
    adam_eps: float = 1e-8


@dataclass
class GanState:
    scale: ScaleConfig
    params: dict                 # name -> Tensor, prefixes g/ p/ d/
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t_d: int = 0
    t_g: int = 0
    iteration: int = 0
    hyper: Hyper = field(default_factory=Hyper)
    objective: str = "star"     # "star" (content+style) or "wgan" (baseline)
    rng: np.random.Generator = None

    def group(self, prefixes) -> list:
        return [n for n in self.params if n.startswith(prefixes)]


def init_state(scale: ScaleConfig, seed: int, hyper: Hyper | None = None,
               objective: str = "star") -> GanState:
    if objective not in ("star", "wgan"):
        raise InvalidConfig(f"unknown objective {objective!r}")
    rng = np.random.default_rng(seed)
    params = {}
    params.update(init_generator(scale, rng))
    params.update(init_pnet(scale, rng))
    params.update(init_discriminator(scale, rng))
    st = GanState(scale, params, hyper=hyper or Hyper(), objective=objective,
                  rng=rng)
    for n, p in params.items():
        st.m[n] = np.zeros_like(p.data)
        st.v[n] = np.zeros_like(p.data)
    return st


# --------------------------------------------------------------------- adam

def adam_step(params: dict, grads: dict, moments, lr: float,
              beta1: float = 0.0, beta2: float = 0.9, eps: float = 1e-8,
              t: int = 1) -> None:
    """Bias-corrected ADAM update, in place on the leaf tensors."""
    m, v = moments
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape mismatch for {name}")
        m[name] = beta1 * m[name] + (1.0 - beta1) * g
        v[name] = beta2 * v[name] + (1.0 - beta2) * g * g
        mh = m[name] / (1.0 - beta1 ** t)
        vh = v[name] / (1.0 - beta2 ** t)
        p.data = p.data - lr * mh / (np.sqrt(vh) + eps)


# --------------------------------------------------------------- checkpoint

def save_state(stem: str, state: GanState) -> None:
    tensors = {}
    for n, p in state.params.items():
        tensors[n] = p.data
    for n in state.params:
        tensors["opt/m:" + n] = state.m[n]
        tensors["opt/v:" + n] = state.v[n]
    write_checkpoint(str(stem) + ".ckpt", tensors)
    bg = state.rng.bit_generator.state
    meta = {
        "format": "hairgan-ckpt-1",
        "k": state.scale.k,
        "chan_div": state.scale.chan_div,
        "iteration": state.iteration,
        "t_d": state.t_d,
        "t_g": state.t_g,
        "objective": state.objective,
        "alpha": repr(state.hyper.alpha),
        "beta": repr(state.hyper.beta),
        "lam": repr(state.hyper.lam),
        "lr_g": repr(state.hyper.lr_g),
        "lr_d": repr(state.hyper.lr_d),
        "batch": state.hyper.batch,
        "beta1": repr(state.hyper.beta1),
        "beta2": repr(state.hyper.beta2),
        "adam_eps": repr(state.hyper.adam_eps),
        "rng_state": bg["state"]["state"],
        "rng_inc": bg["state"]["inc"],
        "rng_has_uint32": bg["has_uint32"],
        "rng_uinteger": bg["uinteger"],
    }
    write_meta(str(stem) + ".ckpt.meta", meta)


def load_state(stem: str) -> GanState:
    stem = str(stem)
    if stem.endswith(".ckpt"):
        stem = stem[:-5]
    tensors = read_checkpoint(stem + ".ckpt")
    meta = read_meta(stem + ".ckpt.meta")
    scale = ScaleConfig(int(meta["k"]), int(meta["chan_div"]))
    hyper = Hyper(alpha=float(meta["alpha"]), beta=float(meta["beta"]),
                  lam=float(meta["lam"]), lr_g=float(meta["lr_g"]),
                  lr_d=float(meta["lr_d"]), batch=int(meta["batch"]),
                  beta1=float(meta["beta1"]), beta2=float(meta["beta2"]),
                  adam_eps=float(meta["adam_eps"]))
    params, m, v = {}, {}, {}
    for name, arr in tensors.items():
        if name.startswith("opt/m:"):
            m[name[6:]] = arr
        elif name.startswith("opt/v:"):
            v[name[6:]] = arr
        else:
            params[name] = ad.Tensor(arr)
    rng = np.random.default_rng(0)
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": int(meta["rng_state"]),
                  "inc": int(meta["rng_inc"])},
        "has_uint32": int(meta["rng_has_uint32"]),
        "uinteger": int(meta["rng_uinteger"]),
    }
    return GanState(scale, params, m, v, int(meta["t_d"]), int(meta["t_g"]),
                    int(meta["iteration"]), hyper, meta["objective"], rng)


# ------------------------------------------------------------ training loop

def _check_dataset(dataset, scale):
    r = scale.img_res
    v1, v2, v3 = scale.vol_res
    for x, y in dataset:
        if x.shape != (r, r, 4) or y.shape != (v1, v2, v3, 3):
            raise ShapeError(
                f"dataset shapes {x.shape}/{y.shape} do not match scale "
                f"k={scale.k} ({(r, r, 4)}/{(v1, v2, v3, 3)})")


def train(dataset, state: GanState, n_iter: int, metrics_path=None,
          ckpt_stem=None, ckpt_interval: int = 0, log=None):
    """Run n_iter iterations; appends one metrics row per iteration.

    Metrics CSV columns: iter, L_D, L*_G, content, style, wall_ms (content
    and style are the unweighted sums over their selected layers).
    """
    if not dataset:
        raise InvalidInput("dataset is empty")
    _check_dataset(dataset, state.scale)
    hp = state.hyper
    d_names = state.group(("d/", "p/"))
    g_names = state.group("g/")

    mf = None
    if metrics_path is not None:
        import os
        new = not os.path.exists(metrics_path)
        mf = open(metrics_path, "a")
        if new:
            mf.write("iter,L_D,L*_G,content,style,wall_ms\n")

    try:
        for _ in range(n_iter):
            t0 = time.perf_counter()
            idx = state.rng.integers(0, len(dataset), size=hp.batch)
            batch = [dataset[i] for i in idx]

            # generator forwards, reused by both phases of this iteration
            ytilde = [generator_forward(ad.constant(x), state.params,
                                        state.scale) for x, _ in batch]

            # critic phase: one ADAM step on d/ and p/
            l_d = losses.loss_discriminator(batch, state.params, state.scale,
                                            state.rng, lam=hp.lam,
                                            ytilde=ytilde)
            wrt = [state.params[n] for n in d_names]
            grads = ad.backward(l_d, wrt, create_graph=False)
            state.t_d += 1
            adam_step(state.params, {n: g.data for n, g in zip(d_names, grads)},
                      (state.m, state.v), hp.lr_d, hp.beta1, hp.beta2,
                      hp.adam_eps, state.t_d)

            # generator phase: one ADAM step on g/, critic and P frozen
            content_log = 0.0
            style_log = 0.0
            if state.objective == "star":
                total = None
                for i, (x_arr, y_arr) in enumerate(batch):
                    x = ad.constant(x_arr)
                    with ad.no_grad():
                        px = pnet_forward(x, state.params, state.scale)
                        fy = discriminator_features(ad.constant(y_arr), px,
                                                    state.params)
                        fy = [f.detach() for f in fy]
                    fg = discriminator_features(ytilde[i], px.detach(),
                                                state.params)
                    c = losses.content_from_features(fy, fg)
                    s = losses.style_from_features(fy, fg)
                    content_log += c.item()
                    style_log += s.item()
                    term = ad.add(ad.scalar_mul(c, hp.alpha),
                                  ad.scalar_mul(s, hp.beta))
                    total = term if total is None else ad.add(total, term)
                l_g = ad.scalar_mul(total, 1.0 / len(batch))
            else:
                l_g = losses.loss_generator_wgan(batch, state.params,
                                                 state.scale, ytilde=ytilde)
                with ad.no_grad():
                    for i, (x_arr, y_arr) in enumerate(batch):
                        x = ad.constant(x_arr)
                        px = pnet_forward(x, state.params, state.scale)
                        fy = discriminator_features(ad.constant(y_arr), px,
                                                    state.params)
                        fg = discriminator_features(ytilde[i].detach(), px,
                                                    state.params)
                        content_log += losses.content_from_features(fy, fg).item()
                        style_log += losses.style_from_features(fy, fg).item()
            content_log /= len(batch)
            style_log /= len(batch)

            wrt = [state.params[n] for n in g_names]
            grads = ad.backward(l_g, wrt, create_graph=False)
            state.t_g += 1
            adam_step(state.params, {n: g.data for n, g in zip(g_names, grads)},
                      (state.m, state.v), hp.lr_g, hp.beta1, hp.beta2,
                      hp.adam_eps, state.t_g)

            state.iteration += 1
            wall_ms = (time.perf_counter() - t0) * 1000.0
            if mf is not None:
                mf.write(f"{state.iteration},{l_d.item():.10g},"
                         f"{l_g.item():.10g},{content_log:.10g},"
                         f"{style_log:.10g},{wall_ms:.3f}\n")
                mf.flush()
            if log is not None:
                log(state.iteration, l_d.item(), l_g.item(), content_log,
                    style_log, wall_ms)
            if (ckpt_stem is not None and ckpt_interval > 0
                    and state.iteration % ckpt_interval == 0):
                save_state(ckpt_stem, state)
    finally:
        if mf is not None:
            mf.close()
    if ckpt_stem is not None:
        save_state(ckpt_stem, state)
    return state
