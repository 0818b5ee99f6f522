"""Adversarial and perceptual losses.

The critic objective is the gradient-penalty Wasserstein form; the generator
is trained either on the plain critic score (baseline mode, kept for the
ablation) or on content + style distances measured in selected discriminator
layers, Gram matrices for style.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidInput
from .networks import (ScaleConfig, discriminator_features, generator_forward,
                       pnet_forward)

CONTENT_LAYERS = (0, 3, 6)
STYLE_LAYERS = (0, 1, 2, 3, 4)

# keeps the gradient norm differentiable at exactly zero gradient
_NORM_EPS = 1e-12


def gram(f: ad.Tensor) -> ad.Tensor:
    """A_ij = sum_k f_ik f_jk over the flattened spatial index k."""
    if f.data.ndim < 1:
        raise InvalidInput("gram needs a tensor with a channel axis")
    n = f.data.shape[-1]
    m = f.data.size // n
    fm = ad.reshape(f, (m, n))
    return ad.matmul(ad.transpose2d(fm), fm)


def _feat_dims(f: ad.Tensor):
    if f.data.ndim == 0:
        return 1, 1
    n = f.data.shape[-1]
    return n, f.data.size // n


def content_from_features(fy: list, fg: list, layers=CONTENT_LAYERS) -> ad.Tensor:
    total = None
    for l in layers:
        d = ad.sub(fy[l], fg[l])
        term = ad.scalar_mul(ad.sum_all(ad.square(d)), 0.5)
        total = term if total is None else ad.add(total, term)
    return total


def style_from_features(fy: list, fg: list, layers=STYLE_LAYERS) -> ad.Tensor:
    total = None
    for l in layers:
        n, m = _feat_dims(fy[l])
        da = ad.sub(gram(fy[l]), gram(fg[l]))
        term = ad.scalar_mul(ad.sum_all(ad.square(da)),
                             1.0 / (4.0 * n * n * m * m))
        total = term if total is None else ad.add(total, term)
    return total


def loss_content(y: ad.Tensor, ytilde: ad.Tensor, px: ad.Tensor,
                 params: dict, layers=CONTENT_LAYERS) -> ad.Tensor:
    """Sum over selected layers of half squared feature distances.

    Layer 0 compares the raw volumes, so P(X) drops out of it.
    """
    fy = discriminator_features(y, px, params)
    fg = discriminator_features(ytilde, px, params)
    return content_from_features(fy, fg, layers)


def loss_style(y: ad.Tensor, ytilde: ad.Tensor, px: ad.Tensor,
               params: dict, layers=STYLE_LAYERS) -> ad.Tensor:
    """Mean-squared Gram distance, normalized by 1 / (4 N_l^2 M_l^2)."""
    fy = discriminator_features(y, px, params)
    fg = discriminator_features(ytilde, px, params)
    return style_from_features(fy, fg, layers)


def gradient_penalty(yhat: ad.Tensor, px: ad.Tensor,
                     params: dict) -> ad.Tensor:
    """(||grad_yhat D(yhat, PX)||_2 - 1)^2, differentiable in the weights."""
    score = discriminator_features(yhat, px, params)[-1]
    (g,) = ad.backward(score, [yhat], create_graph=True)
    norm = ad.sqrt(ad.add(ad.sum_all(ad.square(g)), ad.constant(_NORM_EPS)))
    return ad.square(ad.sub(norm, ad.constant(np.ones(()))))


def loss_discriminator(batch, params: dict, scale: ScaleConfig, rng,
                       lam: float = 10.0, ytilde=None) -> ad.Tensor:
    """Mean over the batch of D(fake) - D(real) + lam * gradient penalty.

    One epsilon draw per batch element; generated volumes are constants
    w.r.t. the critic parameters.
    """
    if len(batch) < 1:
        raise InvalidInput("batch must contain at least one pair")
    terms = None
    for i, (x_arr, y_arr) in enumerate(batch):
        x = ad.constant(x_arr)
        if ytilde is None:
            with ad.no_grad():
                yt = generator_forward(x, params, scale)
            yt = yt.detach()
        else:
            yt = ytilde[i].detach()
        y = ad.constant(y_arr)
        px = pnet_forward(x, params, scale)
        s_fake = discriminator_features(yt, px, params)[-1]
        s_real = discriminator_features(y, px, params)[-1]
        eps = float(rng.random())
        yhat = ad.add(ad.scalar_mul(y, eps), ad.scalar_mul(yt, 1.0 - eps))
        pen = gradient_penalty(yhat, px, params)
        term = ad.add(ad.sub(s_fake, s_real), ad.scalar_mul(pen, lam))
        terms = term if terms is None else ad.add(terms, term)
    return ad.scalar_mul(terms, 1.0 / len(batch))


def loss_generator_wgan(batch, params: dict, scale: ScaleConfig,
                        ytilde=None) -> ad.Tensor:
    """Baseline generator objective: negative mean critic score."""
    if len(batch) < 1:
        raise InvalidInput("batch must contain at least one pair")
    total = None
    for i, (x_arr, _) in enumerate(batch):
        x = ad.constant(x_arr)
        yt = ytilde[i] if ytilde is not None else \
            generator_forward(x, params, scale)
        with ad.no_grad():
            px = pnet_forward(x, params, scale)
        s = discriminator_features(yt, px.detach(), params)[-1]
        total = s if total is None else ad.add(total, s)
    return ad.scalar_mul(total, -1.0 / len(batch))


def loss_generator_star(batch, params: dict, scale: ScaleConfig,
                        alpha: float = 1e-2, beta: float = 5.0,
                        content_layers=CONTENT_LAYERS,
                        style_layers=STYLE_LAYERS,
                        ytilde=None) -> ad.Tensor:
    """alpha * content + beta * style, critic and P frozen; batch mean."""
    if len(batch) < 1:
        raise InvalidInput("batch must contain at least one pair")
    total = None
    for i, (x_arr, y_arr) in enumerate(batch):
        x = ad.constant(x_arr)
        yt = ytilde[i] if ytilde is not None else \
            generator_forward(x, params, scale)
        with ad.no_grad():
            px = pnet_forward(x, params, scale)
            fy = discriminator_features(ad.constant(y_arr), px, params)
            fy = [f.detach() for f in fy]
        fg = discriminator_features(yt, px.detach(), params)
        c = content_from_features(fy, fg, content_layers)
        s = style_from_features(fy, fg, style_layers)
        term = ad.add(ad.scalar_mul(c, alpha), ad.scalar_mul(s, beta))
        total = term if total is None else ad.add(total, term)
    return ad.scalar_mul(total, 1.0 / len(batch))
