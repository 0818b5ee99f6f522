"""Generator, discriminator, and the 2D-to-3D projection network P.

Layer plan (full scale): the generator downsamples the 4-channel 1024^2
input through three stride-2 residual stages (channels 16, 64, 256) plus one
identity residual stage, then three parallel head blocks encode the latent
code into 96 channels each, reshaped by the dimension-expansion layer into
1-channel volumes, concatenated and refined by two 3D residual blocks.  The
discriminator concatenates a volume with P(X) and applies five stride-2 3D
convolutions followed by a fully connected score.

All convolutions use 5x5 (2D) or 3^3 (3D) kernels, SAME padding, and a ReLU;
a ScaleConfig divides resolutions by k and channel widths by chan_div for
desk-scale runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidConfig, ShapeError

BASE_IMG = 1024
BASE_VOL = (128, 128, 96)

GEN_STAGE_CH = ((16, 8), (64, 32), (256, 128))  # (out, mid) per stride-2 stage
HEAD_MID_CH = 128
PNET_CH = (32, 64, 128)
DISC_CH = (32, 64, 128, 256, 512)


@dataclass(frozen=True)
class ScaleConfig:
    k: int = 1
    chan_div: int = 0  # 0 -> same as k

    def __post_init__(self):
        if self.k not in (1, 2, 4, 8):
            raise InvalidConfig("scale divisor k must be one of 1, 2, 4, 8")
        if self.chan_div == 0:
            object.__setattr__(self, "chan_div", self.k)
        if self.chan_div < 1:
            raise InvalidConfig("chan_div must be >= 1")

    @property
    def img_res(self) -> int:
        return BASE_IMG // self.k

    @property
    def vol_res(self) -> tuple:
        return tuple(v // self.k for v in BASE_VOL)

    @property
    def zdim(self) -> int:
        return BASE_VOL[2] // self.k

    def ch(self, c: int) -> int:
        return max(1, c // self.chan_div)


def net_input(x_img: np.ndarray) -> np.ndarray:
    """Image-convention input maps (row down, column right) reordered to the
    volume's axis convention (x, y up).

    Convolutions are translation-equivariant and cannot express a global
    transpose or flip, so the 2D input axes must line up with the first two
    volume axes before entering the networks.
    """
    return np.ascontiguousarray(np.transpose(x_img[::-1, :, :], (1, 0, 2)))


# ----------------------------------------------------------- initialization

def _he(rng, shape, gain):
    fan_in = int(np.prod(shape[:-1]))
    return rng.normal(0.0, gain / np.sqrt(fan_in), size=shape)


def _conv_param(params, rng, name, cin, cout, three_d=False):
    k = (3, 3, 3) if three_d else (5, 5)
    shape = k + (cin, cout)
    params[name + ".w"] = ad.Tensor(_he(rng, shape, np.sqrt(2.0)))
    params[name + ".b"] = ad.Tensor(np.zeros(cout))


def init_generator(scale: ScaleConfig, rng) -> dict:
    p = {}
    cin = 4
    for i, (out, mid) in enumerate(GEN_STAGE_CH, start=1):
        out, mid = scale.ch(out), scale.ch(mid)
        _conv_param(p, rng, f"g/enc{i}/main", cin, out, False)
        _conv_param(p, rng, f"g/enc{i}/a", cin, mid, False)
        _conv_param(p, rng, f"g/enc{i}/b", mid, out, False)
        cin = out
    _conv_param(p, rng, "g/enc4/a", cin, cin, False)
    _conv_param(p, rng, "g/enc4/b", cin, cin, False)
    for h in "xyz":
        for r in (1, 2):
            _conv_param(p, rng, f"g/head_{h}/r{r}a", cin, cin, False)
            _conv_param(p, rng, f"g/head_{h}/r{r}b", cin, cin, False)
        mid = scale.ch(HEAD_MID_CH)
        _conv_param(p, rng, f"g/head_{h}/c1", cin, mid, False)
        _conv_param(p, rng, f"g/head_{h}/c2", mid, scale.zdim, False)
    for t in (1, 2):
        _conv_param(p, rng, f"g/tail{t}a", 3, 3, True)
        _conv_param(p, rng, f"g/tail{t}b", 3, 3, True)
    return p


def init_pnet(scale: ScaleConfig, rng) -> dict:
    p = {}
    cin = 4
    for i, c in enumerate(PNET_CH, start=1):
        c = scale.ch(c)
        _conv_param(p, rng, f"p/c{i}", cin, c, False)
        cin = c
    _conv_param(p, rng, "p/c4", cin, scale.zdim, False)
    return p


def init_discriminator(scale: ScaleConfig, rng) -> dict:
    p = {}
    cin = 4  # 3 volume channels + 1 latent channel
    for i, c in enumerate(DISC_CH, start=1):
        c = scale.ch(c)
        _conv_param(p, rng, f"d/c{i}", cin, c, True)
        cin = c
    spatial = scale.vol_res
    for _ in DISC_CH:
        spatial = tuple(-(-e // 2) for e in spatial)
    n_in = int(np.prod(spatial)) * cin
    p["d/fc.w"] = ad.Tensor(_he(rng, (n_in, 1), 1.0).reshape(n_in))
    p["d/fc.b"] = ad.Tensor(np.zeros(()))
    return p


# ----------------------------------------------------------------- forwards

def _conv(params, name, x, stride, three_d=False):
    op = ad.conv3d if three_d else ad.conv2d
    y = op(x, params[name + ".w"], stride)
    return ad.relu(ad.add_bias(y, params[name + ".b"]))


def _res_proj(params, base, x, stride):
    main = _conv(params, base + "/main", x, stride)
    branch = _conv(params, base + "/b", _conv(params, base + "/a", x, stride), 1)
    return ad.add(main, branch)


def _res_ident(params, a, b, x, three_d=False):
    inner = _conv(params, a, x, 1, three_d=three_d)
    return ad.add(x, _conv(params, b, inner, 1, three_d=three_d))


def generator_forward(x: ad.Tensor, params: dict,
                      scale: ScaleConfig) -> ad.Tensor:
    """X (img, img, 4) -> raw volume (128/k, 128/k, 96/k, 3).

    Output is unclamped; clip to [0, 1] at inference only.
    """
    r = scale.img_res
    if x.data.shape != (r, r, 4):
        raise ShapeError(f"generator input must be {(r, r, 4)}, "
                         f"got {x.data.shape}")
    h = x
    for i in range(1, 4):
        h = _res_proj(params, f"g/enc{i}", h, 2)
    h = _res_ident(params, "g/enc4/a", "g/enc4/b", h)

    vols = []
    for hd in "xyz":
        t = h
        for rblk in (1, 2):
            t = _res_ident(params, f"g/head_{hd}/r{rblk}a",
                           f"g/head_{hd}/r{rblk}b", t)
        t = _conv(params, f"g/head_{hd}/c1", t, 1)
        t = _conv(params, f"g/head_{hd}/c2", t, 1)
        vols.append(ad.dim_expand(t))
    v = ad.concat_channels(vols)
    for tb in (1, 2):
        v = _res_ident(params, f"g/tail{tb}a", f"g/tail{tb}b", v,
                       three_d=True)
    return v


def pnet_forward(x: ad.Tensor, params: dict,
                 scale: ScaleConfig) -> ad.Tensor:
    """X -> 1-channel 3D latent with the volume's extents."""
    r = scale.img_res
    if x.data.shape != (r, r, 4):
        raise ShapeError(f"P input must be {(r, r, 4)}, got {x.data.shape}")
    h = x
    for i, stride in ((1, 2), (2, 2), (3, 2), (4, 1)):
        h = _conv(params, f"p/c{i}", h, stride)
    return ad.dim_expand(h)


def discriminator_features(v: ad.Tensor, px: ad.Tensor,
                           params: dict) -> list:
    """[f0..f6]: raw volume, five 3D conv activations, scalar score."""
    if v.data.shape[:3] != px.data.shape[:3]:
        raise ShapeError("volume and latent spatial extents differ")
    feats = [v]
    h = ad.concat_channels([v, px])
    for i in range(1, 6):
        h = _conv(params, f"d/c{i}", h, 2, three_d=True)
        feats.append(h)
    feats.append(ad.dense(h, params["d/fc.w"], params["d/fc.b"]))
    return feats


def discriminator_score(v, px, params) -> ad.Tensor:
    return discriminator_features(v, px, params)[-1]


# --------------------------------------------------------------- shape plan

def _ceil_div(n, s):
    return -(-n // s)


def expected_shapes(scale: ScaleConfig) -> dict:
    """Shape propagation through the layer plan without running convs."""
    img = scale.img_res
    enc = img
    for _ in range(3):
        enc = _ceil_div(enc, 2)
    v1, v2, v3 = scale.vol_res
    disc = []
    d = (v1, v2, v3)
    for c in DISC_CH:
        d = tuple(_ceil_div(e, 2) for e in d)
        disc.append(d + (scale.ch(c),))
    return {
        "encoder_out": (enc, enc, scale.ch(256)),
        "generator_out": (v1, v2, v3, 3),
        "pnet_out": (v1, v2, v3, 1),
        "disc_layers": disc,
        "score": (),
    }
