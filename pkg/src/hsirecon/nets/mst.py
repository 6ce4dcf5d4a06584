"""Multi-stage spectral-wise transformer.

Attention here runs across channels: each channel's flattened feature map is
one token, so the attention matrix is channels x channels per head and does
not grow with the image.
"""

from __future__ import annotations

import numpy as np

from ..autograd import ops
from .base import ReconNetwork


def s_msa(x, params, heads, return_attention=False):
    """Spectral-wise multi-head self-attention on ``x`` [N,C,H,W].

    ``params`` maps ``q``, ``k``, ``v`` (C x C), ``proj_w`` (C x C),
    ``proj_b`` (C), ``rescale`` (heads) and ``pos_w`` (depthwise [C,1,3,3])
    to tensors. Per head, queries and keys are L2-normalised over pixels,
    ``softmax(rescale * K Q^T)`` weights the value rows, heads are
    re-concatenated and projected, and a depthwise conv of the values is added
    as the position term.
    """
    n, c, h, w = x.shape
    if c % heads:
        raise ValueError(f"{c} channels not divisible by {heads} heads")
    d = c // heads
    tokens = ops.reshape(ops.transpose(x, (0, 2, 3, 1)), (n, h * w, c))
    q = ops.matmul(tokens, params["q"])
    k = ops.matmul(tokens, params["k"])
    v = ops.matmul(tokens, params["v"])

    def split(t):  # [N,HW,C] -> [N,heads,d,HW]
        return ops.transpose(ops.reshape(t, (n, h * w, heads, d)), (0, 2, 3, 1))

    qh = ops.l2_normalize(split(q), axis=-1)
    kh = ops.l2_normalize(split(k), axis=-1)
    vh = split(v)
    logits = ops.matmul(kh, ops.transpose(qh, (0, 1, 3, 2)))
    logits = ops.mul(logits, ops.reshape(params["rescale"], (1, heads, 1, 1)))
    attn = ops.softmax(logits, axis=-1)  # [N,heads,d,d]
    mixed = ops.matmul(attn, vh)  # [N,heads,d,HW]
    merged = ops.reshape(ops.transpose(mixed, (0, 3, 1, 2)), (n, h * w, c))
    out = ops.add(ops.matmul(merged, params["proj_w"]), params["proj_b"])
    out = ops.transpose(ops.reshape(out, (n, h, w, c)), (0, 3, 1, 2))
    v_img = ops.transpose(ops.reshape(v, (n, h, w, c)), (0, 3, 1, 2))
    pos = ops.conv2d(v_img, params["pos_w"], None, padding="same", groups=c)
    out = ops.add(out, pos)
    return (out, attn) if return_attention else out


def block_diagonal(attn):
    """Expand per-head maps [heads,d,d] into the full C x C channel matrix."""
    attn = np.asarray(attn)
    heads, d, _ = attn.shape
    full = np.zeros((heads * d, heads * d))
    for j in range(heads):
        full[j * d:(j + 1) * d, j * d:(j + 1) * d] = attn[j]
    return full


class MSTPlusPlus(ReconNetwork):
    """conv_in, ``depth`` U-shaped stages with a long residual, conv_out.

    Each stage: embedding conv, attention block at width C, down-sampling
    (unshuffle x2 then 1x1 to 2C), attention block at 2C, up-sampling (1x1 to
    4C then shuffle x2), 1x1 fusion with the encoder skip, attention block at
    C, mapping conv, plus the stage input. Head dimension is fixed, so the
    bottleneck uses twice the heads.
    """

    architecture = "MST_PP"
    spatial_multiple = 2

    def build(self):
        s = self.spec
        c = s.base_channels
        self.add_conv("conv_in", 3, c, 3, bias=False)
        for t in range(s.depth):
            p = f"stage{t}"
            self.add_conv(f"{p}.embed", c, c, 3, bias=False)
            self._add_msab(f"{p}.enc", c, s.heads)
            self.add_conv(f"{p}.down", 4 * c, 2 * c, 1, bias=False)
            self._add_msab(f"{p}.mid", 2 * c, 2 * s.heads)
            self.add_conv(f"{p}.up", 2 * c, 4 * c, 1, bias=False)
            self.add_conv(f"{p}.fuse", 2 * c, c, 1, bias=False)
            self._add_msab(f"{p}.dec", c, s.heads)
            self.add_conv(f"{p}.mapping", c, c, 3, bias=False)
        self.add_conv("conv_out", c, s.out_bands, 3, bias=False)

    def _add_msab(self, p, c, heads):
        for name in ("q", "k", "v"):
            self.add_param(f"{p}.attn.{name}", (c, c), fan=(c, c))
        self.add_param(f"{p}.attn.rescale", (heads,), fill=1.0)
        self.add_param(f"{p}.attn.proj_w", (c, c), fan=(c, c))
        self.add_param(f"{p}.attn.proj_b", (c,), fill=0.0)
        self.add_conv(f"{p}.attn.pos", c, c, 3, bias=False, depthwise=True)
        self.add_param(f"{p}.norm.weight", (c,), fill=1.0)
        self.add_param(f"{p}.norm.bias", (c,), fill=0.0)
        m = self.spec.ffn_mult * c
        self.add_conv(f"{p}.ffn.expand", c, m, 1, bias=False)
        self.add_conv(f"{p}.ffn.dw", m, m, 3, bias=False, depthwise=True)
        self.add_conv(f"{p}.ffn.reduce", m, c, 1, bias=False)

    def attention_params(self, p):
        a = f"{p}.attn"
        return {
            "q": self.params[f"{a}.q"],
            "k": self.params[f"{a}.k"],
            "v": self.params[f"{a}.v"],
            "proj_w": self.params[f"{a}.proj_w"],
            "proj_b": self.params[f"{a}.proj_b"],
            "rescale": self.params[f"{a}.rescale"],
            "pos_w": self.params[f"{a}.pos.weight"],
        }

    def msab(self, p, x, heads):
        """Attention block: ``x + S-MSA(x)``, then ``x + FFN(LN(x))``."""
        attended, attn = s_msa(x, self.attention_params(p), heads, return_attention=True)
        self.attention_maps[p] = attn.data
        x = ops.add(x, attended)
        y = ops.layer_norm_channels(x, self.params[f"{p}.norm.weight"], self.params[f"{p}.norm.bias"])
        y = ops.relu(self.conv(f"{p}.ffn.expand", y))
        y = ops.relu(self.conv(f"{p}.ffn.dw", y))
        return ops.add(x, self.conv(f"{p}.ffn.reduce", y))

    def stage(self, t, x):
        p, heads = f"stage{t}", self.spec.heads
        fea = self.conv(f"{p}.embed", x)
        enc = self.msab(f"{p}.enc", fea, heads)
        mid = self.conv(f"{p}.down", ops.pixel_unshuffle(enc, 2))
        mid = self.msab(f"{p}.mid", mid, 2 * heads)
        up = ops.pixel_shuffle(self.conv(f"{p}.up", mid), 2)
        dec = self.conv(f"{p}.fuse", ops.concat_channels([up, enc]))
        dec = self.msab(f"{p}.dec", dec, heads)
        return ops.add(self.conv(f"{p}.mapping", dec), x)

    def forward(self, x):
        self.attention_maps = {}
        emb = self.conv("conv_in", x)
        h = emb
        for t in range(self.spec.depth):
            h = self.stage(t, h)
        return self.conv("conv_out", ops.add(h, emb))
