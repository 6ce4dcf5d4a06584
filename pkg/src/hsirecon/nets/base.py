"""Shared plumbing for the RGB-to-spectrum networks."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autograd import Tensor, as_tensor, count_macs, no_grad, ops
from ..autograd.io import load_params, save_params

ARCHITECTURES = ("HSCNN_D", "HRNET", "MST_PP")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture plus the knobs that fix every parameter shape.

    ``depth`` is the dense-block count (HSCNN_D), blocks per level (HRNET) or
    stage count (MST_PP). ``growth`` is the dense growth rate (unused by
    MST_PP); ``heads`` is the attention head count at the top level of MST_PP;
    ``ffn_mult`` widens the MST_PP feed-forward layers.
    """

    architecture: str
    base_channels: int = 16
    depth: int = 4
    out_bands: int = 31
    growth: int = 8
    heads: int = 2
    ffn_mult: int = 4

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}; use one of {ARCHITECTURES}")
        for knob in ("base_channels", "depth", "out_bands", "growth", "heads", "ffn_mult"):
            if getattr(self, knob) < 1:
                raise ValueError(f"{knob} must be >= 1")
        if self.architecture == "HRNET" and self.base_channels % 4:
            raise ValueError("HRNET base_channels must be divisible by 4 (pixel shuffle x2)")
        if self.architecture == "MST_PP" and self.base_channels % self.heads:
            raise ValueError("MST_PP base_channels must be divisible by heads")

    def to_dict(self):
        return asdict(self)


def default_spec(architecture, out_bands=31):
    """Desk-scale default for each architecture."""
    if architecture == "HSCNN_D":
        return ModelSpec("HSCNN_D", base_channels=16, depth=4, growth=16, out_bands=out_bands)
    if architecture == "HRNET":
        return ModelSpec("HRNET", base_channels=16, depth=1, growth=8, out_bands=out_bands)
    if architecture == "MST_PP":
        return ModelSpec("MST_PP", base_channels=8, depth=2, heads=2, ffn_mult=4, out_bands=out_bands)
    raise ValueError(f"unknown architecture {architecture!r}")


class ReconNetwork:
    """Parameter container and forward pass mapping RGB ``[3,H,W]`` to ``[λ,H,W]``.

    Subclasses declare parameters in ``build`` with :meth:`add_conv` /
    :meth:`add_param` and implement ``forward`` on a batch ``[N,3,H,W]``.
    Parameters are initialised uniformly in ``±sqrt(6 / (fan_in + fan_out))``
    from ``seed``; biases start at zero.
    """

    architecture = None
    spatial_multiple = 1

    def __init__(self, spec=None, seed=0):
        spec = spec or default_spec(self.architecture)
        if spec.architecture != self.architecture:
            raise ValueError(f"{type(self).__name__} needs a {self.architecture} spec")
        self.spec = spec
        self.seed = seed
        self.params = {}
        self._depthwise = set()
        self._rng = np.random.default_rng(seed)
        self.build()
        self._rng = None

    def build(self):
        raise NotImplementedError

    def forward(self, x):
        raise NotImplementedError

    # parameter declaration

    def add_param(self, name, shape, fill=None, fan=None):
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        if fill is not None:
            data = np.full(shape, float(fill))
        else:
            fan_in, fan_out = fan
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            data = self._rng.uniform(-bound, bound, size=shape)
        self.params[name] = Tensor(data, requires_grad=True, name=name)
        return self.params[name]

    def add_conv(self, name, c_in, c_out, k, bias=True, depthwise=False):
        per_group = 1 if depthwise else c_in
        fan_in = per_group * k * k
        fan_out = (1 if depthwise else c_out) * k * k
        if depthwise:
            self._depthwise.add(name)
        self.add_param(f"{name}.weight", (c_out, per_group, k, k), fan=(fan_in, fan_out))
        if bias:
            self.add_param(f"{name}.bias", (c_out,), fill=0.0)

    def add_linear(self, name, c_in, c_out, bias=True):
        self.add_param(f"{name}.weight", (c_in, c_out), fan=(c_in, c_out))
        if bias:
            self.add_param(f"{name}.bias", (c_out,), fill=0.0)

    def conv(self, name, x, padding="same"):
        w = self.params[f"{name}.weight"]
        b = self.params.get(f"{name}.bias")
        groups = w.shape[0] if name in self._depthwise else 1
        return ops.conv2d(x, w, b, padding=padding, groups=groups)

    # public API

    def __call__(self, rgb):
        x = as_tensor(rgb)
        single = x.ndim == 3
        if single:
            x = ops.reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ValueError(f"expected RGB input [3,H,W] or [N,3,H,W], got {x.shape}")
        h, w = x.shape[2:]
        m = self.spatial_multiple
        if h % m or w % m:
            raise ValueError(f"{self.architecture} needs H and W divisible by {m}, got {h}x{w}")
        out = self.forward(x)
        return ops.reshape(out, out.shape[1:]) if single else out

    def predict(self, rgb):
        """Inference without graph construction; returns a numpy array."""
        with no_grad():
            return self(rgb).data

    def parameters(self):
        return list(self.params.values())

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params.values()))

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise ValueError(f"parameter names differ: {sorted(missing)}")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self.params[name].shape:
                raise ValueError(f"{name}: shape {value.shape} != {self.params[name].shape}")
            self.params[name].data = value.copy()

    def save(self, path):
        save_params(self.params, path)

    def load(self, path):
        self.load_state_dict(load_params(path))
        return self

    def __repr__(self):
        return f"{type(self).__name__}({self.spec}, params={self.n_params})"


def build_network(spec, seed=0):
    from .hrnet import HRNet
    from .hscnn_d import HSCNND
    from .mst import MSTPlusPlus

    cls = {"HSCNN_D": HSCNND, "HRNET": HRNet, "MST_PP": MSTPlusPlus}[spec.architecture]
    return cls(spec, seed=seed)


def count_params_flops(spec, height, width):
    """Exact parameter count and multiply-accumulates of one forward pass.

    MACs cover every convolution and matrix product for a single ``[3,H,W]``
    input; elementwise work is not counted.
    """
    net = build_network(spec)
    with no_grad(), count_macs() as tally:
        net(np.zeros((3, height, width)))
    return {"params": net.n_params, "macs": tally["count"]}
