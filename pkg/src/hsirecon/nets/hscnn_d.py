"""Densely connected RGB-to-spectrum CNN with path-widening fusion blocks."""

from __future__ import annotations

from ..autograd import ops
from .base import ReconNetwork


class HSCNND(ReconNetwork):
    """Stem conv, ``depth`` dense blocks, 1x1 output conv.

    Block ``k`` reads the channel concatenation of the stem output and every
    earlier block output, so its input width is ``base + k * growth``. Inside
    a block two parallel branches (1x1 and 3x3 conv) are summed and rectified.
    """

    architecture = "HSCNN_D"

    def block_input_channels(self):
        s = self.spec
        return [s.base_channels + k * s.growth for k in range(s.depth)]

    def build(self):
        s = self.spec
        self.add_conv("stem", 3, s.base_channels, 3)
        for k, c_in in enumerate(self.block_input_channels()):
            self.add_conv(f"block{k}.narrow", c_in, s.growth, 1)
            self.add_conv(f"block{k}.wide", c_in, s.growth, 3)
        self.add_conv("head", s.base_channels + s.depth * s.growth, s.out_bands, 1)

    def forward(self, x):
        features = [ops.relu(self.conv("stem", x))]
        self.traced_block_inputs = []
        for k in range(self.spec.depth):
            inp = ops.concat_channels(features)
            self.traced_block_inputs.append(inp.shape[1])
            fused = ops.add(self.conv(f"block{k}.narrow", inp), self.conv(f"block{k}.wide", inp))
            features.append(ops.relu(fused))
        return self.conv("head", ops.concat_channels(features))
