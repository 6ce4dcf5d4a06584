"""Four-level hierarchical network linked by pixel (un)shuffling."""

from __future__ import annotations

from ..autograd import ops
from .base import ReconNetwork

LEVELS = 4


class HRNet(ReconNetwork):
    """Level ``i`` sees the RGB image unshuffled by ``2**i``.

    Levels run bottom-up. Each level embeds its input, fuses the
    pixel-shuffled output of the level below, then applies ``depth`` pairs of
    residual dense block and residual global block. The bottom level ends in a
    1x1 conv; the top level emits the spectral bands.

    Setting ``global_shortcut = False`` drops the identity path of every
    residual global block (used to show that path is live).
    """

    architecture = "HRNET"
    spatial_multiple = 2 ** (LEVELS - 1)

    def __init__(self, spec=None, seed=0):
        super().__init__(spec, seed)
        self.global_shortcut = True

    def build(self):
        s = self.spec
        c, g = s.base_channels, s.growth
        for i in range(LEVELS):
            p = f"level{i}"
            self.add_conv(f"{p}.embed", 3 * 4 ** i, c, 3)
            if i < LEVELS - 1:
                self.add_conv(f"{p}.fuse", c + c // 4, c, 3)
            for b in range(s.depth):
                q = f"{p}.rdb{b}"
                for j in range(4):
                    self.add_conv(f"{q}.conv{j}", c + j * g, g, 3)
                self.add_conv(f"{q}.conv4", c + 4 * g, c, 3)
                q = f"{p}.rgb{b}"
                hidden = max(1, c // 4)
                self.add_conv(f"{q}.conv", c, c, 3)
                self.add_conv(f"{q}.fc1", c, hidden, 1)
                self.add_conv(f"{q}.fc2", hidden, c, 1)
            if i == LEVELS - 1:
                self.add_conv(f"{p}.tail", c, c, 1)
        self.add_conv("head", c, s.out_bands, 3)

    def residual_dense_block(self, name, x):
        features = [x]
        for j in range(4):
            features.append(ops.relu(self.conv(f"{name}.conv{j}", ops.concat_channels(features))))
        return ops.add(x, self.conv(f"{name}.conv4", ops.concat_channels(features)))

    def residual_global_block(self, name, x):
        f = self.conv(f"{name}.conv", x)
        pooled = ops.global_avg_pool(f)
        gate = ops.sigmoid(self.conv(f"{name}.fc2", ops.relu(self.conv(f"{name}.fc1", pooled))))
        out = ops.mul(f, gate)
        return ops.add(x, out) if self.global_shortcut else out

    def forward(self, x):
        below = None
        self.traced_level_shapes = {}
        for i in reversed(range(LEVELS)):
            p = f"level{i}"
            h = self.conv(f"{p}.embed", ops.pixel_unshuffle(x, 2 ** i))
            if below is not None:
                h = self.conv(f"{p}.fuse", ops.concat_channels([h, ops.pixel_shuffle(below, 2)]))
            for b in range(self.spec.depth):
                h = self.residual_dense_block(f"{p}.rdb{b}", h)
                h = self.residual_global_block(f"{p}.rgb{b}", h)
            if i == LEVELS - 1:
                h = self.conv(f"{p}.tail", h)
            self.traced_level_shapes[i] = h.shape[2:]
            below = h
        return self.conv("head", below)
