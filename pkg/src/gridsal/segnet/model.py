"""Encoder-decoder segmentation net with skip connections and a per-pixel
11-class softmax head.

Three encoder stages (2x[conv3x3+relu], maxpool2x2), a bottleneck, three
decoder stages (nearest upsample, skip concat, 2x[conv3x3+relu]) and a 1x1
projection. Nearest-neighbor upsampling in the decoder avoids checkerboard
artifacts that would leak into saliency maps. `width` scales all stage
channels; `growth` sets how fast they widen per stage (2.0 gives the
classic doubling pyramid, the default 1.5 keeps desk-scale training on a
single core affordable).
"""

from __future__ import annotations

import numpy as np

from gridsal.diffcore import (
    Tensor,
    concat_channels,
    conv2d,
    maxpool2x2,
    relu,
    softmax_channelwise,
    upsample_nearest2x,
)


class UNetLite:
    def __init__(self, width: int = 16, growth: float = 1.5, in_channels: int = 1,
                 n_classes: int = 11, seed: int = 0):
        if width < 1:
            raise ValueError("width must be >= 1")
        self.width = int(width)
        self.growth = float(growth)
        self.in_channels = int(in_channels)
        self.n_classes = int(n_classes)
        self.seed = int(seed)

        c1 = self.width
        c2 = max(1, round(width * growth))
        c3 = max(1, round(width * growth**2))
        cb = max(1, round(width * growth**3))
        self.stage_channels = (c1, c2, c3, cb)

        rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}

        def conv_param(name: str, cout: int, cin: int, k: int) -> None:
            fan_in = cin * k * k
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(cout, cin, k, k)).astype(np.float32)
            self.params[f"{name}.w"] = Tensor(w, requires_grad=True)
            self.params[f"{name}.b"] = Tensor(np.zeros(cout, np.float32), requires_grad=True)

        conv_param("enc1.0", c1, in_channels, 3)
        conv_param("enc1.1", c1, c1, 3)
        conv_param("enc2.0", c2, c1, 3)
        conv_param("enc2.1", c2, c2, 3)
        conv_param("enc3.0", c3, c2, 3)
        conv_param("enc3.1", c3, c3, 3)
        conv_param("bott.0", cb, c3, 3)
        conv_param("bott.1", cb, cb, 3)
        conv_param("dec3.0", c3, cb + c3, 3)
        conv_param("dec3.1", c3, c3, 3)
        conv_param("dec2.0", c2, c3 + c2, 3)
        conv_param("dec2.1", c2, c2, 3)
        conv_param("dec1.0", c1, c2 + c1, 3)
        conv_param("dec1.1", c1, c1, 3)
        conv_param("head", n_classes, c1, 1)

    def set_trainable(self, trainable: bool) -> None:
        """Toggle parameter gradients. Frozen parameters make inference and
        input-gradient passes skip all weight-gradient work."""
        for p in self.params.values():
            p.requires_grad = trainable

    def _block(self, x: Tensor, name: str) -> Tensor:
        x = relu(conv2d(x, self.params[f"{name}.0.w"], self.params[f"{name}.0.b"], padding=1))
        x = relu(conv2d(x, self.params[f"{name}.1.w"], self.params[f"{name}.1.b"], padding=1))
        return x

    def forward(self, x: Tensor) -> Tensor:
        """Input (N, C, H, W) with H, W divisible by 8; returns channelwise
        softmax probabilities (N, n_classes, H, W)."""
        if x.data.ndim != 4 or x.data.shape[1] != self.in_channels:
            raise ValueError(f"expected (N, {self.in_channels}, H, W) input")
        s1 = self._block(x, "enc1")
        s2 = self._block(maxpool2x2(s1), "enc2")
        s3 = self._block(maxpool2x2(s2), "enc3")
        b = self._block(maxpool2x2(s3), "bott")
        d3 = self._block(concat_channels([upsample_nearest2x(b), s3]), "dec3")
        d2 = self._block(concat_channels([upsample_nearest2x(d3), s2]), "dec2")
        d1 = self._block(concat_channels([upsample_nearest2x(d2), s1]), "dec1")
        logits = conv2d(d1, self.params["head.w"], self.params["head.b"])
        return softmax_channelwise(logits)

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())
