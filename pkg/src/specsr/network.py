"""Multiscale densely-connected network for spectral super-resolution.

The architecture maps a broad-band image (e.g. 3-channel RGB) to a
hyperspectral cube of equal spatial size: a stem convolution, a down path of
dense blocks with 1x1-conv + max-pool transitions, a bottleneck dense block,
and a mirrored up path whose transitions upsample with a 3x3 convolution
followed by subpixel (pixel-shuffle) rearrangement, concatenating the skip
recorded before each pooling step. The head is a linear 1x1 convolution.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import tensor_core as tc
from .errors import ConfigError, InputError, ParameterError, ShapeError
from .optim import ParamStore, he_uniform_init


@dataclass
class NetworkSpec:
    """Declarative architecture description."""

    in_channels: int = 3
    out_channels: int = 31
    num_scales: int = 5
    layers_per_block: int = 4
    growth_filters: int = 16
    stem_filters: int = 32
    dropout_rate: float = 0.5

    def validate(self) -> None:
        for f in fields(self):
            if f.name == "dropout_rate":
                continue
            if getattr(self, f.name) < 1:
                raise ParameterError(f"{f.name} must be >= 1, got {getattr(self, f.name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def tile_divisor(self) -> int:
        return 2**self.num_scales

    def to_config_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_config_text(cls, text: str) -> "NetworkSpec":
        known = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for ln, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in known:
                raise ConfigError(f"line {ln}: unknown key {key!r}")
            try:
                values[key] = float(val) if key == "dropout_rate" else int(val)
            except ValueError as e:
                raise ConfigError(f"line {ln}: bad value for {key!r}: {val!r}") from e
        spec = cls(**values)
        spec.validate()
        return spec

    def spec_hash(self) -> str:
        return hashlib.sha256(self.to_config_text().encode("utf-8")).hexdigest()[:16]


class Conv2dLayer:
    """Stateful wrapper over the conv2d kernels, parameters held in a ParamStore."""

    def __init__(self, store: ParamStore, name: str, in_ch: int, out_ch: int,
                 ksize: int, rng: np.random.Generator):
        self.pad = (ksize - 1) // 2
        fan_in = in_ch * ksize * ksize
        self.w = store.add(f"{name}.w", he_uniform_init((out_ch, in_ch, ksize, ksize), fan_in, rng))
        self.b = store.add(f"{name}.b", np.zeros(out_ch, dtype=np.float32), is_weight=False)
        self._x: np.ndarray | None = None
        self._xpt: np.ndarray | None = None

    def kernel(self) -> tc.ConvKernel:
        return tc.ConvKernel(self.w.value, self.b.value)

    def forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        xpt = tc.pad_cbhw(x, self.pad)
        if cache:
            self._x = x
            self._xpt = xpt  # reused by backward, saves a pad + transpose
        return tc.conv2d(x, self.kernel(), self.pad, xpt=xpt)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        gx, gw, gb = tc.conv2d_backward(self._x, self.kernel(), grad_out, self.pad,
                                        xpt=self._xpt)
        self._xpt = None
        self.w.grad += gw
        self.b.grad += gb
        return gx


class DenseLayer:
    """One composite layer of a dense block: ReLU -> 3x3 conv -> dropout."""

    def __init__(self, store, name, in_ch, growth, dropout_rate, rng):
        self.conv = Conv2dLayer(store, name, in_ch, growth, 3, rng)
        self.rate = dropout_rate
        self._x: np.ndarray | None = None
        self._mask: np.ndarray | None = None

    def forward(self, x, training, rng, cache) -> np.ndarray:
        if cache:
            self._x = x
        a = tc.relu(x)
        y = self.conv.forward(a, cache)
        y, mask = tc.dropout(y, self.rate, rng, training)
        if cache:
            self._mask = mask
        return y

    def backward(self, grad_out) -> np.ndarray:
        g = tc.dropout_backward(self._mask, self.rate, grad_out)
        g = self.conv.backward(g)
        return tc.relu_backward(self._x, g)


class DenseBlock:
    """Dense block: each layer consumes the concatenation of the block input
    and all previous layer outputs; the block output concatenates all of them.

    The concatenation is realized as a single feature buffer that layers read
    prefixes of and append their outputs to, so no per-layer copies happen."""

    def __init__(self, store, name, in_ch, layers, growth, dropout_rate, rng):
        self.in_ch = in_ch
        self.growth = growth
        self.layers = [
            DenseLayer(store, f"{name}.l{i}", in_ch + i * growth, growth, dropout_rate, rng)
            for i in range(layers)
        ]
        self.out_ch = in_ch + layers * growth

    def forward(self, x, training, rng, cache) -> np.ndarray:
        b, _, h, w = x.shape
        buf = np.empty((b, self.out_ch, h, w), dtype=x.dtype)
        buf[:, : self.in_ch] = x
        ch = self.in_ch
        for layer in self.layers:
            buf[:, ch : ch + self.growth] = layer.forward(buf[:, :ch], training, rng, cache)
            ch += self.growth
        return buf

    def backward(self, grad_out) -> np.ndarray:
        g = grad_out.copy()
        ch = self.out_ch
        for layer in reversed(self.layers):
            ch -= self.growth
            g[:, :ch] += layer.backward(g[:, ch : ch + self.growth])
        return g[:, : self.in_ch]


class TransitionDown:
    """Resolution-halving stage: channel-preserving 1x1 conv, then 2x2 max-pool."""

    def __init__(self, store, name, ch, rng):
        self.conv = Conv2dLayer(store, name, ch, ch, 1, rng)
        self._argmax: np.ndarray | None = None

    def forward(self, x, cache) -> np.ndarray:
        y = self.conv.forward(x, cache)
        y, argmax = tc.max_pool2x2(y)
        if cache:
            self._argmax = argmax
        return y

    def backward(self, grad_out) -> np.ndarray:
        g = tc.max_pool2x2_backward(self._argmax, grad_out)
        return self.conv.backward(g)


class TransitionUp:
    """Resolution-doubling stage: 3x3 conv to 4*target channels, then
    pixel shuffle with factor 2."""

    def __init__(self, store, name, in_ch, target_ch, rng):
        self.conv = Conv2dLayer(store, name, in_ch, 4 * target_ch, 3, rng)
        self.target_ch = target_ch

    def forward(self, x, cache) -> np.ndarray:
        return tc.pixel_shuffle(self.conv.forward(x, cache), 2)

    def backward(self, grad_out) -> np.ndarray:
        return self.conv.backward(tc.pixel_unshuffle(grad_out, 2))


class Network:
    """The assembled architecture plus its parameter store."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        spec.validate()
        self.spec = spec
        self.store = ParamStore()
        s = spec
        self.stem = Conv2dLayer(self.store, "stem", s.in_channels, s.stem_filters, 3, rng)

        block_growth = s.layers_per_block * s.growth_filters
        ch = s.stem_filters
        self.down: list[tuple[DenseBlock, TransitionDown]] = []
        self.skip_channels: list[int] = []
        for i in range(s.num_scales):
            block = DenseBlock(self.store, f"down{i}", ch, s.layers_per_block,
                               s.growth_filters, s.dropout_rate, rng)
            ch = block.out_ch
            # skip taps sit after the dense block, before pooling
            assert ch == s.stem_filters + block_growth * (i + 1), "channel bookkeeping broken"
            self.skip_channels.append(ch)
            td = TransitionDown(self.store, f"td{i}", ch, rng)
            self.down.append((block, td))

        self.bottleneck = DenseBlock(self.store, "bottleneck", ch, s.layers_per_block,
                                     s.growth_filters, s.dropout_rate, rng)
        ch = self.bottleneck.out_ch

        self.up: list[tuple[TransitionUp, DenseBlock]] = []
        for i in range(s.num_scales):
            skip_ch = self.skip_channels[s.num_scales - 1 - i]
            tu = TransitionUp(self.store, f"tu{i}", ch, block_growth, rng)
            block = DenseBlock(self.store, f"up{i}", block_growth + skip_ch,
                               s.layers_per_block, s.growth_filters, s.dropout_rate, rng)
            ch = block.out_ch
            self.up.append((tu, block))

        self.head = Conv2dLayer(self.store, "head", ch, s.out_channels, 1, rng)
        self._skips: list[np.ndarray] | None = None

    @property
    def num_params(self) -> int:
        return self.store.total_size

    def set_dtype(self, dtype) -> None:
        self.store.astype(dtype)

    def forward(self, x: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None, cache: bool | None = None) -> np.ndarray:
        """Run the network. `training` toggles dropout only; `cache` (default:
        same as training) retains activations for a subsequent backward()."""
        tc.check_tensor4(x)
        if x.shape[1] != self.spec.in_channels:
            raise ShapeError(
                f"network expects {self.spec.in_channels} input channels, got {x.shape[1]}"
            )
        div = self.spec.tile_divisor
        if x.shape[2] % div or x.shape[3] % div:
            raise ShapeError(
                f"spatial dims {x.shape[2]}x{x.shape[3]} must be multiples of {div}"
            )
        if cache is None:
            cache = training

        t = self.stem.forward(x, cache)
        skips = []
        for block, td in self.down:
            t = block.forward(t, training, rng, cache)
            skips.append(t)
            t = td.forward(t, cache)
        t = self.bottleneck.forward(t, training, rng, cache)
        for (tu, block), skip in zip(self.up, reversed(skips)):
            t = tu.forward(t, cache)
            t = tc.concat_channels([t, skip])
            t = block.forward(t, training, rng, cache)
        if cache:
            self._skips = skips
        return self.head.forward(t, cache)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Inference forward pass: no dropout, no activation caching."""
        return self.forward(x, training=False, cache=False)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Backpropagate through the cached forward pass; accumulates parameter
        gradients in the store and returns the gradient w.r.t. the input."""
        n = self.spec.num_scales
        block_growth = self.spec.layers_per_block * self.spec.growth_filters
        g = self.head.backward(grad_out)
        skip_grads: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        for i in range(n - 1, -1, -1):
            tu, block = self.up[i]
            g = block.backward(g)
            g_t, g_skip = tc.split_channels(g, [block_growth, self.skip_channels[n - 1 - i]])
            skip_grads[n - 1 - i] = g_skip
            g = tu.backward(g_t)
        g = self.bottleneck.backward(g)
        for i in range(n - 1, -1, -1):
            block, td = self.down[i]
            g = td.backward(g)
            g = g + skip_grads[i]
            g = block.backward(g)
        return self.stem.backward(g)


def build_network(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Instantiate the architecture with He-uniform weights and zero biases."""
    return Network(spec, rng)


# ---------------------------------------------------------------------------
# Whole-image tiled prediction
# ---------------------------------------------------------------------------


def tile_layout(extent: int, tile: int, overlap: int) -> list[tuple[int, int, int]]:
    """1-D tiling arithmetic: list of (origin, owned_start, owned_end).

    Tile origins step by tile - overlap; the last origin clamps to extent - tile.
    Consecutive tiles split their overlap at its midpoint, so every position is
    owned by exactly one tile and edge tiles keep their outward borders.
    """
    if extent < tile:
        raise InputError(f"extent {extent} smaller than tile {tile}; caller must pad")
    if not 0 <= overlap < tile:
        raise ParameterError(f"overlap must be in [0, tile), got {overlap}")
    origins = []
    pos = 0
    while True:
        if pos + tile >= extent:
            origins.append(extent - tile)
            break
        origins.append(pos)
        pos += tile - overlap
    bounds = [0]
    for prev, cur in zip(origins, origins[1:]):
        bounds.append((prev + tile + cur) // 2)
    bounds.append(extent)
    return [(o, bounds[i], bounds[i + 1]) for i, o in enumerate(origins)]


def predict_tiled(net: Network, image: np.ndarray, tile: int = 64, overlap: int = 8,
                  threads: int = 1) -> np.ndarray:
    """Predict a full (C, H, W) image by stitching independent tile predictions.

    Each output pixel is written exactly once, by the tile owning it under the
    half-overlap split; the result is deterministic and independent of threads.
    """
    if image.ndim != 3:
        raise ShapeError(f"expected (channels, height, width) image, got shape {image.shape}")
    c, h, w = image.shape
    if c != net.spec.in_channels:
        raise ShapeError(f"network expects {net.spec.in_channels} channels, image has {c}")
    rows = tile_layout(h, tile, overlap)
    cols = tile_layout(w, tile, overlap)
    out = np.empty((net.spec.out_channels, h, w), dtype=np.float32)

    def run(job):
        (oy, y0, y1), (ox, x0, x1) = job
        pred = net.predict(image[None, :, oy : oy + tile, ox : ox + tile])[0]
        out[:, y0:y1, x0:x1] = pred[:, y0 - oy : y1 - oy, x0 - ox : x1 - ox]

    jobs = [(r, c2) for r in rows for c2 in cols]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, jobs))
    else:
        for job in jobs:
            run(job)
    return out
