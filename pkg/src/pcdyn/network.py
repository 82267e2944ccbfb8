"""The shallow predictive-coding network, matched baselines, and unrolling.

The backbone is three conv-relu-pool stages (3 -> 12 -> 18 -> 24 channels,
5x5 kernels, stride-2 pooling) followed by a dense head (120 then 10 units).
Each stage doubles as a PCoder's feed-forward slice; its feedback decoder is
a bilinear 2x upsample plus a 3x3 transposed conv targeting the shape of the
layer below. Baselines share the head and pooling layout but widen kernels,
channels, or depth so each carries more parameters than the forward path.

Weights serialize to the PCW1 container: magic ``PCW1``, a u32 tensor count,
then per tensor a u32 name length, the UTF-8 name, u32 rank, u32 dims, and
raw little-endian float32 data. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .pcoder import ConvReluPool, Decoder, PCoder
from .tensor import Tensor

__all__ = [
    "Head",
    "PCNet",
    "BaselineNet",
    "UnrollResult",
    "build_shallow",
    "build_baseline",
    "unroll",
    "save_weights",
    "load_weights",
    "load_weights_into",
    "BASELINE_VARIANTS",
]

IMAGE_SHAPE = (3, 32, 32)
BASELINE_VARIANTS = ("same", "kernel", "feat", "deep")


class Head:
    """flatten -> dense(hidden) -> relu -> dense(classes) -> logits."""

    def __init__(self, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor):
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2

    def __call__(self, x: Tensor) -> Tensor:
        h = tt.relu(tt.dense(tt.flatten(x), self.w1, self.b1))
        return tt.dense(h, self.w2, self.b2)

    def parameters(self) -> list:
        return [self.w1, self.b1, self.w2, self.b2]


class PCNet:
    """An ordered stack of PCoders plus the classification head."""

    def __init__(self, pcoders: list, head: Head, mode: str = "shared",
                 input_shape: tuple = IMAGE_SHAPE):
        if mode not in ("shared", "separate"):
            raise ValueError(f"unknown hyper-parameter mode {mode!r}")
        self.pcoders = list(pcoders)
        self.head = head
        self.mode = mode
        self.input_shape = tuple(input_shape)
        self._validate_shapes()

    def _validate_shapes(self) -> None:
        """Prediction shapes must match their targets; checked on a dummy batch."""
        x = tt.tensor(np.zeros((1, *self.input_shape), dtype=np.float32))
        target_shape = x.shape
        for i, pc in enumerate(self.pcoders, start=1):
            state = pc.forward_init(x)
            pred = pc.predict()
            if pred.shape != target_shape:
                raise tt.ShapeError(
                    f"pcoder{i}: prediction shape {pred.shape} does not match "
                    f"its target shape {target_shape}"
                )
            expect_k = int(np.prod(target_shape[1:]))
            if pc.K != expect_k:
                raise ValueError(f"pcoder{i}: K={pc.K} but target has {expect_k} elements")
            target_shape = state.shape
            x = state
        for pc in self.pcoders:
            pc.state = None
            pc._invalidate()

    def forward_logits(self, images: Tensor) -> Tensor:
        """Plain feed-forward classification (no dynamics)."""
        h = images
        for pc in self.pcoders:
            h = pc.ff(h)
        return self.head(h)

    def ff_parameters(self) -> list:
        params = []
        for pc in self.pcoders:
            params += pc.ff.parameters()
        return params + self.head.parameters()

    def fb_parameters(self) -> list:
        params = []
        for pc in self.pcoders:
            params += pc.fb.parameters()
        return params

    def parameters(self) -> list:
        return self.ff_parameters() + self.fb_parameters()

    def named_parameters(self) -> dict:
        named = {}
        for i, pc in enumerate(self.pcoders, start=1):
            named[f"pcoder{i}.ff.conv.weight"] = pc.ff.weight
            named[f"pcoder{i}.ff.conv.bias"] = pc.ff.bias
            named[f"pcoder{i}.fb.deconv.weight"] = pc.fb.weight
            named[f"pcoder{i}.fb.deconv.bias"] = pc.fb.bias
        named["head.fc1.weight"] = self.head.w1
        named["head.fc1.bias"] = self.head.b1
        named["head.fc2.weight"] = self.head.w2
        named["head.fc2.bias"] = self.head.b2
        return named

    def forward_param_count(self) -> int:
        return sum(p.size for p in self.ff_parameters())


class BaselineNet:
    """Plain feed-forward classifier sized to out-parameter the shallow stack."""

    def __init__(self, variant: str, layers: list, head: Head):
        self.variant = variant
        self.layers = list(layers)
        self.head = head

    def forward_logits(self, images: Tensor) -> Tensor:
        h = images
        for layer in self.layers:
            h = layer(h)
        return self.head(h)

    def parameters(self) -> list:
        params = []
        for layer in self.layers:
            params += layer.parameters()
        return params + self.head.parameters()

    def ff_parameters(self) -> list:
        return self.parameters()

    def fb_parameters(self) -> list:
        return []  # no feedback path; keeps the training-stage digests trivial

    def named_parameters(self) -> dict:
        named = {}
        for i, layer in enumerate(self.layers, start=1):
            named[f"layer{i}.conv.weight"] = layer.weight
            named[f"layer{i}.conv.bias"] = layer.bias
        named["head.fc1.weight"] = self.head.w1
        named["head.fc1.bias"] = self.head.b1
        named["head.fc2.weight"] = self.head.w2
        named["head.fc2.bias"] = self.head.b2
        return named

    def forward_param_count(self) -> int:
        return sum(p.size for p in self.parameters())


def _uniform_fan_in(rng: np.random.Generator, shape: tuple) -> Tensor:
    """Fan-in-scaled uniform init: bound = 1/sqrt(fan_in).

    Dense weights are (in, out) so fan_in is the first axis; conv-style
    weights count the second axis times the kernel taps, which covers both
    conv (Cin*k*k) and transposed conv (Cout*k*k) layouts.
    """
    fan_in = shape[0] if len(shape) == 2 else shape[1] * shape[2] * shape[3]
    bound = 1.0 / np.sqrt(fan_in)
    data = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return tt.tensor(data, requires_grad=True)


def _zeros_param(n: int) -> Tensor:
    return tt.tensor(np.zeros(n, dtype=np.float32), requires_grad=True)


def _conv_stage(rng, cin, cout, k, pool=True) -> ConvReluPool:
    w = _uniform_fan_in(rng, (cout, cin, k, k))
    return ConvReluPool(w, _zeros_param(cout), padding=k // 2, pool=pool)


def _decoder(rng, c_state, c_target) -> Decoder:
    w = _uniform_fan_in(rng, (c_state, c_target, 3, 3))
    return Decoder(w, _zeros_param(c_target), padding=1)


def decoder_receptive_field(k: int, c_target: int, upsample: int = 2) -> int:
    """Number of target elements one state element influences through the decoder."""
    return k * k * c_target * upsample * upsample


def _head(rng, flat: int, hidden: int = 120, classes: int = 10) -> Head:
    w1 = _uniform_fan_in(rng, (flat, hidden))
    w2 = _uniform_fan_in(rng, (hidden, classes))
    return Head(w1, _zeros_param(hidden), w2, _zeros_param(classes))


_SHALLOW_CHANNELS = (12, 18, 24)


def build_shallow(rng: np.random.Generator, mode: str = "shared") -> PCNet:
    """The three-PCoder network on 3x32x32 inputs.

    Draw order is fixed (per PCoder: conv weight then decoder weight,
    ascending; then the two head weights); biases start at zero.
    """
    chans = (3,) + _SHALLOW_CHANNELS
    spatial = (32, 16, 8, 4)
    pcoders = []
    for i in range(3):
        ff = _conv_stage(rng, chans[i], chans[i + 1], k=5)
        fb = _decoder(rng, chans[i + 1], chans[i])
        K = chans[i] * spatial[i] * spatial[i]
        C = decoder_receptive_field(3, chans[i])
        pcoders.append(PCoder(ff, fb, K=K, C=C))
    head = _head(rng, flat=chans[3] * spatial[3] * spatial[3])
    return PCNet(pcoders, head, mode=mode)


def build_baseline(variant: str, rng: np.random.Generator) -> BaselineNet:
    """Feed-forward comparison nets: same, kernel (7x7), feat (16/24/32), deep (+1 conv)."""
    if variant not in BASELINE_VARIANTS:
        raise ValueError(f"unknown baseline variant {variant!r}; expected one of {BASELINE_VARIANTS}")
    k = 7 if variant == "kernel" else 5
    chans = (3, 16, 24, 32) if variant == "feat" else (3,) + _SHALLOW_CHANNELS
    layers = [_conv_stage(rng, chans[i], chans[i + 1], k=k) for i in range(3)]
    if variant == "deep":
        layers.append(_conv_stage(rng, chans[3], chans[3], k=k, pool=False))
    head = _head(rng, flat=chans[3] * 16)
    return BaselineNet(variant, layers, head)


@dataclass
class UnrollResult:
    """Logits per time-step plus optional per-step diagnostics.

    logits has T+1 entries (t = 0 is the feed-forward pass). When recorded,
    epsilons[t][i] is PCoder i's prediction error at time t, and
    states[t][i] is its state array at time t.
    """

    logits: list
    epsilons: list | None = None
    states: list | None = None


def _normalize_hps(net: PCNet, hps) -> list:
    """Broadcast one hyper-parameter set to every PCoder, or validate a list.

    A single HyperParams or a bare 4-sequence of scalars is shared; anything
    else must be a sequence with exactly one entry per PCoder.
    """
    from .hyperparams import HyperParams

    n = len(net.pcoders)
    if isinstance(hps, HyperParams):
        return [hps] * n
    seq = list(hps)
    if all(isinstance(h, (int, float, Tensor)) for h in seq):
        if len(seq) != 4:
            raise ValueError(f"expected 4 mixing coefficients, got {len(seq)}")
        return [tuple(seq)] * n
    if len(seq) != n:
        raise ValueError(f"expected {n} hyper-parameter sets for {n} PCoders, got {len(seq)}")
    return seq


def unroll(net: PCNet, images: Tensor, hps, T: int,
           record_epsilons: bool = False, record_states: bool = False,
           detach_error_gradient: bool = False) -> UnrollResult:
    """Iterate the synchronous PCoder sweep for T steps after initialization.

    hps is one HyperParams (or 4-sequence of floats/scalar Tensors) shared by
    every PCoder, or a list with one entry per PCoder. Logits are produced at
    t = 0 (pure feed-forward) and after each sweep. Within a sweep, updates
    run in ascending order: the feed-forward drive sees the lower PCoder's
    fresh state while feedback and error terms see the previous step's values.
    """
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    per_pc = _normalize_hps(net, hps)
    pcs = net.pcoders
    n = len(pcs)

    drive = images
    for pc in pcs:
        drive = pc.forward_init(drive)
    logits = [net.head(pcs[-1].state)]
    init_bottom_drive = pcs[0].state  # F_1(images) never changes across steps

    epsilons = [] if record_epsilons else None
    states = [] if record_states else None

    def snapshot():
        if record_states:
            states.append([pc.state.data for pc in pcs])
        if record_epsilons:
            row = []
            for i, pc in enumerate(pcs):
                target = images if i == 0 else pcs[i - 1].state
                row.append(float(pc.prediction_error(target).data))
            epsilons.append(row)

    for _ in range(T):
        old_states = [pc.state for pc in pcs]
        preds = [pc.predict() for pc in pcs]
        snapshot()
        new_lower = None
        for i, pc in enumerate(pcs):
            ff_input = images if i == 0 else new_lower
            fb_input = preds[i + 1] if i + 1 < n else None
            error_target = images if i == 0 else old_states[i - 1]
            new_lower = pc.step(
                ff_input, fb_input, per_pc[i], error_target,
                ff_drive=init_bottom_drive if i == 0 else None,
                detach_error_gradient=detach_error_gradient,
            )
        logits.append(net.head(pcs[-1].state))
    snapshot()

    return UnrollResult(logits=logits, epsilons=epsilons, states=states)


# ------------------------------------------------------------------ PCW1 files

_MAGIC = b"PCW1"


def save_weights(path: str, named) -> None:
    """Write named float32 tensors to a PCW1 container (little-endian)."""
    if hasattr(named, "named_parameters"):
        named = named.named_parameters()
    items = list(named.items())
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(items)))
        for name, t in items:
            arr = t.data if isinstance(t, Tensor) else np.asarray(t)
            if arr.dtype != np.float32:
                raise TypeError(f"save_weights: {name} has dtype {arr.dtype}, expected float32")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: str) -> dict:
    """Read a PCW1 container back into {name: float32 array}."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {_MAGIC!r}")
    off = 4
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(dims)
        off += 4 * size
        out[name] = arr.astype(np.float32, copy=True)
    if off != len(blob):
        raise ValueError(f"{path}: {len(blob) - off} trailing bytes after last tensor")
    return out


def load_weights_into(net, path: str) -> None:
    """Load a PCW1 file into a network, matching strictly by name and shape."""
    loaded = load_weights(path)
    named = net.named_parameters()
    missing = sorted(set(named) - set(loaded))
    unexpected = sorted(set(loaded) - set(named))
    if missing or unexpected:
        raise ValueError(
            f"{path}: weight names do not match network "
            f"(missing {missing or 'none'}, unexpected {unexpected or 'none'})"
        )
    for name, tensor_ in named.items():
        arr = loaded[name]
        if arr.shape != tensor_.shape:
            raise tt.ShapeError(
                f"{path}: {name} has shape {arr.shape}, network expects {tensor_.shape}"
            )
        tensor_.data = arr.copy()
