"""Parameter storage, initialization, loss, regularization, optimizer, and
a finite-difference gradient-check harness usable with any composed network.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError, ShapeError, TrainingError

CHECKPOINT_MAGIC = b"SSRCKPT1"


class Param:
    """One named parameter array with its gradient and optimizer state."""

    __slots__ = ("name", "value", "grad", "m", "v", "is_weight")

    def __init__(self, name: str, value: np.ndarray, is_weight: bool):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.m = np.zeros_like(value)  # first moment
        self.v = np.zeros_like(value)  # second moment
        self.is_weight = is_weight


class ParamStore:
    """Ordered collection of named parameters (kernels and biases)."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, is_weight: bool = True) -> Param:
        if name in self._params:
            raise ParameterError(f"duplicate parameter name: {name}")
        p = Param(name, value, is_weight)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def params(self) -> list[Param]:
        return list(self._params.values())

    def names(self) -> list[str]:
        return list(self._params.keys())

    @property
    def total_size(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0

    def astype(self, dtype) -> None:
        """Switch scalar width in place (float64 mode for gradient checks)."""
        for p in self._params.values():
            p.value = p.value.astype(dtype)
            p.grad = p.grad.astype(dtype)
            p.m = p.m.astype(dtype)
            p.v = p.v.astype(dtype)


@dataclass
class TrainConfig:
    """Training hyper-parameters.

    lr_schedule is a list of (epochs, learning rate) phases, run in order.
    """

    lr_schedule: list[tuple[int, float]] = field(default_factory=lambda: [(100, 0.002), (200, 0.0002)])
    l2_coeff: float = 1e-6
    dropout_rate: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    rng_seed: int = 0
    patches_per_image: int = 200
    augment: bool = True

    def validate(self) -> None:
        if not self.lr_schedule:
            raise ParameterError("lr_schedule must have at least one phase")
        for epochs, lr in self.lr_schedule:
            if epochs < 1:
                raise ParameterError(f"schedule phase epochs must be >= 1, got {epochs}")
            if lr <= 0:
                raise ParameterError(f"learning rate must be > 0, got {lr}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2_coeff < 0:
            raise ParameterError(f"l2_coeff must be >= 0, got {self.l2_coeff}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")


def he_uniform_init(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform on [-sqrt(6/fan_in), +sqrt(6/fan_in)]."""
    if fan_in < 1:
        raise ParameterError(f"fan_in must be >= 1, got {fan_in}")
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def euclidean_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared difference over all elements, with its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad


def l2_penalty(store: ParamStore, l2_coeff: float) -> float:
    """Sum of squared weight entries times l2_coeff (biases excluded)."""
    if l2_coeff == 0.0:
        return 0.0
    total = 0.0
    for p in store.params():
        if p.is_weight:
            total += float(np.sum(p.value.astype(np.float64) ** 2))
    return l2_coeff * total


def apply_l2(store: ParamStore, l2_coeff: float) -> None:
    """Add the weight-decay term 2*l2*w to each weight gradient (biases excluded)."""
    if l2_coeff == 0.0:
        return
    for p in store.params():
        if p.is_weight:
            p.grad += (2.0 * l2_coeff) * p.value


def nadam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
    step_count: int = 1,
) -> None:
    """One Adam-with-Nesterov-momentum update (Dozat's formulation).

    With g the gradient and t = step_count >= 1:
        m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
        m_hat = m / (1 - b1^t)        v_hat = v / (1 - b2^t)
        num   = b1*m_hat + (1-b1)*g / (1 - b1^t)
        theta <- theta - lr * num / (sqrt(v_hat) + eps)
    """
    if step_count < 1:
        raise ParameterError(f"step_count must be >= 1, got {step_count}")
    bc1 = 1.0 - beta1**step_count
    bc2 = 1.0 - beta2**step_count
    for p in store.params():
        g = p.grad
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in parameter '{p.name}'")
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * np.square(g)
        m_hat = p.m / bc1
        v_hat = p.v / bc2
        num = beta1 * m_hat + ((1.0 - beta1) / bc1) * g
        p.value -= (lr * num / (np.sqrt(v_hat) + epsilon)).astype(p.value.dtype)


# ---------------------------------------------------------------------------
# Checkpoint file format
#
#   magic "SSRCKPT1"
#   u32 LE header length
#   JSON header: {"version": 1, "spec_hash": ..., "step": ...,
#                 "params": [{"name": ..., "shape": [...], "is_weight": ...}]}
#   concatenated parameter payloads, little-endian float32, in header order
# ---------------------------------------------------------------------------


def save_checkpoint(path, store: ParamStore, spec_hash: str, step: int,
                    extra: dict | None = None) -> None:
    header = {
        "version": 1,
        "spec_hash": spec_hash,
        "step": int(step),
        "params": [
            {"name": p.name, "shape": list(p.value.shape), "is_weight": p.is_weight}
            for p in store.params()
        ],
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for p in store.params():
            f.write(np.ascontiguousarray(p.value, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (header, {name: float32 array})."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"{path}: unreadable header: {e}") from e
        arrays: dict[str, np.ndarray] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape))
            raw = f.read(4 * n)
            if len(raw) != 4 * n:
                raise FormatError(f"{path}: truncated payload for parameter '{entry['name']}'")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after last parameter")
    return header, arrays


def load_checkpoint_into(path, store: ParamStore, expected_hash: str | None = None) -> int:
    """Restore parameter values from a checkpoint; returns the stored step count."""
    header, arrays = load_checkpoint(path)
    if expected_hash is not None and header["spec_hash"] != expected_hash:
        raise FormatError(
            f"{path}: checkpoint spec hash {header['spec_hash']} != expected {expected_hash}"
        )
    if set(arrays) != set(store.names()):
        raise FormatError(f"{path}: checkpoint parameter names do not match the network")
    for name, arr in arrays.items():
        p = store[name]
        if p.value.shape != arr.shape:
            raise FormatError(f"{path}: parameter '{name}' shape mismatch")
        p.value = arr.astype(p.value.dtype)
    return int(header["step"])


def checkpoint_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Finite-difference gradient check
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    tolerance: float
    passed: bool
    worst_param: str = ""
    skipped_below_noise: int = 0
    failures: list[tuple[str, int, float]] = field(default_factory=list)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"grad check {status}: max rel error {self.max_rel_error:.3e} "
            f"(tolerance {self.tolerance:.1e}, {self.checked} coordinates, "
            f"{self.skipped_below_noise} below FD resolution, worst at {self.worst_param})"
        )


def grad_check(
    network,
    x: np.ndarray,
    target: np.ndarray,
    tolerance: float = 1e-5,
    l2_coeff: float = 1e-6,
    n_samples: int = 200,
    step: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare backprop gradients of (euclidean loss + l2 penalty) against
    central finite differences on a random subset of parameter coordinates.

    The network must be in 64-bit mode; the forward runs with training=False
    so dropout is a passthrough.

    Central differences resolve a derivative only down to roughly
    eps64 * |f| / step in absolute terms; coordinates whose gradient sits
    below that noise floor carry no relative-error information and are
    skipped (counted in the report), with fresh coordinates drawn instead.
    """
    rng = rng or np.random.default_rng(0)
    store: ParamStore = network.store

    def objective() -> float:
        pred = network.forward(x, training=False)
        loss, _ = euclidean_loss(pred, target)
        return loss + l2_penalty(store, l2_coeff)

    # analytic gradients (dropout off, activations cached for backward)
    store.zero_grads()
    pred = network.forward(x, training=False, cache=True)
    loss0, grad_pred = euclidean_loss(pred, target)
    network.backward(grad_pred)
    apply_l2(store, l2_coeff)
    f0 = loss0 + l2_penalty(store, l2_coeff)

    # FD roundoff scale, with a wide safety factor so surviving coordinates
    # see noise-induced relative error well under the tolerance
    fd_noise = np.finfo(np.float64).eps * max(1.0, abs(f0)) / (2.0 * step)
    noise_floor = fd_noise * 8e5

    params = store.params()
    sizes = np.array([p.value.size for p in params])
    cum = np.cumsum(sizes)
    total = int(cum[-1])
    n = min(n_samples, total)
    coords = rng.permutation(total)

    max_rel = 0.0
    worst = ""
    checked = 0
    skipped = 0
    failures: list[tuple[str, int, float]] = []
    for flat in coords:
        if checked >= n:
            break
        pi = int(np.searchsorted(cum, flat, side="right"))
        offset = int(flat - (cum[pi - 1] if pi else 0))
        p = params[pi]
        orig = p.value.flat[offset]
        p.value.flat[offset] = orig + step
        f_plus = objective()
        p.value.flat[offset] = orig - step
        f_minus = objective()
        p.value.flat[offset] = orig
        numeric = (f_plus - f_minus) / (2.0 * step)
        analytic = float(p.grad.flat[offset])
        denom = max(abs(analytic), abs(numeric))
        if denom < noise_floor:
            skipped += 1
            continue
        checked += 1
        rel = abs(analytic - numeric) / denom
        if rel > max_rel:
            max_rel = rel
            worst = f"{p.name}[{offset}]"
        if rel > tolerance:
            failures.append((p.name, offset, rel))

    return GradCheckReport(
        max_rel_error=max_rel,
        checked=checked,
        tolerance=tolerance,
        passed=max_rel < tolerance and checked >= min(n, total),
        worst_param=worst,
        skipped_below_noise=skipped,
        failures=failures,
    )
