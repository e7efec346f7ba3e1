"""Minimal differentiable core: parameter blocks, a fixed layer zoo, and
exact hand-derived gradients.

The zoo is closed on purpose — linear, residual (linear -> tanh -> linear
with additive skip) and per-row affine normalization — which keeps every
gradient auditable against finite differences.  Tensors are float32
numpy arrays in row-major order; gradient checking upcasts to float64
internally so the check exercises the math, not the storage precision.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels

LINEAR = "linear"
RESIDUAL = "residual"
NORM = "norm"

LAYER_KINDS = (LINEAR, RESIDUAL, NORM)

NORM_EPS = 1e-5

DTYPE = np.float32


class GradcoreError(Exception):
    pass


class ShapeMismatchError(GradcoreError):
    pass


def as_tensor(values, dtype=DTYPE) -> np.ndarray:
    """Materialize values as a C-contiguous array of the core dtype."""
    arr = np.ascontiguousarray(values, dtype=dtype)
    return arr


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise GradcoreError(f"{what} contains non-finite entries")
    return arr


@dataclass(eq=False)
class ParamBlock:
    """One unit of parameter sharing and freezing.

    ``origin`` is (scenario id or "meta", generation); it participates in
    the content id so identical values learned by different scenarios
    still carry distinct provenance.
    """

    tensor: np.ndarray
    trainable: bool = True
    origin: tuple[str, int] = ("meta", 0)
    _frozen_id: str | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(self.tensor.size)

    def content_id(self) -> str:
        if self._frozen_id is not None:
            return self._frozen_id
        return compute_block_id(self.tensor.shape, self.tensor, self.origin)

    def freeze(self) -> "ParamBlock":
        """Mark immutable: no gradient, write-locked, id cached."""
        self.trainable = False
        self.tensor.setflags(write=False)
        self._frozen_id = compute_block_id(
            self.tensor.shape, self.tensor, self.origin
        )
        return self

    def copy(self, origin: tuple[str, int]) -> "ParamBlock":
        """Trainable deep copy with fresh provenance."""
        return ParamBlock(
            tensor=np.array(self.tensor, dtype=self.tensor.dtype, copy=True),
            trainable=True,
            origin=origin,
        )

    def to_blob(self) -> bytes:
        """Little-endian float32 flat array preceded by an 8-byte count."""
        flat = np.ascontiguousarray(self.tensor, dtype="<f4")
        return struct.pack("<Q", flat.size) + flat.tobytes()


def compute_block_id(shape, data: np.ndarray, origin: tuple[str, int]) -> str:
    h = hashlib.sha256()
    h.update(("x".join(str(int(s)) for s in shape)).encode())
    h.update(b"|")
    h.update(np.ascontiguousarray(data, dtype="<f4").tobytes())
    h.update(b"|")
    h.update(f"{origin[0]}:{int(origin[1])}".encode())
    return h.hexdigest()


def parse_blob(raw: bytes) -> np.ndarray:
    """Inverse of ``ParamBlock.to_blob`` (flat array; shape kept elsewhere)."""
    if len(raw) < 8:
        raise GradcoreError("blob shorter than its length header")
    (count,) = struct.unpack("<Q", raw[:8])
    body = raw[8:]
    if len(body) != 4 * count:
        raise GradcoreError(
            f"blob length mismatch: header says {count} floats, "
            f"payload has {len(body)} bytes"
        )
    return np.frombuffer(body, dtype="<f4").astype(DTYPE)


@dataclass(eq=False)
class Layer:
    """A layer of the fixed zoo; ``params`` order is fixed per kind:

    linear    [w(in,out), b(out)]
    residual  [w1(d,d), b1(d), w2(d,d), b2(d)]
    norm      [gain(d), bias(d)]
    """

    kind: str
    params: list[ParamBlock]
    dims: tuple[int, int]

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise GradcoreError(f"unknown layer kind {self.kind!r}")
        if self.kind in (RESIDUAL, NORM) and self.dims[0] != self.dims[1]:
            raise GradcoreError(
                f"{self.kind} layer must preserve width, got dims {self.dims}"
            )
        expected = _param_shapes(self.kind, self.dims)
        got = tuple(tuple(p.tensor.shape) for p in self.params)
        if got != expected:
            raise GradcoreError(
                f"{self.kind} layer {self.dims}: parameter shapes {got} "
                f"do not match expected {expected}"
            )

    @property
    def trainable(self) -> bool:
        return any(p.trainable for p in self.params)

    def copy(self, origin: tuple[str, int]) -> "Layer":
        return Layer(self.kind, [p.copy(origin) for p in self.params], self.dims)

    def freeze(self) -> "Layer":
        for p in self.params:
            p.freeze()
        return self


def _param_shapes(kind: str, dims: tuple[int, int]) -> tuple[tuple[int, ...], ...]:
    n_in, n_out = dims
    if kind == LINEAR:
        return ((n_in, n_out), (n_out,))
    if kind == RESIDUAL:
        return ((n_in, n_in), (n_in,), (n_in, n_in), (n_in,))
    return ((n_in,), (n_in,))


def make_linear(
    n_in: int,
    n_out: int,
    rng: np.random.Generator | None,
    origin: tuple[str, int],
    weight_std: float | None = None,
) -> Layer:
    """Linear layer; weights N(0, 1/sqrt(n_in)) unless overridden, bias 0."""
    if weight_std is None:
        weight_std = 1.0 / np.sqrt(n_in)
    if rng is None or weight_std == 0.0:
        w = np.zeros((n_in, n_out), dtype=DTYPE)
    else:
        w = as_tensor(rng.normal(0.0, weight_std, (n_in, n_out)))
    b = np.zeros(n_out, dtype=DTYPE)
    return Layer(LINEAR, [ParamBlock(w, origin=origin), ParamBlock(b, origin=origin)], (n_in, n_out))


def make_residual(
    width: int,
    rng: np.random.Generator | None,
    origin: tuple[str, int],
    zero_branch: bool = True,
) -> Layer:
    """Residual block.  With ``zero_branch`` the second linear is zeroed so
    the block computes the identity at creation; the first linear still
    gets random weights so gradients can flow once w2 moves."""
    if rng is None:
        w1 = np.zeros((width, width), dtype=DTYPE)
    else:
        w1 = as_tensor(rng.normal(0.0, 1.0 / np.sqrt(width), (width, width)))
    b1 = np.zeros(width, dtype=DTYPE)
    if zero_branch or rng is None:
        w2 = np.zeros((width, width), dtype=DTYPE)
    else:
        w2 = as_tensor(rng.normal(0.0, 0.1 / np.sqrt(width), (width, width)))
    b2 = np.zeros(width, dtype=DTYPE)
    blocks = [ParamBlock(t, origin=origin) for t in (w1, b1, w2, b2)]
    return Layer(RESIDUAL, blocks, (width, width))


def make_norm(width: int, origin: tuple[str, int]) -> Layer:
    gain = np.ones(width, dtype=DTYPE)
    bias = np.zeros(width, dtype=DTYPE)
    return Layer(NORM, [ParamBlock(gain, origin=origin), ParamBlock(bias, origin=origin)], (width, width))


def _check_input(layer: Layer, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2:
        raise ShapeMismatchError(
            f"{layer.kind} layer expects a 2-d input, got shape {x.shape}"
        )
    if x.shape[1] != layer.dims[0]:
        raise ShapeMismatchError(
            f"{layer.kind} layer {layer.dims}: input width {x.shape[1]} "
            f"!= expected {layer.dims[0]}"
        )
    return np.ascontiguousarray(x)


def forward(layer: Layer, x: np.ndarray) -> np.ndarray:
    """Forward pass of one layer on a [rows, features] input."""
    x = _check_input(layer, x)
    p = [blk.tensor for blk in layer.params]
    if layer.kind == LINEAR:
        return kernels.linear_fwd(x, p[0], p[1])
    if layer.kind == RESIDUAL:
        return kernels.residual_fwd(x, p[0], p[1], p[2], p[3])
    return kernels.norm_fwd(x, p[0], p[1], x.dtype.type(NORM_EPS))


def backward(
    layer: Layer, x: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray | None]]:
    """Input gradient plus per-parameter gradients.

    The returned list is aligned with ``layer.params``; entries for frozen
    blocks are None.
    """
    x = _check_input(layer, x)
    if upstream.shape != (x.shape[0], layer.dims[1]):
        raise ShapeMismatchError(
            f"{layer.kind} layer {layer.dims}: upstream shape {upstream.shape} "
            f"!= expected {(x.shape[0], layer.dims[1])}"
        )
    upstream = np.ascontiguousarray(upstream)
    p = [blk.tensor for blk in layer.params]
    if layer.kind == LINEAR:
        gx, gw, gb = kernels.linear_bwd(x, p[0], upstream)
        grads = [gw, gb]
    elif layer.kind == RESIDUAL:
        gx, gw1, gb1, gw2, gb2 = kernels.residual_bwd(
            x, p[0], p[1], p[2], p[3], upstream
        )
        grads = [gw1, gb1, gw2, gb2]
    else:
        gx, ggain, gbias = kernels.norm_bwd(
            x, p[0], p[1], x.dtype.type(NORM_EPS), upstream
        )
        grads = [ggain, gbias]
    out = [g if blk.trainable else None for g, blk in zip(grads, layer.params)]
    return gx, out


def forward_stack(layers, x: np.ndarray) -> np.ndarray:
    for layer in layers:
        x = forward(layer, x)
    return x


def forward_stack_cached(layers, x: np.ndarray):
    """Forward pass retaining each layer's input, for the backward sweep."""
    inputs = []
    for layer in layers:
        inputs.append(x)
        x = forward(layer, x)
    return x, inputs


def backward_stack(layers, inputs, upstream: np.ndarray):
    """Backward sweep; returns (input grad, per-layer grad lists)."""
    per_layer: list[list[np.ndarray | None]] = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        upstream, grads = backward(layers[i], inputs[i], upstream)
        per_layer[i] = grads
    return upstream, per_layer


def _to_f64_layers(layers) -> list[Layer]:
    out = []
    for layer in layers:
        blocks = [
            ParamBlock(
                np.ascontiguousarray(p.tensor, dtype=np.float64),
                trainable=p.trainable,
                origin=p.origin,
            )
            for p in layer.params
        ]
        out.append(Layer(layer.kind, blocks, layer.dims))
    return out


def grad_check(layers, x: np.ndarray, eps: float) -> float:
    """Max relative error between analytic gradients and central
    differences of the scalar loss sum(output), over every trainable
    parameter entry.  Returns 0.0 when nothing is trainable.

    Runs in float64 so the comparison probes the gradient rules rather
    than float32 rounding."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    layers64 = _to_f64_layers(layers)
    x64 = np.ascontiguousarray(x, dtype=np.float64)

    def loss() -> float:
        return float(forward_stack(layers64, x64).sum())

    y, inputs = forward_stack_cached(layers64, x64)
    ones = np.ones_like(y)
    _, analytic = backward_stack(layers64, inputs, ones)

    worst = 0.0
    for layer, grads in zip(layers64, analytic):
        for block, grad in zip(layer.params, grads):
            if grad is None:
                continue
            t = block.tensor
            flat = t.ravel()
            gflat = grad.ravel()
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + eps
                up = loss()
                flat[i] = keep - eps
                down = loss()
                flat[i] = keep
                numeric = (up - down) / (2.0 * eps)
                a = float(gflat[i])
                rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-12)
                if rel > worst:
                    worst = rel
    return worst


def count_params(layers, which: str = "all") -> int:
    """Sum of tensor sizes over distinct ParamBlock content ids.

    ``which`` is "all" or "trainable"; a block referenced from several
    layers is counted once."""
    if which not in ("all", "trainable"):
        raise ValueError(f"unknown filter {which!r}")
    seen: dict[str, int] = {}
    for layer in layers:
        for block in layer.params:
            if which == "trainable" and not block.trainable:
                continue
            seen.setdefault(block.content_id(), block.size)
    return sum(seen.values())
