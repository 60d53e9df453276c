"""Dense-network machinery for the 122-input policy and Q networks.

Everything runs in float64 numpy: forward pass with cached activations,
exact backpropagation, Adam, and a central-finite-difference gradient
check that doubles as the test oracle for every loss built on top.
Checkpoints round-trip bit-exactly (raw little-endian float64).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

ACTIVATIONS = ("relu", "tanh", "linear")


@dataclass(frozen=True)
class NetSpec:
    """Layer widths plus one hidden activation per hidden layer; linear output."""

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        if len(self.layer_sizes) < 3:
            raise ValidationError(
                "need at least input, one hidden and output layer", field="layer_sizes"
            )
        if any(s < 1 for s in self.layer_sizes):
            raise ValidationError("layer sizes must be >= 1", field="layer_sizes")
        if len(self.activations) != len(self.layer_sizes) - 2:
            raise ValidationError(
                f"expected {len(self.layer_sizes) - 2} activations, got "
                f"{len(self.activations)}",
                field="activations",
            )
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValidationError(f"unknown activation {a!r}", field="activations")

    @classmethod
    def dense(cls, sizes, activation: str = "relu") -> "NetSpec":
        sizes = tuple(int(s) for s in sizes)
        return cls(sizes, (activation,) * (len(sizes) - 2))

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]


class Params:
    """Per-layer weight matrices and bias vectors bound to their NetSpec."""

    def __init__(self, spec: NetSpec, weights, biases):
        self.spec = spec
        self.weights = list(weights)
        self.biases = list(biases)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (spec.layer_sizes[l], spec.layer_sizes[l + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ValidationError(
                    f"layer {l}: weight shape {w.shape} does not match spec {want}"
                )

    def copy(self) -> "Params":
        return Params(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, spec: NetSpec, flat: np.ndarray) -> "Params":
        weights, biases, off = [], [], 0
        for l in range(len(spec.layer_sizes) - 1):
            n_in, n_out = spec.layer_sizes[l], spec.layer_sizes[l + 1]
            weights.append(flat[off : off + n_in * n_out].reshape(n_in, n_out).copy())
            off += n_in * n_out
            biases.append(flat[off : off + n_out].copy())
            off += n_out
        if off != flat.shape[0]:
            raise ValidationError("flat vector length does not match spec")
        return cls(spec, weights, biases)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_params(spec: NetSpec, rng) -> Params:
    """He-uniform weights, zero biases."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    weights, biases = [], []
    for l in range(len(spec.layer_sizes) - 1):
        n_in, n_out = spec.layer_sizes[l], spec.layer_sizes[l + 1]
        limit = np.sqrt(6.0 / n_in)
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return Params(spec, weights, biases)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "linear":
        return z
    return np.tanh(z)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "linear":
        return np.ones_like(z)
    return 1.0 - a * a


def forward(params: Params, x):
    """Batched forward pass; returns (output, cache) with cache feeding backward."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[1] != params.spec.n_in:
        raise ValidationError(
            f"input width {x.shape[1]} does not match spec input {params.spec.n_in}"
        )
    acts = [x]
    zs = []
    a = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        zs.append(z)
        a = z if l == last else _act(params.spec.activations[l], z)
        acts.append(a)
    out = a[0] if squeeze else a
    cache = {"acts": acts, "zs": zs, "shapes": tuple(w.shape for w in params.weights)}
    return out, cache


def backward(params: Params, cache, loss_grad) -> Params:
    """Exact gradients of a scalar loss given d(loss)/d(output)."""
    if cache["shapes"] != tuple(w.shape for w in params.weights):
        raise ValidationError("cache does not belong to these params (stale cache)")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    acts, zs = cache["acts"], cache["zs"]
    if g.shape != zs[-1].shape:
        raise ValidationError(
            f"loss_grad shape {g.shape} does not match output {zs[-1].shape}"
        )
    gws, gbs = [None] * len(params.weights), [None] * len(params.weights)
    last = len(params.weights) - 1
    for l in range(last, -1, -1):
        gz = g if l == last else g * _act_grad(params.spec.activations[l], zs[l], acts[l + 1])
        gws[l] = acts[l].T @ gz
        gbs[l] = gz.sum(axis=0)
        if l > 0:
            g = gz @ params.weights[l].T
    return Params(params.spec, gws, gbs)


@dataclass
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray


def adam_init(params: Params) -> AdamState:
    n = params.n_params
    return AdamState(step=0, m=np.zeros(n), v=np.zeros(n))


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update; returns (new params, new state)."""
    g = grads.to_flat()
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    theta = params.to_flat() - lr * m_hat / (np.sqrt(v_hat) + eps)
    return Params.from_flat(params.spec, theta), AdamState(step=t, m=m, v=v)


def grad_check(
    spec: NetSpec,
    seed: int = 0,
    *,
    h: float = 1e-5,
    batch: int = 4,
    backward_fn=None,
) -> float:
    """Worst relative error of backprop vs central finite differences.

    Uses a random batch and a mean-squared loss against random targets;
    ``backward_fn`` lets tests feed a deliberately broken backward and
    confirm the check catches it.
    """
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    x = rng.normal(size=(batch, spec.n_in))
    y = rng.normal(size=(batch, spec.n_out))

    def loss_of(p: Params) -> float:
        out, _ = forward(p, x)
        return float(np.mean((out - y) ** 2))

    out, cache = forward(params, x)
    gy = 2.0 * (out - y) / out.size
    analytic = (backward_fn or backward)(params, cache, gy).to_flat()

    flat = params.to_flat()
    numeric = np.empty_like(flat)
    for i in range(flat.shape[0]):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        up = loss_of(Params.from_flat(spec, bumped))
        bumped[i] = flat[i] - h
        down = loss_of(Params.from_flat(spec, bumped))
        numeric[i] = (up - down) / (2.0 * h)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


# --- checkpoint container ------------------------------------------------

CHECKPOINT_MAGIC = b"SAGDPCKPT1\n"


def save_checkpoint(path, meta: dict, arrays: dict) -> None:
    """Versioned header plus raw little-endian values; bit-exact round trip."""
    names = sorted(arrays)
    header = {
        "version": 1,
        "meta": meta,
        "arrays": [
            {"name": k, "shape": list(arrays[k].shape), "dtype": "<f8"} for k in names
        ],
    }
    blob = bytearray(CHECKPOINT_MAGIC)
    blob += json.dumps(header, sort_keys=True).encode() + b"\n"
    for k in names:
        blob += np.ascontiguousarray(arrays[k], dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValidationError(f"{path}: not a checkpoint file")
    header_end = raw.index(b"\n", len(CHECKPOINT_MAGIC))
    header = json.loads(raw[len(CHECKPOINT_MAGIC) : header_end])
    if header.get("version") != 1:
        raise ValidationError(f"unsupported checkpoint version {header.get('version')}")
    off = header_end + 1
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        off += arr.nbytes
    return header["meta"], arrays


def params_to_arrays(params: Params, prefix: str = "") -> dict:
    out = {}
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}w{l}"] = w
        out[f"{prefix}b{l}"] = b
    return out


def params_from_arrays(spec: NetSpec, arrays: dict, prefix: str = "") -> Params:
    n = len(spec.layer_sizes) - 1
    return Params(
        spec,
        [arrays[f"{prefix}w{l}"] for l in range(n)],
        [arrays[f"{prefix}b{l}"] for l in range(n)],
    )
