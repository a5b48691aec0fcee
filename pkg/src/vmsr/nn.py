"""Minimal dense/recurrent network kernel with explicit reverse-mode gradients.

Parameters live in a ParamStore keyed by dotted names; layer functions return
caches that their matching backward consumes. Training math runs in float32;
the finite-difference checker runs stores converted to float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

CHECKPOINT_MAGIC = b"NNCKPT v1\n"


class ParamStore:
    """Named parameters with matching gradient and Adam moment buffers."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.adam_t = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ValueError(f"parameter {name!r} already registered")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.adam_m[name] = np.zeros_like(arr)
        self.adam_v[name] = np.zeros_like(arr)
        return arr

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def names(self) -> list[str]:
        return list(self.params)

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self, dtype=None) -> "ParamStore":
        out = ParamStore(dtype=dtype or self.dtype)
        for name, p in self.params.items():
            out.add(name, p.astype(out.dtype))
        return out

    def load_values(self, values: Mapping[str, np.ndarray], prefix: str = "") -> None:
        """Overwrite parameters in place; shapes must match exactly."""
        for name, p in self.params.items():
            key = prefix + name
            if key not in values:
                raise KeyError(f"checkpoint missing parameter {key!r}")
            v = np.asarray(values[key], dtype=self.dtype)
            if v.shape != p.shape:
                raise ValueError(f"shape mismatch for {key!r}: {v.shape} vs {p.shape}")
            p[...] = v


def adam_step(store: ParamStore, lr: float = 0.001, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One Adam update over every parameter in the store."""
    store.adam_t += 1
    t = store.adam_t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in store.params.items():
        g = store.grads[name]
        m = store.adam_m[name]
        v = store.adam_v[name]
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        p -= (lr / c1) * m / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# initializers

def glorot(rng: np.random.Generator, n_in: int, n_out: int, dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out)).astype(dtype)


def linear_init(store: ParamStore, name: str, n_in: int, n_out: int,
                rng: np.random.Generator, zero: bool = False) -> None:
    w = np.zeros((n_in, n_out), dtype=store.dtype) if zero else glorot(rng, n_in, n_out, store.dtype)
    store.add(f"{name}.w", w)
    store.add(f"{name}.b", np.zeros(n_out, dtype=store.dtype))


def linear_forward(store: ParamStore, name: str, x: np.ndarray):
    y = x @ store.params[f"{name}.w"] + store.params[f"{name}.b"]
    return y, x


def linear_backward(store: ParamStore, name: str, cache, dy: np.ndarray) -> np.ndarray:
    x = cache
    store.grads[f"{name}.w"] += x.T @ dy
    store.grads[f"{name}.b"] += dy.sum(axis=0)
    return dy @ store.params[f"{name}.w"].T


# ---------------------------------------------------------------------------
# MLP: affine layers with tanh hidden activations and a linear output

@dataclass(frozen=True)
class MlpSpec:
    widths: tuple[int, ...]  # input width, hidden widths..., output width

    def __post_init__(self):
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ValueError(f"bad MLP widths {self.widths}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1


def mlp_init(spec: MlpSpec, store: ParamStore, prefix: str,
             rng: np.random.Generator, zero_output: bool = True) -> None:
    for l in range(spec.n_layers):
        zero = zero_output and l == spec.n_layers - 1
        linear_init(store, f"{prefix}.l{l}", spec.widths[l], spec.widths[l + 1], rng, zero=zero)


def mlp_forward(spec: MlpSpec, store: ParamStore, prefix: str, x: np.ndarray):
    """Returns (output, cache). x is (batch, widths[0])."""
    if x.shape[-1] != spec.widths[0]:
        raise ValueError(f"input width {x.shape[-1]} != {spec.widths[0]}")
    caches = []
    for l in range(spec.n_layers):
        y, lin_cache = linear_forward(store, f"{prefix}.l{l}", x)
        if l < spec.n_layers - 1:
            a = np.tanh(y)
            caches.append((lin_cache, a))
            x = a
        else:
            caches.append((lin_cache, None))
            x = y
    return x, caches


def mlp_backward(spec: MlpSpec, store: ParamStore, prefix: str, caches, dy: np.ndarray) -> np.ndarray:
    for l in reversed(range(spec.n_layers)):
        lin_cache, a = caches[l]
        if a is not None:
            dy = dy * (1.0 - a * a)
        dy = linear_backward(store, f"{prefix}.l{l}", lin_cache, dy)
    return dy


# ---------------------------------------------------------------------------
# GRU cell (reset/update gates, tanh candidate; torch-style reset placement)

@dataclass(frozen=True)
class GruSpec:
    input_size: int
    hidden_size: int

    def __post_init__(self):
        if self.input_size < 1 or self.hidden_size < 1:
            raise ValueError(f"bad GRU sizes {self}")


def gru_init(spec: GruSpec, store: ParamStore, prefix: str, rng: np.random.Generator) -> None:
    hs = spec.hidden_size
    store.add(f"{prefix}.wx", glorot(rng, spec.input_size, 3 * hs, store.dtype))
    store.add(f"{prefix}.wh", glorot(rng, hs, 3 * hs, store.dtype))
    store.add(f"{prefix}.bx", np.zeros(3 * hs, dtype=store.dtype))
    store.add(f"{prefix}.bh", np.zeros(3 * hs, dtype=store.dtype))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_step(spec: GruSpec, store: ParamStore, prefix: str, x: np.ndarray, h: np.ndarray):
    """One recurrent update. Returns (h_new, cache)."""
    hs = spec.hidden_size
    if x.shape[-1] != spec.input_size or h.shape[-1] != hs:
        raise ValueError(f"shape mismatch: x {x.shape}, h {h.shape}, spec {spec}")
    zx = x @ store.params[f"{prefix}.wx"] + store.params[f"{prefix}.bx"]
    zh = h @ store.params[f"{prefix}.wh"] + store.params[f"{prefix}.bh"]
    r = _sigmoid(zx[..., :hs] + zh[..., :hs])
    u = _sigmoid(zx[..., hs:2 * hs] + zh[..., hs:2 * hs])
    zhc = zh[..., 2 * hs:]
    c = np.tanh(zx[..., 2 * hs:] + r * zhc)
    h_new = u * h + (1.0 - u) * c
    return h_new, (x, h, r, u, c, zhc)


def gru_step_backward(spec: GruSpec, store: ParamStore, prefix: str, cache, dh_new: np.ndarray):
    """Backward through one step. Returns (dx, dh)."""
    x, h, r, u, c, zhc = cache
    hs = spec.hidden_size
    du = dh_new * (h - c)
    dc = dh_new * (1.0 - u)
    dh = dh_new * u
    dzc = dc * (1.0 - c * c)
    dr = dzc * zhc
    dzr = dr * r * (1.0 - r)
    dzu = du * u * (1.0 - u)
    dzx = np.concatenate([dzr, dzu, dzc], axis=-1)
    dzh = np.concatenate([dzr, dzu, dzc * r], axis=-1)
    store.grads[f"{prefix}.wx"] += x.T @ dzx
    store.grads[f"{prefix}.wh"] += h.T @ dzh
    store.grads[f"{prefix}.bx"] += dzx.sum(axis=0)
    store.grads[f"{prefix}.bh"] += dzh.sum(axis=0)
    dx = dzx @ store.params[f"{prefix}.wx"].T
    dh += dzh @ store.params[f"{prefix}.wh"].T
    return dx, dh


# ---------------------------------------------------------------------------
# softmax / cross-entropy / Gumbel-Softmax

def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def one_hot(idx, n: int, dtype=np.float32) -> np.ndarray:
    idx = np.asarray(idx)
    out = np.zeros(idx.shape + (n,), dtype=dtype)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def cross_entropy(logits: np.ndarray, targets) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample negative log likelihood and d(loss)/d(logits).

    logits: (..., K); targets: integer array broadcastable to logits[..., 0].
    Gradients are per sample (unscaled); callers average as needed.
    """
    targets = np.asarray(targets)
    logp = log_softmax(logits)
    losses = -np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    dlogits = np.exp(logp) - one_hot(targets, logits.shape[-1], dtype=logits.dtype)
    return losses, dlogits


@dataclass
class GumbelSample:
    soft: np.ndarray   # relaxed sample on the simplex
    hard: np.ndarray   # one-hot argmax of soft (straight-through forward)
    temperature: float


def sample_gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: np.ndarray, temperature: float, rng: np.random.Generator,
                   noise: np.ndarray | None = None) -> GumbelSample:
    """Categorical relaxation; the hard output is one-hot, gradients flow via soft."""
    if not np.isfinite(logits).all():
        raise ValueError("gumbel_softmax: logits contain non-finite values")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if noise is None:
        noise = sample_gumbel(rng, logits.shape)
    soft = softmax((logits + noise) / temperature)
    hard = one_hot(soft.argmax(axis=-1), logits.shape[-1], dtype=logits.dtype)
    return GumbelSample(soft=soft, hard=hard, temperature=float(temperature))


def gumbel_softmax_backward(sample: GumbelSample, dout: np.ndarray) -> np.ndarray:
    """Gradient wrt logits. The straight-through estimator treats d(hard)=d(soft)."""
    s = sample.soft
    inner = dout - (dout * s).sum(axis=-1, keepdims=True)
    return (s * inner) / sample.temperature


# ---------------------------------------------------------------------------
# finite-difference gradient checking

def check_gradients(loss_fn: Callable[[], float], store: ParamStore,
                    eps: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn must zero the store's grads, run a forward/backward pass over the
    current parameters and return the scalar loss. For meaningful tolerances
    the store should hold float64 parameters.
    """
    loss_fn()
    analytic = {k: g.copy() for k, g in store.grads.items()}
    worst = 0.0
    for name, p in store.params.items():
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()
            flat[i] = orig - eps
            lm = loss_fn()
            flat[i] = orig
            fd = (lp - lm) / (2.0 * eps)
            a = float(analytic[name].reshape(-1)[i])
            rel = abs(a - fd) / max(abs(a) + abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# checkpoint format: ASCII magic then sorted (name, shape, float32 payload) records

def save_checkpoint(path: str | Path, params: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        for name in sorted(params):
            data = np.ascontiguousarray(params[name], dtype="<f4")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", data.ndim))
            f.write(struct.pack(f"<{data.ndim}I", *data.shape))
            f.write(data.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a NNCKPT v1 checkpoint")
        out: dict[str, np.ndarray] = {}
        while True:
            head = f.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            out[name] = data.astype(np.float32)
    return out
