"""Small numpy actor-critic networks with hand-written backprop, the Adam
optimizer, and the binary checkpoint format.

Parameters live as named float32 tensors; all arithmetic upcasts to float64
so gradient checks are clean and checkpoints round-trip bit-exactly.
"""

from __future__ import annotations

import json

import numpy as np

SCAN_DS = 90
CONV_FILTERS = 16
CONV_KERNEL = 5
CONV_STRIDE = 2
CONV_OUT_LEN = (SCAN_DS - CONV_KERNEL) // CONV_STRIDE + 1
STREAM_FC = 64
HEAD_HIDDEN = (128, 64)
SWITCH_FEATS = 4
REACTIVE_FEATS = 2
REACTIVE_ACTIONS = 9

CKPT_MAGIC = b"AIOPOL1"


class CheckpointError(Exception):
    pass


def _he(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    return (rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out))
            .astype(np.float32))


def _head_params(rng: np.random.Generator, n_in: int, n_out: int,
                 out_scale: float) -> dict:
    h1, h2 = HEAD_HIDDEN
    return {
        "w1": _he(rng, n_in, h1), "b1": np.zeros(h1, dtype=np.float32),
        "w2": _he(rng, h1, h2), "b2": np.zeros(h2, dtype=np.float32),
        "w3": (rng.normal(0.0, out_scale, size=(h2, n_out))
               .astype(np.float32)),
        "b3": np.zeros(n_out, dtype=np.float32),
    }


def _stream_params(rng: np.random.Generator) -> dict:
    flat = CONV_OUT_LEN * CONV_FILTERS
    return {
        "conv.w": (rng.normal(0.0, np.sqrt(2.0 / CONV_KERNEL),
                              size=(CONV_FILTERS, CONV_KERNEL))
                   .astype(np.float32)),
        "conv.b": np.zeros(CONV_FILTERS, dtype=np.float32),
        "fc.w": _he(rng, flat, STREAM_FC),
        "fc.b": np.zeros(STREAM_FC, dtype=np.float32),
    }


def _add(params: dict, prefix: str, sub: dict) -> None:
    for k, v in sub.items():
        params[f"{prefix}.{k}"] = v


def init_switch_params(rng: np.random.Generator, n_actions: int) -> dict:
    """Two scan streams (dynamic, static) + 4 polar goal features feeding
    policy and value heads."""
    params: dict = {}
    _add(params, "switch.dyn", _stream_params(rng))
    _add(params, "switch.static", _stream_params(rng))
    n_in = 2 * STREAM_FC + SWITCH_FEATS
    _add(params, "switch.pi", _head_params(rng, n_in, n_actions, 0.01))
    _add(params, "switch.v", _head_params(rng, n_in, 1, np.sqrt(1.0 / HEAD_HIDDEN[1])))
    return params


def init_reactive_params(rng: np.random.Generator) -> dict:
    """One scan stream + 2 polar subgoal features; 9 discrete commands."""
    params: dict = {}
    _add(params, "reactive.scan", _stream_params(rng))
    n_in = STREAM_FC + REACTIVE_FEATS
    _add(params, "reactive.pi", _head_params(rng, n_in, REACTIVE_ACTIONS, 0.01))
    _add(params, "reactive.v", _head_params(rng, n_in, 1, np.sqrt(1.0 / HEAD_HIDDEN[1])))
    return params


def _f64(params: dict, name: str) -> np.ndarray:
    return params[name].astype(np.float64)


def _stream_forward(params: dict, prefix: str, scan: np.ndarray) -> tuple:
    x = scan.astype(np.float64)
    wins = np.lib.stride_tricks.sliding_window_view(
        x, CONV_KERNEL, axis=1)[:, ::CONV_STRIDE]
    z_conv = np.einsum("bjk,fk->bjf", wins, _f64(params, f"{prefix}.conv.w"))
    z_conv += _f64(params, f"{prefix}.conv.b")
    a_conv = np.maximum(z_conv, 0.0)
    flat = a_conv.reshape(x.shape[0], -1)
    z_fc = flat @ _f64(params, f"{prefix}.fc.w") + _f64(params, f"{prefix}.fc.b")
    a_fc = np.maximum(z_fc, 0.0)
    return a_fc, (wins, z_conv, flat, z_fc)


def _stream_backward(params: dict, prefix: str, cache: tuple,
                     d_out: np.ndarray, grads: dict) -> None:
    wins, z_conv, flat, z_fc = cache
    dz_fc = d_out * (z_fc > 0)
    grads[f"{prefix}.fc.w"] = flat.T @ dz_fc
    grads[f"{prefix}.fc.b"] = dz_fc.sum(axis=0)
    dflat = dz_fc @ _f64(params, f"{prefix}.fc.w").T
    dy = dflat.reshape(z_conv.shape) * (z_conv > 0)
    grads[f"{prefix}.conv.w"] = np.einsum("bjf,bjk->fk", dy, wins)
    grads[f"{prefix}.conv.b"] = dy.sum(axis=(0, 1))


def _head_forward(params: dict, prefix: str, x: np.ndarray) -> tuple:
    z1 = x @ _f64(params, f"{prefix}.w1") + _f64(params, f"{prefix}.b1")
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ _f64(params, f"{prefix}.w2") + _f64(params, f"{prefix}.b2")
    a2 = np.maximum(z2, 0.0)
    out = a2 @ _f64(params, f"{prefix}.w3") + _f64(params, f"{prefix}.b3")
    return out, (x, z1, a1, z2, a2)


def _head_backward(params: dict, prefix: str, cache: tuple,
                   d_out: np.ndarray, grads: dict) -> np.ndarray:
    x, z1, a1, z2, a2 = cache
    grads[f"{prefix}.w3"] = a2.T @ d_out
    grads[f"{prefix}.b3"] = d_out.sum(axis=0)
    da2 = d_out @ _f64(params, f"{prefix}.w3").T
    dz2 = da2 * (z2 > 0)
    grads[f"{prefix}.w2"] = a1.T @ dz2
    grads[f"{prefix}.b2"] = dz2.sum(axis=0)
    da1 = dz2 @ _f64(params, f"{prefix}.w2").T
    dz1 = da1 * (z1 > 0)
    grads[f"{prefix}.w1"] = x.T @ dz1
    grads[f"{prefix}.b1"] = dz1.sum(axis=0)
    return dz1 @ _f64(params, f"{prefix}.w1").T


def forward_switch(params: dict, dyn: np.ndarray, static: np.ndarray,
                   feats: np.ndarray, need_cache: bool = False):
    """(B, 90) dynamic scan, (B, 90) static scan, (B, 4) polar features ->
    (logits (B, K), values (B,))."""
    dyn_out, dyn_cache = _stream_forward(params, "switch.dyn", dyn)
    st_out, st_cache = _stream_forward(params, "switch.static", static)
    concat = np.concatenate([dyn_out, st_out, feats.astype(np.float64)], axis=1)
    logits, pi_cache = _head_forward(params, "switch.pi", concat)
    values, v_cache = _head_forward(params, "switch.v", concat)
    out = (logits, values[:, 0])
    if need_cache:
        return out, (dyn_cache, st_cache, pi_cache, v_cache)
    return out


def backward_switch(params: dict, cache: tuple, d_logits: np.ndarray,
                    d_values: np.ndarray) -> dict:
    dyn_cache, st_cache, pi_cache, v_cache = cache
    grads: dict = {}
    d_concat = _head_backward(params, "switch.pi", pi_cache, d_logits, grads)
    d_concat += _head_backward(params, "switch.v", v_cache,
                               d_values[:, None], grads)
    _stream_backward(params, "switch.dyn", dyn_cache,
                     d_concat[:, :STREAM_FC], grads)
    _stream_backward(params, "switch.static", st_cache,
                     d_concat[:, STREAM_FC:2 * STREAM_FC], grads)
    return grads


def forward_reactive(params: dict, scan: np.ndarray, feats: np.ndarray,
                     need_cache: bool = False):
    """(B, 90) sensor scan, (B, 2) subgoal features -> (logits, values)."""
    s_out, s_cache = _stream_forward(params, "reactive.scan", scan)
    concat = np.concatenate([s_out, feats.astype(np.float64)], axis=1)
    logits, pi_cache = _head_forward(params, "reactive.pi", concat)
    values, v_cache = _head_forward(params, "reactive.v", concat)
    out = (logits, values[:, 0])
    if need_cache:
        return out, (s_cache, pi_cache, v_cache)
    return out


def backward_reactive(params: dict, cache: tuple, d_logits: np.ndarray,
                      d_values: np.ndarray) -> dict:
    s_cache, pi_cache, v_cache = cache
    grads: dict = {}
    d_concat = _head_backward(params, "reactive.pi", pi_cache, d_logits, grads)
    d_concat += _head_backward(params, "reactive.v", v_cache,
                               d_values[:, None], grads)
    _stream_backward(params, "reactive.scan", s_cache,
                     d_concat[:, :STREAM_FC], grads)
    return grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


class Adam:
    """Standard Adam; moments in float64, parameters written back float32."""

    def __init__(self, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for name, p in params.items():
            g = np.asarray(grads[name], dtype=np.float64)
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[name] = m
            self.v[name] = v
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            upd = p.astype(np.float64) - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            out[name] = upd.astype(np.float32)
        return out


def save_checkpoint(path, params: dict) -> None:
    """AIOPOL1 container: magic, compact JSON {name: shape} manifest, one
    newline, then float32 little-endian payloads in manifest order."""
    manifest = {name: list(arr.shape) for name, arr in params.items()}
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(json.dumps(manifest, separators=(",", ":")).encode("utf-8"))
        f.write(b"\n")
        for arr in params.values():
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, expected_shapes: dict | None = None) -> dict:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"{path}: {e}") from e
    if not blob.startswith(CKPT_MAGIC):
        raise CheckpointError(f"{path}: bad magic")
    nl = blob.find(b"\n", len(CKPT_MAGIC))
    if nl < 0:
        raise CheckpointError(f"{path}: missing manifest terminator")
    try:
        manifest = json.loads(blob[len(CKPT_MAGIC):nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable manifest ({e})") from e
    params = {}
    off = nl + 1
    for name, shape in manifest.items():
        n = int(np.prod(shape)) if shape else 1
        end = off + 4 * n
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated payload for {name}")
        params[name] = np.frombuffer(
            blob[off:end], dtype="<f4").reshape(shape).astype(np.float32)
        off = end
    if off != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after payloads")
    if expected_shapes is not None:
        for name, shape in expected_shapes.items():
            if name not in params:
                raise CheckpointError(f"{path}: missing tensor {name}")
            if tuple(params[name].shape) != tuple(shape):
                raise CheckpointError(
                    f"{path}: {name} shape {params[name].shape} != {tuple(shape)}")
    return params


def param_shapes(params: dict) -> dict:
    return {name: tuple(arr.shape) for name, arr in params.items()}
