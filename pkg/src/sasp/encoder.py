"""Desk-scale transformer encoder whose weight GEMMs run on the simulated array.

Only the six weight GEMMs per layer (Q, K, V, O projections and the two
feed-forward matrices) are accelerated. Attention score products, softmax,
layer norms, biases and residuals stay on the host in FP32.
"""
from dataclasses import dataclass, field

import numpy as np

from .accel import CycleStats
from .fparith import QuantizedMatrix, quantize_weights
from .gemm import GemmJob, dense_equivalent_cycles, tiled_gemm
from .pruner import apply_mask

ATTN_ROLES = ("w_q", "w_k", "w_v", "w_o")
FF_ROLES = ("w1", "w2")
ROLES = ATTN_ROLES + FF_ROLES
BIAS = {"w_q": "b_q", "w_k": "b_k", "w_v": "b_v", "w_o": "b_o", "w1": "b1", "w2": "b2"}


def matrix_id(layer, role):
    return f"layer{layer}/{role}"


@dataclass
class EncoderLayerWeights:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    b_q: np.ndarray
    b_k: np.ndarray
    b_v: np.ndarray
    b_o: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def d_model(self):
        return self.w_q.shape[0]

    @property
    def d_ff(self):
        return self.w1.shape[1]

    def check(self):
        d, f = self.d_model, self.d_ff
        want = {"w_q": (d, d), "w_k": (d, d), "w_v": (d, d), "w_o": (d, d),
                "w1": (d, f), "w2": (f, d)}
        for role, shape in want.items():
            if tuple(getattr(self, role).shape) != shape:
                raise ValueError(f"{role} has shape {getattr(self, role).shape}, expected {shape}")
            if getattr(self, BIAS[role]).shape != (shape[1],):
                raise ValueError(f"{BIAS[role]} must have length {shape[1]}")


@dataclass(frozen=True)
class EncoderConfig:
    """Shape and synthetic-weight knobs of the desk-scale workload.

    ``sparse_density`` is the probability that a ``sparse_block`` square of a
    feed-forward matrix in layer 0 is near zero; layer ``l`` uses
    ``sparse_density * sparse_decay**l`` so early layers prune more easily.
    """

    n_layers: int = 4
    d_model: int = 64
    d_ff: int = 256
    n_heads: int = 4
    seq_len: int = 32
    seed: int = 0
    sparse_block: int = 4
    sparse_density: float = 0.6
    sparse_decay: float = 0.8
    sparse_scale: float = 0.02


@dataclass
class EncoderRunStats:
    gemm_stats: list = field(default_factory=list)  # per layer: {role: CycleStats}
    dense_cycles: list = field(default_factory=list)  # per layer
    gemm_flops: int = 0
    host_flops: int = 0

    @property
    def layer_stats(self):
        out = []
        for per_role in self.gemm_stats:
            s = CycleStats()
            for st in per_role.values():
                s = s + st
            out.append(s)
        return out

    @property
    def total(self):
        s = CycleStats()
        for st in self.layer_stats:
            s = s + st
        return s

    @property
    def normalized_runtime(self):
        return [st.total_cycles / d for st, d in zip(self.layer_stats, self.dense_cycles)]

    @property
    def gemm_fraction(self):
        return self.gemm_flops / (self.gemm_flops + self.host_flops)


def _sparse_gaussian(rng, shape, density, block, scale):
    w = rng.standard_normal(shape) / np.sqrt(shape[0])
    if density > 0:
        gr, gc = -(-shape[0] // block), -(-shape[1] // block)
        small = rng.random((gr, gc)) < density
        mask = np.repeat(np.repeat(small, block, 0), block, 1)[:shape[0], :shape[1]]
        w = np.where(mask, w * scale, w)
    return w.astype(np.float32)


def synthetic_layers(cfg):
    rng = np.random.default_rng(cfg.seed)
    d, f = cfg.d_model, cfg.d_ff
    layers = []
    for layer in range(cfg.n_layers):
        density = cfg.sparse_density * cfg.sparse_decay ** layer
        mats = {}
        for role in ATTN_ROLES:
            mats[role] = _sparse_gaussian(rng, (d, d), 0.0, cfg.sparse_block, 1.0)
        mats["w1"] = _sparse_gaussian(rng, (d, f), density, cfg.sparse_block, cfg.sparse_scale)
        mats["w2"] = _sparse_gaussian(rng, (f, d), density, cfg.sparse_block, cfg.sparse_scale)
        for role in ROLES:
            n = mats[role].shape[1]
            mats[BIAS[role]] = (0.02 * rng.standard_normal(n)).astype(np.float32)
        layers.append(EncoderLayerWeights(**mats))
    return layers


def synthetic_input(cfg):
    rng = np.random.default_rng([cfg.seed, 1])
    return rng.standard_normal((cfg.seq_len, cfg.d_model)).astype(np.float32)


def layer_norm(x, eps=1e-5):
    x = x.astype(np.float32)
    mu = x.mean(axis=-1, keepdims=True, dtype=np.float32)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True, dtype=np.float32)
    return ((x - mu) / np.sqrt(var + np.float32(eps))).astype(np.float32)


def softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s, dtype=np.float32)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def encoder_forward(layers, x, cfg, masks=None, n_heads=4, scope="ff"):
    """Run ``layers`` on ``x`` with every weight GEMM on an array set up by ``cfg``.

    ``masks`` maps :func:`matrix_id` names to tile masks. With ``scope='ff'``
    masks on attention projections are rejected. In INT8 mode fp32 weights
    are masked first, then quantized per tensor.
    """
    masks = masks or {}
    if scope not in ("ff", "all"):
        raise ValueError(f"unknown pruning scope {scope!r}")
    x = np.asarray(x, np.float32)
    stats = EncoderRunStats()
    S = x.shape[0]
    for li, lw in enumerate(layers):
        lw.check()
        d = lw.d_model
        if x.shape[1] != d:
            raise ValueError(f"input width {x.shape[1]} != d_model {d} at layer {li}")
        if d % n_heads:
            raise ValueError(f"d_model {d} not divisible by {n_heads} heads")
        per_role = {}
        dense = 0

        def run(role, inp):
            nonlocal dense
            mid = matrix_id(li, role)
            mask = masks.get(mid)
            if mask is not None and scope == "ff" and role not in FF_ROLES:
                raise ValueError(f"mask on attention matrix {mid} with feed-forward-only scope")
            w = getattr(lw, role)
            if mask is not None and not isinstance(w, QuantizedMatrix):
                w = apply_mask(w, mask)
            if cfg.int8 and not isinstance(w, QuantizedMatrix):
                w = quantize_weights(w)
            job = GemmJob(inp, w, cfg, mask)
            res = tiled_gemm(job)
            per_role[role] = res.stats
            dense += dense_equivalent_cycles(job)
            stats.gemm_flops += 2 * inp.shape[0] * inp.shape[1] * w.shape[1]
            return res.y + getattr(lw, BIAS[role])

        q = run("w_q", x)
        k = run("w_k", x)
        v = run("w_v", x)
        dh = d // n_heads
        ctx = np.empty_like(q)
        inv = np.float32(1.0 / np.sqrt(dh))
        for h in range(n_heads):
            c = slice(h * dh, (h + 1) * dh)
            scores = softmax((q[:, c] @ k[:, c].T) * inv)
            ctx[:, c] = scores @ v[:, c]
        attn = run("w_o", ctx)
        x = layer_norm(x + attn)
        hidden = np.maximum(run("w1", x), np.float32(0.0))
        x = layer_norm(x + run("w2", hidden))

        f = lw.d_ff
        # score and context products, softmax, norms, residuals, biases, relu
        stats.host_flops += 4 * S * S * d + 5 * S * S * n_heads + 2 * 8 * S * d \
            + 2 * S * d + (4 * d + d + f) * S + S * f
        stats.gemm_stats.append(per_role)
        stats.dense_cycles.append(dense)
    return x, stats


def qos_proxy(reference, test):
    """Relative Frobenius error of ``test`` against ``reference``."""
    r = np.asarray(reference, np.float64)
    t = np.asarray(test, np.float64)
    if r.shape != t.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {t.shape}")
    denom = np.linalg.norm(r)
    if denom == 0:
        raise ValueError("reference output has zero norm")
    return float(np.linalg.norm(t - r) / denom)
