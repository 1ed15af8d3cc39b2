"""The learnable re-ranker network and its optimizer, in plain numpy.

Architecture, per candidate feature vector v:

    x  = relu(W2 @ relu(W1 @ v + b1) + b2)          shared bottom
    a_i = relu(V2_i @ relu(V1_i @ x + c1_i) + c2_i)  expert i, i = 1..E
    g_k = softmax over kept experts of (G_k @ x)     gate for task k (no bias)
    f_k = t_k . (sum_i g_k[i] * a_i) + u_k           tower -> scalar logit
    p_k = sigmoid(f_k)

Each task k is one metric's "is this the best candidate" classifier.  All
gradients are derived by hand; there is deliberately no autodiff anywhere.

Expert dropout removes each expert independently with probability p during
training; the gate softmax renormalizes over survivors, so no inference-time
rescaling is needed.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import NumericError, ValidationError
from .metrics import MetricRegistry

__all__ = [
    "ModelConfig",
    "RerankerModel",
    "OptimizerState",
    "ForwardResult",
    "init_model",
    "forward",
    "forward_batch",
    "predict_probs",
    "predict_probs_batch",
    "bce_loss",
    "multi_task_loss",
    "batch_loss",
    "backward",
    "sample_expert_mask",
    "init_optimizer",
    "optimizer_step",
    "save_model",
    "load_model",
    "validate_model_metrics",
]

PROB_EPS = 1e-7

_MAGIC = b"SMRKMODL"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_tasks: int
    bottom_sizes: tuple[int, int] = (64, 64)
    expert_sizes: tuple[int, int] = (64, 64)
    num_experts: int | None = None  # default 2 * num_tasks
    expert_dropout: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_experts is None:
            object.__setattr__(self, "num_experts", 2 * self.num_tasks)
        if self.num_tasks < 1 or self.num_experts < 1:
            raise ValidationError("need at least one task and one expert")
        if not 0.0 <= self.expert_dropout < 1.0:
            raise ValidationError("expert_dropout must lie in [0, 1)")
        sizes = (self.input_dim, *self.bottom_sizes, *self.expert_sizes)
        if len(self.bottom_sizes) != 2 or len(self.expert_sizes) != 2:
            raise ValidationError("bottom and expert nets each take exactly two layer sizes")
        if any(int(s) < 1 for s in sizes):
            raise ValidationError(f"all layer sizes must be >= 1, got {sizes}")


@dataclass
class RerankerModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    metric_names: tuple[str, ...]
    train_methods: tuple[str, ...] = ()

    def copy(self) -> "RerankerModel":
        return RerankerModel(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            metric_names=self.metric_names,
            train_methods=self.train_methods,
        )


def _param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d = config.input_dim
    b1, b2 = config.bottom_sizes
    eh, eo = config.expert_sizes
    shapes: dict[str, tuple[int, ...]] = {
        "bottom.w1": (b1, d),
        "bottom.b1": (b1,),
        "bottom.w2": (b2, b1),
        "bottom.b2": (b2,),
    }
    for i in range(config.num_experts):
        shapes[f"expert{i}.w1"] = (eh, b2)
        shapes[f"expert{i}.b1"] = (eh,)
        shapes[f"expert{i}.w2"] = (eo, eh)
        shapes[f"expert{i}.b2"] = (eo,)
    for k in range(config.num_tasks):
        shapes[f"gate{k}.w"] = (config.num_experts, b2)
    for k in range(config.num_tasks):
        shapes[f"tower{k}.w"] = (eo,)
        shapes[f"tower{k}.b"] = ()
    return shapes


def init_model(
    config: ModelConfig,
    metric_names: Sequence[str] | None = None,
    train_methods: Iterable[str] = (),
) -> RerankerModel:
    """Fan-balanced uniform init: weights ~ U(-a, a), a = sqrt(6/(fan_in +
    fan_out)); biases zero.  Deterministic under config.seed."""
    if metric_names is None:
        metric_names = tuple(f"task{k}" for k in range(config.num_tasks))
    metric_names = tuple(metric_names)
    if len(metric_names) != config.num_tasks:
        raise ValidationError(
            f"{config.num_tasks} tasks need {config.num_tasks} metric names, "
            f"got {len(metric_names)}"
        )
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith((".b", ".b1", ".b2")):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_out, fan_in = shape if len(shape) == 2 else (1, shape[0])
            a = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-a, a, size=shape).astype(np.float64)
    return RerankerModel(
        config=config,
        params=params,
        metric_names=metric_names,
        train_methods=tuple(train_methods),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _masked_softmax(z: np.ndarray, mask: np.ndarray) -> np.ndarray:
    shifted = np.where(mask, z, -np.inf)
    shifted = shifted - np.max(shifted, axis=1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=1, keepdims=True)


@dataclass
class ForwardResult:
    logits: np.ndarray  # (B, N)
    gates: np.ndarray  # (B, N, E)
    cache: dict = field(repr=False, default_factory=dict)


def _check_masks(masks: np.ndarray, batch: int, num_experts: int) -> np.ndarray:
    masks = np.asarray(masks, dtype=bool)
    if masks.shape != (batch, num_experts):
        raise ValidationError(
            f"expert mask shape {masks.shape} != {(batch, num_experts)}"
        )
    if not masks.any(axis=1).all():
        raise ValidationError("every example must keep at least one expert")
    return masks


def forward_batch(
    model: RerankerModel,
    X: np.ndarray,
    expert_masks: np.ndarray | None = None,
) -> ForwardResult:
    """Run the net over a batch of feature vectors, caching activations for
    the backward pass."""
    cfg = model.config
    p = model.params
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise ValidationError(f"input shape {X.shape} incompatible with d={cfg.input_dim}")
    B = X.shape[0]
    E, N = cfg.num_experts, cfg.num_tasks
    if expert_masks is None:
        masks = np.ones((B, E), dtype=bool)
    else:
        masks = _check_masks(expert_masks, B, E)

    H1 = np.maximum(X @ p["bottom.w1"].T + p["bottom.b1"], 0.0)
    Xb = np.maximum(H1 @ p["bottom.w2"].T + p["bottom.b2"], 0.0)

    A1 = np.stack(
        [np.maximum(Xb @ p[f"expert{i}.w1"].T + p[f"expert{i}.b1"], 0.0) for i in range(E)]
    )  # (E, B, eh)
    A2 = np.stack(
        [np.maximum(A1[i] @ p[f"expert{i}.w2"].T + p[f"expert{i}.b2"], 0.0) for i in range(E)]
    )  # (E, B, eo)

    logits = np.empty((B, N), dtype=np.float64)
    gates = np.empty((B, N, E), dtype=np.float64)
    mixes = np.empty((N, B, cfg.expert_sizes[1]), dtype=np.float64)
    for k in range(N):
        G = _masked_softmax(Xb @ p[f"gate{k}.w"].T, masks)  # (B, E)
        mix = np.einsum("be,ebo->bo", G, A2)
        logits[:, k] = mix @ p[f"tower{k}.w"] + p[f"tower{k}.b"]
        gates[:, k, :] = G
        mixes[k] = mix
    cache = {"X": X, "H1": H1, "Xb": Xb, "A1": A1, "A2": A2, "mixes": mixes, "masks": masks}
    return ForwardResult(logits=logits, gates=gates, cache=cache)


def forward(
    model: RerankerModel,
    v: np.ndarray,
    expert_mask: np.ndarray | None = None,
) -> ForwardResult:
    """Single-vector forward pass; logits shape (N,), gates shape (N, E)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError(f"forward expects a single vector, got shape {v.shape}")
    masks = None if expert_mask is None else np.asarray(expert_mask, dtype=bool)[None, :]
    result = forward_batch(model, v[None, :], masks)
    return ForwardResult(
        logits=result.logits[0], gates=result.gates[0], cache=result.cache
    )


def predict_probs_batch(model: RerankerModel, X: np.ndarray) -> np.ndarray:
    """Per-metric best-candidate probabilities, shape (B, N); no dropout."""
    return _sigmoid(forward_batch(model, X).logits)


def predict_probs(model: RerankerModel, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return predict_probs_batch(model, v[None, :])[0]


def bce_loss(prob: float, label: float) -> float:
    """Binary cross-entropy with probability clamped to [eps, 1-eps]."""
    p = min(max(float(prob), PROB_EPS), 1.0 - PROB_EPS)
    y = float(label)
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def multi_task_loss(per_metric_losses: Sequence[float]) -> float:
    if len(per_metric_losses) == 0:
        raise ValidationError("need at least one metric loss")
    return float(sum(per_metric_losses)) / len(per_metric_losses)


def _clamped_bce_matrix(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    return -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))


def batch_loss(
    model: RerankerModel,
    X: np.ndarray,
    Y: np.ndarray,
    expert_masks: np.ndarray | None = None,
) -> float:
    """Multi-task loss of a batch: per metric the candidate-mean BCE, then
    the mean over metrics."""
    result = forward_batch(model, X, expert_masks)
    probs = _sigmoid(result.logits)
    losses = _clamped_bce_matrix(probs, np.asarray(Y, dtype=np.float64))
    return float(losses.mean(axis=0).mean())


def backward(
    model: RerankerModel,
    X: np.ndarray,
    Y: np.ndarray,
    expert_masks: np.ndarray | None = None,
) -> tuple[dict[str, np.ndarray], float]:
    """Analytic gradients of :func:`batch_loss` for every parameter.

    ReLU uses subgradient 0 at 0; rows whose probability sits inside the
    clamp region contribute zero gradient, exactly like the loss they feed.
    """
    cfg = model.config
    p = model.params
    Y = np.asarray(Y, dtype=np.float64)
    result = forward_batch(model, X, expert_masks)
    B, N = result.logits.shape
    E = cfg.num_experts
    if Y.shape != (B, N):
        raise ValidationError(f"label shape {Y.shape} != {(B, N)}")
    cache = result.cache
    Xin, H1, Xb = cache["X"], cache["H1"], cache["Xb"]
    A1, A2, mixes = cache["A1"], cache["A2"], cache["mixes"]

    probs = _sigmoid(result.logits)
    loss = float(_clamped_bce_matrix(probs, Y).mean(axis=0).mean())
    # d loss / d logit; zero where the clamp flattens the loss
    dlogits = (probs - Y) / (B * N)
    clamped = (probs < PROB_EPS) | (probs > 1.0 - PROB_EPS)
    dlogits[clamped] = 0.0

    grads = {name: np.zeros_like(value) for name, value in p.items()}
    dXb = np.zeros_like(Xb)
    dA2 = np.zeros_like(A2)
    for k in range(N):
        dlk = dlogits[:, k]  # (B,)
        mix = mixes[k]
        grads[f"tower{k}.w"] += mix.T @ dlk
        grads[f"tower{k}.b"] += dlk.sum()
        dmix = np.outer(dlk, p[f"tower{k}.w"])  # (B, eo)
        G = result.gates[:, k, :]  # (B, E)
        dG = np.einsum("bo,ebo->be", dmix, A2)
        dA2 += np.einsum("be,bo->ebo", G, dmix)
        # softmax backward; masked entries have G == 0 hence dZ == 0
        dZ = G * (dG - (dG * G).sum(axis=1, keepdims=True))
        grads[f"gate{k}.w"] += dZ.T @ Xb
        dXb += dZ @ p[f"gate{k}.w"]
    for i in range(E):
        dpre2 = dA2[i] * (A2[i] > 0)
        grads[f"expert{i}.w2"] += dpre2.T @ A1[i]
        grads[f"expert{i}.b2"] += dpre2.sum(axis=0)
        dpre1 = (dpre2 @ p[f"expert{i}.w2"]) * (A1[i] > 0)
        grads[f"expert{i}.w1"] += dpre1.T @ Xb
        grads[f"expert{i}.b1"] += dpre1.sum(axis=0)
        dXb += dpre1 @ p[f"expert{i}.w1"]
    dpre_b2 = dXb * (Xb > 0)
    grads["bottom.w2"] += dpre_b2.T @ H1
    grads["bottom.b2"] += dpre_b2.sum(axis=0)
    dpre_b1 = (dpre_b2 @ p["bottom.w2"]) * (H1 > 0)
    grads["bottom.w1"] += dpre_b1.T @ Xin
    grads["bottom.b1"] += dpre_b1.sum(axis=0)
    return grads, loss


def sample_expert_mask(E: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Independent keep-mask over experts; resamples until at least one
    expert survives."""
    if not 0.0 <= p < 1.0:
        raise ValidationError("dropout probability must lie in [0, 1)")
    while True:
        mask = rng.random(E) >= p
        if mask.any():
            return mask


@dataclass
class OptimizerState:
    peak_lr: float
    warmup_steps: int
    total_steps: int
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def learning_rate(self, step: int) -> float:
        """Linear warmup to the peak rate, constant afterwards; ``step`` is
        1-based."""
        return self.peak_lr * min(1.0, step / self.warmup_steps)


def init_optimizer(
    model: RerankerModel,
    peak_lr: float,
    total_steps: int,
    warmup_frac: float = 0.05,
) -> OptimizerState:
    warmup_steps = max(1, math.ceil(warmup_frac * total_steps))
    return OptimizerState(
        peak_lr=peak_lr,
        warmup_steps=warmup_steps,
        total_steps=total_steps,
        m={k: np.zeros_like(p) for k, p in model.params.items()},
        v={k: np.zeros_like(p) for k, p in model.params.items()},
    )


def optimizer_step(
    model: RerankerModel,
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> tuple[RerankerModel, OptimizerState]:
    """One adaptive-moment update with bias correction; mutates the model's
    parameters and the state in place and returns both."""
    state.step += 1
    t = state.step
    lr = state.learning_rate(t)
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, param in model.params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return model, state


# ---------------------------------------------------------------------------
# Serialization: magic | version | header length | JSON header | tensors |
# sha256 of everything before the digest.  Tensors are row-major float64,
# little-endian, in the canonical parameter order.
# ---------------------------------------------------------------------------


def save_model(model: RerankerModel, path) -> None:
    cfg = model.config
    order = list(_param_shapes(cfg))
    header = {
        "config": {
            "input_dim": cfg.input_dim,
            "num_tasks": cfg.num_tasks,
            "bottom_sizes": list(cfg.bottom_sizes),
            "expert_sizes": list(cfg.expert_sizes),
            "num_experts": cfg.num_experts,
            "expert_dropout": cfg.expert_dropout,
            "seed": cfg.seed,
        },
        "metric_names": list(model.metric_names),
        "train_methods": list(model.train_methods),
        "tensors": [
            {"name": name, "shape": list(model.params[name].shape)} for name in order
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", _FORMAT_VERSION)
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    for name in order:
        blob += np.ascontiguousarray(model.params[name], dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    with open(path, "wb") as handle:
        handle.write(bytes(blob))


def load_model(path) -> RerankerModel:
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < len(_MAGIC) + 4 + 8 + 32:
        raise ValidationError("model file truncated")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ValidationError("model file checksum mismatch (corrupt or truncated)")
    if body[: len(_MAGIC)] != _MAGIC:
        raise ValidationError("not a model file (bad magic)")
    offset = len(_MAGIC)
    (version,) = struct.unpack_from("<I", body, offset)
    offset += 4
    if version != _FORMAT_VERSION:
        raise ValidationError(
            f"unsupported model format version {version} (expected {_FORMAT_VERSION})"
        )
    (header_len,) = struct.unpack_from("<Q", body, offset)
    offset += 8
    header = json.loads(body[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    raw_cfg = header["config"]
    config = ModelConfig(
        input_dim=raw_cfg["input_dim"],
        num_tasks=raw_cfg["num_tasks"],
        bottom_sizes=tuple(raw_cfg["bottom_sizes"]),
        expert_sizes=tuple(raw_cfg["expert_sizes"]),
        num_experts=raw_cfg["num_experts"],
        expert_dropout=raw_cfg["expert_dropout"],
        seed=raw_cfg["seed"],
    )
    expected = _param_shapes(config)
    params: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected or expected[name] != shape:
            raise ValidationError(
                f"tensor {name!r} with shape {shape} does not match the config "
                f"(expected {expected.get(name)})"
            )
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = size * 8
        params[name] = (
            np.frombuffer(body, dtype="<f8", count=size, offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(body):
        raise ValidationError("model file has trailing or missing tensor bytes")
    if set(params) != set(expected):
        raise ValidationError("model file is missing tensors")
    return RerankerModel(
        config=config,
        params=params,
        metric_names=tuple(header["metric_names"]),
        train_methods=tuple(header["train_methods"])
    )


def validate_model_metrics(model: RerankerModel, registry: MetricRegistry) -> None:
    """The model's task order must equal the active registry's metric order."""
    if model.metric_names != registry.names:
        raise ValidationError(
            f"metric-order mismatch: model trained for {list(model.metric_names)}, "
            f"pipeline expects {list(registry.names)}"
        )
