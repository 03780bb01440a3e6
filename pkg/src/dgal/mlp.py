"""Two-layer ReLU feature extractor with a linear classifier head.

All forward/backward math is explicit numpy so the gradient of the combined
objective (plain cross entropy plus the weighted masked-feature term) can be
checked against finite differences. Training is SGD with momentum and a
cosine learning-rate decay.

The masked route reuses the classifier head on a feature vector whose
coordinates outside a retained set are zeroed, so its gradient touches only
the retained coordinates of the head and of the features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

CHECKPOINT_VERSION = 1

PARAM_NAMES = ("w1", "b1", "w2", "b2", "wc", "bc")


@dataclass
class TrainConfig:
    """Optimizer and objective hyperparameters shared across rounds."""

    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 64
    iters_full: int = 3000  # reference step count when training on all source data
    delta: float = 0.5  # quadratic damping on masked logits
    lam: float = 0.5  # weight on the plain cross-entropy term
    hidden_dim: int = 32
    feature_dim: int = 16

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.iters_full < 1:
            raise ContractError("lr, batch_size, iters_full must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ContractError("momentum must be in [0, 1)")
        if self.delta < 0 or self.lam < 0:
            raise ContractError("delta and lam must be >= 0")


@dataclass
class MlpModel:
    input_dim: int
    hidden_dim: int
    feature_dim: int
    num_classes: int
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.input_dim,
            self.hidden_dim,
            self.feature_dim,
            self.num_classes,
            {k: v.copy() for k, v in self.params.items()},
        )


@dataclass(frozen=True)
class FeatureBatch:
    """Extracted features with logits and class probabilities, id-aligned."""

    ids: np.ndarray  # (n,) int64
    f: np.ndarray  # (n, feature_dim)
    z: np.ndarray  # (n, num_classes)
    p: np.ndarray  # (n, num_classes) rows sum to 1


def init_model(input_dim: int, hidden_dim: int, feature_dim: int, num_classes: int, seed: int) -> MlpModel:
    rng = np.random.default_rng(seed)
    p = {
        "w1": rng.standard_normal((hidden_dim, input_dim)) * np.sqrt(2.0 / input_dim),
        "b1": np.zeros(hidden_dim),
        "w2": rng.standard_normal((feature_dim, hidden_dim)) * np.sqrt(2.0 / hidden_dim),
        "b2": np.zeros(feature_dim),
        "wc": rng.standard_normal((num_classes, feature_dim)) * np.sqrt(1.0 / feature_dim),
        "bc": np.zeros(num_classes),
    }
    return MlpModel(input_dim, hidden_dim, feature_dim, num_classes, p)


def _forward_cache(model: MlpModel, X: np.ndarray):
    p = model.params
    a1 = X @ p["w1"].T + p["b1"]
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ p["w2"].T + p["b2"]
    f = np.maximum(a2, 0.0)
    z = f @ p["wc"].T + p["bc"]
    return {"x": X, "a1": a1, "h1": h1, "a2": a2, "f": f, "z": z}


def forward(model: MlpModel, X: np.ndarray):
    """Features and logits for a batch; returns (f, z)."""
    cache = _forward_cache(model, np.asarray(X, dtype=np.float64))
    return cache["f"], cache["z"]


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def predict_proba(model: MlpModel, X: np.ndarray) -> np.ndarray:
    _, z = forward(model, X)
    return softmax(z)


def accuracy(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    _, z = forward(model, X)
    return float(np.mean(z.argmax(axis=1) == np.asarray(y)))


def extract(model: MlpModel, X: np.ndarray, ids: np.ndarray) -> FeatureBatch:
    f, z = forward(model, X)
    return FeatureBatch(ids=np.asarray(ids, dtype=np.int64), f=f, z=z, p=softmax(z))


def loss_ce(z: np.ndarray, y: np.ndarray, reduce: bool = True):
    """Cross entropy from logits, computed via log-sum-exp."""
    y = np.asarray(y, dtype=np.int64)
    logp = log_softmax(np.asarray(z, dtype=np.float64))
    per = -logp[np.arange(len(y)), y]
    return float(per.mean()) if reduce else per


def masked_forward(model: MlpModel, f: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Classifier head applied to masked features: logits of f with the
    coordinates where mask == 0 removed from play."""
    mask = np.asarray(mask, dtype=np.float64)
    return (f * mask) @ model.params["wc"].T + model.params["bc"]


def loss_dom(z_prime: np.ndarray, y: np.ndarray, delta: float, reduce: bool = True):
    """Masked-route loss: cross entropy plus a quadratic damping term that
    keeps the masked logits from drifting to compensate for the lost
    coordinates."""
    per = loss_ce(z_prime, y, reduce=False) + 0.5 * delta * np.sum(z_prime**2, axis=1)
    return float(per.mean()) if reduce else per


def loss_all(
    z: np.ndarray,
    z_prime: np.ndarray,
    y: np.ndarray,
    q: np.ndarray,
    lam: float,
    delta: float,
) -> float:
    """Combined objective: lam * CE on full logits plus the per-sample
    domain-weighted masked-route loss, averaged over the batch."""
    per = lam * loss_ce(z, y, reduce=False) + np.asarray(q) * loss_dom(z_prime, y, delta, reduce=False)
    return float(per.mean())


def loss_and_grads(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray | None,
    q: np.ndarray | None,
    lam: float,
    delta: float,
):
    """Objective value and its gradient for every parameter.

    With mask=None the objective is plain mean cross entropy and lam/q/delta
    are ignored. Otherwise mask is (n, feature_dim) or (feature_dim,) and q
    is the per-sample weight on the masked route.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    cache = _forward_cache(model, X)
    f, z = cache["f"], cache["z"]
    p = softmax(z)
    Y = np.zeros_like(p)
    Y[np.arange(n), y] = 1.0

    if mask is None:
        loss = loss_ce(z, y)
        dz = (p - Y) / n
        dzp = None
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=np.float64), f.shape)
        q = np.asarray(q, dtype=np.float64)
        fm = f * mask
        zp = fm @ model.params["wc"].T + model.params["bc"]
        pp = softmax(zp)
        loss = loss_all(z, zp, y, q, lam, delta)
        dz = lam * (p - Y) / n
        dzp = (q[:, None] / n) * (pp - Y + delta * zp)

    w = model.params
    grads = {}
    grads["wc"] = dz.T @ f
    grads["bc"] = dz.sum(axis=0)
    df = dz @ w["wc"]
    if dzp is not None:
        grads["wc"] += dzp.T @ fm
        grads["bc"] += dzp.sum(axis=0)
        df = df + (dzp @ w["wc"]) * mask
    da2 = df * (cache["a2"] > 0)
    grads["w2"] = da2.T @ cache["h1"]
    grads["b2"] = da2.sum(axis=0)
    da1 = (da2 @ w["w2"]) * (cache["a1"] > 0)
    grads["w1"] = da1.T @ X
    grads["b1"] = da1.sum(axis=0)
    return loss, grads


def cosine_lr(lr0: float, step: int, steps_total: int) -> float:
    frac = min(max(step, 0), steps_total) / max(steps_total, 1)
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * frac))


def backward_and_step(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    mask: np.ndarray | None,
    q: np.ndarray | None,
    cfg: TrainConfig,
    step: int,
    steps_total: int,
    velocity: dict[str, np.ndarray],
) -> float:
    """One SGD-with-momentum step at the cosine-decayed learning rate.

    Mutates model.params and velocity in place; returns the batch loss.
    """
    loss, grads = loss_and_grads(model, X, y, mask, q, cfg.lam, cfg.delta)
    lr = cosine_lr(cfg.lr, step, steps_total)
    for name in PARAM_NAMES:
        v = velocity.setdefault(name, np.zeros_like(model.params[name]))
        v *= cfg.momentum
        v -= lr * grads[name]
        model.params[name] += v
    return loss


def train_model(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    steps_total: int,
    rng: np.random.Generator,
    masks: np.ndarray | None = None,
    q: np.ndarray | None = None,
) -> list[float]:
    """Minibatch training loop over a fixed labeled set.

    masks/q, when given, are aligned with rows of X and sliced per batch.
    Returns the per-step losses.
    """
    n = X.shape[0]
    if n == 0:
        raise ContractError("cannot train on an empty labeled set")
    velocity: dict[str, np.ndarray] = {}
    losses = []
    for step in range(steps_total):
        take = min(cfg.batch_size, n)
        idx = rng.choice(n, size=take, replace=False)
        mb = None if masks is None else masks[idx]
        qb = None if q is None else q[idx]
        losses.append(backward_and_step(model, X[idx], y[idx], mb, qb, cfg, step, steps_total, velocity))
    return losses


def save_checkpoint(model: MlpModel, path) -> None:
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        input_dim=np.int64(model.input_dim),
        hidden_dim=np.int64(model.hidden_dim),
        feature_dim=np.int64(model.feature_dim),
        num_classes=np.int64(model.num_classes),
        **model.params,
    )


def load_checkpoint(path) -> MlpModel:
    with np.load(path) as d:
        if int(d["version"]) != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {int(d['version'])}")
        return MlpModel(
            int(d["input_dim"]),
            int(d["hidden_dim"]),
            int(d["feature_dim"]),
            int(d["num_classes"]),
            {k: d[k].copy() for k in PARAM_NAMES},
        )
