"""Feed-forward surrogate trained against noisy trajectory-ensemble targets.

The regression target for a (instance, point) pair is a Monte Carlo
estimate of the solution, so the loss is weak supervision: unbiased noise
around the true field. Training follows a plain loop: sample or rotate an
instance, estimate targets from L fresh trajectories (optionally folded
into the running-average cache), take one Adam step on the mean squared
error. Everything is numpy with hand-written gradients; determinism on a
single worker is exact.
"""

from __future__ import annotations

import csv
import struct
import time
from dataclasses import dataclass, field
from statistics import median

import numpy as np

from .estimator import EstimateCache, cache_update, estimate
from .walker import WalkConfig

_CKPT_MAGIC = b"SWNN"
_CKPT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Loss exceeded the divergence guard."""


class Surrogate:
    """Fully connected tanh network with a linear scalar output."""

    def __init__(self, sizes, rng=None, init=True):
        if len(sizes) < 2 or sizes[-1] != 1:
            raise ValueError("sizes must end in a single output unit")
        self.sizes = [int(s) for s in sizes]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if init:
                if rng is None:
                    raise ValueError("initialization needs an rng")
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            else:
                w = np.zeros((fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def _check_features(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise ValueError(
                f"feature width {X.shape[1]} does not match model input {self.input_dim}"
            )
        return X

    def _forward_full(self, X):
        acts = [X]
        a = X
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if k == last else np.tanh(z)
            acts.append(a)
        return acts

    def forward(self, X) -> np.ndarray:
        """Predictions for a feature batch, shape (n,)."""
        X = self._check_features(X)
        return self._forward_full(X)[-1][:, 0]

    def loss_and_grads(self, X, y):
        """Mean squared error and its exact gradient for every parameter."""
        X = self._check_features(X)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.size != X.shape[0]:
            raise ValueError("feature and target counts differ")
        acts = self._forward_full(X)
        pred = acts[-1][:, 0]
        resid = pred - y
        loss = float(resid @ resid) / y.size
        delta = (2.0 / y.size) * resid[:, None]
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k > 0:
                # acts[k] holds tanh(z_k) for hidden layers
                delta = (delta @ self.weights[k].T) * (1.0 - acts[k] * acts[k])
        return loss, (gw, gb)

    def copy(self) -> "Surrogate":
        dup = Surrogate(self.sizes, init=False)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC)
            fh.write(struct.pack("<II", _CKPT_VERSION, len(self.sizes)))
            fh.write(struct.pack(f"<{len(self.sizes)}I", *self.sizes))
            for w, b in zip(self.weights, self.biases):
                fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Surrogate":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != _CKPT_MAGIC:
            raise ValueError("not a surrogate checkpoint")
        version, n_sizes = struct.unpack_from("<II", blob, 4)
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = struct.unpack_from(f"<{n_sizes}I", blob, 12)
        model = cls(sizes, init=False)
        offset = 12 + 4 * n_sizes
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = np.frombuffer(blob, "<f8", fan_in * fan_out, offset)
            offset += 8 * fan_in * fan_out
            b = np.frombuffer(blob, "<f8", fan_out, offset)
            offset += 8 * fan_out
            model.weights[k] = w.reshape(fan_in, fan_out).copy()
            model.biases[k] = b.copy()
        return model


def weak_supervision_loss(model, features, targets) -> float:
    """Mean squared deviation between predictions and noisy targets."""
    loss, _ = model.loss_and_grads(features, targets)
    return loss


def backward(model, features, targets):
    """Gradient of the weak-supervision loss for every parameter."""
    _, grads = model.loss_and_grads(features, targets)
    return grads


class Adam:
    """Adam with additive weight decay on the gradients."""

    def __init__(self, model, lr=1e-3, weight_decay=1e-6, beta1=0.9, beta2=0.999, eps=1e-8):
        self.model = model
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._mw = [np.zeros_like(w) for w in model.weights]
        self._vw = [np.zeros_like(w) for w in model.weights]
        self._mb = [np.zeros_like(b) for b in model.biases]
        self._vb = [np.zeros_like(b) for b in model.biases]

    def step(self, grads, lr=None):
        lr = self.lr if lr is None else lr
        gw, gb = grads
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in range(len(self.model.weights)):
            for p, g, m, v in (
                (self.model.weights[k], gw[k], self._mw[k], self._vw[k]),
                (self.model.biases[k], gb[k], self._mb[k], self._vb[k]),
            ):
                g = g + self.weight_decay * p
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class PlateauScheduler:
    """Decays the learning rate when windowed median loss stops improving."""

    def __init__(self, lr, factor=0.9, patience=2, window=50, min_lr=1e-6):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.window = max(1, int(window))
        self.min_lr = min_lr
        self._buf = []
        self._best = np.inf
        self._bad = 0

    def step(self, loss) -> float:
        self._buf.append(float(loss))
        if len(self._buf) >= self.window:
            med = median(self._buf)
            self._buf.clear()
            if med < self._best * (1.0 - 1e-4):
                self._best = med
                self._bad = 0
            else:
                self._bad += 1
                if self._bad > self.patience:
                    self.lr = max(self.lr * self.factor, self.min_lr)
                    self._bad = 0
        return self.lr


@dataclass
class TrainConfig:
    """Hyperparameters for the weak-supervision training loop."""

    epochs: int
    points_per_instance: int = 1024
    instances: int = 8
    trajectories: int = 10
    lr: float = 1e-3
    weight_decay: float = 1e-6
    plateau_factor: float = 0.9
    plateau_patience: int = 2
    plateau_window: int = 50
    caching: bool = True
    seed: int = 0
    workers: int = 1
    divergence_guard: float = 1e6
    walk: WalkConfig = field(default_factory=WalkConfig)

    def __post_init__(self):
        if self.epochs < 0 or self.trajectories < 1:
            raise ValueError("epochs must be >= 0 and trajectories >= 1")
        if self.points_per_instance < 1 or self.instances < 1:
            raise ValueError("point and instance counts must be positive")


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    loss: float
    lr: float
    wall: float


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "lr", "wall"])
        for row in history:
            w.writerow([row.epoch, repr(row.loss), repr(row.lr), repr(row.wall)])


def train(model, family, cfg: TrainConfig, rng):
    """Run the weak-supervision loop; returns (model, history).

    Cached mode freezes a pool of instances with fixed per-instance point
    sets; each epoch refreshes one pool member with L new trajectories,
    folds them into its running-average cache, and steps on that member's
    targets. Non-cached mode draws fresh instances and points every epoch
    and regresses directly on the fresh estimates.
    """
    history: list[HistoryRow] = []
    if cfg.epochs == 0:
        return model, history
    opt = Adam(model, lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = PlateauScheduler(
        cfg.lr,
        factor=cfg.plateau_factor,
        patience=cfg.plateau_patience,
        window=cfg.plateau_window,
    )
    start = time.monotonic()
    N, L = cfg.points_per_instance, cfg.trajectories

    pool = []
    if cfg.caching:
        for j in range(cfg.instances):
            inst = family.sample_instance(rng, j)
            pts = family.sample_points(inst, N, rng)
            pool.append((inst, pts, family.features(inst, pts), EstimateCache()))

    for epoch in range(cfg.epochs):
        if cfg.caching:
            j = epoch % cfg.instances
            inst, pts, feats, cache = pool[j]
            wcfg = family.walk_config(inst, cfg.walk)
            ests = estimate(
                inst,
                pts,
                L,
                wcfg,
                workers=cfg.workers,
                traj_start=cache.epoch * L,
            )
            cache_update(cache, {(j, i): e for i, e in enumerate(ests)})
            targets = cache.targets()
        else:
            feats_parts, target_parts = [], []
            for m in range(cfg.instances):
                inst = family.sample_instance(rng, epoch * cfg.instances + m)
                pts = family.sample_points(inst, N, rng)
                wcfg = family.walk_config(inst, cfg.walk)
                ests = estimate(inst, pts, L, wcfg, workers=cfg.workers)
                feats_parts.append(family.features(inst, pts))
                target_parts.append(np.array([e.mean for e in ests]))
            feats = np.concatenate(feats_parts, axis=0)
            targets = np.concatenate(target_parts)

        loss, grads = model.loss_and_grads(feats, targets)
        if not np.isfinite(loss) or loss > cfg.divergence_guard:
            raise TrainingDivergedError(
                f"loss {loss:.3e} at epoch {epoch} exceeds guard {cfg.divergence_guard:.1e}"
            )
        lr = sched.step(loss)
        opt.step(grads, lr=lr)
        history.append(HistoryRow(epoch, loss, lr, time.monotonic() - start))
    return model, history


# ---------------------------------------------------------------------------
# held-out evaluation against a high-fidelity reference
# ---------------------------------------------------------------------------


@dataclass
class ReferenceSet:
    """High-fidelity estimates on held-out instances for scoring models."""

    instances: list
    points: list
    means: list
    variances: list
    n_samples: int


def build_reference(
    family, n_instances, n_points, L, walk_cfg, rng, *, key_offset=10_000, workers=1
) -> ReferenceSet:
    """Estimate held-out targets with L trajectories per point."""
    instances, points, means, variances = [], [], [], []
    for h in range(n_instances):
        inst = family.sample_instance(rng, key_offset + h)
        pts = family.sample_points(inst, n_points, rng)
        wcfg = family.walk_config(inst, walk_cfg)
        ests = estimate(inst, pts, L, wcfg, workers=workers)
        instances.append(inst)
        points.append(pts)
        means.append(np.array([e.mean for e in ests]))
        variances.append(np.array([e.variance for e in ests]))
    return ReferenceSet(instances, points, means, variances, L)


def surrogate_mse(model, family, ref: ReferenceSet):
    """(raw, corrected) MSE of the model against the reference means.

    The reference is itself noisy; its mean squared standard error is
    subtracted from the raw score so the corrected value estimates the
    distance to the true field.
    """
    sq, se2 = [], []
    for inst, pts, means, variances in zip(
        ref.instances, ref.points, ref.means, ref.variances
    ):
        pred = model.forward(family.features(inst, pts))
        sq.append((pred - means) ** 2)
        se2.append(variances / ref.n_samples)
    raw = float(np.concatenate(sq).mean())
    corrected = raw - float(np.concatenate(se2).mean())
    return raw, corrected
