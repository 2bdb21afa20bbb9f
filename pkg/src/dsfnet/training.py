"""Binary cross-entropy, the total regularized objective, Adam with
exponential learning-rate decay, and the deterministic training loop.

Determinism contract: given the same config, data, and seed, two runs
produce bit-identical traces and parameters. All randomness flows from
``TrainConfig.seed`` through explicit generators; batches are drawn by
seeded shuffling without replacement per epoch (partial tail batches are
dropped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, NormalizerState, normalize
from .disentangle import DRConfig, dr_loss
from .factorization import DSFNet, ModelConfig, save_checkpoint
from .tensorcore import as_f64, sigmoid

TRACE_HEADER = "step,lbce,lncr,lcnc,lr"


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss; carries the offending step index."""

    def __init__(self, step: int, message: str):
        super().__init__(message)
        self.step = step


@dataclass
class TrainConfig:
    """Optimization protocol settings (desk-scale defaults)."""

    batch_size: int = 256
    total_steps: int = 20000
    base_lr: float = 0.001
    decay_rate: float = 0.98
    decay_steps: int = 2000
    lam: float = 0.01
    kappa: float = 1.75
    variant: str = "dr"
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 0  # 0: only the final checkpoint

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch size must be at least 2")
        if self.base_lr <= 0:
            raise ValueError("base learning rate must be positive")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ValueError("decay rate must lie in (0, 1]")
        if self.decay_steps < 1:
            raise ValueError("decay steps must be positive")
        if self.total_steps < 0:
            raise ValueError("total steps must be nonnegative")
        if self.log_every < 1:
            raise ValueError("logging interval must be positive")


def bce_loss(logit: float, label: int):
    """Stable binary cross entropy on one raw logit. Returns (loss, dloss/dlogit)."""
    z = float(logit)
    y = float(label)
    loss = max(z, 0.0) - z * y + math.log1p(math.exp(-abs(z)))
    grad = float(sigmoid(np.array([z]))[0]) - y
    return loss, grad


def bce_loss_batch(logits: np.ndarray, labels: np.ndarray):
    """Mean BCE over a batch. Returns (mean loss, dmean/dlogits)."""
    z = as_f64(logits)
    y = as_f64(labels)
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(loss.mean()), (sigmoid(z) - y) / z.size


def lr_at(cfg: TrainConfig, step: int) -> float:
    """Continuously decayed learning rate at a given step."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    return cfg.base_lr * cfg.decay_rate ** (step / cfg.decay_steps)


@dataclass
class OptState:
    """Adam accumulators over the flattened parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, n_params: int):
        return cls(m=np.zeros(n_params), v=np.zeros(n_params))

    def update(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.step += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.step)
        v_hat = self.v / (1.0 - self.beta2 ** self.step)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def to_dict(self) -> dict:
        return {"m": self.m.tolist(), "v": self.v.tolist(), "step": self.step,
                "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "OptState":
        return cls(m=as_f64(d["m"]), v=as_f64(d["v"]), step=int(d["step"]),
                   beta1=float(d["beta1"]), beta2=float(d["beta2"]), eps=float(d["eps"]))


def total_loss(model: DSFNet, X, S, labels, dr_cfg: DRConfig, train: bool = False):
    """Mean BCE plus the weighted disentangling term (one evaluation, no updates).

    Returns (value, parts) where parts holds the unweighted components.
    """
    logits, _ = model.forward_batch(X, S, train=train, update_stats=False)
    lbce, _ = bce_loss_batch(logits, labels)
    res = dr_loss(model.weight_stacks(), dr_cfg)
    value = lbce + dr_cfg.lam * res.total
    return value, {"bce": lbce, "dr": res.total, "ncr": res.ncr, "cnc": res.cnc}


@dataclass
class TrainResult:
    model: DSFNet
    trace: list          # rows of (step, lbce, lncr, lcnc, lr)
    steps_run: int
    opt_state: OptState


def _write_trace(path, rows):
    lines = [TRACE_HEADER]
    for step, lbce, lncr, lcnc, lr in rows:
        lines.append(f"{step},{lbce!r},{lncr!r},{lcnc!r},{lr!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def train(model: DSFNet, dataset: Dataset, cfg: TrainConfig,
          trace_path=None, checkpoint_path=None) -> TrainResult:
    """Run ``cfg.total_steps`` Adam updates of the full objective.

    Fits the input normalizer online (train mode) and stores it on the
    model. The trace records the pre-update batch BCE and the angle-form
    regularizer components at every logging interval and at the last step.
    """
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least 2 samples to train")
    dr_cfg = DRConfig(n_factors=model.config.n_factors, lam=cfg.lam,
                      kappa=cfg.kappa, variant=cfg.variant)
    if model.normalizer is None:
        model.normalizer = NormalizerState.create(dataset.d_x, dataset.d_s)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))
    opt = OptState.create(model.n_params)
    params = model.param_vector()
    batch = min(cfg.batch_size, n)
    reg_active = dr_cfg.lam > 0.0 and dr_cfg.variant != "none"

    order = rng.permutation(n)
    cursor = 0
    trace = []
    for step in range(cfg.total_steps):
        if cursor + batch > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + batch]
        cursor += batch

        Xb, Sb = normalize(model.normalizer, dataset.X[idx], dataset.S[idx], mode="train")
        yb = dataset.labels[idx]
        logits, cache = model.forward_batch(Xb, Sb, train=True)
        lbce, dlogits = bce_loss_batch(logits, yb)
        grads, _ = model.backward_batch(cache, dlogits)

        log_now = (step % cfg.log_every == 0) or (step == cfg.total_steps - 1)
        if reg_active or log_now:
            res = dr_loss(model.weight_stacks(), dr_cfg)
            if reg_active:
                for l, g in enumerate(res.layer_grads):
                    grads[f"bank.W.{l}"] += dr_cfg.lam * g
            total = lbce + dr_cfg.lam * res.total
        else:
            res = None
            total = lbce
        if not math.isfinite(total):
            raise DivergenceError(step, f"non-finite loss at step {step}")

        if log_now:
            # the regularizer curves are size-independent per-layer means;
            # the training objective itself uses the layer sum
            n_layers = model.config.n_layers
            trace.append((step, lbce, res.ncr / n_layers, res.cnc / n_layers,
                          lr_at(cfg, step)))

        params = opt.update(params, model.grads_to_vector(grads), lr_at(cfg, step))
        model.set_param_vector(params)

        if checkpoint_path and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, model, opt)

    if trace_path is not None:
        _write_trace(trace_path, trace)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, opt)
    return TrainResult(model=model, trace=trace, steps_run=cfg.total_steps, opt_state=opt)


def fit(model_cfg: ModelConfig, train_cfg: TrainConfig, dataset: Dataset,
        trace_path=None, checkpoint_path=None) -> TrainResult:
    """Create a model seeded from the training seed and train it."""
    model = DSFNet(model_cfg, np.random.default_rng(np.random.SeedSequence((train_cfg.seed, 3))))
    return train(model, dataset, train_cfg, trace_path=trace_path, checkpoint_path=checkpoint_path)
