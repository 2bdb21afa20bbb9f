"""Scenario-aware batch normalization and scenario-aware feature filtering.

Both devices normalize/filter with scenario-agnostic structure but
re-scale per sample using small perceptrons fed the scenario embedding.
Forward functions return a cache consumed by the matching backward
function; backward functions return the input gradient plus a dict of
parameter gradients keyed like ``named_params``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensorcore import ShapeError, as_f64, drelu, relu, sigmoid

SABN_EPS = 1e-5
SABN_MOMENTUM = 0.99
RESCALE_HIDDEN = 16


class BatchTooSmallError(ValueError):
    """Train-mode normalization needs at least two samples."""


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class SabnState:
    """One hidden layer's normalization state.

    ``scenario_mode`` selects between scenario-conditioned rescaling
    networks (two one-hidden-layer perceptrons mapping s to per-unit
    scale/shift) and plain learnable per-unit scale/shift vectors.
    The scale path is initialized to produce 1 and the shift path 0, so
    training starts at standard batch normalization.
    """

    width: int
    scenario_dim: int
    scenario_mode: bool = True
    eps: float = SABN_EPS
    momentum: float = SABN_MOMENTUM
    params: dict = field(default_factory=dict)
    running_mean: np.ndarray = None
    running_var: np.ndarray = None

    @classmethod
    def create(cls, width: int, scenario_dim: int, rng: np.random.Generator,
               scenario_mode: bool = True, hidden: int = RESCALE_HIDDEN):
        state = cls(width=width, scenario_dim=scenario_dim, scenario_mode=scenario_mode)
        if scenario_mode:
            state.params = {
                "gamma_W1": _glorot(rng, hidden, scenario_dim),
                "gamma_b1": np.zeros(hidden),
                "gamma_W2": _glorot(rng, width, hidden),
                "gamma_b2": np.ones(width),
                "beta_W1": _glorot(rng, hidden, scenario_dim),
                "beta_b1": np.zeros(hidden),
                "beta_W2": _glorot(rng, width, hidden),
                "beta_b2": np.zeros(width),
            }
        else:
            state.params = {"gamma": np.ones(width), "beta": np.zeros(width)}
        state.running_mean = np.zeros(width)
        state.running_var = np.ones(width)
        return state

    def named_params(self):
        return list(self.params.items())

    def _rescale_forward(self, S: np.ndarray):
        """Per-sample scale and shift from the scenario embedding."""
        if not self.scenario_mode:
            B = S.shape[0]
            gamma = np.broadcast_to(self.params["gamma"], (B, self.width))
            beta = np.broadcast_to(self.params["beta"], (B, self.width))
            return gamma, beta, None
        p = self.params
        Hg = S @ p["gamma_W1"].T + p["gamma_b1"]
        Rg = relu(Hg)
        gamma = Rg @ p["gamma_W2"].T + p["gamma_b2"]
        Hb = S @ p["beta_W1"].T + p["beta_b1"]
        Rb = relu(Hb)
        beta = Rb @ p["beta_W2"].T + p["beta_b2"]
        return gamma, beta, {"Hg": Hg, "Rg": Rg, "Hb": Hb, "Rb": Rb, "S": S}

    def _rescale_backward(self, net_cache, dgamma: np.ndarray, dbeta: np.ndarray, grads: dict):
        if not self.scenario_mode:
            grads["gamma"] = dgamma.sum(axis=0)
            grads["beta"] = dbeta.sum(axis=0)
            return
        p = self.params
        S = net_cache["S"]
        grads["gamma_W2"] = dgamma.T @ net_cache["Rg"]
        grads["gamma_b2"] = dgamma.sum(axis=0)
        dRg = (dgamma @ p["gamma_W2"]) * drelu(net_cache["Hg"])
        grads["gamma_W1"] = dRg.T @ S
        grads["gamma_b1"] = dRg.sum(axis=0)
        grads["beta_W2"] = dbeta.T @ net_cache["Rb"]
        grads["beta_b2"] = dbeta.sum(axis=0)
        dRb = (dbeta @ p["beta_W2"]) * drelu(net_cache["Hb"])
        grads["beta_W1"] = dRb.T @ S
        grads["beta_b1"] = dRb.sum(axis=0)


def sabn_forward(state: SabnState, Z, S, train: bool, update_stats: bool | None = None):
    """Normalize a batch of pre-activations and rescale per sample.

    Train mode normalizes by the batch's own (biased) statistics and, when
    ``update_stats`` (defaults to ``train``), folds them into the moving
    averages. Eval mode normalizes by the stored moving statistics.
    Returns (output, cache).
    """
    Z, S = as_f64(Z), as_f64(S)
    if Z.ndim != 2 or S.ndim != 2 or Z.shape[0] != S.shape[0]:
        raise ShapeError(f"expected matching 2d batches, got {Z.shape} and {S.shape}")
    if Z.shape[1] != state.width:
        raise ShapeError(f"batch width {Z.shape[1]} != layer width {state.width}")
    if update_stats is None:
        update_stats = train
    if train:
        if Z.shape[0] < 2:
            raise BatchTooSmallError("train-mode normalization needs a batch of at least 2")
        mean = Z.mean(axis=0)
        var = Z.var(axis=0)
        if update_stats:
            m = state.momentum
            state.running_mean = m * state.running_mean + (1.0 - m) * mean
            state.running_var = m * state.running_var + (1.0 - m) * var
    else:
        mean = state.running_mean
        var = state.running_var
    inv_std = 1.0 / np.sqrt(var + state.eps)
    Zhat = (Z - mean) * inv_std
    gamma, beta, net_cache = state._rescale_forward(S)
    out = gamma * Zhat + beta
    cache = {"Zhat": Zhat, "inv_std": inv_std, "gamma": gamma, "train": train, "net": net_cache}
    return out, cache


def sabn_backward(state: SabnState, cache, G):
    """Backward pass matching ``sabn_forward``. Returns (dZ, param grads)."""
    Zhat = cache["Zhat"]
    inv_std = cache["inv_std"]
    gamma = cache["gamma"]
    grads: dict = {}
    state._rescale_backward(cache["net"], G * Zhat, G, grads)
    dZhat = G * gamma
    if cache["train"]:
        B = Zhat.shape[0]
        dZ = (inv_std / B) * (B * dZhat - dZhat.sum(axis=0) - Zhat * (dZhat * Zhat).sum(axis=0))
    else:
        dZ = dZhat * inv_std
    return dZ, grads


@dataclass
class SaffNet:
    """Feature filter: x' = x * sigmoid(W [x; s] + b), one linear map."""

    feature_dim: int
    scenario_dim: int
    params: dict = field(default_factory=dict)

    @classmethod
    def create(cls, feature_dim: int, scenario_dim: int, rng: np.random.Generator):
        net = cls(feature_dim=feature_dim, scenario_dim=scenario_dim)
        net.params = {
            "W": _glorot(rng, feature_dim, feature_dim + scenario_dim),
            "b": np.zeros(feature_dim),
        }
        return net

    def named_params(self):
        return list(self.params.items())


def saff_forward(net: SaffNet, X, S):
    """Gate each feature by a sigmoid of the joint (x, s) logits."""
    X, S = as_f64(X), as_f64(S)
    if X.ndim != 2 or S.ndim != 2 or X.shape[0] != S.shape[0]:
        raise ShapeError(f"expected matching 2d batches, got {X.shape} and {S.shape}")
    if X.shape[1] != net.feature_dim or S.shape[1] != net.scenario_dim:
        raise ShapeError(f"batch dims {X.shape[1]}/{S.shape[1]} != net dims {net.feature_dim}/{net.scenario_dim}")
    XS = np.concatenate([X, S], axis=1)
    A = XS @ net.params["W"].T + net.params["b"]
    gate = sigmoid(A)
    out = X * gate
    return out, {"X": X, "XS": XS, "gate": gate}


def saff_backward(net: SaffNet, cache, G, need_input_grad: bool = False):
    """Backward pass matching ``saff_forward``. Returns (dX or None, grads)."""
    X, gate = cache["X"], cache["gate"]
    dA = G * X * gate * (1.0 - gate)
    grads = {"W": dA.T @ cache["XS"], "b": dA.sum(axis=0)}
    dX = None
    if need_input_grad:
        dX = G * gate + (dA @ net.params["W"])[:, : net.feature_dim]
    return dX, grads


def saff(net: SaffNet, x, s) -> np.ndarray:
    """Single-sample feature filter."""
    out, _ = saff_forward(net, as_f64(x)[None, :], as_f64(s)[None, :])
    return out[0]
