"""Factor-scenario parameter banks, the shared gating network, dynamic
parameter composition, and the full network forward/backward pass.

The network keeps N parameter sets ("factors") per layer. For a sample
with scenario embedding s, the effective layer parameters are the
gate-weighted sum of the factors, with gates sigmoid(MLP(s)) computed
once and shared by every layer. Hidden layers are batch-normalized with
scenario-conditioned rescaling and passed through the activation; the
output layer emits one raw logit.

Backward passes are written by hand against the forward code here and are
validated by the finite-difference oracle in :mod:`dsfnet.tensorcore`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data as datamod
from .scenario_aware import SabnState, SaffNet, sabn_backward, sabn_forward, saff_backward, saff_forward
from .tensorcore import ACTIVATIONS, ShapeError, as_f64, sigmoid

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture settings.

    ``layer_dims`` runs from the first-layer input width to the single
    output unit, e.g. (24, 256, 128, 64, 32, 1). When ``concat_scenario``
    is set, the scenario embedding is appended to the features before the
    first layer (used by the plain-MLP reference) and ``layer_dims[0]``
    must account for it.
    """

    layer_dims: tuple
    scenario_dim: int
    n_factors: int = 7
    gate_hidden: int = 32
    activation: str = "relu"
    use_saff: bool = True
    scenario_bn: bool = True
    gated: bool = True
    concat_scenario: bool = False
    rescale_hidden: int = 16

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        if self.n_factors < 1:
            raise ValueError("need at least one factor")
        if len(self.layer_dims) < 2:
            raise ValueError("need at least one layer (input dim and output dim)")
        if self.layer_dims[-1] != 1:
            raise ValueError("the output layer must have width 1")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError("layer widths must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.gate_hidden < 1 or self.rescale_hidden < 1:
            raise ValueError("hidden widths must be positive")
        if self.concat_scenario and self.use_saff:
            raise ValueError("feature filtering is defined on the raw features; disable it when concatenating")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def feature_dim(self) -> int:
        """Width of the raw feature vector x, before any concatenation."""
        return self.layer_dims[0] - (self.scenario_dim if self.concat_scenario else 0)


def _glorot(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    fan_out, fan_in = shape[-2], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class FactorBank:
    """Per-layer stacks of N factor weight matrices and bias vectors."""

    W: list  # per layer: (N, d_out, d_in)
    b: list  # per layer: (N, d_out)

    @classmethod
    def create(cls, layer_dims, n_factors: int, rng: np.random.Generator):
        W, b = [], []
        for l in range(len(layer_dims) - 1):
            d_in, d_out = layer_dims[l], layer_dims[l + 1]
            W.append(_glorot(rng, (n_factors, d_out, d_in)))
            b.append(np.zeros((n_factors, d_out)))
        return cls(W=W, b=b)

    @property
    def n_layers(self) -> int:
        return len(self.W)

    def named_params(self):
        items = []
        for l in range(self.n_layers):
            items.append((f"bank.W.{l}", self.W[l]))
            items.append((f"bank.b.{l}", self.b[l]))
        return items


@dataclass
class GatingNet:
    """One shared two-layer perceptron mapping s to N gate logits."""

    scenario_dim: int
    hidden: int
    n_factors: int
    activation: str = "relu"
    params: dict = field(default_factory=dict)

    @classmethod
    def create(cls, scenario_dim: int, hidden: int, n_factors: int, rng: np.random.Generator,
               activation: str = "relu"):
        net = cls(scenario_dim=scenario_dim, hidden=hidden, n_factors=n_factors, activation=activation)
        net.params = {
            "W1": _glorot(rng, (hidden, scenario_dim)),
            "b1": np.zeros(hidden),
            "W2": _glorot(rng, (n_factors, hidden)),
            "b2": np.zeros(n_factors),
        }
        return net

    def named_params(self):
        return [(f"gate.{k}", v) for k, v in self.params.items()]


@dataclass
class GateVector:
    """Computed gates for one sample, or an explicit override."""

    alpha: np.ndarray
    override: bool = False


def gates_forward(gnet: GatingNet, S: np.ndarray):
    """Batch gate computation. Returns (alpha (B, N), cache)."""
    S = as_f64(S)
    if S.ndim != 2 or S.shape[1] != gnet.scenario_dim:
        raise ShapeError(f"scenario batch {S.shape} does not match gating input dim {gnet.scenario_dim}")
    act, _ = ACTIVATIONS[gnet.activation]
    p = gnet.params
    H = S @ p["W1"].T + p["b1"]
    R = act(H)
    logits = R @ p["W2"].T + p["b2"]
    alpha = sigmoid(logits)
    return alpha, {"S": S, "H": H, "R": R, "alpha": alpha}


def gates_backward(gnet: GatingNet, cache, dalpha: np.ndarray) -> dict:
    _, dact = ACTIVATIONS[gnet.activation]
    alpha = cache["alpha"]
    dlogits = dalpha * alpha * (1.0 - alpha)
    p = gnet.params
    grads = {
        "gate.W2": dlogits.T @ cache["R"],
        "gate.b2": dlogits.sum(axis=0),
    }
    dR = (dlogits @ p["W2"]) * dact(cache["H"])
    grads["gate.W1"] = dR.T @ cache["S"]
    grads["gate.b1"] = dR.sum(axis=0)
    return grads


def compute_gates(gnet: GatingNet, s) -> GateVector:
    """Gates for a single scenario embedding; reused identically at every layer."""
    alpha, _ = gates_forward(gnet, as_f64(s)[None, :])
    return GateVector(alpha=alpha[0])


def compose_layer(bank: FactorBank, l: int, alpha):
    """Gate-weighted sum of layer l's factor matrices and biases."""
    a = as_f64(alpha.alpha if isinstance(alpha, GateVector) else alpha)
    if a.shape != (bank.W[l].shape[0],):
        raise ShapeError(f"expected {bank.W[l].shape[0]} gates, got shape {a.shape}")
    W_eff = np.tensordot(a, bank.W[l], axes=1)
    b_eff = a @ bank.b[l]
    return W_eff, b_eff


class DSFNet:
    """The assembled network: feature filter, gated factor stack, and
    scenario-aware normalization, with explicit backward passes."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.bank = FactorBank.create(config.layer_dims, config.n_factors, rng)
        self.gating = GatingNet.create(config.scenario_dim, config.gate_hidden,
                                       config.n_factors, rng, config.activation)
        self.sabn = [
            SabnState.create(config.layer_dims[l + 1], config.scenario_dim, rng,
                             scenario_mode=config.scenario_bn, hidden=config.rescale_hidden)
            for l in range(config.n_layers - 1)
        ]
        self.saff = (SaffNet.create(config.feature_dim, config.scenario_dim, rng)
                     if config.use_saff else None)
        self.normalizer = None  # set by the trainer, persisted in checkpoints
        self._params = {}
        for name, arr in self.bank.named_params():
            self._params[name] = arr
        for name, arr in self.gating.named_params():
            self._params[name] = arr
        for l, state in enumerate(self.sabn):
            for name, arr in state.named_params():
                self._params[f"sabn.{l}.{name}"] = arr
        if self.saff is not None:
            for name, arr in self.saff.named_params():
                self._params[f"saff.{name}"] = arr

    # -- parameter plumbing -------------------------------------------------

    @property
    def param_names(self):
        return list(self._params.keys())

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self._params.values())

    def param_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._params.values()])

    def set_param_vector(self, vec: np.ndarray):
        vec = as_f64(vec)
        if vec.size != self.n_params:
            raise ShapeError(f"expected {self.n_params} parameters, got {vec.size}")
        i = 0
        for arr in self._params.values():
            arr[...] = vec[i:i + arr.size].reshape(arr.shape)
            i += arr.size
    def grads_to_vector(self, grads: dict) -> np.ndarray:
        parts = []
        for name, arr in self._params.items():
            g = grads.get(name)
            parts.append(np.zeros(arr.size) if g is None else g.ravel())
        return np.concatenate(parts)

    def weight_stacks(self):
        """Per-layer (N, M, d) weight stacks, the regularizer's view."""
        return self.bank.W

    # -- forward / backward --------------------------------------------------

    def forward_batch(self, X, S, train: bool = False, gate_override=None,
                      update_stats: bool | None = None):
        """Run a batch through the network. Returns (logits, cache).

        ``gate_override`` replaces the computed gates with a fixed vector
        (broadcast over the batch), used by the interpretability probe.
        ``update_stats=False`` makes a train-mode pass side-effect free.
        """
        cfg = self.config
        X, S = as_f64(X), as_f64(S)
        if X.ndim != 2 or S.ndim != 2 or X.shape[0] != S.shape[0]:
            raise ShapeError(f"expected matching 2d batches, got {X.shape} and {S.shape}")
        if X.shape[1] != cfg.feature_dim or S.shape[1] != cfg.scenario_dim:
            raise ShapeError(f"batch dims {X.shape[1]}/{S.shape[1]} do not match "
                             f"model dims {cfg.feature_dim}/{cfg.scenario_dim}")
        B = X.shape[0]
        N = cfg.n_factors
        act, _ = ACTIVATIONS[cfg.activation]
        cache = {"train": train}

        if self.saff is not None:
            H, saff_cache = saff_forward(self.saff, X, S)
            cache["saff"] = saff_cache
        else:
            H = np.concatenate([X, S], axis=1) if cfg.concat_scenario else X

        if gate_override is not None:
            a = as_f64(gate_override)
            if a.shape != (N,):
                raise ShapeError(f"gate override must have shape ({N},), got {a.shape}")
            alpha = np.broadcast_to(a, (B, N))
            cache["gate"] = None
        elif not cfg.gated:
            alpha = np.ones((B, N))
            cache["gate"] = None
        else:
            alpha, gate_cache = gates_forward(self.gating, S)
            cache["gate"] = gate_cache
        cache["alpha"] = alpha

        layers = []
        for l in range(cfg.n_layers):
            Wl, bl = self.bank.W[l], self.bank.b[l]
            d_out = Wl.shape[1]
            U = (H @ Wl.reshape(N * d_out, -1).T).reshape(B, N, d_out) + bl[None]
            Z = np.einsum("bn,bnd->bd", alpha, U)
            entry = {"H": H, "U": U}
            if l < cfg.n_layers - 1:
                Zn, sabn_cache = sabn_forward(self.sabn[l], Z, S, train, update_stats)
                entry["sabn"] = sabn_cache
                entry["preact"] = Zn
                H = act(Zn)
            layers.append(entry)
        cache["layers"] = layers
        return Z[:, 0], cache

    def backward_batch(self, cache, dlogits, need_input_grad: bool = False):
        """Backpropagate d(loss)/d(logits). Returns (grads dict, dX or None)."""
        cfg = self.config
        _, dact = ACTIVATIONS[cfg.activation]
        alpha = cache["alpha"]
        B, N = alpha.shape
        grads: dict = {}
        dalpha = np.zeros((B, N))
        dH = None
        for l in reversed(range(cfg.n_layers)):
            entry = cache["layers"][l]
            if l == cfg.n_layers - 1:
                dZ = as_f64(dlogits)[:, None]
            else:
                dZn = dH * dact(entry["preact"])
                dZ, sabn_grads = sabn_backward(self.sabn[l], entry["sabn"], dZn)
                for k, v in sabn_grads.items():
                    grads[f"sabn.{l}.{k}"] = v
            U, H = entry["U"], entry["H"]
            d_out = U.shape[2]
            T = alpha[:, :, None] * dZ[:, None, :]
            grads[f"bank.W.{l}"] = (T.reshape(B, N * d_out).T @ H).reshape(N, d_out, -1)
            grads[f"bank.b.{l}"] = T.sum(axis=0)
            dalpha += np.einsum("bd,bnd->bn", dZ, U)
            dH = T.reshape(B, N * d_out) @ self.bank.W[l].reshape(N * d_out, -1)

        if cache["gate"] is not None:
            grads.update(gates_backward(self.gating, cache["gate"], dalpha))

        dX = None
        if self.saff is not None:
            dX, saff_grads = saff_backward(self.saff, cache["saff"], dH, need_input_grad)
            for k, v in saff_grads.items():
                grads[f"saff.{k}"] = v
        elif need_input_grad:
            dX = dH[:, : cfg.feature_dim] if cfg.concat_scenario else dH
        return grads, dX


def forward(model: DSFNet, x, s, mode: str = "eval", gate_override=None) -> float:
    """Single-sample forward pass returning the raw logit."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    logits, _ = model.forward_batch(as_f64(x)[None, :], as_f64(s)[None, :],
                                    train=(mode == "train"), gate_override=gate_override)
    return float(logits[0])


# -- checkpointing -----------------------------------------------------------


def save_checkpoint(path, model: DSFNet, opt_state=None):
    """Write the model (and optionally optimizer state) as versioned JSON."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "params": {name: arr.tolist() for name, arr in model._params.items()},
        "sabn_running": {
            str(l): {"mean": st.running_mean.tolist(), "var": st.running_var.tolist()}
            for l, st in enumerate(model.sabn)
        },
        "normalizer": model.normalizer.to_dict() if model.normalizer is not None else None,
        "optimizer": opt_state.to_dict() if opt_state is not None else None,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path):
    """Read a checkpoint. Returns (model, optimizer state dict or None)."""
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    config = ModelConfig(**doc["model_config"])
    model = DSFNet(config, np.random.default_rng(0))
    for name, arr in model._params.items():
        stored = doc["params"].get(name)
        if stored is None:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        stored = as_f64(stored)
        if stored.shape != arr.shape:
            raise ValueError(f"checkpoint parameter {name!r} has shape {stored.shape}, expected {arr.shape}")
        arr[...] = stored
    for l, st in enumerate(model.sabn):
        block = doc["sabn_running"][str(l)]
        st.running_mean = as_f64(block["mean"])
        st.running_var = as_f64(block["var"])
    if doc.get("normalizer") is not None:
        model.normalizer = datamod.NormalizerState.from_dict(doc["normalizer"])
    return model, doc.get("optimizer")
