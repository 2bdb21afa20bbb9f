"""Synthetic multi-scenario ranking data with ground-truth factors, CSV
exchange, input normalization, and scenario partitioning.

Generated data models grouped route choices: each group draws one scenario
embedding, several candidate feature vectors, and exactly one positive
label at the Gumbel-noised argmax of a scenario-gated mixture of factor
utilities. The ground-truth factor directions are recoverable, which the
interpretability and lift checks rely on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensorcore import as_f64

NORMALIZER_EPS = 1e-5
NORMALIZER_MOMENTUM = 0.99
SCENARIO_ID_BITS = 7  # caps scenario ids at 2**7 = 128 sign-pattern buckets


class CsvParseError(ValueError):
    """A data file violated the exchange schema; message names the line."""


@dataclass
class RankingSample:
    """One (group, candidate) record."""

    group_id: int
    label: int
    s: np.ndarray
    x: np.ndarray
    scenario_id: int


@dataclass
class Dataset:
    """Column-major store of ranking samples."""

    group_ids: np.ndarray     # (n,) int64
    labels: np.ndarray        # (n,) int64 in {0, 1}
    scenario_ids: np.ndarray  # (n,) int64
    S: np.ndarray             # (n, d_s)
    X: np.ndarray             # (n, d_x)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def d_x(self) -> int:
        return self.X.shape[1]

    @property
    def d_s(self) -> int:
        return self.S.shape[1]

    @property
    def n_groups(self) -> int:
        return int(np.unique(self.group_ids).size)

    def sample(self, i: int) -> RankingSample:
        return RankingSample(group_id=int(self.group_ids[i]), label=int(self.labels[i]),
                             s=self.S[i], x=self.X[i], scenario_id=int(self.scenario_ids[i]))

    def take(self, idx) -> "Dataset":
        return Dataset(self.group_ids[idx], self.labels[idx], self.scenario_ids[idx],
                       self.S[idx], self.X[idx])


@dataclass
class SynthSpec:
    """Generator settings plus the derived ground-truth structure.

    The factor preference vectors get disjoint feature blocks mixed with a
    shared block so that every pair has cosine similarity exactly
    ``beta_cos`` (the entanglement knob). The scenario-to-gate map drives
    softmax mixture weights with adjustable sharpness.
    """

    k_true: int = 4
    d_x: int = 40
    d_s: int = 8
    candidates: int = 12
    tau: float = 0.02
    beta_cos: float = 0.45
    gate_sharpness: float = 12.0
    x_corr: float = 0.3
    seed: int = 0
    betas: np.ndarray = field(init=False, repr=False)     # (K, d_x), unit rows
    gate_map: np.ndarray = field(init=False, repr=False)  # (K, d_s)
    chol: np.ndarray = field(init=False, repr=False)      # (d_x, d_x)

    def __post_init__(self):
        if self.k_true < 1:
            raise ValueError("need at least one ground-truth factor")
        if self.tau <= 0:
            raise ValueError("label-noise temperature must be positive")
        if not 0.0 <= self.beta_cos < 1.0:
            raise ValueError("pairwise factor cosine must lie in [0, 1)")
        if self.d_x < self.k_true + 1:
            raise ValueError("need d_x >= k_true + 1 for block-structured factors")
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, 0)))
        block = self.d_x // (self.k_true + 1)
        betas = np.zeros((self.k_true, self.d_x))
        for f in range(self.k_true):
            v = np.zeros(self.d_x)
            v[f * block:(f + 1) * block] = rng.uniform(0.5, 1.5, size=block) * rng.choice([-1.0, 1.0], size=block)
            betas[f] = v / np.linalg.norm(v)
        shared = np.zeros(self.d_x)
        shared[self.k_true * block:] = rng.uniform(0.5, 1.5, size=self.d_x - self.k_true * block) \
            * rng.choice([-1.0, 1.0], size=self.d_x - self.k_true * block)
        shared /= np.linalg.norm(shared)
        self.betas = np.sqrt(1.0 - self.beta_cos) * betas + np.sqrt(self.beta_cos) * shared
        self.gate_map = rng.standard_normal((self.k_true, self.d_s)) / np.sqrt(self.d_s)
        cov = self.x_corr ** np.abs(np.subtract.outer(np.arange(self.d_x), np.arange(self.d_x)))
        self.chol = np.linalg.cholesky(cov)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def true_gates(spec: SynthSpec, S: np.ndarray) -> np.ndarray:
    """Ground-truth mixture weights for a batch of scenario embeddings."""
    return _softmax(spec.gate_sharpness * (as_f64(S) @ spec.gate_map.T))


def scenario_bucket(S: np.ndarray) -> np.ndarray:
    """Coarse scenario ids from the sign pattern of the leading dimensions."""
    S = as_f64(S)
    m = min(S.shape[1], SCENARIO_ID_BITS)
    bits = (S[:, :m] > 0).astype(np.int64)
    return bits @ (1 << np.arange(m, dtype=np.int64))


def generate(spec: SynthSpec, n_groups: int, stream: int = 0) -> Dataset:
    """Draw a dataset of ``n_groups`` groups; bit-reproducible per (spec, stream).

    ``stream`` selects a disjoint sampling stream over the same
    ground-truth structure, so train and test splits share factors.
    """
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 1, stream)))
    G, C = n_groups, spec.candidates
    S_g = rng.standard_normal((G, spec.d_s))
    X = rng.standard_normal((G * C, spec.d_x)) @ spec.chol.T
    noise = rng.gumbel(0.0, 1.0, size=(G, C))
    gates = true_gates(spec, S_g)                        # (G, K)
    factor_scores = (X @ spec.betas.T).reshape(G, C, -1)  # (G, C, K)
    utility = np.einsum("gk,gck->gc", gates, factor_scores) + spec.tau * noise
    winners = utility.argmax(axis=1)
    labels = np.zeros((G, C), dtype=np.int64)
    labels[np.arange(G), winners] = 1
    sid_g = scenario_bucket(S_g)
    return Dataset(
        group_ids=np.repeat(np.arange(G, dtype=np.int64), C),
        labels=labels.ravel(),
        scenario_ids=np.repeat(sid_g, C),
        S=np.repeat(S_g, C, axis=0),
        X=X,
    )


def oracle_scores(spec: SynthSpec, dataset: Dataset) -> np.ndarray:
    """Noise-free ground-truth utilities; the Bayes-optimal ranker."""
    gates = true_gates(spec, dataset.S)
    return np.einsum("nk,nk->n", gates, dataset.X @ spec.betas.T)


# -- CSV exchange -------------------------------------------------------------


def _header(d_s: int, d_x: int) -> list:
    return (["group_id", "label", "scenario_id"]
            + [f"s_{i}" for i in range(d_s)] + [f"x_{i}" for i in range(d_x)])


def write_csv(dataset: Dataset, path):
    """Write the exchange schema; floats use shortest round-trip text."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(dataset.d_s, dataset.d_x))
        for i in range(len(dataset)):
            w.writerow([int(dataset.group_ids[i]), int(dataset.labels[i]), int(dataset.scenario_ids[i])]
                       + [repr(float(v)) for v in dataset.S[i]]
                       + [repr(float(v)) for v in dataset.X[i]])


def load_csv(path) -> Dataset:
    """Parse the exchange schema, rejecting malformed rows by line number."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file, expected a header row") from None
        d_s = sum(1 for h in header if h.startswith("s_"))
        d_x = sum(1 for h in header if h.startswith("x_"))
        if header != _header(d_s, d_x) or d_s == 0 or d_x == 0:
            raise CsvParseError(f"{path}: line 1: missing or malformed header")
        width = 3 + d_s + d_x
        group_ids, labels, scenario_ids, S, X = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise CsvParseError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
            try:
                gid = int(row[0])
                label = int(row[1])
                sid = int(row[2])
                vals = [float(v) for v in row[3:]]
            except ValueError:
                raise CsvParseError(f"{path}: line {lineno}: non-numeric payload") from None
            if label not in (0, 1):
                raise CsvParseError(f"{path}: line {lineno}: label must be 0 or 1, got {label}")
            if not all(math.isfinite(v) for v in vals):
                raise CsvParseError(f"{path}: line {lineno}: non-finite value")
            group_ids.append(gid)
            labels.append(label)
            scenario_ids.append(sid)
            S.append(vals[:d_s])
            X.append(vals[d_s:])
    return Dataset(group_ids=np.array(group_ids, dtype=np.int64),
                   labels=np.array(labels, dtype=np.int64),
                   scenario_ids=np.array(scenario_ids, dtype=np.int64),
                   S=np.array(S, dtype=np.float64).reshape(len(labels), d_s),
                   X=np.array(X, dtype=np.float64).reshape(len(labels), d_x))


# -- input normalization -------------------------------------------------------


@dataclass
class NormalizerState:
    """Moving mean/variance for the feature and scenario columns."""

    mean_x: np.ndarray
    var_x: np.ndarray
    mean_s: np.ndarray
    var_s: np.ndarray
    momentum: float = NORMALIZER_MOMENTUM
    eps: float = NORMALIZER_EPS

    @classmethod
    def create(cls, d_x: int, d_s: int, momentum: float = NORMALIZER_MOMENTUM):
        return cls(mean_x=np.zeros(d_x), var_x=np.ones(d_x),
                   mean_s=np.zeros(d_s), var_s=np.ones(d_s), momentum=momentum)

    def to_dict(self) -> dict:
        return {"mean_x": self.mean_x.tolist(), "var_x": self.var_x.tolist(),
                "mean_s": self.mean_s.tolist(), "var_s": self.var_s.tolist(),
                "momentum": self.momentum, "eps": self.eps}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizerState":
        return cls(mean_x=as_f64(d["mean_x"]), var_x=as_f64(d["var_x"]),
                   mean_s=as_f64(d["mean_s"]), var_s=as_f64(d["var_s"]),
                   momentum=float(d["momentum"]), eps=float(d["eps"]))


def normalize(state: NormalizerState, X, S, mode: str = "eval"):
    """Standardize features and scenario columns independently.

    Train mode standardizes by the batch's own statistics and folds them
    into the moving averages; eval mode uses the stored moving statistics.
    """
    X, S = as_f64(X), as_f64(S)
    if mode == "train":
        mx, vx = X.mean(axis=0), X.var(axis=0)
        ms, vs = S.mean(axis=0), S.var(axis=0)
        m = state.momentum
        state.mean_x = m * state.mean_x + (1.0 - m) * mx
        state.var_x = m * state.var_x + (1.0 - m) * vx
        state.mean_s = m * state.mean_s + (1.0 - m) * ms
        state.var_s = m * state.var_s + (1.0 - m) * vs
    elif mode == "eval":
        mx, vx, ms, vs = state.mean_x, state.var_x, state.mean_s, state.var_s
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    Xn = (X - mx) / np.sqrt(vx + state.eps)
    Sn = (S - ms) / np.sqrt(vs + state.eps)
    return Xn, Sn


# -- scenario partitioning -------------------------------------------------------


@dataclass
class ScenarioPartition:
    """Scenario ids split head-to-tail into four subsets by sample share."""

    subsets: tuple  # 4 arrays of scenario ids, descending-frequency order
    ratios: tuple

    def masks(self, scenario_ids) -> list:
        sids = np.asarray(scenario_ids)
        return [np.isin(sids, sub) for sub in self.subsets]


def partition_scenarios(dataset: Dataset, ratios=(0.15, 0.50, 0.85)) -> ScenarioPartition:
    """Cut frequency-sorted scenario ids at the cumulative-sample ratios.

    Each cut lands after the id whose cumulative sample share is nearest
    the requested ratio (ties toward the head), so subsets are exact up to
    one scenario's granularity and every sample lands in exactly one subset.
    """
    if len(ratios) != 3 or sorted(ratios) != list(ratios):
        raise ValueError("expected three nondecreasing cut ratios")
    ids, counts = np.unique(dataset.scenario_ids, return_counts=True)
    order = np.lexsort((ids, -counts))
    ids, counts = ids[order], counts[order]
    cum = np.cumsum(counts) / counts.sum()
    cuts = []
    prev = 0
    for r in ratios:
        k = int(np.argmin(np.abs(cum - r))) + 1
        k = max(k, prev)
        cuts.append(k)
        prev = k
    c1, c2, c3 = cuts
    return ScenarioPartition(subsets=(ids[:c1], ids[c1:c2], ids[c2:c3], ids[c3:]),
                             ratios=tuple(ratios))
