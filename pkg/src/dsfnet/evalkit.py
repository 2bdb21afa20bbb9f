"""Ranking metrics and the factor-attention interpretability probe.

AUC is the rank statistic P(score_pos > score_neg) with ties counted as
half, computed by rank-sum in O(n log n). The attention probe measures
each factor's input sensitivity |d logit / d feature| under a one-hot
gate override, normalized to [0, 1] per sample and averaged.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset, ScenarioPartition, normalize, partition_scenarios
from .factorization import DSFNet
from .tensorcore import as_f64

log = logging.getLogger("dsfnet")


class UndefinedMetricError(ValueError):
    """AUC needs at least one positive and one negative."""


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative (ties half)."""
    scores = as_f64(scores).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"need both classes, got {n_pos} positives / {n_neg} negatives")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def subset_auc(scores, labels, scenario_ids, partition: ScenarioPartition) -> list:
    """AUC restricted to each partition subset; None where undefined."""
    scores = as_f64(scores).ravel()
    labels = np.asarray(labels).ravel()
    out = []
    for mask in partition.masks(scenario_ids):
        if not mask.any():
            out.append(None)
            continue
        try:
            out.append(auc(scores[mask], labels[mask]))
        except UndefinedMetricError:
            out.append(None)
    return out


def rela_impr(auc_model: float, auc_base: float) -> float:
    """Relative AUC improvement over the reference model, in percent."""
    if auc_base <= 0:
        raise ValueError("reference AUC must be positive")
    return 100.0 * (auc_model - auc_base) / auc_base


@dataclass
class MetricReport:
    auc: float
    subset_aucs: list
    rela_impr: float | None
    n_pos: int
    n_neg: int

    def to_dict(self) -> dict:
        return {"auc": self.auc, "subset_aucs": self.subset_aucs,
                "rela_impr": self.rela_impr, "n_pos": self.n_pos, "n_neg": self.n_neg}

    def as_text(self) -> str:
        lines = [f"auc          {self.auc:.6f}",
                 f"n_pos/n_neg  {self.n_pos}/{self.n_neg}"]
        for i, v in enumerate(self.subset_aucs, start=1):
            lines.append(f"subset_auc_{i} " + ("undefined" if v is None else f"{v:.6f}"))
        if self.rela_impr is not None:
            lines.append(f"rela_impr    {self.rela_impr:+.2f}%")
        return "\n".join(lines)


def predict_logits(model: DSFNet, dataset: Dataset, batch_size: int = 4096,
                   gate_override=None) -> np.ndarray:
    """Eval-mode logits over a dataset, using the model's fitted normalizer."""
    if model.normalizer is None:
        raise ValueError("model has no fitted input normalizer")
    out = np.empty(len(dataset))
    for lo in range(0, len(dataset), batch_size):
        hi = min(lo + batch_size, len(dataset))
        Xn, Sn = normalize(model.normalizer, dataset.X[lo:hi], dataset.S[lo:hi], mode="eval")
        logits, _ = model.forward_batch(Xn, Sn, train=False, gate_override=gate_override)
        out[lo:hi] = logits
    return out


def evaluate(model: DSFNet, dataset: Dataset, partition: ScenarioPartition | None = None,
             baseline_auc: float | None = None) -> MetricReport:
    """Score a dataset and assemble the metric report."""
    scores = predict_logits(model, dataset)
    if partition is None:
        partition = partition_scenarios(dataset)
    a = auc(scores, dataset.labels)
    subs = subset_auc(scores, dataset.labels, dataset.scenario_ids, partition)
    n_pos = int((dataset.labels == 1).sum())
    return MetricReport(auc=a, subset_aucs=subs,
                        rela_impr=None if baseline_auc is None else rela_impr(a, baseline_auc),
                        n_pos=n_pos, n_neg=len(dataset) - n_pos)


@dataclass
class AttentionMatrix:
    """Per-factor mean normalized input sensitivities, rows in [0, 1]."""

    values: np.ndarray   # (N, d_x)
    sample_counts: list  # qualifying samples used per factor
    diagnostics: list    # human-readable notes (shortfalls, empty rows)

    def as_text(self) -> str:
        lines = []
        for i, row in enumerate(self.values):
            cells = " ".join(f"{v:.3f}" for v in row)
            lines.append(f"factor {i} (n={self.sample_counts[i]}): {cells}")
        lines.extend(self.diagnostics)
        return "\n".join(lines)


def _minmax_rows(G: np.ndarray) -> np.ndarray:
    lo = G.min(axis=1, keepdims=True)
    hi = G.max(axis=1, keepdims=True)
    span = hi - lo
    out = np.zeros_like(G)
    nz = span[:, 0] > 0
    out[nz] = (G[nz] - lo[nz]) / span[nz]
    return out


def input_gradients(model: DSFNet, X, S, gate_override=None) -> np.ndarray:
    """Per-sample d(logit)/d(features) by the model's backward pass (eval mode)."""
    logits, cache = model.forward_batch(X, S, train=False, gate_override=gate_override)
    _, dX = model.backward_batch(cache, np.ones_like(logits), need_input_grad=True)
    return dX


def fsl_attention(model: DSFNet, dataset: Dataset, gate_threshold: float = 0.8,
                  samples_per_fsl: int = 200, seed: int = 0) -> AttentionMatrix:
    """Gradient-attention probe over the factors.

    For each factor: select samples whose computed gate exceeds the
    threshold (falling back to all qualifying samples when fewer than
    requested), force a one-hot gate override, take per-sample |d logit /
    d normalized feature|, min-max normalize within each sample, and
    average. Factors with no qualifying samples yield a zero row plus a
    diagnostic.
    """
    if model.normalizer is None:
        raise ValueError("model has no fitted input normalizer")
    N = model.config.n_factors
    Xn, Sn = normalize(model.normalizer, dataset.X, dataset.S, mode="eval")
    alphas = np.empty((len(dataset), N))
    for lo in range(0, len(dataset), 4096):
        hi = min(lo + 4096, len(dataset))
        _, cache = model.forward_batch(Xn[lo:hi], Sn[lo:hi], train=False)
        alphas[lo:hi] = cache["alpha"]
    rng = np.random.default_rng(np.random.SeedSequence((seed, 4)))
    values = np.zeros((N, model.config.feature_dim))
    counts, diagnostics = [], []
    for i in range(N):
        qualifying = np.flatnonzero(alphas[:, i] > gate_threshold)
        if qualifying.size == 0:
            counts.append(0)
            diagnostics.append(f"factor {i}: no samples with gate > {gate_threshold}; empty row")
            log.warning("attention probe: factor %d has no qualifying samples", i)
            continue
        if qualifying.size > samples_per_fsl:
            qualifying = rng.choice(qualifying, size=samples_per_fsl, replace=False)
        elif qualifying.size < samples_per_fsl:
            diagnostics.append(f"factor {i}: only {qualifying.size} qualifying samples "
                               f"(wanted {samples_per_fsl}); using all")
            log.warning("attention probe: factor %d has only %d qualifying samples",
                        i, qualifying.size)
        onehot = np.zeros(N)
        onehot[i] = 1.0
        grads = input_gradients(model, Xn[qualifying], Sn[qualifying], gate_override=onehot)
        values[i] = _minmax_rows(np.abs(grads)).mean(axis=0)
        counts.append(int(qualifying.size))
    return AttentionMatrix(values=values, sample_counts=counts, diagnostics=diagnostics)


def pearson(a, b) -> float:
    """Pearson correlation; 0.0 when either side is constant."""
    a, b = as_f64(a).ravel(), as_f64(b).ravel()
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def match_rows(att: np.ndarray, ref: np.ndarray):
    """Best factor-to-reference row assignment by mean Pearson correlation.

    Brute force over permutations (intended for small factor counts).
    Returns (permutation tuple, mean correlation), where perm[i] is the
    reference row matched to attention row i.
    """
    att, ref = as_f64(att), as_f64(ref)
    n = att.shape[0]
    if ref.shape[0] != n:
        raise ValueError("attention and reference need equal row counts")
    if n > 8:
        raise ValueError("brute-force matching is limited to 8 rows")
    corr = np.array([[pearson(att[i], ref[j]) for j in range(n)] for i in range(n)])
    best_perm, best_mean = None, -np.inf
    for perm in itertools.permutations(range(n)):
        m = float(np.mean([corr[i, perm[i]] for i in range(n)]))
        if m > best_mean:
            best_perm, best_mean = perm, m
    return best_perm, best_mean
