"""Neuron centroids, angular repulsion/clustering losses with analytic
gradients, and the equiangular-frame construction they converge to.

Conventions used throughout:

* A layer's i-th factor weight matrix ``W_i`` has shape (M, d); its rows
  are neurons. The centroid of factor i is the unit-normalized row sum.
* ``argmax``/``argmin`` selections inside the losses are recomputed on
  every evaluation and held constant for the gradient (piecewise-smooth
  subgradient); ties break to the lowest index.
* Each loss returns its value together with analytic gradients. Losses
  that touch the neurons only through the row sums (repulsion, minimum
  angle, orthogonality) return one gradient vector per factor, shared by
  every row of that factor. The clustering losses return full per-row
  gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensorcore import COS_CLAMP, DegenerateVectorError, as_f64, clamp_cos

CENTROID_NORM_FLOOR = 1e-12

DR_VARIANTS = ("dr", "mma_cnc", "ncr", "ncr_cnccos", "orth", "none")


class DegenerateCentroidError(DegenerateVectorError):
    """A factor's row-sum vector has (near-)zero norm."""


class InfeasibleDimensionError(ValueError):
    """Equiangular frame requested in too few ambient dimensions."""


def repulsion_target(n_factors: int) -> float:
    """The pairwise angle all centroids are driven to: arccos(-1/(N-1))."""
    if n_factors < 2:
        raise ValueError("need at least 2 factors for a pairwise angle target")
    return math.acos(-1.0 / (n_factors - 1))


@dataclass
class DRConfig:
    """Disentangling-regularization settings for one model."""

    n_factors: int
    lam: float = 0.01
    kappa: float = 1.75
    variant: str = "dr"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("regularization coefficient must be >= 0")
        if self.variant not in DR_VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {DR_VARIANTS}")
        if self.variant != "none":
            if self.n_factors < 2:
                raise ValueError("angular regularizers need at least 2 factors")
            if self.kappa <= 1.0:
                raise ValueError("margin divisor kappa must be > 1")

    @property
    def delta_theta(self) -> float:
        """Clustering margin angle, a fraction 1/kappa of the repulsion target."""
        return repulsion_target(self.n_factors) / self.kappa


@dataclass
class CentroidSet:
    """Per-layer centroid geometry shared by all the angular losses."""

    sums: np.ndarray        # (N, d) row sums per factor
    norms: np.ndarray       # (N,)   their Euclidean norms
    centroids: np.ndarray   # (N, d) unit centroids
    cos: np.ndarray         # (N, N) raw cosine Gram of the centroids
    angles: np.ndarray      # (N, N) clamped arccos, zero diagonal

    @property
    def n_factors(self) -> int:
        return self.centroids.shape[0]


def centroids(W_list: Sequence[np.ndarray]) -> CentroidSet:
    """Compute unit row-sum centroids and their pairwise angle matrix."""
    mats = [as_f64(W) for W in W_list]
    if len(mats) < 1:
        raise ValueError("need at least one weight matrix")
    shape = mats[0].shape
    if any(m.shape != shape for m in mats) or mats[0].ndim != 2:
        raise ValueError("all factor matrices in a layer must share one 2d shape")
    sums = np.stack([m.sum(axis=0) for m in mats])
    norms = np.linalg.norm(sums, axis=1)
    if np.any(norms <= CENTROID_NORM_FLOOR):
        bad = int(np.argmin(norms))
        raise DegenerateCentroidError(f"factor {bad} has a near-zero row-sum; no centroid direction")
    cent = sums / norms[:, None]
    gram = cent @ cent.T
    gram = 0.5 * (gram + gram.T)
    angles = np.arccos(clamp_cos(gram))
    np.fill_diagonal(angles, 0.0)
    return CentroidSet(sums=sums, norms=norms, centroids=cent, cos=gram, angles=angles)


def _dangle_dcos(c: np.ndarray) -> np.ndarray:
    """d(arccos(clamped cos))/d(cos); zero where the clamp is active."""
    c = np.asarray(c, dtype=np.float64)
    inside = np.abs(c) < 1.0 - COS_CLAMP
    cc = clamp_cos(c)
    return np.where(inside, -1.0 / np.sqrt(1.0 - cc * cc), 0.0)


def _pair_angle_grads(c: CentroidSet, i: int, j: int):
    """Gradients of the centroid pair angle theta(i,j) w.r.t. the two row sums."""
    ci, cj = c.centroids[i], c.centroids[j]
    cos_ij = c.cos[i, j]
    dtheta = _dangle_dcos(cos_ij)
    gi = dtheta * (cj - cos_ij * ci) / c.norms[i]
    gj = dtheta * (ci - cos_ij * cj) / c.norms[j]
    return gi, gj


def ncr_loss(c: CentroidSet):
    """Centroid repulsion: mean over factors of the worst squared deviation
    of a pairwise angle from the equiangular target.

    Returns (value, grad) with grad of shape (N, d); every row of factor i
    receives grad[i] because the loss sees neurons only through row sums.
    """
    N = c.n_factors
    target = repulsion_target(N)
    dev = c.angles - target
    sq = dev * dev
    np.fill_diagonal(sq, -np.inf)
    value = 0.0
    grad = np.zeros_like(c.sums)
    for i in range(N):
        j = int(np.argmax(sq[i]))
        value += sq[i, j]
        coef = (2.0 / N) * dev[i, j]
        gi, gj = _pair_angle_grads(c, i, j)
        grad[i] += coef * gi
        grad[j] += coef * gj
    return value / N, grad


def mma_loss(c: CentroidSet):
    """Adversarial minimum-angle loss: minus the mean nearest-neighbour angle.

    Returns (value, grad) shaped like ``ncr_loss``.
    """
    N = c.n_factors
    ang = c.angles.copy()
    np.fill_diagonal(ang, np.inf)
    value = 0.0
    grad = np.zeros_like(c.sums)
    for i in range(N):
        j = int(np.argmin(ang[i]))
        value -= ang[i, j]
        coef = -1.0 / N
        gi, gj = _pair_angle_grads(c, i, j)
        grad[i] += coef * gi
        grad[j] += coef * gj
    return value / N, grad


def orth_loss(c: CentroidSet):
    """Squared Frobenius deviation of the centroid Gram matrix from identity."""
    N = c.n_factors
    G = c.cos
    R = G - np.eye(N)
    value = float(np.sum(R * R))
    # dL/d(centroid_i) = 4 * sum_j R[i, j] * centroid_j, then through the
    # row-sum normalization (I - cc^T)/norm.
    dC = 4.0 * (R @ c.centroids)
    proj = dC - np.sum(dC * c.centroids, axis=1, keepdims=True) * c.centroids
    grad = proj / c.norms[:, None]
    return value, grad


def _neuron_centroid_angles(W: np.ndarray, q: np.ndarray):
    """Angles between each row of W and the unit vector q, plus row norms/cosines."""
    row_norms = np.linalg.norm(W, axis=1)
    if np.any(row_norms <= 0.0):
        raise DegenerateVectorError("zero-norm neuron row has no direction")
    cos = (W @ q) / row_norms
    return np.arccos(clamp_cos(cos)), cos, row_norms


def cnc_loss(c: CentroidSet, W_list: Sequence[np.ndarray], delta_theta: float):
    """Contrastive clustering in angle form.

    For each factor, the neuron farthest from its own centroid is the
    anchor; the hinge penalizes the anchor being closer (by less than the
    margin) to the nearest foreign centroid than to its own. Returns
    (value, grads) with grads a list of per-row (M, d) arrays.
    """
    N = c.n_factors
    if N < 2:
        raise ValueError("contrastive clustering needs at least 2 factors")
    grads = [np.zeros_like(as_f64(W)) for W in W_list]
    value = 0.0
    for i in range(N):
        W = as_f64(W_list[i])
        own = c.centroids[i]
        ang_own, cos_own, row_norms = _neuron_centroid_angles(W, own)
        k = int(np.argmax(ang_own))
        w = W[k]
        wn = row_norms[k]
        what = w / wn
        cos_for = (c.centroids @ w) / wn
        ang_for = np.arccos(clamp_cos(cos_for))
        ang_for[i] = np.inf
        j = int(np.argmin(ang_for))
        hinge = delta_theta + ang_own[k] - ang_for[j]
        if hinge <= 0.0:
            continue
        value += hinge
        inv_n = 1.0 / N
        # own-angle term, +1/N
        da = _dangle_dcos(cos_own[k])
        grads[i][k] += inv_n * da * (own - cos_own[k] * what) / wn
        grads[i] += inv_n * da * (what - cos_own[k] * own) / c.norms[i]
        # foreign-angle term, -1/N
        db = _dangle_dcos(cos_for[j])
        grads[i][k] -= inv_n * db * (c.centroids[j] - cos_for[j] * what) / wn
        grads[j] -= inv_n * db * (what - cos_for[j] * c.centroids[j]) / c.norms[j]
    return value / N, grads


def cnc_loss_cos(c: CentroidSet, W_list: Sequence[np.ndarray], delta_theta: float):
    """Contrastive clustering in cosine form (ablation variant).

    Same anchor/negative selection as the angle form; the hinge acts on
    cosine similarities with margin 1 - cos(delta_theta) so the two forms
    activate together when the anchor sits on its own centroid.
    """
    N = c.n_factors
    if N < 2:
        raise ValueError("contrastive clustering needs at least 2 factors")
    margin = 1.0 - math.cos(delta_theta)
    grads = [np.zeros_like(as_f64(W)) for W in W_list]
    value = 0.0
    for i in range(N):
        W = as_f64(W_list[i])
        own = c.centroids[i]
        _, cos_own, row_norms = _neuron_centroid_angles(W, own)
        k = int(np.argmin(cos_own))
        w = W[k]
        wn = row_norms[k]
        what = w / wn
        cos_for = (c.centroids @ w) / wn
        masked = cos_for.copy()
        masked[i] = -np.inf
        j = int(np.argmax(masked))
        hinge = cos_for[j] - cos_own[k] + margin
        if hinge <= 0.0:
            continue
        value += hinge
        inv_n = 1.0 / N
        # +cos(anchor, foreign centroid)
        grads[i][k] += inv_n * (c.centroids[j] - cos_for[j] * what) / wn
        grads[j] += inv_n * (what - cos_for[j] * c.centroids[j]) / c.norms[j]
        # -cos(anchor, own centroid)
        grads[i][k] -= inv_n * (own - cos_own[k] * what) / wn
        grads[i] -= inv_n * (what - cos_own[k] * own) / c.norms[i]
    return value / N, grads


@dataclass
class DRResult:
    """Value and gradients of the selected per-layer regularizer stack."""

    total: float
    ncr: float
    cnc: float
    layer_grads: list = field(default_factory=list)  # per layer: (N, M, d)


def dr_loss(bank, cfg: DRConfig) -> DRResult:
    """Sum the selected regularizer combination over all layers.

    ``bank`` is either a factor bank (anything with a ``.W`` list of
    per-layer (N, M, d) stacks) or such a list directly; biases are
    excluded from regularization. The ``ncr``/``cnc`` fields report the
    angle-form values regardless of the variant, for tracing.
    """
    weight_stacks = bank.W if hasattr(bank, "W") else bank
    total = 0.0
    ncr_total = 0.0
    cnc_total = 0.0
    layer_grads = []
    for stack in weight_stacks:
        stack = as_f64(stack)
        N = stack.shape[0]
        grad = np.zeros_like(stack)
        if cfg.variant == "none" or N < 2:
            c = centroids(list(stack)) if N >= 2 else None
            if c is not None:
                ncr_total += ncr_loss(c)[0]
                cnc_total += cnc_loss(c, list(stack), cfg.delta_theta)[0]
            layer_grads.append(grad)
            continue
        c = centroids(list(stack))
        ncr_v, ncr_g = ncr_loss(c)
        cnc_v, cnc_g = cnc_loss(c, list(stack), cfg.delta_theta)
        ncr_total += ncr_v
        cnc_total += cnc_v
        if cfg.variant == "dr":
            total += ncr_v + cnc_v
            grad += ncr_g[:, None, :]
            grad += np.stack(cnc_g)
        elif cfg.variant == "mma_cnc":
            mma_v, mma_g = mma_loss(c)
            total += mma_v + cnc_v
            grad += mma_g[:, None, :]
            grad += np.stack(cnc_g)
        elif cfg.variant == "ncr":
            total += ncr_v
            grad += ncr_g[:, None, :]
        elif cfg.variant == "ncr_cnccos":
            cos_v, cos_g = cnc_loss_cos(c, list(stack), cfg.delta_theta)
            total += ncr_v + cos_v
            grad += ncr_g[:, None, :]
            grad += np.stack(cos_g)
        elif cfg.variant == "orth":
            orth_v, orth_g = orth_loss(c)
            total += orth_v
            grad += orth_g[:, None, :]
        layer_grads.append(grad)
    return DRResult(total=total, ncr=ncr_total, cnc=cnc_total, layer_grads=layer_grads)


@dataclass
class EquiangularGram:
    """An explicit N-vector equiangular frame and its target Gram matrix."""

    n: int
    dim: int
    gram_target: np.ndarray  # (N, N): diag 1, off-diag 1/(1-N)
    frame: np.ndarray        # (dim, N): unit columns realizing the Gram
    residual: float          # max |frame^T frame - gram_target|


def equiangular_frame(n: int, dim: int) -> EquiangularGram:
    """Construct N unit vectors in R^dim with all pairwise cosines 1/(1-N).

    The target Gram matrix is rank N-1, so the frame exists iff
    dim >= N-1; it is recovered from the Gram's nonzero eigenpairs.
    """
    if n < 2:
        raise ValueError("an equiangular frame needs at least 2 vectors")
    if dim < n - 1:
        raise InfeasibleDimensionError(f"need dim >= {n - 1} to realize {n} equiangular vectors, got {dim}")
    P = np.full((n, n), 1.0 / (1.0 - n))
    np.fill_diagonal(P, 1.0)
    evals, evecs = np.linalg.eigh(P)
    # ascending order: the single ~0 eigenvalue first, then N-1 copies of N/(N-1)
    lam = np.clip(evals[1:], 0.0, None)
    Q = evecs[:, 1:]
    frame = np.zeros((dim, n))
    frame[: n - 1, :] = (np.sqrt(lam)[:, None]) * Q.T
    residual = float(np.max(np.abs(frame.T @ frame - P)))
    return EquiangularGram(n=n, dim=dim, gram_target=P, frame=frame, residual=residual)


# ---------------------------------------------------------------------------
# Verification drivers: gradient-law measurements and repulsion-only descent.
# These feed the `verify` CLI report and the acceptance suite.
# ---------------------------------------------------------------------------


def _two_factor_rows(angle: float, norm: float, dim: int = 3):
    """Two single-row factors whose centroids subtend the given angle."""
    w0 = np.zeros(dim)
    w0[0] = norm
    w1 = np.zeros(dim)
    w1[0] = norm * math.cos(angle)
    w1[1] = norm * math.sin(angle)
    return [w0[None, :], w1[None, :]]


def measure_mma_gradient_norms(angles: Sequence[float], norm: float = 2.0) -> np.ndarray:
    """Row-gradient norms of the minimum-angle loss at controlled pair angles."""
    out = []
    for t in angles:
        Ws = _two_factor_rows(t, norm)
        _, g = mma_loss(centroids(Ws))
        out.append(np.linalg.norm(g[0]))
    return np.array(out)


def measure_ncr_gradient_norms(angles: Sequence[float], norm: float = 2.0):
    """(deviation, gradient norm) pairs for the repulsion loss at controlled angles."""
    target = repulsion_target(2)
    devs, norms = [], []
    for t in angles:
        Ws = _two_factor_rows(t, norm)
        _, g = ncr_loss(centroids(Ws))
        devs.append(abs(t - target))
        norms.append(np.linalg.norm(g[0]))
    return np.array(devs), np.array(norms)


def measure_cnc_gradient_norms(anchor_angles: Sequence[float], norm: float = 2.0, delta_theta: float = 1.2):
    """Anchor-gradient norms of the two clustering forms at controlled angles.

    Uses the symmetric two-factor single-row configuration, where the full
    loss gradient on the anchor row has norm 1/||w|| in angle form and
    sin(angle)/||w|| in cosine form.
    """
    angle_norms, cos_norms = [], []
    for t in anchor_angles:
        Ws = _two_factor_rows(t, norm)
        c = centroids(Ws)
        _, g_ang = cnc_loss(c, Ws, delta_theta)
        _, g_cos = cnc_loss_cos(c, Ws, delta_theta)
        angle_norms.append(np.linalg.norm(g_ang[0][0]))
        cos_norms.append(np.linalg.norm(g_cos[0][0]))
    return np.array(angle_norms), np.array(cos_norms)


def descend_ncr(n_factors: int, dim: int, seed: int, steps: int = 6000, lr: float | None = None):
    """Plain gradient descent on the repulsion loss alone from random rows.

    Returns the final maximum deviation |angle - target| over all pairs.
    Single-row factors, so each factor's row is its own (unnormalized)
    centroid direction.
    """
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n_factors, 1, dim))
    if lr is None:
        lr = 0.5 * n_factors
    target = repulsion_target(n_factors)
    for _ in range(steps):
        c = centroids(list(W))
        _, g = ncr_loss(c)
        W -= lr * g[:, None, :]
    c = centroids(list(W))
    off = ~np.eye(n_factors, dtype=bool)
    return float(np.max(np.abs(c.angles[off] - target)))
