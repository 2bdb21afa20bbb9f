"""Acceptance suite: one test per criterion, each printing a PASS line
with its measured values.

The large fixtures (the standard convergence run and the lift study) are
session-scoped and shared across criteria. Budget note: the full suite
trains several models and takes tens of minutes on one CPU core.
"""

import math
import time

import numpy as np
import pytest

from dsfnet import cli as cli_mod
from dsfnet.cli import gradcheck_report, load_run_config
from dsfnet.data import SynthSpec, generate, oracle_scores, partition_scenarios
from dsfnet.disentangle import (
    descend_ncr,
    equiangular_frame,
    measure_cnc_gradient_norms,
    measure_mma_gradient_norms,
    measure_ncr_gradient_norms,
    repulsion_target,
)
from dsfnet.evalkit import auc, evaluate, fsl_attention, match_rows, predict_logits, rela_impr
from dsfnet.factorization import ModelConfig, load_checkpoint
from dsfnet.scenario_aware import sabn_forward
from dsfnet.training import TrainConfig, fit


def report(name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] {name}: {status} ({detail})")
    assert ok, f"{name}: {detail}"


# -- shared fixtures -----------------------------------------------------------

# the standard synthetic run: desk-scale benchmark configuration
STANDARD_SPEC = dict(k_true=4, seed=0)          # generator defaults otherwise
STANDARD_GROUPS = 20000
STANDARD_MODEL = dict(n_factors=4, hidden=(16, 8))
STANDARD_TRAIN = dict(batch_size=256, total_steps=20000, base_lr=1e-3,
                      decay_rate=0.98, decay_steps=2000, lam=0.01, kappa=1.75,
                      variant="dr", seed=11, log_every=500)

# the lift study: entangled factors, larger data, four model variants
LIFT_SPEC = dict(k_true=4, beta_cos=0.45, seed=101)
LIFT_TRAIN_GROUPS = 50000
LIFT_TEST_GROUPS = 10000
LIFT_HIDDEN = (64, 32)
LIFT_STEPS = 8000
LIFT_SEEDS = (1, 2, 3, 4, 5)


def standard_train_config(seed=None, **overrides):
    kw = dict(STANDARD_TRAIN)
    if seed is not None:
        kw["seed"] = seed
    kw.update(overrides)
    return TrainConfig(**kw)


@pytest.fixture(scope="session")
def standard_run(tmp_path_factory):
    """Criterion 4's run, reused by the determinism criterion."""
    out = tmp_path_factory.mktemp("standard")
    spec = SynthSpec(**STANDARD_SPEC)
    ds = generate(spec, STANDARD_GROUPS, stream=0)
    mc = ModelConfig(layer_dims=(spec.d_x, *STANDARD_MODEL["hidden"], 1),
                     scenario_dim=spec.d_s, n_factors=STANDARD_MODEL["n_factors"])
    t0 = time.perf_counter()
    res = fit(mc, standard_train_config(), ds,
              trace_path=out / "trace.csv", checkpoint_path=out / "model.json")
    elapsed = time.perf_counter() - t0
    return {"result": res, "dir": out, "elapsed": elapsed, "spec": spec,
            "dataset": ds, "model_cfg": mc}


@pytest.fixture(scope="session")
def lift_runs():
    """Criteria 5-7: per seed, train the full model, the regularizer
    ablations, and the plain-MLP reference on shared entangled data."""
    spec = SynthSpec(**LIFT_SPEC)
    train_ds = generate(spec, LIFT_TRAIN_GROUPS, stream=0)
    test_ds = generate(spec, LIFT_TEST_GROUPS, stream=1)
    base = dict(batch_size=256, total_steps=LIFT_STEPS, base_lr=1e-3,
                decay_rate=0.98, decay_steps=2000, kappa=1.75, log_every=2000)
    dsf_cfg = dict(layer_dims=(spec.d_x, *LIFT_HIDDEN, 1), scenario_dim=spec.d_s, n_factors=4)
    mlp_cfg = dict(layer_dims=(spec.d_x + spec.d_s, *LIFT_HIDDEN, 1), scenario_dim=spec.d_s,
                   n_factors=1, use_saff=False, scenario_bn=False, gated=False,
                   concat_scenario=True)
    runs = {"full": [], "ncr": [], "none": [], "mlp": [], "models": []}
    for seed in LIFT_SEEDS:
        full = fit(ModelConfig(**dsf_cfg), TrainConfig(lam=0.01, variant="dr", seed=seed, **base),
                   train_ds)
        ncr = fit(ModelConfig(**dsf_cfg), TrainConfig(lam=0.01, variant="ncr", seed=seed, **base),
                  train_ds)
        none = fit(ModelConfig(**dsf_cfg), TrainConfig(lam=0.0, variant="none", seed=seed, **base),
                   train_ds)
        mlp = fit(ModelConfig(**mlp_cfg), TrainConfig(lam=0.0, variant="none", seed=seed, **base),
                  train_ds)
        runs["full"].append(evaluate(full.model, test_ds).auc)
        runs["ncr"].append(evaluate(ncr.model, test_ds).auc)
        runs["none"].append(evaluate(none.model, test_ds).auc)
        runs["mlp"].append(evaluate(mlp.model, test_ds).auc)
        runs["models"].append(full.model)
    runs["spec"] = spec
    runs["test_ds"] = test_ds
    runs["train_ds"] = train_ds
    return runs


# -- criterion 1: gradient correctness ------------------------------------------


def test_criterion_1_gradient_correctness():
    t0 = time.perf_counter()
    worst = {}
    for seed in range(20):
        for name, err in gradcheck_report(seed=seed, h=1e-5).items():
            worst[name] = max(worst.get(name, 0.0), err)
    elapsed = time.perf_counter() - t0
    expected = {"bce", "forward_eval", "forward_train", "sabn_eval", "sabn_train",
                "saff", "mma", "ncr", "cnc", "cnc_cos", "orth", "total_loss"}
    assert expected <= set(worst)
    ok = max(worst.values()) < 1e-5 and elapsed < 60.0
    report("criterion 1 (gradient correctness, 20 seeds)", ok,
           f"worst rel err {max(worst.values()):.2e} over {sorted(worst)} in {elapsed:.0f}s")


# -- criterion 2: equiangular construction and descent ---------------------------


def test_criterion_2_lemma_constructive():
    t0 = time.perf_counter()
    worst_residual = 0.0
    for n in range(2, 9):
        for d in (n - 1, n + 3):
            worst_residual = max(worst_residual, equiangular_frame(n, d).residual)
    worst_dev = 0.0
    for n in range(2, 8):
        for seed in range(10):
            worst_dev = max(worst_dev, descend_ncr(n, 8, seed, steps=6000))
    elapsed = time.perf_counter() - t0
    ok = worst_residual < 1e-8 and worst_dev < 1e-2 and elapsed < 120.0
    report("criterion 2 (equiangular frame + descent)", ok,
           f"max gram residual {worst_residual:.2e}, max angle dev {worst_dev:.2e} rad, {elapsed:.0f}s")


# -- criterion 3: gradient-norm laws ---------------------------------------------


def test_criterion_3_gradient_norm_laws():
    t0 = time.perf_counter()
    angles = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    mma_norms = measure_mma_gradient_norms(angles)
    cv = float(mma_norms.std() / mma_norms.mean())

    target = repulsion_target(2)
    sweep = target + np.linspace(-1.2, 1.2, 13)
    sweep = sweep[np.abs(sweep - target) > 1e-12]
    devs, norms = measure_ncr_gradient_norms(sweep)
    slope = float(np.sum(devs * norms) / np.sum(devs * devs))
    resid = norms - slope * devs
    r2 = 1.0 - float(np.sum(resid ** 2) / np.sum((norms - norms.mean()) ** 2))
    at_target = measure_ncr_gradient_norms([target])[1][0]

    thetas = np.array([0.01, 0.1, 1.0])
    ang_norms, cos_norms = measure_cnc_gradient_norms(thetas)
    ang_spread = float(ang_norms.max() - ang_norms.min())
    ratios = cos_norms / np.sin(thetas)
    sin_err = float(np.abs(ratios / ratios[0] - 1.0).max())
    elapsed = time.perf_counter() - t0

    ok = (cv < 0.01 and r2 > 0.999 and at_target < 1e-6
          and ang_spread < 1e-6 and sin_err < 0.02 and elapsed < 60.0)
    report("criterion 3 (gradient-norm laws)", ok,
           f"mma CV {cv:.1e}, ncr R^2 {r2:.6f}, ncr@target {at_target:.1e}, "
           f"cnc spread {ang_spread:.1e}, cos-form sine error {sin_err:.1e}, {elapsed:.0f}s")


# -- criterion 4: convergence trace ----------------------------------------------


def test_criterion_4_convergence_trace(standard_run):
    final = standard_run["result"].trace[-1]
    lncr, lcnc = final[2], final[3]
    elapsed = standard_run["elapsed"]
    ok = lcnc < 1e-3 and lncr < 1e-2 and elapsed < 600.0
    report("criterion 4 (regularizer convergence)", ok,
           f"final lncr {lncr:.2e} (< 1e-2), lcnc {lcnc:.2e} (< 1e-3), {elapsed:.0f}s")


# -- criteria 5 and 6: lift and ablation ordering ---------------------------------


def test_criterion_5_end_to_end_lift(lift_runs):
    full = np.median(lift_runs["full"])
    mlp = np.median(lift_runs["mlp"])
    ok = full >= mlp + 0.01
    report("criterion 5 (lift over plain MLP)", ok,
           f"median full {full:.4f} vs mlp {mlp:.4f}, gap {full - mlp:+.4f} (>= +0.01); "
           f"full per seed {np.round(lift_runs['full'], 4).tolist()}, "
           f"mlp per seed {np.round(lift_runs['mlp'], 4).tolist()}")


def test_criterion_6_ablation_ordering(lift_runs):
    full = np.median(lift_runs["full"])
    ncr = np.median(lift_runs["ncr"])
    none = np.median(lift_runs["none"])
    ok = (full >= ncr) and (ncr >= none) and (full - none >= 0.002)
    report("criterion 6 (ablation ordering)", ok,
           f"median full {full:.4f} >= ncr {ncr:.4f} >= none {none:.4f}, "
           f"full-none gap {full - none:+.4f} (>= 0.002)")


# -- criterion 7: interpretability recovery ---------------------------------------


def test_criterion_7_interpretability(lift_runs):
    best = -np.inf
    med_candidates = []
    for model in lift_runs["models"]:
        att = fsl_attention(model, lift_runs["test_ds"], gate_threshold=0.8,
                            samples_per_fsl=200, seed=0)
        _, corr = match_rows(att.values, np.abs(lift_runs["spec"].betas))
        med_candidates.append(corr)
        best = max(best, corr)
    med = float(np.median(med_candidates))
    ok = med >= 0.7
    report("criterion 7 (interpretability recovery)", ok,
           f"median permutation-matched correlation {med:.3f} (>= 0.7), "
           f"per seed {np.round(med_candidates, 3).tolist()}")


# -- criterion 8: metric oracles ---------------------------------------------------


def pair_count_auc(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        wins += np.sum(p > neg) + 0.5 * np.sum(p == neg)
    return wins / (len(pos) * len(neg))


def test_criterion_8_metric_oracles():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 120))
        scores = np.round(rng.standard_normal(n), 1)
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        worst = max(worst, abs(auc(scores, labels) - pair_count_auc(scores, labels)))
    r_mmoe = rela_impr(0.7415, 0.7362)
    r_dsf = rela_impr(0.7504, 0.7362)
    ok = worst < 1e-12 and abs(r_mmoe - 0.72) < 0.005 and abs(r_dsf - 1.94) <= 0.02
    report("criterion 8 (metric oracles)", ok,
           f"rank-sum vs pair-count max diff {worst:.1e}, "
           f"reference rows {r_mmoe:+.2f}% / {r_dsf:+.2f}%")


# -- criterion 9: equivalence probes ------------------------------------------------


def test_criterion_9_equivalence_probes():
    rng = np.random.default_rng(7)
    mc = ModelConfig(layer_dims=(6, 5, 3, 1), scenario_dim=3, n_factors=3,
                     gate_hidden=4, rescale_hidden=4)
    from dsfnet.factorization import DSFNet, forward
    from tests.test_factorization import standalone_mlp_logit

    model = DSFNet(mc, rng)
    for st in model.sabn:
        st.running_mean = rng.normal(size=st.width)
        st.running_var = 1.0 + rng.random(st.width)
    worst_logit = 0.0
    for i in range(3):
        onehot = np.zeros(3)
        onehot[i] = 1.0
        for _ in range(10):
            x, s = rng.standard_normal(6), rng.standard_normal(3)
            got = forward(model, x, s, mode="eval", gate_override=onehot)
            want = standalone_mlp_logit(model, i, x, s)
            worst_logit = max(worst_logit, abs(got - want))

    from dsfnet.scenario_aware import SabnState
    st = SabnState.create(4, 3, rng)
    mean_ref, var_ref = np.zeros(4), np.ones(4)
    for _ in range(9):
        Z = rng.standard_normal((32, 4)) * 1.7 - 0.3
        S = rng.standard_normal((32, 3))
        sabn_forward(st, Z, S, train=True)
        m = st.momentum
        mean_ref = m * mean_ref + (1 - m) * Z.mean(axis=0)
        var_ref = m * var_ref + (1 - m) * Z.var(axis=0)
    Z = rng.standard_normal((8, 4))
    S = rng.standard_normal((8, 3))
    got, _ = sabn_forward(st, Z, S, train=False)
    p = st.params
    gam = np.maximum(S @ p["gamma_W1"].T + p["gamma_b1"], 0.0) @ p["gamma_W2"].T + p["gamma_b2"]
    bet = np.maximum(S @ p["beta_W1"].T + p["beta_b1"], 0.0) @ p["beta_W2"].T + p["beta_b2"]
    want = gam * (Z - mean_ref) / np.sqrt(var_ref + st.eps) + bet
    worst_sabn = float(np.abs(got - want).max())

    ok = worst_logit < 1e-9 and worst_sabn < 1e-10
    report("criterion 9 (equivalence probes)", ok,
           f"one-hot override vs standalone {worst_logit:.2e} (< 1e-9), "
           f"eval stats vs hand accumulation {worst_sabn:.2e} (< 1e-10)")


# -- criterion 10: determinism -------------------------------------------------------


def test_criterion_10_determinism(standard_run, tmp_path):
    spec = standard_run["spec"]
    ds = standard_run["dataset"]
    res2 = fit(standard_run["model_cfg"], standard_train_config(), ds,
               trace_path=tmp_path / "trace.csv", checkpoint_path=tmp_path / "model.json")
    trace_a = (standard_run["dir"] / "trace.csv").read_bytes()
    trace_b = (tmp_path / "trace.csv").read_bytes()
    ckpt_a = (standard_run["dir"] / "model.json").read_bytes()
    ckpt_b = (tmp_path / "model.json").read_bytes()
    ok = trace_a == trace_b and ckpt_a == ckpt_b
    report("criterion 10 (determinism)", ok,
           f"trace bytes equal: {trace_a == trace_b}, checkpoint bytes equal: {ckpt_a == ckpt_b}")
