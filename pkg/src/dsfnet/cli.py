"""Command-line surface: data generation, training, evaluation,
interpretability, and the verification suites.

Configuration comes from a flat key-value file (``key = value`` lines,
``#`` comments) merged with command-line overrides; unknown keys are
rejected before any work starts and the effective configuration is
printed for audit. Exit codes: 0 success, 1 validation error, 2 runtime
failure (including failed verification).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import disentangle
from .data import SynthSpec, generate, load_csv, write_csv
from .disentangle import DRConfig, centroids, cnc_loss, cnc_loss_cos, dr_loss, mma_loss, ncr_loss, orth_loss
from .evalkit import evaluate, fsl_attention
from .factorization import DSFNet, ModelConfig, load_checkpoint
from .tensorcore import grad_check
from .training import TrainConfig, bce_loss, fit

log = logging.getLogger("dsfnet")


class ConfigError(ValueError):
    """Bad configuration key or value."""


@dataclass
class RunConfig:
    """Flat, validated union of model, training, and generator settings."""

    # model
    n_factors: int = 7
    hidden_dims: tuple = (256, 128, 64, 32)
    gate_hidden: int = 32
    activation: str = "relu"
    use_saff: bool = True
    scenario_bn: bool = True
    gated: bool = True
    concat_scenario: bool = False
    # objective / optimization
    lam: float = 0.01
    kappa: float = 1.75
    variant: str = "dr"
    batch_size: int = 256
    total_steps: int = 20000
    base_lr: float = 0.001
    decay_rate: float = 0.98
    decay_steps: int = 2000
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 0
    # synthetic generator
    k_true: int = 4
    d_x: int = 40
    d_s: int = 8
    candidates: int = 12
    tau: float = 0.02
    beta_cos: float = 0.45
    gate_sharpness: float = 12.0
    x_corr: float = 0.3
    data_seed: int = 0
    n_groups: int = 20000
    stream: int = 0

    def model_config(self, d_x: int, d_s: int) -> ModelConfig:
        first = d_x + (d_s if self.concat_scenario else 0)
        return ModelConfig(layer_dims=(first, *self.hidden_dims, 1), scenario_dim=d_s,
                           n_factors=self.n_factors, gate_hidden=self.gate_hidden,
                           activation=self.activation, use_saff=self.use_saff,
                           scenario_bn=self.scenario_bn, gated=self.gated,
                           concat_scenario=self.concat_scenario)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, total_steps=self.total_steps,
                           base_lr=self.base_lr, decay_rate=self.decay_rate,
                           decay_steps=self.decay_steps, lam=self.lam, kappa=self.kappa,
                           variant=self.variant, seed=self.seed, log_every=self.log_every,
                           checkpoint_every=self.checkpoint_every)

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(k_true=self.k_true, d_x=self.d_x, d_s=self.d_s,
                         candidates=self.candidates, tau=self.tau, beta_cos=self.beta_cos,
                         gate_sharpness=self.gate_sharpness, x_corr=self.x_corr,
                         seed=self.data_seed)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    default = getattr(RunConfig(), key)
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key!r} expects a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r} expects an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            v = float(raw)
        except ValueError:
            raise ConfigError(f"key {key!r} expects a number, got {raw!r}") from None
        if not math.isfinite(v):
            raise ConfigError(f"key {key!r} must be finite, got {raw!r}")
        return v
    if isinstance(default, tuple):
        try:
            return tuple(int(p) for p in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"key {key!r} expects a list of integers, got {raw!r}") from None
    return raw.strip()


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then file values, then explicit overrides; validated."""
    values: dict = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
            key, raw = body.split("=", 1)
            key = key.strip()
            values[key] = _parse_value(key, raw)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key {key!r}")
        values[key] = val
    cfg = RunConfig(**values)
    try:
        cfg.train_config()
        if cfg.variant != "none":
            DRConfig(n_factors=cfg.n_factors, lam=cfg.lam, kappa=cfg.kappa, variant=cfg.variant)
        cfg.synth_spec()
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    return cfg


def _print_effective(cfg: RunConfig):
    print("# effective configuration")
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        print(f"{f.name} = {v}")


# -- verification suites -------------------------------------------------------


def lemma_report(n_values, dim_values=None, seeds=range(10), descent_steps=6000):
    """Equiangular-frame residuals plus repulsion-only descent deviations."""
    lines, ok = [], True
    for n in n_values:
        dims = dim_values if dim_values is not None else (n - 1, n + 3)
        for d in dims:
            residual = disentangle.equiangular_frame(n, d).residual
            ok &= residual < 1e-8
            lines.append(f"frame n={n} d={d}: max |gram - target| = {residual:.3e}")
    for n in n_values:
        if n < 2 or n > 7:
            continue
        d = 8
        worst = max(disentangle.descend_ncr(n, d, seed, steps=descent_steps) for seed in seeds)
        ok &= worst < 1e-2
        lines.append(f"descent n={n} d={d} ({len(list(seeds))} seeds): max pairwise-angle deviation = {worst:.3e} rad")
    return lines, ok


def gradlaw_report():
    """Gradient-norm law measurements for the angular losses."""
    lines, ok = [], True
    angles = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    mma_norms = disentangle.measure_mma_gradient_norms(angles)
    cv = float(mma_norms.std() / mma_norms.mean())
    ok &= cv < 0.01
    lines.append(f"minimum-angle loss: gradient-norm CV over angles = {cv:.3e} (target < 1e-2)")

    target = disentangle.repulsion_target(2)
    sweep = target + np.linspace(-1.2, 1.2, 13)
    sweep = sweep[np.abs(sweep - target) > 1e-12]
    devs, norms = disentangle.measure_ncr_gradient_norms(sweep)
    slope = float(np.sum(devs * norms) / np.sum(devs * devs))
    resid = norms - slope * devs
    r2 = 1.0 - float(np.sum(resid ** 2) / np.sum((norms - norms.mean()) ** 2))
    at_target = disentangle.measure_ncr_gradient_norms([target])[1][0]
    ok &= r2 > 0.999 and at_target < 1e-6
    lines.append(f"repulsion loss: norm-vs-deviation linear fit R^2 = {r2:.6f} (target > 0.999)")
    lines.append(f"repulsion loss: gradient norm at the fixed point = {at_target:.3e} (target < 1e-6)")

    thetas = np.array([0.01, 0.1, 1.0])
    ang_norms, cos_norms = disentangle.measure_cnc_gradient_norms(thetas)
    ang_spread = float(ang_norms.max() - ang_norms.min())
    ratios = cos_norms / np.sin(thetas)
    sin_err = float(np.abs(ratios / ratios[0] - 1.0).max())
    ok &= ang_spread < 1e-6 and sin_err < 0.02
    lines.append(f"clustering loss (angle form): anchor gradient-norm spread = {ang_spread:.3e} (target < 1e-6)")
    lines.append(f"clustering loss (cosine form): deviation from sin-proportionality = {sin_err:.3e} (target < 0.02)")
    return lines, ok


def _kink_margin(model: DSFNet, X, S) -> float:
    """Distance of every rectifier input from its kink, over both modes."""
    mins = [np.inf]
    for train in (False, True):
        _, cache = model.forward_batch(X, S, train=train, update_stats=False)
        if cache["gate"] is not None:
            mins.append(np.abs(cache["gate"]["H"]).min())
        for entry in cache["layers"][:-1]:
            mins.append(np.abs(entry["preact"]).min())
            net = entry["sabn"]["net"]
            if net is not None:
                mins.append(np.abs(net["Hg"]).min())
                mins.append(np.abs(net["Hb"]).min())
    return float(min(mins))


def gradcheck_report(seed: int = 0, h: float = 1e-5) -> dict:
    """Finite-difference checks of every analytic gradient on one random draw.

    Draws are re-sampled until every rectifier input, loss selector, and
    hinge sits clear of its non-smooth set, so the probes stay on one
    smooth piece. Returns a dict of max relative errors keyed by component.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 5)))
    report = {}

    z = float(rng.normal())
    y = int(rng.integers(0, 2))
    _, g = bce_loss(z, y)
    report["bce"] = grad_check(lambda p: bce_loss(float(p[0]), y)[0], np.array([z]), np.array([g]), h)

    cfg = ModelConfig(layer_dims=(4, 5, 3, 1), scenario_dim=2, n_factors=3,
                      gate_hidden=3, rescale_hidden=4, use_saff=True, scenario_bn=True)
    B = 4
    dr_cfg = DRConfig(n_factors=3, lam=0.01, kappa=1.75, variant="dr")
    for _ in range(64):
        model = DSFNet(cfg, rng)
        X = rng.standard_normal((B, 4))
        S = rng.standard_normal((B, 2))
        for st in model.sabn:  # non-trivial eval statistics
            st.running_mean = rng.normal(size=st.width) * 0.1
            st.running_var = 1.0 + 0.2 * rng.random(st.width)
        bank_margin = min(selection_margin(W, dr_cfg.delta_theta) for W in model.weight_stacks())
        if _kink_margin(model, X, S) > 2e-3 and bank_margin > 1e-3:
            break
    else:
        raise RuntimeError("could not draw a kink-free model configuration")
    labels = rng.integers(0, 2, size=B)
    u = rng.standard_normal(B)
    p0 = model.param_vector()

    def weighted_logits(p, train):
        model.set_param_vector(p)
        logits, _ = model.forward_batch(X, S, train=train, update_stats=False)
        return float(u @ logits)

    for train in (False, True):
        logits, cache = model.forward_batch(X, S, train=train, update_stats=False)
        grads, _ = model.backward_batch(cache, u)
        name = "forward_train" if train else "forward_eval"
        report[name] = grad_check(lambda p, t=train: weighted_logits(p, t),
                                  p0, model.grads_to_vector(grads), h)
        model.set_param_vector(p0)

    report.update(_scenario_aware_checks(rng, h))

    stack = _nontied_stack(rng, n=3, m=4, d=5, delta=dr_cfg.delta_theta)
    flat0 = stack.ravel().copy()

    def stack_loss(fn):
        def f(p):
            W = p.reshape(stack.shape)
            c = centroids(list(W))
            return fn(c, W)[0]
        return f

    c0 = centroids(list(stack))
    checks = {
        "ncr": (lambda c, W: ncr_loss(c), lambda c, W: np.broadcast_to(ncr_loss(c)[1][:, None, :], W.shape)),
        "mma": (lambda c, W: mma_loss(c), lambda c, W: np.broadcast_to(mma_loss(c)[1][:, None, :], W.shape)),
        "orth": (lambda c, W: orth_loss(c), lambda c, W: np.broadcast_to(orth_loss(c)[1][:, None, :], W.shape)),
        "cnc": (lambda c, W: cnc_loss(c, list(W), dr_cfg.delta_theta),
                lambda c, W: np.stack(cnc_loss(c, list(W), dr_cfg.delta_theta)[1])),
        "cnc_cos": (lambda c, W: cnc_loss_cos(c, list(W), dr_cfg.delta_theta),
                    lambda c, W: np.stack(cnc_loss_cos(c, list(W), dr_cfg.delta_theta)[1])),
    }
    for name, (value_fn, grad_fn) in checks.items():
        g = grad_fn(c0, stack).ravel()
        report[name] = grad_check(stack_loss(value_fn), flat0, g, h)

    def total(p):
        model.set_param_vector(p)
        logits, _ = model.forward_batch(X, S, train=False, update_stats=False)
        lb = float(np.mean([bce_loss(lg, yy)[0] for lg, yy in zip(logits, labels)]))
        return lb + dr_cfg.lam * dr_loss(model.weight_stacks(), dr_cfg).total

    logits, cache = model.forward_batch(X, S, train=False, update_stats=False)
    from .training import bce_loss_batch
    _, dlogits = bce_loss_batch(logits, labels)
    grads, _ = model.backward_batch(cache, dlogits)
    res = dr_loss(model.weight_stacks(), dr_cfg)
    for l, g in enumerate(res.layer_grads):
        grads[f"bank.W.{l}"] = grads[f"bank.W.{l}"] + dr_cfg.lam * g
    report["total_loss"] = grad_check(total, p0, model.grads_to_vector(grads), h)
    model.set_param_vector(p0)
    return report


def _scenario_aware_checks(rng: np.random.Generator, h: float) -> dict:
    """Standalone normalization/filter checks over joint (params, inputs)."""
    from .scenario_aware import SabnState, SaffNet, sabn_backward, sabn_forward, saff_backward, saff_forward

    B, width, d_s = 4, 3, 2
    S = rng.standard_normal((B, d_s))
    out = {}

    for _ in range(64):
        state = SabnState.create(width, d_s, rng, scenario_mode=True, hidden=3)
        state.running_mean = rng.normal(size=width) * 0.1
        state.running_var = 1.0 + 0.2 * rng.random(width)
        Z = rng.standard_normal((B, width))
        p = state.params
        kink = min(np.abs(S @ p["gamma_W1"].T + p["gamma_b1"]).min(),
                   np.abs(S @ p["beta_W1"].T + p["beta_b1"]).min())
        if kink > 2e-3:
            break
    G = rng.standard_normal((B, width))
    names = list(state.params.keys())

    def sabn_value(vec, train):
        i = 0
        for name in names:
            arr = state.params[name]
            arr[...] = vec[i:i + arr.size].reshape(arr.shape)
            i += arr.size
        Zv = vec[i:].reshape(B, width)
        o, _ = sabn_forward(state, Zv, S, train=train, update_stats=False)
        return float(np.sum(G * o))

    for train in (False, True):
        p0 = np.concatenate([state.params[n].ravel() for n in names] + [Z.ravel()])
        _, cache = sabn_forward(state, Z, S, train=train, update_stats=False)
        dZ, grads = sabn_backward(state, cache, G)
        an = np.concatenate([grads[n].ravel() for n in names] + [dZ.ravel()])
        key = "sabn_train" if train else "sabn_eval"
        out[key] = grad_check(lambda v, t=train: sabn_value(v, t), p0, an, h)
        sabn_value(p0, train)  # restore

    net = SaffNet.create(width, d_s, rng)
    X = rng.standard_normal((B, width))
    Gf = rng.standard_normal((B, width))
    saff_names = list(net.params.keys())

    def saff_value(vec):
        i = 0
        for name in saff_names:
            arr = net.params[name]
            arr[...] = vec[i:i + arr.size].reshape(arr.shape)
            i += arr.size
        Xv = vec[i:].reshape(B, width)
        o, _ = saff_forward(net, Xv, S)
        return float(np.sum(Gf * o))

    p0 = np.concatenate([net.params[n].ravel() for n in saff_names] + [X.ravel()])
    _, cache = saff_forward(net, X, S)
    dX, grads = saff_backward(net, cache, Gf, need_input_grad=True)
    an = np.concatenate([grads[n].ravel() for n in saff_names] + [dX.ravel()])
    out["saff"] = grad_check(saff_value, p0, an, h)
    saff_value(p0)  # restore
    return out


def _nontied_stack(rng: np.random.Generator, n: int, m: int, d: int, delta: float,
                   margin: float = 1e-3) -> np.ndarray:
    """Random factor stack whose loss selectors and hinges sit clear of ties."""
    for _ in range(64):
        stack = rng.standard_normal((n, m, d))
        if selection_margin(stack, delta) > margin:
            return stack
    raise RuntimeError("could not draw a tie-free configuration")


def selection_margin(stack: np.ndarray, delta: float) -> float:
    """Distance of a factor stack from the losses' non-smooth sets.

    Covers the runner-up gaps of every argmax/argmin selector and the
    hinge boundaries of both clustering forms; finite-difference probes
    are only trustworthy when this margin exceeds the probe step.
    """
    c = centroids(list(stack))
    n = stack.shape[0]
    target = disentangle.repulsion_target(n)
    gaps = []
    dev2 = (c.angles - target) ** 2
    cos_margin = 1.0 - math.cos(delta)
    for i in range(n):
        worst = np.sort(np.delete(dev2[i], i))[::-1]
        if worst.size > 1:
            gaps.append(worst[0] - worst[1])
        nearest = np.sort(np.delete(c.angles[i], i))
        if nearest.size > 1:
            gaps.append(nearest[1] - nearest[0])
        W = stack[i]
        norms = np.linalg.norm(W, axis=1)
        cos_own = (W @ c.centroids[i]) / norms
        order = np.sort(cos_own)
        if order.size > 1:
            gaps.append(order[1] - order[0])
        k = int(np.argmin(cos_own))
        cos_for = np.delete((c.centroids @ W[k]) / norms[k], i)
        order = np.sort(cos_for)[::-1]
        if order.size > 1:
            gaps.append(order[0] - order[1])
        a = math.acos(max(min(cos_own[k], 1.0), -1.0))
        b = math.acos(max(min(order[0], 1.0), -1.0))
        gaps.append(abs(delta + a - b))
        gaps.append(abs(order[0] - cos_own[k] + cos_margin))
    return float(min(gaps))


# -- commands -------------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config, {"data_seed": args.seed, "n_groups": args.groups,
                                        "stream": args.stream})
    _print_effective(cfg)
    ds = generate(cfg.synth_spec(), cfg.n_groups, stream=cfg.stream)
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} samples ({ds.n_groups} groups) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    overrides = {"seed": args.seed, "variant": args.variant}
    cfg = load_run_config(args.config, overrides)
    _print_effective(cfg)
    dataset = load_csv(args.data)
    model_cfg = cfg.model_config(dataset.d_x, dataset.d_s)
    trace_path = args.trace or str(Path(args.out).with_suffix(".trace.csv"))
    result = fit(model_cfg, cfg.train_config(), dataset,
                 trace_path=trace_path, checkpoint_path=args.out)
    last = result.trace[-1] if result.trace else None
    if last is not None:
        print(f"final: step={last[0]} lbce={last[1]:.6f} lncr={last[2]:.6e} lcnc={last[3]:.6e}")
    print(f"checkpoint: {args.out}")
    print(f"trace: {trace_path}")
    return 0


def _cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    dataset = load_csv(args.data)
    report = evaluate(model, dataset, baseline_auc=args.base_auc)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(report.as_text())
    return 0


def _cmd_interpret(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    dataset = load_csv(args.data)
    att = fsl_attention(model, dataset, gate_threshold=args.threshold,
                        samples_per_fsl=args.samples, seed=args.seed or 0)
    if args.json:
        print(json.dumps({"values": att.values.tolist(), "sample_counts": att.sample_counts,
                          "diagnostics": att.diagnostics}, sort_keys=True))
    else:
        print(att.as_text())
    return 0


def _cmd_verify(args) -> int:
    ok = True
    if args.suite in ("lemma", "all"):
        n_values = [args.n] if args.n else range(2, 9)
        dims = [args.d] if args.d else None
        lines, lemma_ok = lemma_report(n_values, dims)
        ok &= lemma_ok
        print("== equiangular construction and repulsion descent ==")
        print("\n".join(lines))
    if args.suite in ("gradlaws", "all"):
        lines, law_ok = gradlaw_report()
        ok &= law_ok
        print("== gradient-norm laws ==")
        print("\n".join(lines))
    print("verify: " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 2


def _cmd_gradcheck(args) -> int:
    report = gradcheck_report(seed=args.seed or 0)
    worst = max(report.values())
    for name, err in sorted(report.items()):
        print(f"{name:>14s}: max rel err = {err:.3e}")
    print(f"gradcheck: {'PASS' if worst < 1e-5 else 'FAIL'} (worst {worst:.3e}, target < 1e-5)")
    return 0 if worst < 1e-5 else 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsfnet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    g.add_argument("--config")
    g.add_argument("--out", default="data.csv")
    g.add_argument("--seed", type=int)
    g.add_argument("--groups", type=int)
    g.add_argument("--stream", type=int)
    g.set_defaults(fn=_cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a CSV dataset")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", default="checkpoint.json")
    t.add_argument("--trace")
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=["dr", "mma_cnc", "ncr", "ncr_cnccos", "orth", "none"])
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="print ranking metrics for a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--base-auc", type=float, dest="base_auc")
    e.add_argument("--json", action="store_true")
    e.set_defaults(fn=_cmd_eval)

    i = sub.add_parser("interpret", help="print the factor attention matrix")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--threshold", type=float, default=0.8)
    i.add_argument("--samples", type=int, default=200)
    i.add_argument("--seed", type=int)
    i.add_argument("--json", action="store_true")
    i.set_defaults(fn=_cmd_interpret)

    v = sub.add_parser("verify", help="run the construction and gradient-law suites")
    v.add_argument("--suite", choices=["lemma", "gradlaws", "all"], default="all")
    v.add_argument("--n", type=int)
    v.add_argument("--d", type=int)
    v.set_defaults(fn=_cmd_verify)

    c = sub.add_parser("gradcheck", help="finite-difference checks on a random model")
    c.add_argument("--seed", type=int)
    c.set_defaults(fn=_cmd_gradcheck)
    return p


def dispatch(argv) -> int:
    """Parse and run one command; returns the process exit status."""
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("DSFNET_LOG", "info"), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return args.fn(args)
    except (ConfigError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failure
        if log.isEnabledFor(logging.DEBUG):
            log.exception("command failed")
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
