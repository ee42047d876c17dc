"""Command-line entry point: run a configured scenario and write its artifacts.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 configuration
error, 3 blow-up (a diagnostic snapshot is written).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np

from . import diagnostics as dg
from .config import SCENARIOS, ScenarioConfig, load_config
from .dynamics import (
    EvolutionConfig,
    SampledSource,
    StateZ,
    evolve_schedule,
    make_zf,
    random_state,
    state_norm,
    zf_residual,
)
from .errors import BlowUpError, ConfigError, KernelError, MemheatError, NonlinearityError, SandwichViolation
from .history import HistoryField, apply_T, mr_inner, write_history_csv
from .kernels import check_conditions, kernel_from_config, quadrature
from .report import Plot, RunArtifacts, Table, emit_report, write_json
from .spectral import NonlinearitySpec, SpectralField, check_dissipativity, write_fields_csv

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


# -----------------------------------------------------------------------------
# Building objects from a configuration
# -----------------------------------------------------------------------------


class Setup:
    """Kernel, quadrature, nonlinearity and forcing resolved from a config."""

    def __init__(self, config):
        d = config.data
        disc = d["discretization"]
        try:
            self.kernel = kernel_from_config(d["kernel"], config.base_dir)
        except (KernelError, KeyError, TypeError, OSError) as exc:
            raise ConfigError(f"[kernel] {exc}", *_where(config, "kernel")) from None
        try:
            self.quad = quadrature(self.kernel, node_rule=disc["node_rule"], n_nodes=disc["n_nodes"],
                                   weighting=disc["weighting"])
        except (ValueError, KernelError) as exc:
            raise ConfigError(f"[discretization] {exc}", *_where(config, "discretization")) from None
        self.n_modes = disc["n_modes"]
        try:
            coeffs = [Fraction(str(c)) for c in d["nonlinearity"]["coefficients"]]
            self.phi = NonlinearitySpec(tuple(coeffs) or (0,))
        except (NonlinearityError, ValueError) as exc:
            raise ConfigError(f"[nonlinearity] {exc}", *_where(config, "coefficients")) from None
        self.f = _forcing(config, self.n_modes)
        self.config = config

    def evolution(self, dt=None, t_final=None, cadence=None, phi=True, f=True):
        disc = self.config.data["discretization"]
        return EvolutionConfig(
            dt or disc["dt"], t_final or disc["t_final"], self.kernel, self.n_modes, quad=self.quad,
            phi=self.phi if phi and not self.phi.is_zero else None,
            f=self.f if f else None, cadence=cadence or disc["cadence"])

    def schedule(self):
        """``[(duration, dt), ...]`` covering ``t_final``: warmup segments then the main step."""
        disc = self.config.data["discretization"]
        segs = [(float(a), float(b)) for a, b in disc["warmup"]]
        rest = disc["t_final"] - sum(a for a, _ in segs)
        if rest <= 0:
            raise ConfigError("[discretization] warmup is longer than t_final", *_where(self.config, "warmup"))
        return segs + [(rest, disc["dt"])]

    def initial_state(self, seed, radius=None):
        ini = self.config.data["initial"]
        rng = np.random.default_rng(seed)
        r = ini["radius"] if radius is None else radius
        return random_state(self.quad, self.n_modes, rng, u_decay=ini["u_decay"], eta_decay=ini["eta_decay"],
                            eta_profile=ini["profile"], radius=r, space=ini["space"])


def _where(config, key):
    from .config import _locate

    return _locate(config.source, key)


def _forcing(config, n_modes):
    sec = config.data["forcing"]
    a = np.zeros(n_modes)
    coeffs = list(sec["coefficients"])
    if len(coeffs) > n_modes:
        raise ConfigError(f"[forcing] {len(coeffs)} coefficients for {n_modes} modes",
                          *_where(config, "coefficients"))
    a[:len(coeffs)] = coeffs
    for pair in sec["modes"]:
        if len(pair) != 2 or not 1 <= int(pair[0]) <= n_modes:
            raise ConfigError("[forcing] modes must be [k, amplitude] pairs with 1 <= k <= n_modes",
                              *_where(config, "modes"))
        a[int(pair[0]) - 1] += float(pair[1])
    return SpectralField(a)


def _uniform_segments(times):
    """Index ranges of maximal runs with constant step."""
    dt = np.diff(times)
    cuts = np.flatnonzero(np.abs(np.diff(dt)) > 1e-9 * dt[1:]) + 1
    bounds = [0, *cuts.tolist(), len(dt)]
    return [(a, b + 1) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _tau_check(traj, kernel):
    """``tau(F) <= kappa0 tau(||u||_2^2) + 1e-6`` on each uniform segment."""
    worst = -np.inf
    for a, b in _uniform_segments(traj.step_times):
        t = traj.step_times[a:b]
        if t[-1] - t[0] < 1.0:
            continue
        u2 = traj.norms2["u2"][a:b]
        F = dg.memory_convolution_F(t - t[0], u2, kernel)
        lhs = dg.translation_bound(t, F)
        rhs = kernel.kappa0 * dg.translation_bound(t, u2)
        worst = max(worst, lhs - rhs)
    return float(worst)


def _sandwich_all(traj, f, alpha):
    try:
        dg.lambda_trace(traj, f, alpha)
        return True
    except SandwichViolation:
        return False


# -----------------------------------------------------------------------------
# Scenarios
# -----------------------------------------------------------------------------


def scenario_verify_kernel(config):
    setup = Setup(config)
    k = setup.kernel
    rep = check_conditions(k)
    d = rep.as_dict()
    lines = []
    for r in (rep.nec, rep.nec2, rep.bad):
        consts = ", ".join(f"{a}={b:.6g}" for a, b in r.constants.items() if isinstance(b, float))
        tail = f" witness={r.witness}" if r.witness is not None and not r.holds else ""
        lines.append(f"{r.name}: {'pass' if r.holds else 'fail'}" + (f" ({consts})" if consts else "") + tail)
    verdicts = {"normalization": all(abs(x) < 1e-8 for x in rep.normalization_residuals)}
    if rep.envelope_holds is not None:
        verdicts["envelope"] = rep.envelope_holds
    if rep.bad_implies_nec2 is not None:
        verdicts["bad_implies_nec2"] = rep.bad_implies_nec2
    s = np.asarray(k.s)
    art = RunArtifacts()
    art.tables["kernel"] = Table({"s": s, "mu": k.mu(s), "kappa": k.kappa(s)})
    q = setup.quad
    art.tables["quadrature"] = Table({"s": q.nodes, "w": q.weights, "w_kappa": q.kappa_weights})
    art.plots["kernel"] = Plot("kernel", "s", ["mu", "kappa"], log=True, ylabel="kernel")
    art.summary = {"kernel": {"family": k.family, "kappa0": k.kappa0, "s_max": k.s_max},
                   "conditions": d, "conditions_text": lines, "verdicts": verdicts}
    return art


def scenario_linear_decay(config):
    setup = Setup(config)
    chk = config.data["checks"]
    cfg = setup.evolution(phi=False, f=False, cadence=10 ** 9)
    art = RunArtifacts()
    per_seed, overlays = [], []
    cols = {}
    for seed in config.seeds:
        z = setup.initial_state(seed)
        traj = evolve_schedule(z, cfg, [(cfg.t_final, cfg.dt)])
        t = traj.step_times
        v = traj.norm("V")
        fit = dg.fit_exponential_decay(t, v)
        tail = dg.datko_tail_fraction(t, traj.norms2["V"], chk["datko_tail_start"])
        inc = dg.max_increase(traj.norm("H1"))
        per_seed.append({"seed": seed, "rate": fit.rate, "rate_stderr": fit.rate_stderr,
                         "fit_rejected": fit.rejected, "datko_tail_fraction": tail,
                         "h1_max_increase": inc, "initial_V": float(v[0])})
        cols.setdefault("time", t)
        cols[f"V_seed{seed}"] = v
        cols[f"H1_seed{seed}"] = traj.norm("H1")
        tt = np.array([fit.window[0], fit.window[1]])
        overlays.append((f"fit seed {seed}", tt, fit.amplitude * v[0] * np.exp(-fit.rate * (tt - t[0]))))
    art.tables["decay"] = Table(cols)
    art.plots["decay_V"] = Plot("decay", "time", [c for c in cols if c.startswith("V_")], log=True,
                                ylabel="||L(t)z||_V", overlays=overlays)
    art.summary = {
        "seeds": config.seeds,
        "per_seed": per_seed,
        "verdicts": {
            "rate_positive": all(p["rate"] > 0 and not p["fit_rejected"] for p in per_seed),
            "datko_tail_below_1pct": all(p["datko_tail_fraction"] < 0.01 for p in per_seed),
            "h1_nonincreasing": all(p["h1_max_increase"] < 1e-9 for p in per_seed),
        },
    }
    return art


def _simulate_one(setup, seed, radius=None, with_checks=True):
    cfg = setup.evolution()
    z = setup.initial_state(seed, radius)
    traj = evolve_schedule(z, cfg, setup.schedule())
    out = {"seed": seed, "initial_H1": state_norm(z, "H1"), "initial_V": z.norm_V()}
    if with_checks:
        k = setup.kernel
        alpha = dg.choose_alpha(k.kappa0)
        out["alpha"] = alpha
        out["sandwich"] = _sandwich_all(traj, setup.f, alpha)
        out["tau_excess"] = _tau_check(traj, k)
        theta = check_conditions(k).nec_theta
        if theta is not None:
            tr, _ = dg.upsilon_trace(traj, theta)
            out["upsilon_bounded"] = bool(tr.metadata["all_bounded"])
        out["phi_stiffness"] = max(traj.metadata.get("max_phi_stiffness", 0.0),
                                   traj.metadata.get("continued", {}).get("max_phi_stiffness", 0.0))
    return traj, out


def scenario_simulate(config):
    setup = Setup(config)
    diss = check_dissipativity(setup.phi)
    art = RunArtifacts()
    runs = []
    for seed in config.seeds:
        traj, info = _simulate_one(setup, seed)
        runs.append(info)
        cols = {"time": traj.step_times}
        for name in ("H0", "H1", "V"):
            cols[name] = traj.norm(name)
        art.tables[f"norms_seed{seed}"] = Table(cols)
        art.plots[f"norms_seed{seed}"] = Plot(f"norms_seed{seed}", "time", ["H0", "H1", "V"], log=True,
                                              ylabel="norm")
        lam = dg.lambda_trace(traj, setup.f, info["alpha"]) if info["sandwich"] else None
        if lam is not None:
            art.tables[f"lambda_seed{seed}"] = Table({"time": lam.times, "Lambda": lam.values})
        final = traj.final
        art.extra[f"final_u_seed{seed}.csv"] = (lambda p, u=final.u: write_fields_csv(p, [u]))
    art.summary = {
        "seeds": config.seeds,
        "dissipativity": diss.as_dict(),
        "runs": runs,
        "verdicts": {
            "dissipative": diss.accepted,
            "sandwich": all(r["sandwich"] for r in runs),
            "tau_F_bound": all(r["tau_excess"] <= 1e-6 for r in runs),
            **({"upsilon_bound": all(r["upsilon_bounded"] for r in runs)}
               if all("upsilon_bounded" in r for r in runs) else {}),
        },
    }
    return art


def _ensemble_member(payload):
    """Worker: one seeded nonlinear run, reduced to scalars."""
    data, scenario, source, base_dir, seed, radius = payload
    config = ScenarioConfig(scenario, data, source, base_dir)
    setup = Setup(config)
    absorb = data["checks"]["absorb_after"]
    try:
        traj, info = _simulate_one(setup, seed, radius, with_checks=False)
    except BlowUpError as exc:
        return {"seed": seed, "radius": radius, "bounded": False, "blowup_time": exc.time}
    t = traj.step_times
    h0 = traj.norm("H0")
    info.update({"radius": radius, "bounded": bool(np.all(np.isfinite(h0))),
                 "sup_H0": float(h0.max()), "sup_H0_late": float(h0[t > absorb].max()),
                 "final_H0": float(h0[-1])})
    return info


def scenario_ensemble(config, workers=1):
    radii = list(config.data["checks"]["radii"])
    payloads = [(config.data, config.scenario, config.source, config.base_dir, seed, float(radii[i % len(radii)]))
                for i, seed in enumerate(config.seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_ensemble_member, payloads))
    else:
        results = [_ensemble_member(p) for p in payloads]
    results.sort(key=lambda r: r["seed"])
    bounded = all(r["bounded"] for r in results)
    groups = {}
    for r in results:
        if r["bounded"]:
            groups.setdefault(r["radius"], []).append(r["sup_H0_late"])
    level = {str(k): max(v) for k, v in sorted(groups.items())}
    spread = max(level.values()) / min(level.values()) if level else float("inf")
    art = RunArtifacts()
    keys = ["seed", "radius", "initial_H1", "sup_H0", "sup_H0_late", "final_H0"]
    ok = [r for r in results if r["bounded"]]
    art.tables["ensemble"] = Table({k: [r[k] for r in ok] for k in keys})
    art.summary = {
        "seeds": config.seeds,
        "members": results,
        "late_sup_H0_by_radius": level,
        "radius_spread": spread,
        "verdicts": {"all_bounded": bounded,
                     "radius_independent": bounded and spread <= config.data["checks"]["radius_factor"]},
    }
    return art


def scenario_decomposition(config):
    setup = Setup(config)
    cfg = setup.evolution()
    sched = setup.schedule()
    N, q = setup.n_modes, setup.quad
    seed = config.seeds[0]
    z = setup.initial_state(seed)
    S = evolve_schedule(z, cfg, sched)
    zf = make_zf(setup.f, q)
    L = evolve_schedule(z - zf, cfg.with_(phi=None, f=None), sched)
    g = SampledSource.minus_phi(S, setup.phi)
    W = evolve_schedule(StateZ.zeros(q, N), cfg.with_(phi=None, f=None, g=g), sched)
    errs, sv = [], []
    for i in range(len(S.times)):
        ref = S.state(i)
        rec = zf + L.state(i) + W.state(i)
        sv.append(ref.norm_V())
        errs.append((rec - ref).norm_V() / max(ref.norm_V(), 1e-300))
    fit = dg.fit_exponential_decay(L.step_times, L.norm("V"))
    art = RunArtifacts()
    art.tables["decomposition"] = Table({"time": np.asarray(S.times), "S_V": sv, "relative_error": errs,
                                         "L_V": [L.state(i).norm_V() for i in range(len(L.times))],
                                         "W_V": [W.state(i).norm_V() for i in range(len(W.times))]})
    art.tables["l1_decay"] = Table({"time": L.step_times, "V": L.norm("V")})
    t = L.step_times
    tt = np.array(fit.window)
    art.plots["l1_decay"] = Plot("l1_decay", "time", ["V"], log=True, ylabel="||l1(t)||_V",
                                 overlays=[("fit", tt, fit.amplitude * L.norm("V")[0] * np.exp(-fit.rate * (tt - t[0])))])
    r_u, r_eta = zf_residual(zf, setup.f)
    art.summary = {
        "seeds": [seed],
        "max_relative_error": max(errs),
        "l1_fit": fit.as_dict(),
        "zf_residual": [r_u, r_eta],
        "verdicts": {"superposition": max(errs) < 1e-6, "l1_decay_positive": fit.rate > 0 and not fit.rejected},
    }
    return art


def scenario_invariants(config):
    setup = Setup(config)
    chk = config.data["checks"]
    rng = np.random.default_rng(config.seeds[0])
    q, N, k = setup.quad, setup.n_modes, setup.kernel
    trials = chk["trials"]
    t_viol, t_max = 0, -np.inf
    for i in range(trials):
        r = i % 4
        eta = HistoryField(q, rng.standard_normal((len(q.nodes), N)) * np.arange(1, N + 1) ** -rng.uniform(1, 4))
        val = mr_inner(apply_T(eta), eta, r) / max(eta.norm(r) ** 2, 1e-300)
        t_max = max(t_max, val)
        t_viol += val > 1e-12
    alpha = dg.choose_alpha(k.kappa0)
    s_viol = 0
    for i in range(trials):
        z = random_state(q, N, rng, u_decay=rng.uniform(1.5, 3), eta_decay=rng.uniform(1.5, 3),
                         eta_profile="rough" if i % 2 else "smooth", radius=10 ** rng.uniform(-2, 2), space="V")
        f = SpectralField(rng.standard_normal(N) * np.arange(1, N + 1) ** -2.0 * 10 ** rng.uniform(-2, 2))
        if i % 5 == 0:
            f = SpectralField.zeros(N)
        try:
            dg.lambda_functional(z, f, alpha)
        except SandwichViolation:
            s_viol += 1
    g_fail, g_ratio = 0, 0.0
    for _ in range(chk["gronwall_instances"]):
        g = dg.gronwall_instance(rng)
        g_fail += not g.holds
        g_ratio = max(g_ratio, g.worst_ratio)
    rows = [
        ("translation_dissipativity", trials, t_viol, t_max, t_viol == 0),
        ("sandwich", trials, s_viol, float(s_viol), s_viol == 0),
        ("gronwall", chk["gronwall_instances"], g_fail, g_ratio, g_fail == 0),
    ]
    if not setup.f.coeffs.any():
        pass
    else:
        r_u, r_eta = zf_residual(make_zf(setup.f, q), setup.f)
        rows.append(("zf_residual", 1, int(max(r_u, r_eta) >= 1e-6), max(r_u, r_eta), max(r_u, r_eta) < 1e-6))
    art = RunArtifacts()
    art.tables["invariants"] = Table({
        "check": [r[0] for r in rows], "trials": [r[1] for r in rows], "violations": [r[2] for r in rows],
        "worst": [r[3] for r in rows], "pass": [r[4] for r in rows]})
    art.summary = {"seeds": config.seeds[:1], "alpha": alpha,
                   "table": [dict(zip(("check", "trials", "violations", "worst", "pass"), r)) for r in rows],
                   "verdicts": {r[0]: r[4] for r in rows}}
    return art


# -----------------------------------------------------------------------------
# Driver
# -----------------------------------------------------------------------------


def _blowup_artifacts(exc, out_dir, config):
    os.makedirs(out_dir, exist_ok=True)
    write_fields_csv(os.path.join(out_dir, "blowup_u.csv"), [exc.state.u])
    write_history_csv(os.path.join(out_dir, "blowup_history.csv"), exc.state.eta)
    write_json(os.path.join(out_dir, "summary.json"), {
        "seeds": config.seeds, "blowup": {"time": exc.time, "last_finite_time": exc.state.t,
                                          "message": str(exc)},
        "verdicts": {"bounded": False}, "passed": False})


def run_scenario(config, output_dir=None, workers=None, plots=None):
    """Run ``config``, write artifacts and return the exit status."""
    out_dir = output_dir or config.output_dir
    workers = workers or config.data["run"]["workers"]
    os.makedirs(out_dir, exist_ok=True)
    resolved = config.resolved()
    resolved["output"] = dict(resolved["output"], dir=out_dir)
    resolved["run"] = dict(resolved["run"], workers=workers)
    write_json(os.path.join(out_dir, "resolved_config.json"), resolved)
    fn = {
        "verify-kernel": scenario_verify_kernel,
        "linear-decay": scenario_linear_decay,
        "simulate": scenario_simulate,
        "decomposition": scenario_decomposition,
        "invariants": scenario_invariants,
    }
    try:
        if config.scenario == "ensemble":
            art = scenario_ensemble(config, workers)
        else:
            art = fn[config.scenario](config)
    except BlowUpError as exc:
        _blowup_artifacts(exc, out_dir, config)
        return EXIT_BLOWUP
    art.summary.setdefault("seeds", config.seeds)
    art.summary["scenario"] = config.scenario
    art.summary["passed"] = all(bool(v) for v in art.summary["verdicts"].values())
    emit_report(out_dir, art, plots=config.data["output"]["plots"] if plots is None else plots)
    return EXIT_PASS if art.summary["passed"] else EXIT_FAIL


def build_parser():
    p = argparse.ArgumentParser(prog="memheat", description="Simulate heat conduction with fading memory.")
    p.add_argument("--scenario", choices=SCENARIOS, help="scenario to run (overrides the config)")
    p.add_argument("--config", required=True, help="TOML configuration file")
    p.add_argument("--output", help="output directory (overrides [output] dir)")
    p.add_argument("--workers", type=int, help="worker processes for ensembles")
    p.add_argument("--seed", type=int, help="base seed override")
    p.add_argument("--no-plots", action="store_true", help="skip SVG plots")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.scenario, {"seed": args.seed})
        status = run_scenario(config, args.output, args.workers, False if args.no_plots else None)
    except ConfigError as exc:
        print(f"memheat: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemheatError as exc:
        print(f"memheat: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = args.output or config.output_dir
    with open(os.path.join(out, "summary.json")) as fh:
        import json

        summary = json.load(fh)
    for name, ok in summary.get("verdicts", {}).items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    for line in summary.get("conditions_text", []):
        print(line)
    if status == EXIT_BLOWUP:
        print(f"blow-up at t={summary['blowup']['time']:.6g}; snapshot written to {out}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
