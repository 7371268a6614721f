"""Configuration-driven experiment harness.

INI config, CSV output, deterministic seeding.  Exit codes: 0 success,
1 assertion failure, 2 config error, 3 numerical non-convergence.

Config layout (flat INI)::

    [physical]
    beta = 1.0
    eps = 1.0
    d = 3
    s = 1.0
    n0 = 0.0
    source = gaussian:width=1,amplitude=1   ; or zero / flat:... / bump:...

    [numerics]
    samples = 20000
    seed = 12345
    quad_tol = 1e-9
    tau_grid = 2048
    variance_grid = 64

    [functions]
    f = gaussian:width=1,amplitude=1

    [experiment]
    ; subcommand-specific keys, see the individual runners

    [output]
    directory = out
    csv = true
    cache = false

Worker count comes from the SPINBOSON_WORKERS environment variable
(chunked substreams make results independent of it).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from spinboson import cluster as cluster_mod
from spinboson import resolvent as resolvent_mod
from spinboson import state as state_mod
from spinboson.kernels import QuadratureError, ThermalKernelTable
from spinboson.loops import (
    SpinMeasureParams,
    correlation_trace,
    two_point_oracle,
)
from spinboson.momentum import (
    DivergentIntegralError,
    RadialProfile,
    SourceProfile,
    TestFunction,
    m_pairing,
    source_pairing,
)
from spinboson.state import StateConfig


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _parse_kwargs(body):
    out = {}
    if not body:
        return out
    for item in body.split(","):
        if "=" not in item:
            raise ConfigError(f"malformed profile parameter {item!r}")
        key, val = item.split("=", 1)
        try:
            out[key.strip()] = float(val)
        except ValueError as exc:
            raise ConfigError(f"non-numeric profile parameter {item!r}") \
                from exc
    return out


def parse_profile(spec):
    """'gaussian:width=1,amplitude=1' | 'bump:exponent=..,cutoff=..' |
    'flat:amplitude=..' | 'zero' -> RadialProfile."""
    head, _, body = spec.strip().partition(":")
    kw = _parse_kwargs(body)
    try:
        if head == "zero":
            return RadialProfile("gaussian", amplitude=0.0, width=1.0)
        if head == "gaussian":
            return RadialProfile("gaussian",
                                 amplitude=kw.pop("amplitude", 1.0),
                                 width=kw.pop("width", 1.0))
        if head == "bump":
            return RadialProfile("power_bump",
                                 amplitude=kw.pop("amplitude", 1.0),
                                 exponent_at_zero=kw.pop("exponent", 0.0),
                                 cutoff=kw.pop("cutoff", 1.0))
        if head == "flat":
            return RadialProfile("point_source_flat",
                                 amplitude=kw.pop("amplitude", 1.0))
    except ValueError as exc:
        raise ConfigError(f"invalid profile {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown profile kind {head!r}")


def _get_num(cp, section, key, default=None, kind=float):
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"missing config field [{section}] {key}")
        return default
    raw = cp.get(section, key)
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(
            f"config field [{section}] {key} = {raw!r} is not numeric") \
            from exc


def load_physical(cp):
    beta = _get_num(cp, "physical", "beta", 1.0)
    if beta <= 0:
        raise ConfigError("config field [physical] beta must be positive")
    eps = _get_num(cp, "physical", "eps", 1.0)
    if eps < 0:
        raise ConfigError("config field [physical] eps must be >= 0")
    d = _get_num(cp, "physical", "d", 3, int)
    s = _get_num(cp, "physical", "s", 1.0)
    if s <= 0:
        raise ConfigError("config field [physical] s must be positive")
    n0 = _get_num(cp, "physical", "n0", 0.0)
    if n0 < 0:
        raise ConfigError("config field [physical] n0 must be >= 0")
    src_spec = cp.get("physical", "source", fallback="zero")
    try:
        src = SourceProfile(parse_profile(src_spec), d=d, s=s)
    except (ValueError, DivergentIntegralError) as exc:
        raise ConfigError(f"invalid [physical] source: {exc}") from exc
    return beta, eps, d, s, n0, src


def load_functions(cp, d, s):
    funcs = {}
    if cp.has_section("functions"):
        for name, spec in cp.items("functions"):
            prof = parse_profile(spec)
            funcs[name] = TestFunction.from_profile(prof, d=d, s=s)
    if not funcs:
        raise ConfigError("config section [functions] declares no functions")
    return funcs


def build_state(cp, args):
    beta, eps, d, s, n0, src = load_physical(cp)
    samples = args.samples or _get_num(cp, "numerics", "samples", 20000, int)
    if samples < 1000:
        raise ConfigError(
            "config field [numerics] samples must be >= 1000 for MC runs")
    seed = args.seed if args.seed is not None else \
        _get_num(cp, "numerics", "seed", 0, int)
    tol = _get_num(cp, "numerics", "quad_tol", 1e-9)
    n_grid = _get_num(cp, "numerics", "tau_grid", 2048, int)
    workers = int(os.environ.get("SPINBOSON_WORKERS", "1"))
    cache_path = None
    if cp.getboolean("output", "cache", fallback=False):
        cache_dir = os.path.join(args.out, "cache")
        os.makedirs(cache_dir, exist_ok=True)
        tag = hashlib.sha256(
            f"{beta}|{n_grid}|{tol}|{src!r}".encode()).hexdigest()[:16]
        cache_path = os.path.join(cache_dir, f"kernel_{tag}.bin")
    try:
        cfg = StateConfig.build(src, beta, eps, n0=n0, n_loops=samples,
                                seed=seed, n_grid=n_grid, tol=tol,
                                workers=workers, cache_path=cache_path)
    except DivergentIntegralError as exc:
        raise ConfigError(f"inadmissible physical block: {exc}") from exc
    return cfg, seed


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (np.floating, np.complexfloating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, (float, complex)):
        return repr(x)
    return str(x)


def write_csv(path, comment, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_summary(path, seed, config_hash, ess, checks):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        fh.write(f"seed = {seed}\n")
        fh.write(f"config_hash = {config_hash}\n")
        fh.write(f"ess = {_fmt(ess)}\n")
        for name, ok in checks:
            fh.write(f"check {name} = {'PASS' if ok else 'FAIL'}\n")
    return all(ok for _, ok in checks)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _projector(sigma):
    return np.diag([1.0, 0.0]) if sigma > 0 else np.diag([0.0, 1.0])


def run_spin_check(cp, args, outdir):
    """Free-measure sampler against the transfer-matrix oracles."""
    beta, eps, d, s, n0, _ = load_physical(cp)
    samples = args.samples or _get_num(cp, "numerics", "samples", 20000, int)
    if samples < 1000:
        raise ConfigError(
            "config field [numerics] samples must be >= 1000 for MC runs")
    seed = args.seed if args.seed is not None else \
        _get_num(cp, "numerics", "seed", 0, int)
    workers = int(os.environ.get("SPINBOSON_WORKERS", "1"))
    src = SourceProfile.zero(d=d, s=s)
    kern = ThermalKernelTable(src, beta)
    params = SpinMeasureParams(beta, eps)
    from spinboson.ensemble import build_ensemble
    ens = build_ensemble(params, kern, samples, seed, workers=workers)

    checks, rows = [], []
    n = ens.n

    # jump-count mean
    mean = float(np.mean(ens.counts))
    se = float(np.std(ens.counts) / math.sqrt(n))
    oracle = eps * beta * math.tanh(eps * beta)
    ok = abs(mean - oracle) <= 3.0 * se + 1e-12
    checks.append(("jump_count_mean", ok))
    rows.append(("jump_count_mean", mean, oracle, se, ok))

    # two-point function on the standard fractions
    u0 = -0.25 * beta
    for frac in (0.1, 0.25, 0.5):
        tau = frac * beta
        vals = np.prod(ens.path_values([u0, u0 + tau]), axis=1)
        mc = float(np.mean(vals))
        se = float(np.std(vals) / math.sqrt(n))
        oracle = float(two_point_oracle(params, tau))
        ok = abs(mc - oracle) <= 3.0 * se + 1e-12
        checks.append((f"two_point_tau_{frac}", ok))
        rows.append((f"two_point_tau_{frac}", mc, oracle, se, ok))

    # transition frequencies at the bridge-corrected oracle
    t = 0.3 * beta
    x = ens.path_values([u0, u0 + t])
    for s1 in (1, -1):
        for s2 in (1, -1):
            hit = (x[:, 0] == s1) & (x[:, 1] == s2)
            mc = float(np.mean(hit))
            se = float(np.std(hit.astype(float)) / math.sqrt(n))
            oracle = correlation_trace(
                params, [u0, u0 + t], [_projector(s1), _projector(s2)])
            ok = abs(mc - oracle) <= 3.0 * se + 1e-12
            checks.append((f"transition_{s1}_{s2}", ok))
            rows.append((f"transition_{s1}_{s2}", mc, oracle, se, ok))

    # jump parity is even by construction
    parity_ok = bool(np.all(ens.counts % 2 == 0))
    checks.append(("jump_parity_even", parity_ok))

    write_csv(os.path.join(outdir, "spin_check.csv"),
              "free spin-loop sampler vs transfer-matrix oracle "
              "(dimensionless)",
              ("quantity", "mc", "oracle", "se", "pass"), rows)
    return checks, ens.ess


def run_kernels(cp, args, outdir):
    """Thermal-kernel identity suite."""
    cfg, _ = build_state(cp, args)
    kern = cfg.kernels
    funcs = load_functions(cp, cfg.d, cfg.s)
    f = next(iter(funcs.values()))
    checks = []
    beta = cfg.beta

    taus = np.linspace(0.0, beta, 65)
    kap = np.atleast_1d(kern.kappa(taus))
    psi = np.atleast_1d(kern.Psi(taus))
    sym = float(np.max(np.abs(
        np.atleast_1d(kern.kappa(taus)) - np.atleast_1d(
            kern.kappa(beta - taus)))))
    checks.append(("kappa_reflection_symmetry", sym <= 1e-10 * (1 + kap.max())))

    if not cfg.source.is_zero:
        eq_form = source_pairing(
            f, cfg.source, -0.5,
            lambda om: 1.0 / np.tanh(0.5 * beta * om)).value
        eq_kernel = kern.kernel_K(f, 0.3, 0.3)
        checks.append(("equal_time_coth_identity",
                       abs(eq_kernel - eq_form) <= 1e-8 * abs(eq_form)))

        circle = 0.5 * cfg.ensemble.kernels.interval_K_integral(
            f, 0.0, -0.5 * beta, 0.5 * beta)
        m_val = m_pairing(f, cfg.source).value.value
        checks.append(("full_circle_identity",
                       abs(circle.real - m_val.real)
                       <= 1e-6 * (abs(m_val.real) + 1e-30)))

        second = np.diff(psi, 2)
        checks.append(("psi_convexity", bool(np.all(second >= -1e-12))))

    write_csv(os.path.join(outdir, "kernels.csv"),
              "thermal self-kernel kappa(tau) [energy^2 * time^-?] and "
              "its second time antiderivative Psi on [0, beta]",
              ("tau", "kappa", "Psi"),
              list(zip(taus.tolist(), kap.tolist(), psi.tolist())))
    return checks, cfg.ensemble.ess


def run_charfun(cp, args, outdir):
    cfg, _ = build_state(cp, args)
    funcs = load_functions(cp, cfg.d, cfg.s)
    f = next(iter(funcs.values()))
    s_grid = _grid_from_config(cp, "s_grid", default="0,0.5,1,1.5,2")
    vals, ses = state_mod.charfun_scaled(cfg, f, s_grid)
    rows = []
    in_dom = m_pairing(f, cfg.source).in_domain
    for s, v, e in zip(s_grid, vals, ses):
        vh = state_mod.van_hove_charfun(cfg, f, s) if in_dom else float("nan")
        rows.append((s, v.real, v.imag, e,
                     vh.real if in_dom else "", vh.imag if in_dom else ""))
    checks = [("charfun_normalized",
               abs(state_mod.charfun_scaled(cfg, f, 0.0)[0] - 1.0) < 1e-12)]
    mod_ok = all(abs(v) <= 1.0 + 3 * e + 1e-9 for v, e in zip(vals, ses))
    checks.append(("charfun_modulus_bound", mod_ok))
    write_csv(os.path.join(outdir, "charfun.csv"),
              "characteristic functional psi(e^{is Phi(f)}) sweep "
              "(dimensionless) with van Hove comparator",
              ("s", "re", "im", "se", "van_hove_re", "van_hove_im"), rows)
    return checks, cfg.ensemble.ess


def _grid_from_config(cp, key, default):
    raw = cp.get("experiment", key, fallback=default)
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(
            f"config field [experiment] {key} must be a comma list") from exc


def run_cluster(cp, args, outdir):
    cfg, _ = build_state(cp, args)
    funcs = load_functions(cp, cfg.d, cfg.s)
    names = sorted(funcs)
    f = funcs[names[0]]
    g = funcs[names[-1]] if len(names) > 1 else f
    mode = cp.get("experiment", "mode", fallback="time")
    if mode not in ("time", "space"):
        raise ConfigError("config field [experiment] mode must be "
                          "time or space")
    if mode == "space" and cfg.d != 3:
        raise ConfigError("config field [physical] d must be 3 for "
                          "spatial cluster scans")
    grid = _grid_from_config(cp, "grid", "1,2,4,8,16,32,64,128")
    report = cluster_mod.cluster_scan(cfg, f, g, mode, grid)
    verdict = cluster_mod.nogo_verdict(cfg, f, g, report)
    rows = []
    for i, u in enumerate(report.grid):
        r = report.spin_ratio[i]
        rows.append((u, report.lhs[i].real, report.lhs[i].imag,
                     report.lhs_se[i], report.cross_term[i],
                     abs(r), math.atan2(r.imag, r.real)))
    rows.append(("verdict", report.verdict, verdict.message, "", "", "", ""))
    write_csv(os.path.join(outdir, "cluster.csv"),
              f"cluster scan ({mode} separation): two-point functional, "
              "thermal cross term, spin ratio",
              ("rung", "re_lhs", "im_lhs", "se", "cross_term",
               "abs_spin_ratio", "arg_spin_ratio"), rows)
    checks = [
        ("cluster_scan_conclusive", report.verdict != "inconclusive"),
        ("nogo_bookkeeping_consistent",
         verdict.contradiction == (verdict.moderate and verdict.q0_f > 1e-12)),
    ]
    return checks, cfg.ensemble.ess


def run_variance(cp, args, outdir):
    cfg, _ = build_state(cp, args)
    funcs = load_functions(cp, cfg.d, cfg.s)
    f = next(iter(funcs.values()))
    n_cells = _get_num(cp, "numerics", "variance_grid", 64, int)
    rep = cfg.ensemble.variance_two_routes(f, n_cells)
    ok_routes = _variance_agreement(rep, cfg.ensemble, f)
    s_grid = _grid_from_config(cp, "s_grid", "0,0.25,0.5,1,2")
    dev_ok, dev_rows = cfg.ensemble.deviation_bound_check(f, s_grid)
    cn, evidence = cfg.ensemble.cnumber_criterion(f)
    checks = [
        ("variance_routes_agree", ok_routes),
        ("variance_grid_converged", not rep.grid_flagged),
        ("deviation_bound", dev_ok),
    ]
    rows = [(s, lhs, bound, margin) for s, lhs, bound, margin in dev_rows]
    rows.append(("var_direct", rep.var_direct, "", ""))
    rows.append(("var_kernel", rep.var_kernel, "", ""))
    rows.append(("cnumber", cn, evidence["var_direct"], evidence["mean_z"]))
    write_csv(os.path.join(outdir, "variance.csv"),
              "fluctuation diagnostics of the spin random variable Z "
              "(dimensionless)",
              ("s_or_quantity", "lhs_or_value", "bound_or_aux", "margin"),
              rows)
    return checks, cfg.ensemble.ess


def _variance_agreement(rep, ens, f):
    scale = max(rep.var_direct, rep.var_kernel, 1e-300)
    if abs(rep.var_direct - rep.var_kernel) <= 0.05 * scale:
        return True
    # fall back to a combined 3 SE allowance on the direct route
    z = ens.z_values(f).real
    mean, _ = ens.expectation(z)
    dev2 = (z - mean.real) ** 2
    _, se = ens.expectation(dev2)
    return abs(rep.var_direct - rep.var_kernel) <= 3.0 * se


def run_resolvent(cp, args, outdir):
    cfg, _ = build_state(cp, args)
    funcs = load_functions(cp, cfg.d, cfg.s)
    names = sorted(funcs)
    f = funcs[names[0]]
    lam = _get_num(cp, "experiment", "lambda", 1.0)
    if lam == 0:
        raise ConfigError("config field [experiment] lambda must be nonzero")
    mu = _get_num(cp, "experiment", "mu", 2.0)
    if mu == 0:
        raise ConfigError("config field [experiment] mu must be nonzero")
    g = funcs[names[-1]] if len(names) > 1 else f

    rows, checks = [], []
    one = resolvent_mod.resolvent_onepoint(cfg, lam, f)
    bound1 = abs(one.value) <= 1.0 / abs(lam) + one.error
    rows.append(("onepoint", lam, one.value.real, one.value.imag, one.error))
    checks.append(("onepoint_norm_bound", bound1))

    scaled = resolvent_mod.resolvent_onepoint(cfg, 2.0 * lam, f.scaled(2.0))
    ok_scale = abs(scaled.value - 0.5 * one.value) <= \
        scaled.error + 0.5 * one.error + 1e-9
    rows.append(("scaling", 2.0 * lam, scaled.value.real, scaled.value.imag,
                 scaled.error))
    checks.append(("scaling_relation", ok_scale))

    two = resolvent_mod.resolvent_twopoint(cfg, lam, f, mu, g)
    bound2 = abs(two.value) <= 1.0 / (abs(lam) * abs(mu)) + two.error
    rows.append(("twopoint", mu, two.value.real, two.value.imag, two.error))
    checks.append(("twopoint_norm_bound", bound2))

    if cfg.q_bec(f) > 1e-6:
        thresh = _get_num(cp, "experiment", "decay_threshold", 1.0)
        rep = resolvent_mod.bec_decay_scan(cfg, lam, f, (1.0, 2.0, 4.0),
                                           threshold=thresh)
        for t, m, e in zip(rep.amplitudes, rep.moduli, rep.errors):
            rows.append(("decay", t, m, "", e))
        checks.append(("bec_decay", rep.monotone))

    write_csv(os.path.join(outdir, "resolvent.csv"),
              "resolvent-algebra expectations psi(R(lambda, f)) "
              "(dimensionless) with quadrature+MC error",
              ("quantity", "parameter", "re_or_modulus", "im", "error"), rows)
    return checks, cfg.ensemble.ess


def run_ideals(cp, args, outdir):
    cfg, _ = build_state(cp, args)
    funcs = load_functions(cp, cfg.d, cfg.s)
    report = resolvent_mod.ideal_report(cfg, sorted(funcs.items()))
    rows = [(r.name, r.classification, r.witness_modulus, r.witness_error,
             r.decay_summary) for r in report.rows]
    rows.append(("summary", f"J_ir={','.join(report.jir_generators) or '-'}",
                 f"outside={','.join(report.outside) or '-'}",
                 f"x_bec_empty={report.x_bec_empty}", ""))
    write_csv(os.path.join(outdir, "ideals.csv"),
              "direction classification and generator witnesses "
              "(infrared / condensate ideals)",
              ("direction", "class", "witness_modulus", "witness_error",
               "notes"), rows)
    checks = [("witnesses_positive",
               all(r.witness_modulus > r.witness_error
                   for r in report.rows
                   if r.classification in ("physical", "bec_generator")))]
    return checks, cfg.ensemble.ess


def run_gp_scan(cp, args, outdir):
    cfg, _ = build_state(cp, args)
    funcs = load_functions(cp, cfg.d, cfg.s)
    seq = [funcs[k] for k in sorted(funcs)]
    s_grid = _grid_from_config(cp, "s_grid", "0,0.5,1,2,4")
    report = cluster_mod.gp_limit_scan(cfg, seq, s_grid)
    rows = []
    for i, (vals, ses, gaps) in enumerate(
            zip(report.char_values, report.char_se, report.gaps)):
        for s, v, e, gp in zip(report.s_grid, vals, ses, gaps):
            rows.append((i, s, v.real, v.imag, e, gp))
    rows.append(("verdict",
                 "classical" if report.classical else
                 ("inconclusive" if report.inconclusive else "non-classical"),
                 report.a_value, "", "", ""))
    write_csv(os.path.join(outdir, "gp_scan.csv"),
              "characteristic functions of Z along the declared sequence "
              "vs the degenerate law exp(isa)",
              ("member", "s", "re", "im", "se", "gap"), rows)
    checks = [("gp_scan_resolved", not report.inconclusive)]
    return checks, cfg.ensemble.ess


RUNNERS = {
    "spin-check": run_spin_check,
    "kernels": run_kernels,
    "charfun": run_charfun,
    "cluster": run_cluster,
    "variance": run_variance,
    "resolvent": run_resolvent,
    "ideals": run_ideals,
    "gp-scan": run_gp_scan,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="spinboson-lab",
        description="numerical laboratory for the finite-temperature "
                    "spin-boson equilibrium state")
    parser.add_argument("subcommand", choices=sorted(RUNNERS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--samples", type=int, default=None)
    parser.add_argument("--out", default="out")
    args = parser.parse_args(argv)

    try:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        read = cp.read(args.config)
        if not read:
            raise ConfigError(f"cannot read config file {args.config}")
        with open(args.config, "rb") as fh:
            config_hash = hashlib.sha256(fh.read()).hexdigest()
        os.makedirs(args.out, exist_ok=True)
        checks, ess = RUNNERS[args.subcommand](cp, args, args.out)
        seed = args.seed if args.seed is not None else \
            _get_num(cp, "numerics", "seed", 0, int)
        summary = os.path.join(
            args.out, f"{args.subcommand.replace('-', '_')}_summary.txt")
        all_pass = write_summary(summary, seed, config_hash, ess, checks)
        return 0 if all_pass else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except QuadratureError as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
