"""Command-line front end: run, sweep, tau-star, verify, homogenize.

Configuration is a strict JSON document -- unknown keys anywhere in it
are rejected, and ``--echo-config`` prints the canonical form (defaults
filled in), which re-parses to itself.  Traces export as CSV with header
``t,x1,...,xn,u1,...,um,V,exec`` where ``exec`` marks execution instants
and states are written in the loop's external (plant) frame; metrics and
sweep tables export as JSON/CSV.  All numeric output is full-precision
(round-trip-safe).  The environment variable ``SELFTRIG_LOG`` sets the
log level.

Exit codes: 0 success, 2 a run diverged, 1 configuration or usage error.

Built-in system ids are accepted everywhere; an inline polynomial
definition (JSON with ``n`` and ``rows`` of monomials) is accepted by
``homogenize`` only, since the other commands need a certificate and a
feedback law that bare dynamics do not carry.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .casestudies import (
    CASE_IDS,
    CaseStudy,
    cached_dwell_report,
    case_study,
    embedded_dwell_time_pipeline,
    dwell_time_pipeline,
    periodic_policy,
    self_trigger_policy,
)
from .errors import ConfigError, SelftrigError
from .fields import ErrorExtendedSystem, Monomial, PolyField, StateField
from .homogeneity import DegreeFunction, DilationField, rho, verify_commutation
from .linbound import BallRegion
from .polyhom import check_phi_related, homogenize, max_monomial_degree
from .simloop import (
    DisturbancePulse,
    NoiseModel,
    SimConfig,
    metrics,
    run,
    standard_policies,
    sweep,
)
from .triggers import EventOracle, Periodic, oracle_time, validate_against_oracle

__all__ = ["main"]

log = logging.getLogger("selftrig.cli")


def _fmt(value: float) -> str:
    """Round-trip-safe decimal rendering."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# Strict config schema
# ---------------------------------------------------------------------------

_POLICY_KINDS = ("self-trig", "periodic", "event-oracle")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _want(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"config key '{path}': {msg}")


def _check_keys(block: Mapping, allowed: Sequence[str], path: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"config key '{path}': expected an object")
    for key in block:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{path}.{key}'" if path else f"unknown config key '{key}'")


def _opt_number(block: Mapping, key: str, path: str, positive: bool = False):
    v = block.get(key)
    if v is None:
        return None
    _want(_is_number(v), f"{path}.{key}", "expected a number")
    if positive:
        _want(v > 0, f"{path}.{key}", "must be positive")
    return float(v)


def validate_config(raw: Mapping) -> dict:
    """Strictly validate a raw JSON config and fill canonical defaults.

    The result re-validates to itself (canonicalization fixpoint); values
    left ``None`` mean "use the library default at run time".
    """
    _check_keys(raw, ("system", "policy", "sim", "output"), "")
    system = raw.get("system")
    _want(isinstance(system, str), "system", "expected a system id string")
    case = case_study(system)

    pol = raw.get("policy", {})
    _check_keys(
        pol,
        ("kind", "sigma", "period", "c", "horizon", "tau_min", "tau_max"),
        "policy",
    )
    kind = pol.get("kind", "self-trig")
    _want(kind in _POLICY_KINDS, "policy.kind", f"expected one of {_POLICY_KINDS}")
    sigma = _opt_number(pol, "sigma", "policy", positive=True)

    sim = raw.get("sim", {})
    _check_keys(
        sim, ("t_end", "x0", "sweep", "noise", "disturbance", "seed"), "sim"
    )
    t_end = _opt_number(sim, "t_end", "sim", positive=True)
    x0 = sim.get("x0")
    if x0 is not None:
        _want(
            isinstance(x0, list) and all(_is_number(v) for v in x0),
            "sim.x0",
            "expected a list of numbers",
        )
        _want(len(x0) == case.n, "sim.x0", f"expected {case.n} entries")
        x0 = [float(v) for v in x0]
    seed = sim.get("seed", 0)
    _want(
        isinstance(seed, int) and not isinstance(seed, bool),
        "sim.seed",
        "expected an integer",
    )

    noise = sim.get("noise", {})
    _check_keys(noise, ("enabled", "fraction"), "sim.noise")
    noise_enabled = noise.get("enabled", False)
    _want(isinstance(noise_enabled, bool), "sim.noise.enabled", "expected a boolean")
    fraction = _opt_number(noise, "fraction", "sim.noise")
    if fraction is None:
        fraction = 0.02
    _want(0.0 <= fraction < 1.0, "sim.noise.fraction", "must lie in [0, 1)")

    dist = sim.get("disturbance", {})
    _check_keys(
        dist, ("enabled", "onset", "amplitude", "duration"), "sim.disturbance"
    )
    dist_enabled = dist.get("enabled", False)
    _want(
        isinstance(dist_enabled, bool),
        "sim.disturbance.enabled",
        "expected a boolean",
    )

    swp = sim.get("sweep", {})
    _check_keys(swp, ("n_ic", "sigmas", "radius"), "sim.sweep")
    n_ic = swp.get("n_ic", int(case.reference.get("sweep_count", 50)))
    _want(
        isinstance(n_ic, int) and not isinstance(n_ic, bool) and n_ic >= 1,
        "sim.sweep.n_ic",
        "expected a positive integer",
    )
    sigmas = swp.get("sigmas", list(case.sigmas))
    _want(
        isinstance(sigmas, list)
        and sigmas
        and all(_is_number(v) and 0 < v < 1 for v in sigmas),
        "sim.sweep.sigmas",
        "expected a list of numbers in (0, 1)",
    )

    out = raw.get("output", {})
    _check_keys(
        out, ("trace_csv", "metrics_json", "table_csv", "dense_points"), "output"
    )
    for key in ("trace_csv", "metrics_json", "table_csv"):
        _want(
            out.get(key) is None or isinstance(out.get(key), str),
            f"output.{key}",
            "expected a path string",
        )
    dense_points = out.get("dense_points", 2000)
    _want(
        isinstance(dense_points, int)
        and not isinstance(dense_points, bool)
        and dense_points >= 2,
        "output.dense_points",
        "expected an integer >= 2",
    )

    return {
        "system": case.name,
        "policy": {
            "kind": kind,
            "sigma": sigma,
            "period": _opt_number(pol, "period", "policy", positive=True),
            "c": _opt_number(pol, "c", "policy", positive=True),
            "horizon": _opt_number(pol, "horizon", "policy", positive=True),
            "tau_min": _opt_number(pol, "tau_min", "policy", positive=True),
            "tau_max": _opt_number(pol, "tau_max", "policy", positive=True),
        },
        "sim": {
            "t_end": case.default_t_end if t_end is None else t_end,
            "x0": list(case.default_x0) if x0 is None else x0,
            "sweep": {
                "n_ic": n_ic,
                "sigmas": [float(s) for s in sigmas],
                "radius": _opt_number(swp, "radius", "sim.sweep", positive=True),
            },
            "noise": {"enabled": noise_enabled, "fraction": fraction},
            "disturbance": {
                "enabled": dist_enabled,
                "onset": (
                    0.7
                    if _opt_number(dist, "onset", "sim.disturbance") is None
                    else float(dist["onset"])
                ),
                "amplitude": (
                    1.0
                    if _opt_number(dist, "amplitude", "sim.disturbance") is None
                    else float(dist["amplitude"])
                ),
                "duration": (
                    0.3
                    if _opt_number(dist, "duration", "sim.disturbance", positive=True)
                    is None
                    else float(dist["duration"])
                ),
            },
            "seed": seed,
        },
        "output": {
            "trace_csv": out.get("trace_csv"),
            "metrics_json": out.get("metrics_json"),
            "table_csv": out.get("table_csv"),
            "dense_points": dense_points,
        },
    }


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return validate_config(raw)


def _build_policy(case: CaseStudy, pol: Mapping):
    kind, sigma = pol["kind"], pol["sigma"]
    if kind == "self-trig":
        policy = self_trigger_policy(case, sigma)
    elif kind == "periodic":
        if pol["period"] is not None:
            policy = Periodic(period=pol["period"])
        else:
            policy = periodic_policy(case, sigma)
    else:
        c = pol["c"]
        if c is None:
            cert = case.certificate if sigma is None else case.with_sigma(sigma)
            c = cert.c
        policy = EventOracle(c=c, horizon=pol["horizon"] or 5.0)
    caps = {
        k: pol[k] for k in ("tau_min", "tau_max") if pol[k] is not None
    }
    return dataclasses.replace(policy, **caps) if caps else policy


def _sim_config(case: CaseStudy, cfg: Mapping, x0=None) -> SimConfig:
    sim, out = cfg["sim"], cfg["output"]
    return SimConfig(
        system=case,
        policy=_build_policy(case, cfg["policy"]),
        x0=tuple(sim["x0"] if x0 is None else x0),
        t_end=sim["t_end"],
        noise=NoiseModel(
            enabled=sim["noise"]["enabled"],
            fraction=sim["noise"]["fraction"],
            seed=sim["seed"],
        ),
        disturbance=DisturbancePulse(
            enabled=sim["disturbance"]["enabled"],
            onset=sim["disturbance"]["onset"],
            amplitude=sim["disturbance"]["amplitude"],
            duration=sim["disturbance"]["duration"],
        ),
        sigma=cfg["policy"]["sigma"],
        dense_points=out["dense_points"],
    )


# ---------------------------------------------------------------------------
# Exporters
# ---------------------------------------------------------------------------


def _write_trace_csv(path: str, trace, case: CaseStudy) -> None:
    """Dense rows plus execution rows, sorted; ``exec`` marks executions.

    States are exported in the external (plant) frame; V is the certified
    function of the simulation-frame state.
    """
    header = (
        ["t"]
        + [f"x{i + 1}" for i in range(case.n)]
        + [f"u{j + 1}" for j in range(case.n_inputs)]
        + ["V", "exec"]
    )
    rows = []
    for t, x, u, v in zip(
        trace.dense_times, trace.dense_states, trace.dense_inputs, trace.dense_v
    ):
        rows.append((float(t), 0, case.from_internal(x), u, float(v)))
    for t, x, u in zip(trace.times, trace.states, trace.inputs):
        rows.append((float(t), 1, case.from_internal(x), u, float(case.v(x))))
    rows.sort(key=lambda r: (r[0], -r[1]))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        last_t = None
        for t, is_exec, x, u, v in rows:
            if last_t is not None and t == last_t:
                continue  # an execution row already covered this instant
            last_t = t
            writer.writerow(
                [_fmt(t)]
                + [_fmt(c) for c in x]
                + [_fmt(c) for c in u]
                + [_fmt(v), str(is_exec)]
            )
    log.info("wrote trace CSV to %s", path)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    return value


def _write_metrics_json(path: str, cfg: Mapping, trace, m) -> None:
    doc = {
        "system": trace.system,
        "policy": dict(cfg["policy"]),
        "t_end": cfg["sim"]["t_end"],
        "x0": cfg["sim"]["x0"],
        "sigma": trace.sigma,
        **dataclasses.asdict(m),
        "events": [[float(t), label] for t, label in trace.events],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(doc), fh, indent=2, allow_nan=False)
        fh.write("\n")
    log.info("wrote metrics JSON to %s", path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.echo_config:
        print(json.dumps(cfg, indent=2))
        return 0
    case = case_study(cfg["system"])
    trace = run(_sim_config(case, cfg))
    m = metrics(trace)
    if cfg["output"]["trace_csv"]:
        _write_trace_csv(cfg["output"]["trace_csv"], trace, case)
    if cfg["output"]["metrics_json"]:
        _write_metrics_json(cfg["output"]["metrics_json"], cfg, trace, m)
    print(
        f"system={case.name} policy={cfg['policy']['kind']} "
        f"executions={m.executions} final_norm={_fmt(m.final_norm)} "
        f"v_ratio={_fmt(m.v_ratio)} "
        f"violations={m.decrease_violations + m.bound_violations} "
        f"diverged={str(m.diverged).lower()}"
    )
    return 2 if m.diverged else 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    if args.echo_config:
        print(json.dumps(cfg, indent=2))
        return 0
    case = case_study(cfg["system"])
    sim = cfg["sim"]
    noise = NoiseModel(
        enabled=sim["noise"]["enabled"],
        fraction=sim["noise"]["fraction"],
        seed=sim["seed"],
    )
    dist = DisturbancePulse(
        enabled=sim["disturbance"]["enabled"],
        onset=sim["disturbance"]["onset"],
        amplitude=sim["disturbance"]["amplitude"],
        duration=sim["disturbance"]["duration"],
    )
    table_rows = []
    any_diverged = False
    for sigma in sim["sweep"]["sigmas"]:
        result = sweep(
            case,
            standard_policies(case, sigma),
            sim["sweep"]["n_ic"],
            t_end=sim["t_end"],
            sigma=sigma,
            noise=noise,
            disturbance=dist,
            radius=sim["sweep"]["radius"],
            jobs=args.jobs,
        )
        per = result.row("periodic")
        slf = result.row("self-trig")
        any_diverged |= any(r.diverged_runs > 0 for r in result.rows)
        table_rows.append((sigma, per.mean_executions, slf.mean_executions))
        log.info(
            "sigma=%s periodic=%s self-trig=%s",
            sigma,
            per.mean_executions,
            slf.mean_executions,
        )

    header = ["sigma", "periodic_executions", "self_trig_executions", "ratio"]
    lines = [",".join(header)]
    for sigma, per_mean, slf_mean in table_rows:
        lines.append(
            ",".join(
                [_fmt(sigma), _fmt(per_mean), _fmt(slf_mean), _fmt(per_mean / slf_mean)]
            )
        )
    text = "\n".join(lines)
    if cfg["output"]["table_csv"]:
        Path(cfg["output"]["table_csv"]).write_text(text + "\n", encoding="utf-8")
        log.info("wrote sweep table to %s", cfg["output"]["table_csv"])
    print(text)
    return 2 if any_diverged else 0


def cmd_tau_star(args) -> int:
    case = case_study(args.system)
    sigma = args.sigma
    if args.region == "level":
        report = dwell_time_pipeline(
            case,
            sigma,
            region=case.level_region(),
            region_label=f"level({_fmt(case.reference['v_level'])})",
            seed=args.seed,
            count=args.count,
        )
    elif args.count != 4096 or args.seed != 0:
        report = dwell_time_pipeline(case, sigma, seed=args.seed, count=args.count)
    else:
        report = cached_dwell_report(case, sigma)
    for line in report.lines():
        print(line)
    if case.embedding_degree is not None:
        lifted = embedded_dwell_time_pipeline(
            case, sigma, kind=args.lifted_kind, seed=args.seed, count=args.count
        )
        print(f"--- lifted (degree {case.embedding_degree}, {args.lifted_kind}) ---")
        for line in lifted.lines():
            print(line)
    return 0


def _check(name: str, ok: bool, detail: str, failures: list) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if not ok:
        failures.append(name)


def cmd_verify(args) -> int:
    case = case_study(args.system)
    failures: list = []
    rng = np.random.default_rng(0)
    states = BallRegion(case.region.radius, case.n).sample(50, seed=3)
    states = [x for x in states if np.linalg.norm(x) > 1e-6]

    # -- scaling structure ---------------------------------------------------
    if case.scaling is not None:
        # The rescaling exponent is conserved along held-measurement flows
        # (x + e is constant between executions), so the flow-exchange
        # identity is exact on the error-extended system with the degree
        # function read at the held measurement.
        n = case.n
        Z = StateField.from_extended(ErrorExtendedSystem(case.closed_loop))
        D = DilationField((case.scaling.r,) * (2 * n))
        xi_raw = case.scaling.xi
        xi_ext = DegreeFunction.from_callable(
            lambda z: xi_raw.eval(np.asarray(z[:n], float) + np.asarray(z[n:], float))
        )
        worst = 0.0
        for s in (-2.0, -0.75, 0.75, 2.0):
            for _ in range(3):
                x = rng.uniform(-2.0, 2.0, n)
                if np.linalg.norm(x) < 0.3:
                    continue
                z0 = np.concatenate([x, rng.uniform(-0.05, 0.05, n)])
                worst = max(
                    worst, verify_commutation(Z, D, xi_ext, z0, s, t=0.15)
                )
        _check(
            "flow-commutation",
            worst <= 1e-6,
            f"max residual {_fmt(worst)} (tol 1e-6)",
            failures,
        )

        system = ErrorExtendedSystem(case.closed_loop)
        c = case.certificate.c
        worst_rel = 0.0
        for _ in range(8):
            x = rng.uniform(-2.0, 2.0, case.n)
            if np.linalg.norm(x) < 0.3:
                continue
            s = rng.uniform(-1.2, 1.2)
            base = oracle_time(system, x, c)
            scaled = oracle_time(system, math.exp(s) * x, c)
            if base is None or scaled is None:
                continue
            factor = math.exp(
                -rho(case.scaling.xi, case.scaling.r, x, s)
            )
            worst_rel = max(worst_rel, abs(scaled - factor * base) / (factor * base))
        _check(
            "dwell-scaling-law",
            worst_rel <= 0.02,
            f"max relative error {_fmt(worst_rel)} (tol 0.02)",
            failures,
        )
    else:
        print("SKIP  flow-commutation: loop declares no scaling symmetry")

    # -- embedding structure ---------------------------------------------------
    if case.embedding_degree is not None:
        hs = case.embedded()
        degrees = {m.total_degree for row in hs.field.components for m in row}
        _check(
            "embedding-degree-exact",
            degrees == {hs.l},
            f"monomial degrees {sorted(degrees)} vs l = {hs.l}",
            failures,
        )
        worst = 0.0
        for _ in range(5):
            x = rng.uniform(-1.0, 1.0, case.n)
            e = rng.uniform(-0.01, 0.01, case.n)
            worst = max(
                worst, check_phi_related(hs, np.concatenate([x, e]), 0.05)
            )
        _check(
            "embedding-flow-related",
            worst <= 1e-8,
            f"max residual {_fmt(worst)} (tol 1e-8)",
            failures,
        )
        worst = 0.0
        for _ in range(20):
            z = rng.uniform(-1.5, 1.5, case.n + 1)
            lam = rng.uniform(0.1, 2.0)
            worst = max(worst, abs(hs.scaling_residual(z, lam)))
        _check(
            "embedding-scaling-residual",
            worst <= 1e-9,
            f"max residual {_fmt(worst)} (tol 1e-9)",
            failures,
        )
    else:
        print("SKIP  embedding checks: loop has no polynomial embedding")

    # -- trigger soundness -----------------------------------------------------
    policy = self_trigger_policy(case)
    report = validate_against_oracle(
        policy,
        ErrorExtendedSystem(case.closed_loop),
        states,
        c=case.certificate.c,
    )
    _check(
        "trigger-soundness",
        report.violations == 0,
        report.summary(),
        failures,
    )

    if failures:
        print(f"{len(failures)} verification check(s) failed: {', '.join(failures)}")
        return 1
    print("all verification checks passed")
    return 0


def _parse_inline_field(path: str) -> PolyField:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    _check_keys(raw, ("n", "rows"), "")
    n = raw.get("n")
    _want(isinstance(n, int) and n >= 1, "n", "expected a positive integer")
    rows = raw.get("rows")
    _want(
        isinstance(rows, list) and len(rows) == n,
        "rows",
        f"expected {n} rows of monomials",
    )
    components = []
    for i, row in enumerate(rows):
        _want(isinstance(row, list), f"rows[{i}]", "expected a list of monomials")
        monos = []
        for j, m in enumerate(row):
            path_ij = f"rows[{i}][{j}]"
            _check_keys(m, ("coeff", "x", "e"), path_ij)
            _want(_is_number(m.get("coeff")), f"{path_ij}.coeff", "expected a number")
            x_exps = m.get("x", [0] * n)
            e_exps = m.get("e", [0] * n)
            for name, exps in (("x", x_exps), ("e", e_exps)):
                _want(
                    isinstance(exps, list)
                    and len(exps) == n
                    and all(isinstance(k, int) and k >= 0 for k in exps),
                    f"{path_ij}.{name}",
                    f"expected {n} nonnegative integer exponents",
                )
            monos.append(
                Monomial(float(m["coeff"]), tuple(x_exps), tuple(e_exps))
            )
        components.append(tuple(monos))
    return PolyField(n, tuple(components))


def _monomial_text(m: Monomial, names: Sequence[str]) -> str:
    parts = [repr(float(m.coeff))]
    for prefix, exps in (("", m.x_exps), ("e_", m.e_exps)):
        for i, k in enumerate(exps):
            if k == 1:
                parts.append(f"{prefix}{names[i]}")
            elif k > 1:
                parts.append(f"{prefix}{names[i]}^{k}")
    if m.w_exp == 1:
        parts.append("w")
    elif m.w_exp > 1:
        parts.append(f"w^{m.w_exp}")
    return "*".join(parts)


def cmd_homogenize(args) -> int:
    if os.path.exists(args.system):
        field = _parse_inline_field(args.system)
    else:
        field = case_study(args.system).closed_loop
    degree = args.degree
    if degree is None:
        degree = max(2, max_monomial_degree(field))
    hs = homogenize(field, degree)
    print(f"degree l = {hs.l}")
    print(f"states: {hs.n} plant + 1 scale coordinate (w, constant row)")
    names = [f"x{i + 1}" for i in range(hs.n)] + ["w"]
    for i, row in enumerate(hs.field.components):
        terms = " + ".join(_monomial_text(m, names) for m in row) or "0"
        print(f"d{names[i]}/dt = {terms}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selftrig",
        description="Self-triggered control loops: simulate, sweep, analyze.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one closed-loop run from a JSON config")
    p_run.add_argument("config", help="path to the JSON run configuration")
    p_run.add_argument(
        "--echo-config",
        action="store_true",
        help="print the canonical config and exit without running",
    )
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser(
        "sweep", help="boundary-IC sweep; writes a per-sigma summary table"
    )
    p_sweep.add_argument("config", help="path to the JSON run configuration")
    p_sweep.add_argument(
        "--jobs", type=int, default=1, help="parallel workers for the sweep runs"
    )
    p_sweep.add_argument("--echo-config", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_tau = sub.add_parser(
        "tau-star", help="dwell-time pipeline report for a system"
    )
    p_tau.add_argument("system", help=f"system id; one of {sorted(CASE_IDS)}")
    p_tau.add_argument("--sigma", type=float, default=None)
    p_tau.add_argument(
        "--region",
        choices=("ball", "level"),
        default="ball",
        help="search region: operation ball (default) or certificate sublevel set",
    )
    p_tau.add_argument(
        "--lifted-kind",
        choices=("sections", "ball"),
        default="sections",
        help="lifted-region style for systems with a polynomial embedding",
    )
    p_tau.add_argument("--count", type=int, default=4096)
    p_tau.add_argument("--seed", type=int, default=0)
    p_tau.set_defaults(func=cmd_tau_star)

    p_verify = sub.add_parser(
        "verify", help="run the structural property checks for a system"
    )
    p_verify.add_argument("system", help=f"system id; one of {sorted(CASE_IDS)}")
    p_verify.set_defaults(func=cmd_verify)

    p_hom = sub.add_parser(
        "homogenize",
        help="print the scale-extended form of a polynomial loop",
    )
    p_hom.add_argument(
        "system",
        help="system id or path to an inline polynomial definition (JSON)",
    )
    p_hom.add_argument(
        "--degree", type=int, default=None, help="target total degree"
    )
    p_hom.set_defaults(func=cmd_homogenize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SELFTRIG_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SelftrigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
