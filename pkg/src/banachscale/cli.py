"""Batch experiment runner.

Subcommands ``solve``, ``stability``, ``verify`` and ``oracle-compare`` ingest
one JSON configuration file, run the corresponding pipeline and write CSV
tables plus a JSON summary to the output directory.  Output is byte-identical
across reruns with the same config and seed.

Exit codes: 0 success, 2 invalid configuration, 3 measured contraction
violation, 4 infeasible horizon slope, 5 certified bound violated.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import (
    BanachScaleError,
    ConfigurationError,
    ContractionViolationError,
    DomainError,
    ModelValidationError,
)
from .kimura import (
    CorrelationHierarchy,
    DiscreteSpace,
    KimuraModel,
    KimuraProblem,
    RateData,
    TimeProfile,
    level_configs,
)
from .oracles import (
    bound_verifier,
    bruteforce_oracle,
    evolution_law_check,
    poisson_oracle,
    validate_poisson_closure,
)
from .scalecore import OvcyannikovConstants, ScaleWindow, lambda0, lambda0_terms
from .solver import picard_solve, residual_check
from .stability import kimura_h_family, lambda1, stability_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONTRACTION = 3
EXIT_HORIZON = 4
EXIT_BOUND = 5


# ---------------------------------------------------------------------------
# configuration parsing


def _fail(path: str, message: str) -> ConfigurationError:
    return ConfigurationError(f"{path}: {message}")


def _get(cfg: dict, path: str, default=None, required: bool = False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise _fail(path, "required field is missing")
            return default
        node = node[part]
    return node


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(path, f"expected a number, got {value!r}")
    return float(value)


def _rate_array(value, m: int, path: str, square: bool = False) -> np.ndarray:
    """Accept a scalar or a full per-site table."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        v = float(value)
        return np.full((m, m), v) if square else np.full(m, v)
    arr = np.asarray(value, dtype=float)
    want = (m, m) if square else (m,)
    if arr.shape != want:
        raise _fail(path, f"expected scalar or shape {want}, got shape {arr.shape}")
    return arr


def _profile(cfg, path: str) -> TimeProfile:
    if cfg is None:
        return TimeProfile()
    if not isinstance(cfg, dict):
        raise _fail(path, "expected an object with a 'kind' field")
    try:
        return TimeProfile(
            kind=cfg.get("kind", "constant"),
            rate=_as_float(cfg.get("rate", 0.0), path + ".rate"),
            amp=_as_float(cfg.get("amp", 0.0), path + ".amp"),
            freq=_as_float(cfg.get("freq", 1.0), path + ".freq"),
        )
    except ModelValidationError as exc:
        raise _fail(path, str(exc)) from exc


def parse_window(cfg: dict) -> ScaleWindow:
    w = _get(cfg, "window", required=True)
    lam_raw = w.get("lambda", "auto")
    if lam_raw == "auto":
        lam = None
    else:
        lam = _as_float(lam_raw, "window.lambda")
    r_raw = w.get("r", "inf")
    r = math.inf if r_raw in ("inf", None) else _as_float(r_raw, "window.r")
    try:
        return ScaleWindow(
            alpha_star=_as_float(_get(cfg, "window.alpha_star", required=True), "window.alpha_star"),
            alpha0=_as_float(_get(cfg, "window.alpha0", required=True), "window.alpha0"),
            alpha_top=_as_float(_get(cfg, "window.alpha_top", required=True), "window.alpha_top"),
            beta=_as_float(w.get("beta", 0.0), "window.beta"),
            gamma=_as_float(w.get("gamma", 0.5), "window.gamma"),
            lam=lam,
            r=r,
            T=_as_float(w.get("T", 1.0), "window.T"),
        )
    except DomainError as exc:
        raise _fail("window", str(exc)) from exc


def parse_model(cfg: dict, window: ScaleWindow) -> KimuraModel:
    m = _get(cfg, "model.m", required=True)
    if not isinstance(m, int) or m < 1:
        raise _fail("model.m", f"expected a positive integer, got {m!r}")
    weights = _get(cfg, "model.weights", "uniform")
    try:
        if weights == "uniform":
            space = DiscreteSpace.uniform(m)
        else:
            arr = np.asarray(weights, dtype=float)
            if arr.shape != (m,):
                raise _fail("model.weights", f"expected {m} weights, got shape {arr.shape}")
            space = DiscreteSpace(tuple(f"x{i}" for i in range(m)), arr)
    except ModelValidationError as exc:
        raise _fail("model.weights", str(exc)) from exc

    rates_cfg = _get(cfg, "model.rates", required=True)
    try:
        rates = RateData(
            h_base=_rate_array(_get(cfg, "model.rates.h", required=True), m, "model.rates.h"),
            psi_base=_rate_array(_get(cfg, "model.rates.psi", required=True), m, "model.rates.psi", square=True),
            a_base=_rate_array(_get(cfg, "model.rates.a", required=True), m, "model.rates.a"),
            h_profile=_profile(rates_cfg.get("h_profile"), "model.rates.h_profile"),
            psi_profile=_profile(rates_cfg.get("psi_profile"), "model.rates.psi_profile"),
            a_profile=_profile(rates_cfg.get("a_profile"), "model.rates.a_profile"),
        )
    except ModelValidationError as exc:
        raise _fail("model.rates", str(exc)) from exc

    n_max = _get(cfg, "model.n_max", required=True)
    if not isinstance(n_max, int):
        raise _fail("model.n_max", f"expected an integer, got {n_max!r}")
    try:
        return KimuraModel(space, rates, n_max, window)
    except ModelValidationError as exc:
        raise _fail("model", str(exc)) from exc


def parse_initial(cfg: dict, model: KimuraModel) -> CorrelationHierarchy:
    block = _get(cfg, "initial", {"poisson_z": 1.0})
    if "poisson_z" in block:
        z = _as_float(block["poisson_z"], "initial.poisson_z")
        if z < 0:
            raise _fail("initial.poisson_z", "density must be nonnegative")
        rho = np.full(model.m, z)
    elif "rho" in block:
        rho = np.asarray(block["rho"], dtype=float)
        if rho.shape != (model.m,):
            raise _fail("initial.rho", f"expected {model.m} densities, got shape {rho.shape}")
        if np.any(rho < 0):
            raise _fail("initial.rho", "densities must be nonnegative")
    else:
        raise _fail("initial", "need 'poisson_z' or 'rho'")
    return CorrelationHierarchy.poisson(model.m, model.n_max, rho)


def parse_solver_opts(cfg: dict) -> dict:
    s = _get(cfg, "solver", {})
    opts = {
        "tol": _as_float(s.get("tol", 1e-10), "solver.tol"),
        "k_max": s.get("k_max", 60),
        "n_steps": s.get("n_steps", 100),
        "n_alpha": s.get("n_alpha", 8),
        "theta": _as_float(s.get("theta", 0.9), "solver.theta"),
    }
    for key in ("k_max", "n_steps", "n_alpha"):
        if not isinstance(opts[key], int) or opts[key] < 1:
            raise _fail(f"solver.{key}", f"expected a positive integer, got {opts[key]!r}")
    if not (0.0 < opts["theta"] < 1.0):
        raise _fail("solver.theta", f"safety factor must lie in (0, 1), got {opts['theta']}")
    return opts


def parse_override(cfg: dict, base: OvcyannikovConstants) -> OvcyannikovConstants:
    """Optional certificate override block, used for fault injection."""
    ov = _get(cfg, "certificate_override")
    if not ov:
        return base
    fields = {k: getattr(base, k) for k in ("c1", "beta", "c2", "c3", "cx", "x_norm")}
    for key, value in ov.items():
        if key not in fields:
            raise _fail(f"certificate_override.{key}", "unknown constant")
        fields[key] = _as_float(value, f"certificate_override.{key}")
    try:
        return OvcyannikovConstants(**fields)
    except DomainError as exc:
        raise _fail("certificate_override", str(exc)) from exc


# ---------------------------------------------------------------------------
# deterministic output helpers


def _fmt(x) -> str:
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def write_summary(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if math.isinf(obj) if isinstance(obj, float) else False:
        return "inf"
    return str(obj)


def _sanitize(obj):
    """json cannot carry inf/nan; replace them by strings recursively."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def config_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def trajectory_rows(u, model: KimuraModel) -> list[list]:
    """One row per (t, level, configuration), lexicographic inside a level."""
    rows = []
    off = model.offsets()
    for j, t in enumerate(u.t_grid):
        for n in range(model.n_max + 1):
            for i, eta in enumerate(level_configs(model.m, n)):
                label = "|".join(str(s) for s in eta)
                rows.append([float(t), n, label, float(u.values[j][off[n] + i])])
    return rows


def _audit(window: ScaleWindow, consts: OvcyannikovConstants) -> dict:
    return _sanitize(lambda0_terms(window, consts))


# ---------------------------------------------------------------------------
# subcommands


def _prepare(cfg: dict):
    window = parse_window(cfg)
    model = parse_model(cfg, window)
    k0 = parse_initial(cfg, model)
    opts = parse_solver_opts(cfg)
    problem = KimuraProblem.build(model, k0)
    consts = parse_override(cfg, problem.consts)
    lam0 = lambda0(window, consts)
    if window.lam is None:
        window = window.with_lam(2.0 * lam0)
    return window, model, k0, opts, problem, consts, lam0


def run_solve(cfg: dict, out: Path, raw: bytes, seed: int) -> int:
    window, model, k0, opts, problem, consts, lam0 = _prepare(cfg)
    if window.lam <= lam0:
        print(
            f"infeasible horizon slope: lambda = {window.lam} <= lambda0 = {lam0}",
            file=sys.stderr,
        )
        return EXIT_HORIZON
    u, report = picard_solve(
        k0.to_vector(),
        problem.evolution,
        problem.perturbation,
        window,
        consts,
        problem.norm,
        **opts,
    )
    write_csv(
        out / "trajectory.csv",
        ["t", "level", "config", "value"],
        trajectory_rows(u, model),
    )
    conv_rows = []
    for k, d in enumerate(report.increments):
        conv_rows.append([
            k + 1,
            d,
            report.ratios[k - 1] if k >= 1 else "",
            report.m_values[k],
            report.apriori_margin,
        ])
    write_csv(
        out / "convergence.csv",
        ["iteration", "increment", "ratio", "monitor", "apriori_margin"],
        conv_rows,
    )
    write_summary(out / "summary.json", {
        "subcommand": "solve",
        "config_sha256": config_digest(raw),
        "seed": seed,
        "lambda": window.lam,
        "lambda0_audit": _audit(window, consts),
        "horizon": window.horizon(),
        "grid_horizon": float(u.t_grid[-1]),
        "iterations": report.iterations,
        "converged": report.converged,
        "tail_bound": report.tail_bound,
        "rho": report.rho,
        "apriori_margin": report.apriori_margin,
        "quadrature_error_estimate": report.quadrature_error_estimate,
        "constants": _sanitize(asdict(consts)),
        "level0_max_drift": float(np.max(np.abs(u.values[:, 0] - 1.0))),
    })
    return EXIT_OK


def run_stability(cfg: dict, out: Path, raw: bytes, seed: int) -> int:
    window, model, k0, opts, problem, consts, lam0 = _prepare(cfg)
    fam_cfg = _get(cfg, "family", required=True)
    n_values = fam_cfg.get("n_values")
    if not n_values:
        raise _fail("family.n_values", "need a nonempty list of family indices")
    model = KimuraModel(model.space, model.rates, model.n_max, window)
    family = kimura_h_family(model, k0, list(n_values))
    lam1 = lambda1(family)
    if _get(cfg, "window.lambda", "auto") == "auto":
        # the auto rule must clear the family threshold, not just the limit's
        window = window.with_lam(2.0 * lam1)
        model = KimuraModel(model.space, model.rates, model.n_max, window)
        family = kimura_h_family(model, k0, list(n_values))
    if window.lam <= lam1:
        print(
            f"infeasible horizon slope: lambda = {window.lam} <= lambda1 = {lam1}",
            file=sys.stderr,
        )
        return EXIT_HORIZON
    alpha = _as_float(fam_cfg.get("alpha", window.alpha_top), "family.alpha")
    t_prime = _as_float(
        fam_cfg.get("t_prime", 0.5 * (alpha - window.alpha0) / window.lam),
        "family.t_prime",
    )
    solver_opts = {k: v for k, v in opts.items() if k != "tol"}
    rep = stability_experiment(family, alpha, t_prime, tol=opts["tol"], **solver_opts)
    rows = [
        [n, rep.labels[i], rep.perturbation_sizes[i], rep.s_values[i], rep.floor]
        for i, n in enumerate(n_values)
    ]
    write_csv(
        out / "stability.csv",
        ["n", "label", "perturbation", "deviation", "floor"],
        rows,
    )
    write_summary(out / "summary.json", {
        "subcommand": "stability",
        "config_sha256": config_digest(raw),
        "seed": seed,
        "lambda": window.lam,
        "lambda1": lam1,
        "lambda0_audit": _audit(window, consts),
        "alpha": alpha,
        "t_prime": t_prime,
        "floor": rep.floor,
        "deviations": rep.s_values,
        "strictly_decreasing": all(
            rep.s_values[i + 1] < rep.s_values[i] for i in range(len(rep.s_values) - 1)
        ),
    })
    return EXIT_OK


def run_verify(cfg: dict, out: Path, raw: bytes, seed: int) -> int:
    window, model, k0, opts, problem, consts, lam0 = _prepare(cfg)
    samples = _get(cfg, "run.samples", 100)
    if not isinstance(samples, int) or samples < 1:
        raise _fail("run.samples", f"expected a positive integer, got {samples!r}")
    report = bound_verifier(model, k0, samples, seed, consts=consts, window=window)
    law = evolution_law_check(model, min(samples, 100), seed)
    summary = {
        "subcommand": "verify",
        "config_sha256": config_digest(raw),
        "seed": seed,
        "samples": samples,
        "lambda0_audit": _audit(window, consts),
        "worst_ratios": _sanitize(dict(sorted(report.worst.items()))),
        "violations": [
            {"inequality": name, "sample": idx, "ratio": _sanitize(ratio)}
            for name, idx, ratio in report.violations
        ],
        "evolution_identity_exact": law.identity_exact,
        "evolution_cocycle_worst": law.cocycle_worst,
        "evolution_growth_violations": law.growth_violations,
    }
    write_summary(out / "summary.json", summary)
    clean = (
        report.clean
        and law.identity_exact
        and law.cocycle_worst <= 1e-8
        and law.growth_violations == 0
    )
    if not clean:
        names = sorted({name for name, _, _ in report.violations})
        if not law.identity_exact:
            names.append("evolution-identity")
        if law.cocycle_worst > 1e-8:
            names.append("evolution-cocycle")
        if law.growth_violations:
            names.append("evolution-growth")
        print("bound violation: " + ", ".join(names), file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def run_oracle_compare(cfg: dict, out: Path, raw: bytes, seed: int) -> int:
    window, model, k0, opts, problem, consts, lam0 = _prepare(cfg)
    if window.lam <= lam0:
        print(
            f"infeasible horizon slope: lambda = {window.lam} <= lambda0 = {lam0}",
            file=sys.stderr,
        )
        return EXIT_HORIZON
    model = KimuraModel(model.space, model.rates, model.n_max, window)
    u, report = picard_solve(
        k0.to_vector(),
        problem.evolution,
        problem.perturbation,
        window,
        consts,
        problem.norm,
        **opts,
    )
    tol = _as_float(_get(cfg, "run.compare_tol", 1e-6), "run.compare_tol")
    steps = _get(cfg, "run.oracle_steps", 400)
    psi_dead = bool(np.all(model.rates.psi_base[~np.eye(model.m, dtype=bool)] == 0.0)) if model.m > 1 else True
    alpha_ref = window.alpha_top
    rows = []
    worst = 0.0
    if psi_dead:
        oracle_name = "poisson"
        rho0 = np.array([k0.value((i,)) for i in range(model.m)])
        validate_poisson_closure(model, rho0, float(u.t_grid[-1]))
        refs = [poisson_oracle(model, rho0, float(t)) for t in u.t_grid]
    else:
        oracle_name = "bruteforce"
        _, refs = bruteforce_oracle(model, k0, float(u.t_grid[-1]), len(u.t_grid) - 1)
    for j, t in enumerate(u.t_grid):
        ref_vec = refs[j].to_vector()
        dev = model.hierarchy_norm(u.values[j] - ref_vec, alpha_ref)
        rel = dev / max(model.hierarchy_norm(ref_vec, alpha_ref), 1e-300)
        worst = max(worst, rel)
        rows.append([float(t), rel])
    write_csv(out / "comparison.csv", ["t", "relative_deviation"], rows)
    write_summary(out / "summary.json", {
        "subcommand": "oracle-compare",
        "config_sha256": config_digest(raw),
        "seed": seed,
        "oracle": oracle_name,
        "lambda0_audit": _audit(window, consts),
        "worst_relative_deviation": worst,
        "tolerance": tol,
        "passed": worst <= tol,
    })
    if worst > tol:
        print(
            f"oracle mismatch: worst relative deviation {worst:.3e} > {tol:.1e}",
            file=sys.stderr,
        )
        return EXIT_BOUND
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banachscale",
        description="Scale-of-Banach-spaces hierarchy solver and verifier",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in ("solve", "stability", "verify", "oracle-compare"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default="./out", help="output directory")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--threads", type=int, default=0, help="0 = all cores")
    return parser


_DISPATCH = {
    "solve": run_solve,
    "stability": run_stability,
    "verify": run_verify,
    "oracle-compare": run_oracle_compare,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads > 0:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        raw = Path(args.config).read_bytes()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _DISPATCH[args.subcommand](cfg, out, raw, args.seed)
    except ConfigurationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractionViolationError as exc:
        print(f"contraction violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACTION
    except (DomainError, ModelValidationError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BanachScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
