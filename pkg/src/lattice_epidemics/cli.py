"""Command-line entry point ``lattice-epi``.

Every subcommand accepts its options as flags or through ``--config FILE``
(a JSON object keyed by option name, e.g. ``{"lambda": 0.3, "kappa": "inf"}``);
flags override file values. Outputs go to ``--out`` (default: the
``LATTICE_EPI_OUTPUT`` environment variable, else ``./lattice_epi_out``)
together with ``manifest.json``.

Exit codes: 0 success, 2 invalid configuration, 3 event budget exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import coupling, epidemic, harness, io, pde, poisson, two_species
from .epidemic import ClusterConfig, ModelParams
from .errors import BudgetExceededError, InvalidParameterError

OUTPUT_ENV = "LATTICE_EPI_OUTPUT"
DEFAULT_OUT = "lattice_epi_out"
EXIT_OK, EXIT_INVALID, EXIT_BUDGET = 0, 2, 3

logger = logging.getLogger("lattice_epidemics")


class ConfigError(Exception):
    pass


# ------------------------------------------------------------------ parsing

def float_list(value) -> list[float] | None:
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(v) for v in str(value).split(",") if v.strip()]


def int_list(value) -> list[int]:
    out = float_list(value)
    if any(v != int(v) for v in out):
        raise ValueError(f"expected integers, got {value!r}")
    return [int(v) for v in out]


def profile_spec(value) -> list[float]:
    """Profile ``c[,a[,b]]`` meaning c + a cos(2 pi theta) + b sin(2 pi theta)."""
    coef = float_list(value)
    if not 1 <= len(coef) <= 3:
        raise ValueError(f"profile needs 1 to 3 coefficients, got {value!r}")
    return coef + [0.0] * (3 - len(coef))


def profile_fn(coef):
    c, a, b = coef
    return lambda th: c + a * np.cos(2 * np.pi * th) + b * np.sin(2 * np.pi * th)


def kappa_arg(value):
    return epidemic.parse_kappa(value)


def int_arg(value) -> int:
    v = float(value)
    if v != int(v):
        raise ValueError(f"expected an integer, got {value!r}")
    return int(v)


# (flag, dest, type, default, help)
COMMON = [
    ("--seed", "seed", int_arg, 0, "master seed"),
    ("--jobs", "jobs", int_arg, -1, "worker processes (-1: all cores)"),
    ("--max-events", "max_events", int_arg, 10 ** 8, "event budget per run"),
]
MODEL = [
    ("--model", "model", str, "irp", "irp or crp"),
    ("--lambda", "lam", float, 0.0, "outside infection rate into healthy clusters"),
    ("--beta", "beta", float, 0.0, "outside infection rate into infected clusters"),
    ("--phi", "phi", float, 0.0, "within-cluster infection rate"),
    ("--kappa", "kappa", kappa_arg, math.inf, "cluster size (integer or inf)"),
    ("--d", "d", int_arg, 1, "lattice dimension"),
]
TILDE = [
    ("--alpha1", "alpha1", float, 0.0, "birth coefficient of healthy individuals"),
    ("--alpha2", "alpha2", float, 0.0, "birth coefficient of infected individuals"),
    ("--kd", "kd", float, 0.0, "death coefficient"),
    ("--lambda", "lam", float, 0.0, "infection rate from a neighbour into an uninfected site"),
    ("--beta", "beta", float, 0.0, "infection rate from a neighbour into an infected site"),
    ("--phi", "phi", float, 0.0, "within-site infection rate"),
]
PROFILES = [
    ("--m1", "m1", profile_spec, [2.0, 0.5, 0.0], "healthy profile c,a,b"),
    ("--m2", "m2", profile_spec, [1.0, 0.0, 0.5], "infected profile c,a,b"),
]

SUBCOMMANDS = {
    "simulate": ("sample path of IRP/CRP from one infected individual", MODEL + [
        ("--horizon", "horizon", float, 10.0, "time horizon"),
        ("--max-infected", "max_infected", int_arg, 0, "stop once this many are infected (0: never)"),
    ]),
    "survival": ("finite-horizon survival probability", MODEL + [
        ("--horizon", "horizon", float, 100.0, "time horizon"),
        ("--replicas", "replicas", int_arg, 1000, "independent replicas"),
        ("--max-infected", "max_infected", int_arg, 10_000, "count as surviving beyond this size"),
    ]),
    "phi-c": ("bisection for the critical within-cluster rate", MODEL + [
        ("--horizon", "horizon", float, 100.0, "time horizon"),
        ("--replicas", "replicas", int_arg, 1000, "replicas per probe"),
        ("--threshold", "threshold", float, 0.05, "survival threshold"),
        ("--bracket", "bracket", float_list, [0.0, 4.0], "lo,hi"),
        ("--tol", "tol", float, 0.05, "bracket width to stop at"),
        ("--max-infected", "max_infected", int_arg, 10_000, "count as surviving beyond this size"),
    ]),
    "couple-check": ("ordering checks of the basic coupling", MODEL + [
        ("--mode", "mode", str, "order", "order (phi-a >= phi-b) or contact"),
        ("--phi-b", "phi_b", float, 1.0, "within-cluster rate of the lower process"),
        ("--horizon", "horizon", float, 50.0, "time horizon"),
        ("--replicas", "replicas", int_arg, 200, "replicas"),
        ("--max-infected", "max_infected", int_arg, 10_000, "stop a replica beyond this size"),
    ]),
    "tilde-table": ("closed-form expectations against Monte Carlo", TILDE + [
        ("--grid", "grid", float_list, [0.5, 1.0, 2.0], "densities a and b"),
        ("--samples", "samples", int_arg, 10 ** 5, "Monte Carlo samples per cell"),
    ]),
    "two-species": ("two-species process on the discrete torus", TILDE + PROFILES + [
        ("--N", "N", int_arg, 32, "torus size"),
        ("--horizon", "horizon", float, 0.1, "time horizon"),
        ("--snapshots", "snapshots", float_list, None, "snapshot times (default 0,horizon)"),
    ]),
    "pde": ("reaction-diffusion limit on the unit torus", TILDE + PROFILES + [
        ("--M", "M", int_arg, 256, "grid points"),
        ("--T", "T", float, 0.1, "final time"),
        ("--dt", "dt", float, 0.0, "time step (0: largest stable)"),
        ("--outputs", "outputs", float_list, None, "output times (default T)"),
        ("--refine", "refine", int_arg, 0, "1: add the dx/2 refinement report"),
    ]),
    "hydro-converge": ("empirical measures against the PDE over an N ladder", TILDE + PROFILES + [
        ("--Ns", "Ns", int_list, [32, 64, 128], "torus sizes"),
        ("--replicas", "replicas", int_arg, 50, "replicas per N"),
        ("--times", "times", float_list, [0.1], "comparison times"),
        ("--M", "M", int_arg, 256, "PDE grid points"),
    ]),
    "window": ("boundary insensitivity in a fixed window", TILDE + PROFILES + [
        ("--N", "N", int_arg, 16, "scaling parameter"),
        ("--A", "A", int_arg, 1, "window half-width in units of N"),
        ("--C", "C", int_list, [2, 4, 8], "torus half-widths in units of N"),
        ("--horizon", "horizon", float, 0.05, "time horizon"),
        ("--replicas", "replicas", int_arg, 20, "replicas"),
    ]),
}


def _options(name):
    return SUBCOMMANDS[name][1] + COMMON


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lattice-epi", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, (help_text, opts) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUT})")
        for flag, dest, typ, default, hlp in _options(name):
            p.add_argument(flag, dest=dest, type=typ, default=argparse.SUPPRESS,
                           help=f"{hlp} (default {default})")
    return parser


def resolve_config(name: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then flags."""
    opts = _options(name)
    config = {dest: default for _, dest, _, default, _ in opts}
    by_key = {}
    for flag, dest, typ, _, _ in opts:
        by_key[flag.lstrip("-")] = (dest, typ)
        by_key[dest] = (dest, typ)
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in data.items():
            if key in ("out", "subcommand"):
                continue
            if key not in by_key:
                raise ConfigError(f"unknown option {key!r} in config file for {name}")
            dest, typ = by_key[key]
            try:
                config[dest] = typ(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    for _, dest, _, _, _ in opts:
        if hasattr(args, dest):
            config[dest] = getattr(args, dest)
    config["out"] = args.out or data.get("out") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUT
    return config


# ---------------------------------------------------------------- commands

def _model(c) -> ModelParams:
    return ModelParams(c["lam"], c["beta"], c["phi"], c["kappa"], c["d"], c["model"])


def _tilde(c) -> poisson.TildeParams:
    return poisson.TildeParams(c["alpha1"], c["alpha2"], c["kd"], c["lam"], c["beta"], c["phi"])


def _require(cond: bool, message: str):
    if not cond:
        raise InvalidParameterError(message)


def cmd_simulate(c, out: Path):
    params = _model(c)
    traj = epidemic.simulate(ClusterConfig.single(params.d), params, c["horizon"], c["seed"],
                             max_events=c["max_events"], max_infected=c["max_infected"] or None)
    traj.to_jsonl(out / "trajectory.jsonl")
    # the log holds the new count at one site per event; replay it for totals
    rows, state = [], dict(traj.initial.items())
    total = traj.initial.total()
    rows.append((0.0, total, len(state)))
    for t, site, count in zip(traj.times, traj.sites, traj.counts):
        key = tuple(int(v) for v in site)
        total += int(count) - state.get(key, 0)
        if count:
            state[key] = int(count)
        else:
            state.pop(key, None)
        rows.append((float(t), total, len(state)))
    io.write_csv(out / "totals.csv", rows, ("t", "infected", "occupied"))
    extra = {"status": traj.status, "n_events": traj.n_events, "end_time": traj.end_time}
    return ["trajectory.jsonl", "totals.csv"], extra, traj.truncated


def _survival_row(est, params):
    row = {"model": params.recovery.value, "kappa": params.kappa, "lambda": params.lam,
           "beta": params.beta}
    row.update(est.as_row())
    row.update({"n_capped": est.n_capped, "n_truncated": est.n_truncated})
    return row


def cmd_survival(c, out):
    params = _model(c)
    est = epidemic.survival_probability(params, horizon=c["horizon"], replicas=c["replicas"],
                                        master_seed=c["seed"], n_jobs=c["jobs"],
                                        max_events=c["max_events"],
                                        max_infected=c["max_infected"] or None)
    io.write_dict_rows(out / "survival.csv", [_survival_row(est, params)])
    return ["survival.csv"], {"p_hat": est.p_hat}, est.n_truncated > 0


def cmd_phi_c(c, out):
    params = _model(c)
    _require(len(c["bracket"]) == 2, "bracket needs two values lo,hi")
    res = epidemic.critical_phi_search(params.lam, params.beta, params, horizon=c["horizon"],
                                       replicas=c["replicas"], threshold=c["threshold"],
                                       bracket=tuple(c["bracket"]), tol=c["tol"],
                                       master_seed=c["seed"], n_jobs=c["jobs"],
                                       max_events=c["max_events"],
                                       max_infected=c["max_infected"] or None)
    probes = sorted(res.probes, key=lambda e: e.params.phi)
    io.write_dict_rows(out / "phi_c_probes.csv", [_survival_row(e, e.params) for e in probes])
    io.write_csv(out / "phi_c.csv", [(res.phi_c, res.bracket[0], res.bracket[1], res.threshold)],
                 ("phi_c", "lo", "hi", "threshold"))
    truncated = any(e.n_truncated for e in probes)
    return ["phi_c.csv", "phi_c_probes.csv"], {"phi_c": res.phi_c}, truncated


def cmd_couple_check(c, out):
    params = _model(c)
    config0 = ClusterConfig.single(params.d)
    kw = dict(n_jobs=c["jobs"], max_events=c["max_events"], max_infected=c["max_infected"] or None)
    if c["mode"] == "order":
        pair = coupling.CoupledPair(config0, config0, params, params.with_(phi=c["phi_b"]))
        check = coupling.check_ordering(pair, c["horizon"], c["replicas"], c["seed"], **kw)
    elif c["mode"] == "contact":
        check = coupling.check_contact_domination(params, config0, c["horizon"], c["replicas"],
                                                  c["seed"], **kw)
    else:
        raise InvalidParameterError(f"mode must be 'order' or 'contact', got {c['mode']!r}")
    io.write_csv(out / "coupling.csv",
                 [(c["mode"], check.replicas, check.violations, check.n_events, check.n_stopped_early)],
                 ("mode", "replicas", "violations", "n_events", "n_stopped_early"))
    (out / "coupling.json").write_text(check.to_json() + "\n")
    return ["coupling.csv", "coupling.json"], {"violations": check.violations}, False


def cmd_tilde_table(c, out):
    rows = poisson.tilde_table(c["grid"], _tilde(c), c["samples"], c["seed"])
    io.write_dict_rows(out / "tilde_table.csv", rows)
    return ["tilde_table.csv"], {}, False


def cmd_two_species(c, out):
    params = two_species.TwoSpeciesParams.from_tilde(_tilde(c), c["N"])
    rng = np.random.default_rng(c["seed"])
    config0 = two_species.TwoSpeciesConfig.from_profiles(profile_fn(c["m1"]), profile_fn(c["m2"]),
                                                         c["N"], rng)
    traj = two_species.simulate_torus(config0, params, c["horizon"], rng,
                                      snapshot_times=c["snapshots"], max_events=c["max_events"])
    io.write_csv(out / "two_species.csv", traj.snapshot_rows(), ("t", "x", "eta", "xi"))
    extra = {"status": traj.status, "n_events": traj.n_events, "kind_counts": traj.kind_counts}
    return ["two_species.csv"], extra, traj.truncated


def cmd_pde(c, out):
    M = c["M"]
    theta = np.arange(M) / M
    m1, m2 = profile_fn(c["m1"])(theta), profile_fn(c["m2"])(theta)
    config = pde.SolverConfig(dt=c["dt"]) if c["dt"] > 0 else pde.SolverConfig.for_grid(M)
    sol = pde.solve(m1, m2, _tilde(c), c["T"], config, c["outputs"], refine=bool(c["refine"]))
    io.write_csv(out / "pde.csv", sol.rows(), ("t", "theta", "lambda1", "lambda2"))
    report = {"clip_count": sol.clip_count, "max_mass_residual": sol.max_mass_residual,
              "min_value": sol.min_value, "low_flag": sol.low_flag, "refinement": sol.refinement}
    (out / "pde_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return ["pde.csv", "pde_report.json"], {"low_flag": sol.low_flag}, False


def cmd_hydro_converge(c, out):
    report = harness.convergence_experiment(profile_fn(c["m1"]), profile_fn(c["m2"]), _tilde(c),
                                            c["Ns"], c["replicas"], times=c["times"],
                                            master_seed=c["seed"], n_jobs=c["jobs"], m_grid=c["M"],
                                            max_events=c["max_events"])
    rows = report.csv_rows()
    io.write_csv(out / "convergence.csv", rows, next(rows))
    checks = {f"{o}/{s}": {"decays": report.decays(o, s), "monotone": report.monotone(o, s),
                           "within_cap": report.within_cap(o, s)} for o, s in report.pairs()}
    (out / "convergence_checks.json").write_text(json.dumps(
        {"checks": checks, "refinement_change": report.refinement_change,
         "refinement_ok": report.refinement_ok(), "pde_clip_count": report.clip_count},
        indent=2, sort_keys=True) + "\n")
    return ["convergence.csv", "convergence_checks.json"], {}, False


def cmd_window(c, out):
    report = harness.window_experiment(profile_fn(c["m1"]), profile_fn(c["m2"]), _tilde(c), c["N"],
                                       c["A"], c["C"], c["replicas"], c["seed"],
                                       horizon=c["horizon"], n_jobs=c["jobs"],
                                       max_events=c["max_events"])
    rows = report.csv_rows()
    io.write_csv(out / "window.csv", rows, next(rows))
    extra = {"coupling": report.coupling, "nonincreasing": report.nonincreasing(),
             "ratio_ok": report.ratio_ok()}
    return ["window.csv"], extra, False


COMMANDS = {"simulate": cmd_simulate, "survival": cmd_survival, "phi-c": cmd_phi_c,
            "couple-check": cmd_couple_check, "tilde-table": cmd_tilde_table,
            "two-species": cmd_two_species, "pde": cmd_pde, "hydro-converge": cmd_hydro_converge,
            "window": cmd_window}


def parse_and_dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # unknown flags exit with status 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    name = args.subcommand
    try:
        config = resolve_config(name, args)
    except ConfigError as exc:
        print(f"lattice-epi {name}: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        outputs, extra, budget_hit = COMMANDS[name](config, out)
    except (InvalidParameterError, ValueError) as exc:
        print(f"lattice-epi {name}: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceededError as exc:
        io.write_manifest(out, name, config, [], time.perf_counter() - start, "budget_exceeded")
        print(f"lattice-epi {name}: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    status = "budget_exceeded" if budget_hit else "ok"
    io.write_manifest(out, name, config, outputs, time.perf_counter() - start, status, extra)
    if budget_hit:
        print(f"lattice-epi {name}: event budget exceeded; partial output in {out}", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(parse_and_dispatch(argv))


if __name__ == "__main__":
    main()
