"""Command line interface.

Exit codes: 0 ok, 1 check failed, 2 usage or configuration error, 3 blow-up.
Every non-zero exit also writes one JSON error record to stderr.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import sys
import time
from dataclasses import replace

import numpy as np

from ..errors import BlowUpError, ConfigError, DomainError, EnsembleError, InfeasibleError
from ..estimates import (check_ibp_identities, check_inequalities, construct_weight,
                         moment_bound_scan, random_test_field, verify_weight)
from ..integrator import run_ensemble, simulate_path, simulate_paths
from ..martingale import martingale_diagnostics
from ..model import SCHEMES, SimConfig, preset, validate_config
from ..noise import NOISE_KINDS, NoiseSpec
from ..oracles import admit_oracles, convergence_study, validate_solver
from ..spectral import Domain, build_basis
from .configfile import default_config_text, parse_config
from .records import SCHEMA_VERSION, dumps_record, make_record, write_records

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BLOWUP = 0, 1, 2, 3
COMMANDS = ("simulate", "ensemble", "validate", "identities", "weight", "moments",
            "martingale", "converge")
# commands whose natural default is the stochastic benchmark rather than noise off
_STOCHASTIC = {"ensemble", "moments", "martingale", "converge"}
BENCHMARK_NOISE = NoiseSpec(kind="diagonal_gain", kappa1=0.1)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="INI configuration file; flags override it")
    g.add_argument("--preset", help="coefficient preset (kdv, burgers, kdv_burgers, full, ...)")
    for name in ("A", "B", "C", "D"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--eps", type=float, dest="epsilon", help="fourth-order regularization")
    g.add_argument("--x1", type=float)
    g.add_argument("--x2", type=float)
    g.add_argument("--m", type=int, help="number of Fourier modes")
    g.add_argument("--dt", type=float)
    g.add_argument("--T", type=float)
    g.add_argument("--scheme", choices=SCHEMES)
    g.add_argument("--no-cutoff", action="store_true", help="drop the derivative-norm cutoffs")
    g.add_argument("--save-stride", type=int)
    g.add_argument("--noise", choices=NOISE_KINDS)
    g.add_argument("--kappa1", type=float)
    g.add_argument("--kappa2", type=float)
    g.add_argument("--decay-p", type=float)
    g.add_argument("--rank", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--paths", type=int, dest="n_paths")
    g.add_argument("--lambda-X", type=float, dest="lambda_X")
    g.add_argument("--k-local", type=float)
    g.add_argument("--initial", help="gaussian, soliton, mode, zero or file")
    g.add_argument("--amplitude", type=float)
    g.add_argument("--no-ccond", action="store_true", help="warn instead of rejecting 3B < A + 1")
    o = p.add_argument_group("output")
    o.add_argument("--out", default="runs", help="output directory")
    o.add_argument("--format", default="jsonl", choices=("jsonl", "csv", "both"))
    o.add_argument("--stamp", help="timestamp used in file names (default: now)")
    o.add_argument("--threads", type=int, help="worker cap (default: HKDVB_THREADS or all cores)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hkdvb", description="Stochastic hybrid KdV-Burgers toolkit")
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the canonical default configuration file and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    common = _common()
    sp = sub.add_parser("simulate", parents=[common], help="one path")
    sp.add_argument("--path", type=int, default=0, help="path index (selects the noise stream)")
    sub.add_parser("ensemble", parents=[common], help="ensemble functionals with CIs").add_argument(
        "--offset", type=int, default=0, help="first path index")
    sp = sub.add_parser("validate", parents=[common], help="solver against a closed form")
    sp.add_argument("--tol", type=float, default=1e-4)
    sp = sub.add_parser("identities", parents=[common], help="weighted identities on random fields")
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--weights", type=int, default=5)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp = sub.add_parser("weight", parents=[common], help="construct and certify a weight")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--gamma", type=float)
    sp = sub.add_parser("moments", parents=[common], help="moment bounds over epsilon")
    sp.add_argument("--eps-list", "--eps-levels", dest="eps_list", type=_floats,
                    default=[1e-1, 1e-2, 1e-3, 1e-4])
    sp.add_argument("--k", type=float)
    sp.add_argument("--ratio-limit", type=float, default=10.0)
    sub.add_parser("martingale", parents=[common], help="martingale diagnostics")
    sp = sub.add_parser("converge", parents=[common], help="convergence study")
    sp.add_argument("--mode", choices=("eps", "modes", "dt"), default="eps")
    sp.add_argument("--levels", type=_floats)
    sp.add_argument("--min-fraction", type=float, default=0.9)
    sp.add_argument("--min-order", type=float, default=1.0)
    return parser


def _argv_eps_list(argv):
    """``moments --eps a,b,c`` names the scan grid, not a single epsilon."""
    argv = list(argv)
    if argv and argv[0] == "moments":
        argv = ["--eps-list" if a == "--eps" else a for a in argv]
        argv = [("--eps-list=" + a[6:]) if a.startswith("--eps=") else a for a in argv]
    return argv


def build_config(args) -> SimConfig:
    """Config file (or defaults) with command line overrides applied, validated."""
    cfg = parse_config(args.config) if args.config else SimConfig()
    co = {k: getattr(args, k, None) for k in ("A", "B", "C", "D", "epsilon")}
    co = {k: v for k, v in co.items() if v is not None}
    if args.command == "weight":
        co = {}  # B and C only parametrize the weight there
    if args.preset:
        try:
            coeffs = preset(args.preset, **co)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        coeffs = replace(cfg.coefficients, **co)
    kw = {"coefficients": coeffs, "grid_size": 0}
    if args.x1 is not None or args.x2 is not None:
        d = cfg.domain
        kw["domain"] = Domain(d.x1 if args.x1 is None else args.x1, d.x2 if args.x2 is None else args.x2)
    for name in ("m", "dt", "T", "scheme", "seed", "n_paths", "lambda_X", "k_local", "save_stride"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if args.no_cutoff:
        kw["cutoff"] = False
    if args.no_ccond:
        kw["enforce_ccond"] = False
    noise = cfg.noise
    if args.noise is None and not args.config and args.command in _STOCHASTIC:
        noise = BENCHMARK_NOISE
    nkw = {k: v for k, v in (("kind", args.noise), ("kappa1", args.kappa1), ("kappa2", args.kappa2),
                             ("decay_p", args.decay_p), ("rank", args.rank)) if v is not None}
    if "kind" in nkw and nkw["kind"] != noise.kind and args.rank is None:
        nkw["rank"] = 0
    kw["noise"] = replace(noise, **nkw)
    ic = cfg.initial
    if args.initial is not None:
        ic = replace(ic, kind=args.initial)
    if args.amplitude is not None:
        ic = replace(ic, amplitude=args.amplitude)
    kw["initial"] = ic
    try:
        return validate_config(replace(cfg, **kw))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# -- commands: each returns (records, exit code, summary) --------------------------


def _cmd_simulate(args, cfg):
    tr = simulate_path(cfg, args.path, record_noise=cfg.noise.kind != "off")
    series = {"time": tr.times, "series": {"l2_norm": tr.l2_norms(), "max_abs": tr.max_abs,
                                           "lambda_flag": tr.flags.astype(int)}}
    summary = {"path_index": tr.path_index, "functionals": tr.functionals,
               "noise_checksum": tr.noise_checksum, "cutoff_activations": tr.cutoff_activations,
               "final_time": tr.times[-1], "final_coeffs": tr.coeffs[-1],
               "lambda_exceeded": bool(np.any(tr.flags))}
    recs = [make_record("simulate", cfg, "series", "trajectory", series),
            make_record("simulate", cfg, "summary", "path", summary)]
    return recs, EXIT_OK, {"l2_final": float(tr.l2_norms()[-1])}


def _cmd_ensemble(args, cfg):
    st = run_ensemble(cfg, path_offset=args.offset, threads=args.threads)
    samples = [{"path_index": int(i), "checksum": st.checksums[j],
                "cutoff_activations": int(st.cutoff_activations[j]),
                **{k: float(v[j]) for k, v in st.samples.items()}}
               for j, i in enumerate(st.path_indices)]
    blow = [{"path_index": int(k), "time": v[0], "norm": v[1]} for k, v in sorted(st.blowups.items())]
    recs = [make_record("ensemble", cfg, "table", "ensemble_stats", {"rows": st.summary()}),
            make_record("ensemble", cfg, "table", "samples", {"rows": samples}),
            make_record("ensemble", cfg, "table", "blowups", {"rows": blow})]
    return recs, EXIT_OK, {"n_paths": st.n_paths, "blowups": len(st.blowups)}


def _cmd_validate(args, cfg):
    res = validate_solver(cfg)
    gate = admit_oracles((res["kind"],))[res["kind"]]
    ok = res["max_rel_l2_error"] < args.tol
    summary = {"kind": res["kind"], "params": res["params"], "tolerance": args.tol,
               "max_rel_l2_error": res["max_rel_l2_error"],
               "energy_drift_per_time": res["energy_drift_per_time"], "passed": ok}
    recs = [make_record("validate", cfg, "table", "oracle_gate", {"rows": [{"kind": res["kind"], **gate}]}),
            make_record("validate", cfg, "table", "errors", {"rows": res["rows"]}),
            make_record("validate", cfg, "summary", "validation", summary)]
    return recs, EXIT_OK if ok else EXIT_FAIL, summary


def random_weight_parameters(rng: np.random.Generator):
    """(B, C, delta, gamma) with B + C > 0 and gamma <= -1.5."""
    kind = rng.integers(3)
    B = 0.0 if kind == 2 else float(rng.uniform(0.1, 3.0))
    C = 0.0 if kind == 1 else float(rng.uniform(0.1, 3.0))
    return B, C, float(rng.uniform(0.5, 2.0)), float(rng.uniform(-4.0, -1.5))


def _cmd_identities(args, cfg):
    rng = np.random.default_rng(cfg.seed)
    basis = build_basis(cfg.m, cfg.domain)
    wrows, worst, ok = [], 0.0, True
    weights = []
    for _ in range(args.weights):
        B, C, delta, gamma = random_weight_parameters(rng)
        p = construct_weight(cfg.domain, B, C, delta, gamma)
        rep = verify_weight(p, cfg.domain, B, C)
        ok &= rep.passed
        weights.append(p)
        wrows.append({"B": B, "C": C, "delta": delta, "gamma": gamma, "poly_coeffs": list(p.poly_coeffs),
                      "certified": rep.passed})
    irows, consts = [], []
    for i in range(args.samples):
        u = random_test_field(basis, rng)
        for j, p in enumerate(weights):
            d = check_ibp_identities(u, p, basis).details
            rel = max(d["u3x"]["relative"], d["u2x"]["relative"])
            worst = max(worst, rel)
            irows.append({"sample": i, "weight": j, "u3x_relative": d["u3x"]["relative"],
                          "u2x_relative": d["u2x"]["relative"]})
        consts.append({"sample": i, **check_inequalities(u, weights[0], basis, cfg.local_k).constants_found})
    ok &= worst < args.tol
    summary = {"max_relative_residual": worst, "tolerance": args.tol, "passed": bool(ok),
               "max_constants": {k: max(c[k] for c in consts) for k in ("C1C2", "C3", "C5")} if consts else {}}
    recs = [make_record("identities", cfg, "table", "weights", {"rows": wrows}),
            make_record("identities", cfg, "table", "identities", {"rows": irows}),
            make_record("identities", cfg, "table", "inequality_constants", {"rows": consts}),
            make_record("identities", cfg, "summary", "identities", summary)]
    return recs, EXIT_OK if ok else EXIT_FAIL, summary


def _cmd_weight(args, cfg):
    c = cfg.coefficients
    B = c.B if args.B is None else args.B
    C = c.C if args.C is None else args.C
    delta = cfg.weight_delta if args.delta is None else args.delta
    gamma = cfg.weight_gamma if args.gamma is None else args.gamma
    p = construct_weight(cfg.domain, B, C, delta, gamma)
    rep = verify_weight(p, cfg.domain, B, C)
    data = {"B": B, "C": C, "delta": delta, "gamma": gamma, "x1": p.x1,
            "poly_coeffs": list(p.poly_coeffs), "certification": rep.as_dict()}
    recs = [make_record("weight", cfg, "summary", "weight", _jsonable(data))]
    return recs, EXIT_OK if rep.passed else EXIT_FAIL, {"poly_coeffs": list(p.poly_coeffs),
                                                         "certified": rep.passed}


def _cmd_moments(args, cfg):
    res = moment_bound_scan(cfg, args.eps_list, k=args.k, threads=args.threads,
                            ratio_limit=args.ratio_limit)
    summary = {k: res[k] for k in ("ratio_eps_h2", "ratio_h1_local", "bounded", "no_growth_as_eps_shrinks")}
    recs = [make_record("moments", cfg, "table", "moments", {"rows": res["rows"]}),
            make_record("moments", cfg, "summary", "moments", summary)]
    return recs, EXIT_OK if res["bounded"] else EXIT_FAIL, summary


def _cmd_martingale(args, cfg):
    cfg = validate_config(replace(cfg, save_stride=1, grid_size=0))
    trajs, blowups = simulate_paths(cfg, record_noise=True, threads=args.threads)
    if blowups:
        i = min(blowups)
        raise BlowUpError(blowups[i][0], blowups[i][1], i)
    rep = martingale_diagnostics(trajs, cfg)
    d = rep.as_dict()
    recs = [make_record("martingale", cfg, "table", "increments", {"rows": d["increments"]}),
            make_record("martingale", cfg, "table", "quadratic_variation", {"rows": d["quadratic_variation"]}),
            make_record("martingale", cfg, "summary", "martingale",
                        {k: d[k] for k in ("n_paths", "doob_ratio", "doob_ratio_scaled",
                                           "doob_ratio_first_moment", "warnings", "passed")})]
    return recs, EXIT_OK if rep.passed else EXIT_FAIL, {"passed": rep.passed, "doob_ratio": rep.doob_ratio}


_DEFAULT_LEVELS = {"eps": [1e-1, 1e-2, 1e-3], "modes": [8, 16, 32], "dt": [1e-3, 5e-4, 2.5e-4]}


def _cmd_converge(args, cfg):
    levels = args.levels or _DEFAULT_LEVELS[args.mode]
    res = convergence_study(cfg, args.mode, levels, threads=args.threads)
    if res["flags"]:
        raise BlowUpError(float("nan"), float("nan"))
    if args.mode == "dt":
        ok = bool(res["min_order"] >= args.min_order)
        summary = {"mode": "dt", "observed_orders": res["observed_orders"], "min_order": res["min_order"],
                   "passed": ok}
    else:
        ok = bool(res["decreasing_fraction"] >= args.min_fraction)
        summary = {"mode": args.mode, "decreasing_fraction": res["decreasing_fraction"],
                   "noise_identical": res["noise_identical"], "passed": ok}
    recs = [make_record("converge", cfg, "table", "convergence", {"rows": res["rows"]}),
            make_record("converge", cfg, "summary", "convergence", summary)]
    return recs, EXIT_OK if ok else EXIT_FAIL, summary


_HANDLERS = {
    "simulate": _cmd_simulate, "ensemble": _cmd_ensemble, "validate": _cmd_validate,
    "identities": _cmd_identities, "weight": _cmd_weight, "moments": _cmd_moments,
    "martingale": _cmd_martingale, "converge": _cmd_converge,
}


def _error(code: int, kind: str, message: str, command=None) -> int:
    rec = {"schema_version": SCHEMA_VERSION, "command": command, "error": kind,
           "message": message, "exit_code": code}
    sys.stderr.write(dumps_record(rec) + "\n")
    return code


def run_command(argv=None) -> int:
    """Parse ``argv``, run the subcommand, write records; returns the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    command = None
    try:
        args = parser.parse_args(_argv_eps_list(argv))
        if args.print_defaults:
            sys.stdout.write(default_config_text())
            return EXIT_OK
        command = args.command
        if command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        cfg = build_config(args)
        t0 = time.perf_counter()
        records, code, summary = _HANDLERS[command](args, cfg)
        wall = time.perf_counter() - t0
        stamp = args.stamp or _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
        paths = write_records(records, args.format, args.out, f"{command}-{stamp}-{cfg.seed}", wall)
        sys.stdout.write(dumps_record(_jsonable({"command": command, "exit_code": code,
                                                 "files": paths, "summary": summary})) + "\n")
        if code != EXIT_OK:
            _error(code, "CheckFailed", f"{command} check failed", command)
        return code
    except UsageError as exc:
        return _error(EXIT_USAGE, "UsageError", str(exc), command)
    except (ConfigError, DomainError) as exc:
        return _error(EXIT_USAGE, type(exc).__name__, str(exc), command)
    except InfeasibleError as exc:
        return _error(EXIT_FAIL, "InfeasibleError", str(exc), command)
    except (BlowUpError, EnsembleError) as exc:
        return _error(EXIT_BLOWUP, type(exc).__name__, str(exc), command)
    except OSError as exc:
        return _error(EXIT_FAIL, "OSError", str(exc), command)


def main() -> None:
    sys.exit(run_command())
