"""INI-style run configuration files.

Sections and keys (values may be quoted)::

    [coefficients]   preset, A, B, C, D, epsilon, enforce_ccond
    [domain]         x1, x2
    [discretization] m, dt, T, scheme, cutoff, save_stride
    [noise]          kind, kappa1, kappa2, decay_p, rank
    [run]            seed, n_paths, lambda_X, k_local, weight_delta, weight_gamma,
                     initial, ic_amplitude, ic_width, ic_center, ic_mode, ic_phase,
                     ic_speed, ic_file

``m``, ``dt`` and ``T`` are required, and the coefficients need either a
preset or all of A, B, C and D.  Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
from dataclasses import replace

from ..errors import ConfigError
from ..model import Coefficients, InitialCondition, SimConfig, preset, validate_config
from ..noise import NoiseSpec
from ..spectral import Domain


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "coefficients": {"preset": str, "A": float, "B": float, "C": float, "D": float,
                     "epsilon": float, "enforce_ccond": _bool},
    "domain": {"x1": float, "x2": float},
    "discretization": {"m": int, "dt": float, "T": float, "scheme": str, "cutoff": _bool,
                       "save_stride": int},
    "noise": {"kind": str, "kappa1": float, "kappa2": float, "decay_p": float, "rank": int},
    "run": {"seed": int, "n_paths": int, "lambda_X": float, "k_local": float,
            "weight_delta": float, "weight_gamma": float, "initial": str,
            "ic_amplitude": float, "ic_width": float, "ic_center": float, "ic_mode": int,
            "ic_phase": float, "ic_speed": float, "ic_file": str},
}
REQUIRED = {"discretization": ("m", "dt", "T")}
_IC_FIELDS = {"ic_amplitude": "amplitude", "ic_width": "width", "ic_center": "center",
              "ic_mode": "mode", "ic_phase": "phase", "ic_speed": "speed", "ic_file": "file"}


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _read(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (A, T, lambda_X)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        out[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            conv = SCHEMA[section][key]
            try:
                out[section][key] = conv(_unquote(raw))
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in out.get(section, {}):
                raise ConfigError(f"missing required key {key!r} in [{section}]")
    return out


def config_from_mapping(data: dict, validate: bool = True) -> SimConfig:
    co = dict(data.get("coefficients", {}))
    enforce = co.pop("enforce_ccond", True)
    name = co.pop("preset", None)
    if name is not None:
        try:
            coeffs = preset(name, **co)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        missing = [k for k in ("A", "B", "C", "D") if k not in co]
        if missing:
            raise ConfigError(f"missing required key(s) {missing} in [coefficients] (or give a preset)")
        coeffs = Coefficients(**co)
    dom = data.get("domain", {})
    domain = Domain(dom.get("x1", -10.0), dom.get("x2", 10.0))
    disc = data.get("discretization", {})
    noise = NoiseSpec(**data.get("noise", {}))
    run = dict(data.get("run", {}))
    ic_kw = {_IC_FIELDS[k]: run.pop(k) for k in list(run) if k in _IC_FIELDS}
    kind = run.pop("initial", InitialCondition().kind)
    initial = InitialCondition(kind=kind, **ic_kw)
    cfg = SimConfig(coefficients=coeffs, domain=domain, noise=noise, initial=initial,
                    enforce_ccond=enforce, **disc, **run)
    return validate_config(cfg) if validate else cfg


def parse_config_text(text: str) -> SimConfig:
    return config_from_mapping(_read(text))


def parse_config(path) -> SimConfig:
    """Read and validate a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def config_snapshot(config: SimConfig) -> dict:
    """Nested mapping with every key of the file format."""
    c, d, n, ic = config.coefficients, config.domain, config.noise, config.initial
    return {
        "coefficients": {"A": c.A, "B": c.B, "C": c.C, "D": c.D, "epsilon": c.epsilon,
                         "enforce_ccond": config.enforce_ccond},
        "domain": {"x1": d.x1, "x2": d.x2},
        "discretization": {"m": config.m, "dt": config.dt, "T": config.T, "scheme": config.scheme,
                           "cutoff": config.cutoff, "save_stride": config.save_stride},
        "noise": {"kind": n.kind, "kappa1": n.kappa1, "kappa2": n.kappa2, "decay_p": n.decay_p,
                  "rank": n.rank},
        "run": {"seed": config.seed, "n_paths": config.n_paths, "lambda_X": config.lambda_X,
                "k_local": config.k_local, "weight_delta": config.weight_delta,
                "weight_gamma": config.weight_gamma, "initial": ic.kind,
                "ic_amplitude": ic.amplitude, "ic_width": ic.width, "ic_center": ic.center,
                "ic_mode": ic.mode, "ic_phase": ic.phase, "ic_speed": ic.speed, "ic_file": ic.file},
    }


_NOTES = {
    "enforce_ccond": "reject configs with 3B < A + 1",
    "scheme": "auto | euler | lawson4 (lawson4 needs noise off)",
    "cutoff": "apply the derivative-norm cutoffs in the drift",
    "kind": "off | diagonal_gain | pointwise_multiplicative",
    "rank": "0 = full basis dimension",
    "k_local": "0 = half the largest admissible value",
    "initial": "gaussian | soliton | mode | zero | file",
    "ic_speed": "0 = speed giving a well-localised soliton",
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    return repr(value)


def format_config(config: SimConfig) -> str:
    """Canonical text form; ``parse_config_text(format_config(c))`` reproduces ``c``."""
    lines = []
    for section, items in config_snapshot(config).items():
        lines.append(f"[{section}]")
        for key, value in items.items():
            note = _NOTES.get(key)
            lines.append(f"{key} = {_fmt(value)}" + (f"  # {note}" if note else ""))
        lines.append("")
    return "\n".join(lines)


def default_config_text() -> str:
    return format_config(validate_config(SimConfig()))


def with_overrides(config: SimConfig, **kw) -> SimConfig:
    return replace(config, grid_size=0, **kw)
