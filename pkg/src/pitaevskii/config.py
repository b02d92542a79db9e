"""Run configuration: an INI schema with strict parsing and exact round-trip.

Sections and keys (``*`` marks required keys; everything else has the
default shown):

    [grid]      nx*, ny*
    [params]    lam*, mu*, nu*, alpha*, p*, m_i*, M_i*, m_f*
    [stepper]   dt = 1e-3, scheme = imex_cnab2, density_method = pseudospectral,
                cfl_target = 0.5, adaptive = false, max_dt = 1e-2, min_dt = 1e-8,
                pressure_tol = 1e-10, pressure_maxiter = 200
    [initial]   recipe = band_limited_random, eps = 1e-2, psi_const = 0,
                rho_const = none, shell = 2, rho_shell = 2, rho_random = true,
                modes = (empty), budget = 1/3 1/3 1/3, seed = 0
    [run]       horizon*, cadence = none (every step), snapshot_every = none,
                output_dir = output
    [oracle]    kmax = none (largest mode of the grid's dealiased band),
                quad_factor = 4, dt = 5e-4, horizon = none (run horizon),
                sample_every = 0.01
    [fit]       functional = S, window_start = none, window_end = none

``none`` spells an absent optional value. ``modes`` lists prescribed modes
as ``field j1 j2 coefficient`` entries separated by ``;``, e.g.
``psi 1 0 0.01+0j; ux 0 1 0.002``. Floats are written with 17 significant
digits so that ``parse_config(format_config(cfg)) == cfg``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Optional

from .dynamics import StepperConfig
from .state import InitialData, SystemParams


class ConfigError(ValueError):
    """Invalid configuration text; the message names the offending key."""


REQUIRED = object()


@dataclass(frozen=True)
class OracleConfig:
    kmax: Optional[int] = None
    quad_factor: int = 4
    dt: float = 5e-4
    horizon: Optional[float] = None
    sample_every: float = 0.01


@dataclass(frozen=True)
class FitConfig:
    functional: str = "S"
    window_start: Optional[float] = None
    window_end: Optional[float] = None

    def __post_init__(self):
        if self.functional not in ("S", "E", "X", "Z", "W"):
            raise ValueError(f"functional must be one of S, E, X, Z, W; got {self.functional!r}")


@dataclass(frozen=True)
class RunConfig:
    nx: int
    ny: int
    params: SystemParams
    horizon: float
    stepper: StepperConfig = field(default_factory=StepperConfig)
    initial: InitialData = field(default_factory=InitialData)
    seed: int = 0
    cadence: Optional[float] = None
    snapshot_every: Optional[float] = None
    output_dir: str = "output"
    oracle: OracleConfig = field(default_factory=OracleConfig)
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if not self.horizon >= 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        for name in ("cadence", "snapshot_every"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")


# --- value codecs ---------------------------------------------------------


def _fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    return f"{_fmt_float(z.real)}{format(z.imag, '+.17g')}j"


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _optional(parse: Callable) -> Callable:
    def inner(s: str):
        return None if s.strip().lower() == "none" else parse(s)
    return inner


def _fmt_optional(fmt: Callable) -> Callable:
    return lambda v: "none" if v is None else fmt(v)


def _parse_int(s: str) -> int:
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _parse_modes(s: str) -> tuple:
    out = []
    for chunk in s.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split()
        if len(parts) != 4:
            raise ValueError(f"mode entry {chunk!r} needs 'field j1 j2 coefficient'")
        out.append((parts[0], _parse_int(parts[1]), _parse_int(parts[2]), complex(parts[3])))
    return tuple(out)


def _fmt_modes(modes) -> str:
    return "; ".join(f"{f} {j1} {j2} {_fmt_complex(c)}" for f, j1, j2, c in modes)


def _parse_budget(s: str) -> tuple:
    parts = s.replace(",", " ").split()
    if len(parts) != 3:
        raise ValueError(f"budget needs three shares, got {s!r}")
    return tuple(_parse_fraction(p) for p in parts)


def _parse_fraction(s: str) -> float:
    if "/" in s:
        num, den = s.split("/", 1)
        return float(num) / float(den)
    return float(s)


_F = (float, _fmt_float)
_I = (_parse_int, str)
_S = (str.strip, str)
_B = (_parse_bool, lambda b: "true" if b else "false")
_OF = (_optional(float), _fmt_optional(_fmt_float))
_OI = (_optional(_parse_int), _fmt_optional(str))

# section -> key -> (parse, format, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {"nx": (*_I, REQUIRED), "ny": (*_I, REQUIRED)},
    "params": {k: (*_F, REQUIRED) for k in ("lam", "mu", "nu", "alpha", "p", "m_i", "M_i", "m_f")},
    "stepper": {
        "dt": (*_F, 1e-3),
        "scheme": (*_S, "imex_cnab2"),
        "density_method": (*_S, "pseudospectral"),
        "cfl_target": (*_F, 0.5),
        "adaptive": (*_B, False),
        "max_dt": (*_F, 1e-2),
        "min_dt": (*_F, 1e-8),
        "pressure_tol": (*_F, 1e-10),
        "pressure_maxiter": (*_I, 200),
    },
    "initial": {
        "recipe": (*_S, "band_limited_random"),
        "eps": (*_OF, 1e-2),
        "psi_const": (complex, _fmt_complex, 0j),
        "rho_const": (*_OF, None),
        "shell": (*_I, 2),
        "rho_shell": (*_I, 2),
        "rho_random": (*_B, True),
        "modes": (_parse_modes, _fmt_modes, ()),
        "budget": (_parse_budget, lambda b: " ".join(_fmt_float(x) for x in b),
                   (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)),
        "seed": (*_I, 0),
    },
    "run": {
        "horizon": (*_F, REQUIRED),
        "cadence": (*_OF, None),
        "snapshot_every": (*_OF, None),
        "output_dir": (*_S, "output"),
    },
    "oracle": {
        "kmax": (*_OI, None),
        "quad_factor": (*_I, 4),
        "dt": (*_F, 5e-4),
        "horizon": (*_OF, None),
        "sample_every": (*_F, 0.01),
    },
    "fit": {
        "functional": (*_S, "S"),
        "window_start": (*_OF, None),
        "window_end": (*_OF, None),
    },
}


def _read_sections(text: str) -> dict[str, dict[str, Any]]:
    cp = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    cp.optionxform = str  # keep case: m_i and M_i are different keys
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values: dict[str, dict[str, Any]] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            parse = SCHEMA[section][key][0]
            try:
                values.setdefault(section, {})[key] = parse(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
    for section, keys in SCHEMA.items():
        got = values.setdefault(section, {})
        for key, (_, _, default) in keys.items():
            if key not in got:
                if default is REQUIRED:
                    raise ConfigError(f"missing required key {section}.{key}")
                got[key] = default
    return values


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text; errors name the offending key."""
    v = _read_sections(text)
    pv = v["params"]
    if pv["p"] == 0:
        raise ConfigError(
            "params.p = 0 gives a linear Schrodinger equation with no relaxation "
            "nonlinearity; that case is outside this model (need p > 0)"
        )
    if pv["m_f"] >= pv["m_i"]:
        raise ConfigError(
            f"params.m_f = {pv['m_f']} must lie strictly below params.m_i = {pv['m_i']}: "
            "the density floor sits under the initial lower bound (0 < m_f < m_i)"
        )
    try:
        params = SystemParams(**pv)
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None
    try:
        stepper = StepperConfig(**v["stepper"])
    except ValueError as exc:
        raise ConfigError(f"stepper: {exc}") from None
    init = dict(v["initial"])
    seed = init.pop("seed")
    try:
        initial = InitialData(**init)
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from None
    try:
        fit = FitConfig(**v["fit"])
    except ValueError as exc:
        raise ConfigError(f"fit.functional: {exc}") from None
    oracle = OracleConfig(**v["oracle"])
    if not oracle.dt > 0:
        raise ConfigError("oracle.dt must be positive")
    try:
        return RunConfig(
            nx=v["grid"]["nx"], ny=v["grid"]["ny"], params=params,
            horizon=v["run"]["horizon"], stepper=stepper, initial=initial, seed=seed,
            cadence=v["run"]["cadence"], snapshot_every=v["run"]["snapshot_every"],
            output_dir=v["run"]["output_dir"], oracle=oracle, fit=fit,
        )
    except ValueError as exc:
        raise ConfigError(f"run: {exc}") from None


def _section_values(cfg: RunConfig) -> dict[str, dict[str, Any]]:
    initial = {f.name: getattr(cfg.initial, f.name) for f in fields(cfg.initial)}
    initial["seed"] = cfg.seed
    return {
        "grid": {"nx": cfg.nx, "ny": cfg.ny},
        "params": {f.name: getattr(cfg.params, f.name) for f in fields(cfg.params)},
        "stepper": {f.name: getattr(cfg.stepper, f.name) for f in fields(cfg.stepper)},
        "initial": initial,
        "run": {"horizon": cfg.horizon, "cadence": cfg.cadence,
                "snapshot_every": cfg.snapshot_every, "output_dir": cfg.output_dir},
        "oracle": {f.name: getattr(cfg.oracle, f.name) for f in fields(cfg.oracle)},
        "fit": {f.name: getattr(cfg.fit, f.name) for f in fields(cfg.fit)},
    }


def format_config(cfg: RunConfig) -> str:
    """Configuration text that parses back to an equal RunConfig."""
    lines = []
    for section, values in _section_values(cfg).items():
        lines.append(f"[{section}]")
        for key, (_, fmt, _) in SCHEMA[section].items():
            lines.append(f"{key} = {fmt(values[key])}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
