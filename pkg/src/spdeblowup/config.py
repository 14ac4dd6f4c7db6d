"""Plain-text experiment configuration.

One ``key = value`` per line. Keys are dotted (``model.H``) or relative to the
most recent ``[section]`` header (``[coeff.a]`` then ``c = 0.5``). ``#``
starts a comment. Unknown keys are rejected. ``Config.echo`` writes every key
in canonical form, and parsing the echo reproduces the same Config.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .functionals import ModelParams
from .montecarlo import ExperimentConfig
from .noise import CoefficientSpec, DependenceMode, TimeGrid, validate_hurst
from .bounds import GammaLawParams
from .spde import SpectralDomain


class ConfigError(ValueError):
    pass


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v) and v != math.inf:
        raise ValueError(f"{s!r} is not a number")
    return v


def _int(s: str) -> int:
    return int(s, 0)


def _opt_float(s: str) -> Optional[float]:
    return None if s == "" else _float(s)


def _floats(s: str) -> tuple:
    return tuple(_float(x) for x in s.replace(",", " ").split())


def _choice(*options) -> Callable[[str], str]:
    def parse(s: str) -> str:
        s = s.strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s

    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str


def _coeff_keys(name: str, c: float) -> dict:
    return {
        f"coeff.{name}.kind": Key(_choice("constant", "power"), "constant", f"{name}(t) shape: constant or power"),
        f"coeff.{name}.c": Key(_float, c, f"{name}(t) = c t^e, amplitude c >= 0"),
        f"coeff.{name}.e": Key(_float, 0.0, f"{name}(t) = c t^e, exponent e >= 0 (power kind only)"),
    }


SCHEMA: dict = {
    "model.H": Key(_float, 0.75, "Hurst parameter in (1/2, 1)"),
    "model.beta": Key(_float, 1.0, "nonlinearity exponent: g(z) >= C z^(1+beta)"),
    "model.C": Key(_float, 1.0, "lower nonlinearity constant C >= 0"),
    "model.Lambda": Key(_float, 1.0, "upper nonlinearity constant Lambda >= C"),
    "model.lambda0": Key(_float, 1.0, "principal eigenvalue of the spatial operator"),
    "model.p_scale": Key(_float, 16.0 / math.pi, "initial condition phi = p_scale psi0"),
    **_coeff_keys("a", 0.5),
    **_coeff_keys("b", 0.5),
    **_coeff_keys("k", math.sqrt(2.0)),
    "noise.mode": Key(_choice("identical", "independent", "correlated"), "identical", "coupling of B and B^H"),
    "noise.rho": Key(_float, 0.0, "driver correlation for the correlated mode"),
    "grid.T": Key(_float, 5.0, "time horizon"),
    "grid.n_steps": Key(_int, 1000, "number of uniform time steps"),
    "mc.n_paths": Key(_int, 100, "number of trajectories"),
    "mc.seed": Key(_int, 0, "master seed (unsigned 64-bit)"),
    "mc.chunk": Key(_int, 250, "trajectories per work unit"),
    "solver.n_modes": Key(_int, 64, "sine modes in the spectral solver"),
    "solver.threshold": Key(_float, 1e8, "sup-norm blowup threshold"),
    "solver.substeps": Key(_int, 0, "solver substeps per noise step (0 = automatic)"),
    "experiment.T_values": Key(_floats, (0.5, 1.0, 2.0), "times T for P(tau* <= T)"),
    "experiment.eta": Key(_opt_float, None, "eta in (0, inf] for the gamma-law bound (blank = skip)"),
    "experiment.c1": Key(_opt_float, None, "c1 > 0 for the gamma-law bound (blank = skip)"),
}


def _render(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, tuple):
        return " ".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class Config:
    values: tuple  # (key, value) pairs in schema order

    def __getitem__(self, key: str):
        return dict(self.values)[key]

    @classmethod
    def default(cls) -> "Config":
        return cls(tuple((k, spec.default) for k, spec in SCHEMA.items()))

    def override(self, updates: dict) -> "Config":
        vals = dict(self.values)
        for key, raw in updates.items():
            vals[key] = _coerce(key, raw)
        out = Config(tuple((k, vals[k]) for k in SCHEMA))
        out.validate()
        return out

    def echo(self) -> str:
        return "".join(f"{k} = {_render(v)}\n" for k, v in self.values)

    # ------------------------------------------------------------ conversion

    def coefficient(self, name: str) -> CoefficientSpec:
        kind, c, e = (self[f"coeff.{name}.{f}"] for f in ("kind", "c", "e"))
        if kind == "constant" and e != 0.0:
            raise ConfigError(f"coeff.{name}: constant kind takes no exponent (got e={e})")
        return CoefficientSpec.constant(c) if kind == "constant" else CoefficientSpec.power(c, e)

    def dependence(self) -> DependenceMode:
        return DependenceMode.parse(self["noise.mode"], self["noise.rho"])

    def grid(self) -> TimeGrid:
        return TimeGrid(self["grid.T"], self["grid.n_steps"])

    def domain(self) -> SpectralDomain:
        return SpectralDomain(self["solver.n_modes"])

    def params(self, domain: Optional[SpectralDomain] = None) -> ModelParams:
        """Model parameters with phi = p_scale psi0 on the sine domain."""
        domain = domain or self.domain()
        p = self["model.p_scale"]
        return ModelParams(
            H=self["model.H"],
            beta=self["model.beta"],
            C_low=self["model.C"],
            Lambda=self["model.Lambda"],
            lambda0=self["model.lambda0"],
            a=self.coefficient("a"),
            b=self.coefficient("b"),
            k=self.coefficient("k"),
            pairing=p * domain.pairing(domain.psi0),
            psi_sup=domain.sup_norm(domain.psi0),
            p_scale=p,
        )

    def gamma(self) -> Optional[GammaLawParams]:
        eta, c1 = self["experiment.eta"], self["experiment.c1"]
        if eta is None and c1 is None:
            return None
        if eta is None or c1 is None:
            raise ConfigError("experiment.eta and experiment.c1 must be given together")
        return GammaLawParams(eta, c1)

    def experiment(self) -> ExperimentConfig:
        grid = self.grid()
        T_values = tuple(t for t in self["experiment.T_values"])
        return ExperimentConfig(
            params=self.params(),
            dependence=self.dependence(),
            grid=grid,
            n_paths=self["mc.n_paths"],
            master_seed=self["mc.seed"],
            T_values=T_values,
            gamma=self.gamma(),
            chunk=self["mc.chunk"],
        )

    def validate(self) -> None:
        """Build every derived object once so bad values fail early with a clear message."""
        try:
            validate_hurst(self["model.H"])
            seed = self["mc.seed"]
            if not 0 <= seed < 2**64:
                raise ConfigError(f"mc.seed must be an unsigned 64-bit integer, got {seed}")
            if self["solver.substeps"] < 0:
                raise ConfigError("solver.substeps must be >= 0")
            if self["solver.threshold"] < 1e6:
                raise ConfigError("solver.threshold must be >= 1e6")
            self.experiment()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def _coerce(key: str, raw: Any):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(raw, str):
        return raw
    try:
        return SCHEMA[key].parse(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def parse_config(text: str, base: Optional[Config] = None) -> Config:
    base = base or Config.default()
    section = ""
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        candidates = ([f"{section}.{key}"] if section else []) + [key]
        full = next((c for c in candidates if c in SCHEMA), candidates[0])
        if full not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {full!r}")
        if full in updates:
            raise ConfigError(f"line {lineno}: duplicate key {full!r}")
        updates[full] = value
    return base.override(updates)


def load_config(path: str) -> Config:
    with open(path) as fh:
        return parse_config(fh.read())


def describe_keys() -> str:
    width = max(map(len, SCHEMA))
    return "\n".join(f"  {k.ljust(width)}  {spec.doc} (default: {_render(spec.default) or 'unset'})" for k, spec in SCHEMA.items())
