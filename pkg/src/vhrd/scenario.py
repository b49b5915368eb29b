"""JSON scenario files: parsing, validation and round-trip serialization.

Schema version 1::

    {
      "version": 1,
      "name": "optional label",
      "grid": {"dim": 1, "n": [101], "lengths": [1.0]},
      "coefficients": {"delta1": P, "delta2": P, "lambda": P, "beta": P,
                       "sigma1": P, "sigma2": P, "mu": P, "h_u": P},
      "initial": {"h_i": P, "v_u": P, "v_i": P},
      "solver": {"eig_tol": 1e-9, "eq_tol": 1e-10, "dt": null, "horizon": 200.0,
                 "settle_tol": 1e-8, "classify_tol": null, "sample_every": null,
                 "snapshot_times": []},
      "sweep": {"parameter": "diffusion", "values": [...], "simulate": false},
      "ode": {"params": {...}, "initial": {"h_i": 0.1, "v_u": 1.0, "v_i": 0.0},
              "dt": 0.01, "horizon": 200.0, "settle_tol": 1e-10}
    }

``P`` is a profile object, e.g. ``{"profile": "constant", "value": 1.0}``;
see :func:`vhrd.grid.profile_from_dict`. ``initial``, ``sweep`` and ``ode``
are optional.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .grid import (COEFFICIENT_NAMES, Constant, Grid, ModelCoefficients, Profile,
                   build_grid, field_from_profile, profile_from_dict)
from .ode import OdeParams, OdeState
from .state import SimState

SCHEMA_VERSION = 1
# JSON spelling of each coefficient
JSON_NAMES = {name: ("lambda" if name == "lambda_" else name) for name in COEFFICIENT_NAMES}
STATE_NAMES = ("h_i", "v_u", "v_i")
SWEEP_DIFFUSION = ("diffusion", "delta1", "delta2")


@dataclass
class SolverSpec:
    eig_tol: float = 1e-9
    eq_tol: float = 1e-10
    dt: float | None = None
    horizon: float = 200.0
    settle_tol: float = 1e-8
    classify_tol: float | None = None
    sample_every: int | None = None
    snapshot_times: list[float] = field(default_factory=list)


@dataclass
class SweepSpec:
    parameter: str
    values: list[float]
    simulate: bool = False


@dataclass
class OdeSpec:
    params: dict[str, float] | None = None
    initial: dict[str, float] = field(default_factory=lambda: {"h_i": 0.1, "v_u": 1.0, "v_i": 0.0})
    dt: float = 0.01
    horizon: float = 200.0
    settle_tol: float | None = 1e-10


@dataclass
class Scenario:
    grid: dict[str, Any]
    coefficients: dict[str, Profile]
    initial: dict[str, Profile] | None = None
    solver: SolverSpec = field(default_factory=SolverSpec)
    sweep: SweepSpec | None = None
    ode: OdeSpec | None = None
    name: str = ""
    version: int = SCHEMA_VERSION

    def build_grid(self) -> Grid:
        g = self.grid
        n = g["n"]
        try:
            return build_grid(g["dim"], n[0], n[1] if g["dim"] == 2 else None, g["lengths"])
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def build_coefficients(self, grid: Grid | None = None) -> ModelCoefficients:
        grid = self.build_grid() if grid is None else grid
        fields_ = {}
        for name, json_name in JSON_NAMES.items():
            try:
                fields_[name] = field_from_profile(grid, self.coefficients[json_name], coefficient=True,
                                                   name=f"coefficients.{json_name}")
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return ModelCoefficients(**fields_)

    def build_initial(self, grid: Grid | None = None) -> SimState:
        if self.initial is None:
            raise ConfigError("initial: this command needs initial-condition profiles")
        grid = self.build_grid() if grid is None else grid
        values = []
        for name in STATE_NAMES:
            try:
                f = field_from_profile(grid, self.initial[name], name=f"initial.{name}")
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if f.min() < 0:
                raise ConfigError(f"initial.{name}: initial densities must be nonnegative")
            values.append(f.values)
        return SimState(*values)

    def sweep_coefficients(self, coeffs: ModelCoefficients, value: float) -> ModelCoefficients:
        if self.sweep is None:
            raise ConfigError("sweep: block missing")
        p = self.sweep.parameter
        n = coeffs.grid.size
        if p == "diffusion":
            return coeffs.with_diffusion(value)
        if p in ("delta1", "delta2"):
            return coeffs.replace(**{p: np.full(n, float(value))})
        return coeffs.scaled("lambda_" if p == "lambda" else p, value)

    def ode_setup(self) -> tuple[OdeParams, OdeState]:
        spec = self.ode or OdeSpec()
        params = spec.params
        if params is None:
            params = {}
            for name, json_name in JSON_NAMES.items():
                if name in ("delta1", "delta2"):
                    continue
                prof = self.coefficients[json_name]
                if not isinstance(prof, Constant):
                    raise ConfigError(f"ode.params missing and coefficients.{json_name} is not constant")
                params[json_name] = prof.value
        try:
            p = OdeParams(lambda_=float(params["lambda"]), sigma1=float(params["sigma1"]),
                          sigma2=float(params["sigma2"]), beta=float(params["beta"]),
                          mu=float(params["mu"]), h_u=float(params["h_u"]))
        except KeyError as exc:
            raise ConfigError(f"ode.params: missing {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"ode.params: {exc}") from None
        init = spec.initial
        try:
            state = OdeState(float(init["h_i"]), float(init["v_u"]), float(init["v_i"]))
        except KeyError as exc:
            raise ConfigError(f"ode.initial: missing {exc}") from None
        if min(state.h_i, state.v_u, state.v_i) < 0:
            raise ConfigError("ode.initial: densities must be nonnegative")
        return p, state

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"version": self.version}
        if self.name:
            out["name"] = self.name
        out["grid"] = {"dim": self.grid["dim"], "n": list(self.grid["n"]),
                       "lengths": list(self.grid["lengths"])}
        out["coefficients"] = {k: v.to_dict() for k, v in self.coefficients.items()}
        if self.initial is not None:
            out["initial"] = {k: v.to_dict() for k, v in self.initial.items()}
        out["solver"] = asdict(self.solver)
        if self.sweep is not None:
            out["sweep"] = asdict(self.sweep)
        if self.ode is not None:
            out["ode"] = asdict(self.ode)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _section(raw: dict, key: str, cls, required: bool = False):
    if key not in raw:
        if required:
            raise ConfigError(f"{key}: section missing")
        return None
    body = raw[key]
    if not isinstance(body, dict):
        raise ConfigError(f"{key}: must be an object")
    known = set(cls.__dataclass_fields__)
    unknown = set(body) - known
    if unknown:
        raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
    try:
        return cls(**body)
    except TypeError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _profiles(raw: dict, section: str, names) -> dict[str, Profile]:
    body = raw.get(section)
    if not isinstance(body, dict):
        raise ConfigError(f"{section}: must be an object")
    missing = set(names) - set(body)
    extra = set(body) - set(names)
    if missing:
        raise ConfigError(f"{section}: missing {sorted(missing)}")
    if extra:
        raise ConfigError(f"{section}: unknown keys {sorted(extra)}")
    out = {}
    for name in names:
        try:
            out[name] = profile_from_dict(body[name])
        except ValueError as exc:
            raise ConfigError(f"{section}.{name}: {exc}") from None
    return out


def parse_scenario(raw: dict) -> Scenario:
    """Validate a decoded JSON document and build a :class:`Scenario`."""
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    version = raw.get("version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"version: expected {SCHEMA_VERSION}, got {version!r}")
    known = {"version", "name", "grid", "coefficients", "initial", "solver", "sweep", "ode"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")

    g = raw.get("grid")
    if not isinstance(g, dict) or set(g) != {"dim", "n", "lengths"}:
        raise ConfigError("grid: expected keys dim, n, lengths")
    dim = g["dim"]
    if dim not in (1, 2):
        raise ConfigError("grid.dim: must be 1 or 2")
    n, lengths = g["n"], g["lengths"]
    if isinstance(n, int):
        n = [n]
    if isinstance(lengths, (int, float)):
        lengths = [float(lengths)] * dim
    if len(n) != dim or len(lengths) != dim:
        raise ConfigError("grid: n and lengths need one entry per axis")
    grid = {"dim": dim, "n": [int(v) for v in n], "lengths": [float(v) for v in lengths]}

    scenario = Scenario(
        grid=grid,
        coefficients=_profiles(raw, "coefficients", list(JSON_NAMES.values())),
        initial=_profiles(raw, "initial", STATE_NAMES) if "initial" in raw else None,
        solver=_section(raw, "solver", SolverSpec) or SolverSpec(),
        sweep=_section(raw, "sweep", SweepSpec),
        ode=_section(raw, "ode", OdeSpec),
        name=str(raw.get("name", "")),
    )
    _validate(scenario)
    return scenario


def _validate(s: Scenario):
    sv = s.solver
    for key in ("eig_tol", "eq_tol", "horizon", "settle_tol"):
        if not getattr(sv, key) > 0:
            raise ConfigError(f"solver.{key}: must be positive")
    if sv.dt is not None and not sv.dt > 0:
        raise ConfigError("solver.dt: must be positive")
    grid = s.build_grid()
    s.build_coefficients(grid)
    if s.initial is not None:
        s.build_initial(grid)
    if s.sweep is not None:
        p = s.sweep.parameter
        if p not in SWEEP_DIFFUSION and p not in JSON_NAMES.values():
            raise ConfigError(f"sweep.parameter: {p!r} is neither a coefficient nor a diffusion constant")
        if not s.sweep.values:
            raise ConfigError("sweep.values: empty sweep list")
        if any(not float(v) > 0 for v in s.sweep.values):
            raise ConfigError("sweep.values: must be positive")


def load_scenario(path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return parse_scenario(raw)
