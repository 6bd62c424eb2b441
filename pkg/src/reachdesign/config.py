"""Run configuration: schema validation and problem construction."""

import copy
import json
from dataclasses import dataclass, field, replace
from importlib import resources

import jsonschema
import numpy as np

from . import benchmarks as bm
from .dynamics import UnstableCandidateError
from .geometry import Box, HPolytope
from .objective import CostSpec
from .optimizer import CoDesignProblem, SolverOptions
from .reach import ReachSpec

CONFIG_VERSION = 1
MODELS = ("active_suspension", "tms_subsystem", "affine_discrete")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _schema():
    text = resources.files("reachdesign").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    version: int
    model: dict
    design: dict = field(default_factory=dict)
    spec: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    output_dir: str = None
    seed: int = None

    @classmethod
    def from_dict(cls, d):
        try:
            jsonschema.validate(d, _schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        d = copy.deepcopy(d)
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self):
        d = {"version": self.version, "model": copy.deepcopy(self.model)}
        for key in ("design", "spec", "cost", "solver", "verify", "simulate"):
            val = getattr(self, key)
            if val:
                d[key] = copy.deepcopy(val)
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @property
    def design_point(self):
        p = self.design.get("p")
        return None if p is None else np.asarray(p, dtype=float)


def _suspension(cfg):
    raw = dict(cfg.model.get("params", {}))
    kw = {"disturbance": raw.pop("disturbance", "hold")}
    kw["params"] = bm.SuspensionParams(**raw)
    if "N" in cfg.spec:
        kw["N"] = cfg.spec["N"]
    if "dt" in cfg.spec:
        kw["dt"] = cfg.spec["dt"]
    return bm.suspension_problem(bm.SuspensionSetup(**kw))


def _tms(cfg):
    raw = dict(cfg.model.get("params", {}))
    for key in ("Q_cp_bounds", "T_tf_bounds"):
        if key in raw:
            raw[key] = tuple(raw[key])
    params = bm.TmsParams(**raw)
    missing = [k for k in ("R0", "X_safe", "N", "dt") if k not in cfg.spec]
    missing += [f"design.{k}" for k in ("lower", "upper") if k not in cfg.design]
    if missing:
        raise ConfigError(f"tms_subsystem needs {', '.join(missing)}")
    mp = cfg.cost.get("mp_weights", [1.0, 0.0])
    return bm.tms_problem(
        params,
        R0=Box(**cfg.spec["R0"]),
        X_safe=HPolytope(**cfg.spec["X_safe"]),
        N=cfg.spec["N"],
        dt=cfg.spec["dt"],
        design_lower=cfg.design["lower"],
        design_upper=cfg.design["upper"],
        mass_weight=mp[0],
    )


def _affine(cfg):
    prm = cfg.model.get("params", {})
    missing = [k for k in ("A0", "E", "K0") if k not in prm]
    missing += [f"spec.{k}" for k in ("R0", "V", "X_safe", "U_adm", "N") if k not in cfg.spec]
    missing += [f"design.{k}" for k in ("lower", "upper") if k not in cfg.design]
    if missing:
        raise ConfigError(f"affine_discrete needs {', '.join(missing)}")
    family = bm.affine_discrete_family(
        prm["A0"], prm["E"], prm["K0"], cfg.design["lower"], cfg.design["upper"],
        prm.get("A_terms", ()), prm.get("K_terms", ()), cfg.spec.get("dt", 1.0),
    )
    spec = ReachSpec(
        R0=Box(**cfg.spec["R0"]), V=Box(**cfg.spec["V"]), N=cfg.spec["N"],
        X_safe=HPolytope(**cfg.spec["X_safe"]), U_adm=HPolytope(**cfg.spec["U_adm"]),
    )
    return CoDesignProblem(family, spec, CostSpec(), name="affine_discrete")


_BUILDERS = {"active_suspension": _suspension, "tms_subsystem": _tms, "affine_discrete": _affine}


def _override_cost(base, overrides):
    keys = {k: v for k, v in overrides.items() if k != "mp_weights"}
    if "mp_weights" in overrides:
        keys["mp_weights"] = np.asarray(overrides["mp_weights"], dtype=float)
    for k in ("x_ref", "u_ref"):
        if k in keys:
            keys[k] = np.asarray(keys[k], dtype=float)
    if not keys:
        return base
    if callable(base):
        return lambda p: replace(base(p), **keys)
    return replace(base, **keys)


def build_problem(cfg):
    """Construct the :class:`CoDesignProblem` described by ``cfg``."""
    name = cfg.model["name"]
    try:
        problem = _BUILDERS[name](cfg)
        spec = problem.spec
        changes = {}
        for key, make in (("R0", Box), ("V", Box), ("X_safe", HPolytope), ("U_adm", HPolytope)):
            if key in cfg.spec:
                changes[key] = make(**cfg.spec[key])
        if "N" in cfg.spec:
            changes["N"] = cfg.spec["N"]
        if changes:
            if "R0" in changes:
                changes["R0_poly"] = None
            spec = replace(spec, **changes)
        family = problem.family
        if "lower" in cfg.design or "upper" in cfg.design:
            family = replace(
                family,
                lower=np.asarray(cfg.design.get("lower", family.lower), dtype=float),
                upper=np.asarray(cfg.design.get("upper", family.upper), dtype=float),
            )
        start_lo = cfg.design.get("start_lower", problem.start_lower)
        start_hi = cfg.design.get("start_upper", problem.start_upper)
        problem = replace(
            problem,
            family=family,
            spec=spec,
            cost=_override_cost(problem.cost, cfg.cost),
            start_lower=None if start_lo is None else np.asarray(start_lo, dtype=float),
            start_upper=None if start_hi is None else np.asarray(start_hi, dtype=float),
            max_generators=cfg.spec.get("max_generators"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot build {name} problem: {exc}") from None
    p = cfg.design_point
    if p is not None:
        if p.shape != (problem.n_params,):
            raise ConfigError(f"design.p has {p.shape[0]} entries, model expects {problem.n_params}")
        try:
            problem.cost_spec(p)
            model = problem.family(p)
            problem.spec.check_model(model)
        except UnstableCandidateError:
            pass
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"design.p does not give a valid model: {exc}") from None
    return problem


def solver_options(cfg, seed=None, starts=None):
    kw = dict(cfg.solver)
    if "scaling" in kw:
        kw["scaling"] = np.asarray(kw["scaling"], dtype=float)
    if seed is not None:
        kw["seed"] = seed
    elif cfg.seed is not None and "seed" not in kw:
        kw["seed"] = cfg.seed
    if starts is not None:
        kw["starts"] = starts
    try:
        return SolverOptions(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver options: {exc}") from None
