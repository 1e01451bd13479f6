"""Scenario configs: loading, running, persisting and reporting.

A scenario is a JSON object::

    {"name": ..., "description": ...,
     "curve": {"kind": ..., "S": ..., "h": ...} | {"file": "path.csv"},
     "flow": {"preset": "CSF"} | {"preset": "ElasticFlow", "lam": 1.0}
             | {"sigma": .., "lam": .., "mu": .., "vartheta": ..},
     "solver": {...},
     "diagnostics": ["energy", "classify", ...],
     "options": {...},
     "seed": 0}

Shipped configs live in ``curveflow/configs``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics as dg
from .energies import adapted_energy
from .flows import BLOWUP, REACHED_END, FlowParams, SolverConfig, preset, simulate
from .geometry import build_reference, spec_from_dict
from .io import append_diagnostics, load_curve, write_json, write_run

DIAGNOSTICS = ("energy", "energy_audit", "classify", "rotation", "quantization", "blowup_fit",
               "loops", "convergence", "drift", "translator", "radius")


class ConfigError(ValueError):
    """Invalid scenario configuration."""


@dataclass
class ScenarioConfig:
    name: str
    curve: dict
    flow: dict
    solver: dict
    diagnostics: list = field(default_factory=list)
    options: dict = field(default_factory=dict)
    description: str = ""
    seed: int = 0
    base_dir: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        missing = {"name", "curve", "flow", "solver"} - set(d)
        if missing:
            raise ConfigError(f"config is missing {sorted(missing)}")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        cfg = cls(**d, base_dir=None if base_dir is None else str(base_dir))
        unknown = set(cfg.diagnostics) - set(DIAGNOSTICS)
        if unknown:
            raise ConfigError(f"unknown diagnostics {sorted(unknown)}")
        if "file" in cfg.curve and not cfg.curve_path().is_file():
            raise ConfigError(f"curve file not found: {cfg.curve_path()}")
        # parse eagerly so that errors surface before any run
        cfg.flow_params()
        cfg.solver_config()
        if "file" not in cfg.curve:
            try:
                spec_from_dict(cfg.curve)
            except (TypeError, KeyError, ValueError) as exc:
                raise ConfigError(f"bad curve spec: {exc}") from exc
        return cfg

    def curve_path(self) -> Path:
        p = Path(self.curve["file"])
        if not p.is_absolute() and self.base_dir:
            p = Path(self.base_dir) / p
        return p

    def build_curve(self):
        if "file" in self.curve:
            return load_curve(self.curve_path())
        return build_reference(spec_from_dict(self.curve))

    def flow_params(self) -> FlowParams:
        f = dict(self.flow)
        try:
            if "preset" in f:
                name = f.pop("preset")
                lam = f.pop("lam", 1.0)
                if f:
                    raise ConfigError(f"unknown flow keys {sorted(f)}")
                return preset(name, lam=lam)
            return FlowParams(**f)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad flow: {exc}") from exc

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig.from_dict(self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver: {exc}") from exc

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "curve": self.curve,
                "flow": self.flow, "solver": self.solver, "diagnostics": list(self.diagnostics),
                "options": self.options, "seed": self.seed}


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return ScenarioConfig.from_dict(d, base_dir=path.parent)


def _config_dir():
    return resources.files("curveflow") / "configs"


def list_scenarios() -> list:
    return sorted(p.name[:-5] for p in _config_dir().iterdir() if p.name.endswith(".json"))


def scenario_config(name: str) -> ScenarioConfig:
    f = _config_dir() / f"{name}.json"
    if not f.is_file():
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(list_scenarios())}")
    return ScenarioConfig.from_dict(json.loads(f.read_text()))


# diagnostics ----------------------------------------------------------------


def _rotation_series(traj):
    out = []
    for c in traj.snapshots:
        try:
            out.append(dg.rotation_number(c))
        except ValueError:
            out.append(None)
    return out


def run_diagnostics(cfg: ScenarioConfig, traj) -> dict:
    """Evaluate the configured diagnostics; every entry is JSON-ready."""
    opt = cfg.options
    params = traj.params
    c0, c1 = traj.snapshots[0], traj.snapshots[-1]
    rep = {}
    for name in cfg.diagnostics:
        if name == "energy":
            lam = params.lam if params.lam > 0 else 1.0
            rep[name] = {"initial": adapted_energy(c0, 1.0, lam).to_dict(),
                         "final": adapted_energy(c1, 1.0, lam).to_dict()}
        elif name == "energy_audit":
            rep[name] = dg.energy_decay_audit(traj, params).to_dict()
        elif name == "classify":
            rep[name] = dg.classify_limit(c1).to_dict()
        elif name == "rotation":
            rot = _rotation_series(traj)
            rep[name] = {"series": rot, "constant": len(set(rot)) == 1 and rot[0] is not None}
        elif name == "quantization":
            rep[name] = dg.quantization_check(c0).to_dict()
        elif name == "blowup_fit":
            if traj.termination.status != BLOWUP:
                rep[name] = {"error": "no blow-up detected"}
                continue
            win = tuple(opt.get("fit_window", (50.0, 500.0)))
            try:
                rep[name] = dg.fit_blowup_rate(traj, window=win).to_dict()
            except ValueError as exc:
                rep[name] = {"error": str(exc)}
        elif name == "loops":
            tr = dg.loop_tracker(traj)
            sep = tr.separations()
            gap = sep[:, 0] if sep.size else np.empty(0)
            rep[name] = {"times": tr.times, "separation": gap.tolist(),
                         "longest_increasing_run": dg.longest_increasing_run(gap),
                         "rotation_changed": tr.rotation_changed}
        elif name == "convergence":
            B = [adapted_energy(c).bending for c in traj.snapshots]
            dev = [dg.tangent_deviation(c) for c in traj.snapshots]
            kinf = [float(np.max(np.linalg.norm(c.curvature[c.interior], axis=1)))
                    for c in traj.snapshots]
            rep[name] = {"times": list(traj.snapshot_times), "bending": B,
                         "tangent_deviation": dev, "kappa_sup": kinf,
                         "bending_ratio": B[-1] / B[0] if B[0] > 0 else None,
                         "bending_decreasing": bool(np.all(np.diff(B) <= 0))}
        elif name == "drift":
            rep[name] = {"max_node_drift": dg.max_node_drift(traj), "h": c0.h,
                         "drift_over_h2": dg.max_node_drift(traj) / c0.h**2}
        elif name == "translator":
            width = opt.get("width", float(np.pi))
            offs = [dg.grim_reaper_offset(c, t, width)
                    for c, t in zip(traj.snapshots, traj.snapshot_times)]
            rep[name] = {"times": list(traj.snapshot_times), "offset": offs, "max_offset": max(offs)}
        elif name == "radius":
            rep[name] = {"t_max": opt.get("radius_t_max", 0.4),
                         "max_rel_error": dg.circle_radius_error(traj, opt.get("radius_t_max", 0.4))}
    return rep


# running --------------------------------------------------------------------


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trajectory: object
    report: dict
    run_dir: Optional[Path]
    runtime: float


def run_scenario(cfg: ScenarioConfig, out_dir=None, plots: bool = True) -> ScenarioResult:
    """Simulate, diagnose and (with ``out_dir``) persist to ``out_dir/<name>``."""
    np.random.seed(cfg.seed)
    curve = cfg.build_curve()
    params = cfg.flow_params()
    solver = cfg.solver_config()
    t0 = time.perf_counter()
    traj = simulate(curve, params, solver)
    runtime = time.perf_counter() - t0
    report = {
        "name": cfg.name,
        "status": traj.termination.status,
        "T_hat": traj.termination.T_hat,
        "message": traj.termination.message,
        "steps": traj.steps,
        "rejections": traj.rejections,
        "t_final": float(traj.series["t"][-1]),
        "runtime_s": runtime,
        "diagnostics": run_diagnostics(cfg, traj),
    }
    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / cfg.name
        write_run(traj, run_dir, extra={"config": cfg.to_dict()})
        for name, r in report["diagnostics"].items():
            append_diagnostics(run_dir, name, r)
        write_json(_reproducible(report), run_dir / "report.json")
        if plots:
            from .plotting import render_run

            render_run(traj, run_dir, report)
    return ScenarioResult(cfg, traj, report, run_dir, runtime)


def _reproducible(report):
    # wall-clock time would make otherwise identical runs differ
    r = dict(report)
    r.pop("runtime_s", None)
    return r


def scenario_ok(report: dict) -> bool:
    """Clean finish: the run reached ``t_end`` or stopped at a detected blow-up."""
    return report["status"] in (REACHED_END, BLOWUP)
