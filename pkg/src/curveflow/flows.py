"""Time integration of the general curvature flow.

The flow is

    d gamma / dt = -sigma nabla_s^2 kappa + lam kappa + mu |kappa|^2 kappa
                   + vartheta <kappa, nabla_s kappa> T,

which covers curve shortening (CSF), surface diffusion (SDF), Chen's flow,
the elastic flow with length penalty and the free elastic flow.

Each step is IMEX: the leading linear part, ``-sigma d_x^4 / |d_x gamma|^4``
for fourth-order flows or ``lam d_x^2 / |d_x gamma|^2`` for second-order
ones, is treated implicitly with the speed frozen at the current step.
Everything else is explicit.  The full velocity (tangential part included)
is stepped and the nodes are periodically redistributed by arclength.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .banded import SolveError, solve_banded_system, solve_cyclic_stencil, stencil_matrix_bands
from .geometry import COMPACT_STENCILS, DiscreteCurve, apply_stencil, integrate, resample_arclength
from .energies import bending_energy, direction_energy

log = logging.getLogger(__name__)

REACHED_END = "ReachedEnd"
BLOWUP = "BlowupDetected"
REJECTED = "StepRejected"


@dataclass(frozen=True)
class FlowParams:
    """Coefficients (sigma, lam, mu, vartheta) of the general flow."""

    sigma: float
    lam: float
    mu: float = 0.0
    vartheta: float = 0.0
    name: Optional[str] = None

    def __post_init__(self):
        if self.sigma < 0 or self.lam < 0:
            raise ValueError("sigma and lambda must be nonnegative")

    @property
    def order(self) -> int:
        return 2 if self.sigma == 0 else 4

    @property
    def is_gradient_flow(self) -> bool:
        """True when the flow is the L2 gradient flow of sigma B + lam D."""
        return self.vartheta == 0 and (
            (self.sigma == 0 and self.mu == 0) or self.mu == -0.5 * self.sigma
        )

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = ("CSF", "SDF", "Chen", "ElasticFlow", "FreeElasticFlow")


def preset(name: str, lam: float = 1.0) -> FlowParams:
    """Named flows.

    ``ElasticFlow`` takes the length penalty ``lam``; the others ignore it.
    """
    key = name.replace("-", "").replace("_", "").lower()
    if key == "csf":
        return FlowParams(0.0, 1.0, 0.0, 0.0, "CSF")
    if key == "sdf":
        return FlowParams(1.0, 0.0, 0.0, 0.0, "SDF")
    if key == "chen":
        return FlowParams(1.0, 0.0, 1.0, 3.0, "Chen")
    if key in ("elasticflow", "ef", "lambdaef"):
        return FlowParams(1.0, float(lam), -0.5, 0.0, "ElasticFlow")
    if key in ("freeelasticflow", "fef"):
        return FlowParams(1.0, 0.0, -0.5, 0.0, "FreeElasticFlow")
    raise ValueError(f"unknown flow preset {name!r}")


@dataclass(frozen=True)
class AdaptiveDt:
    """Step-size control: keep ``max|v| dt <= safety * h``.

    With ``parabolic`` set, also keep ``dt * max|kappa|^order <= parabolic``
    so that the step follows the intrinsic time scale of a shrinking feature.
    """

    safety: float = 0.1
    dt_min: float = 1e-12
    dt_max: float = 1e-2
    grow: float = 1.2
    grow_after: int = 20
    parabolic: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.dt_min < self.dt_max:
            raise ValueError("need 0 < dt_min < dt_max")


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping options.

    ``dt`` is the initial step; with ``adaptive`` set it is then controlled.
    Snapshots are stored at the first step past each multiple of
    ``snapshot_dt``.  ``record_every`` thins the per-step scalar series.
    """

    dt: float
    t_end: float
    adaptive: Optional[AdaptiveDt] = None
    reparametrize_every: int = 10
    kappa_max: float = math.inf
    snapshot_dt: Optional[float] = None
    record_every: int = 1
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        if self.reparametrize_every < 1:
            raise ValueError("reparametrize_every must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        ad = d.pop("adaptive", None)
        if ad is not None:
            d["adaptive"] = AdaptiveDt(**ad)
        if d.get("kappa_max") is None:
            d.pop("kappa_max", None)
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["kappa_max"]):
            d["kappa_max"] = None
        return d


class StepRejected(RuntimeError):
    """A step produced an invalid curve or the linear solve failed."""


@dataclass
class Velocity:
    """Full velocity and its split into normal part and tangential speed."""

    full: np.ndarray
    normal: np.ndarray
    xi: np.ndarray


def velocity(curve: DiscreteCurve, params: FlowParams) -> Velocity:
    """Velocity of the general flow at every node (zero on clamped layers)."""
    if curve.n_nodes < params.order + 3:
        raise ValueError("resolution too coarse for the flow order")
    k = curve.curvature
    k2 = np.sum(k * k, axis=1)
    V = (params.lam + params.mu * k2)[:, None] * k
    if params.sigma:
        V = V - params.sigma * curve.nabla2_kappa
    if params.vartheta:
        xi = params.vartheta * np.sum(k * curve.nabla_kappa, axis=1)
    else:
        xi = np.zeros(curve.n_nodes)
    if not curve.periodic:
        mask = ~curve.interior_mask
        V[mask] = 0.0
        xi[mask] = 0.0
    return Velocity(V + xi[:, None] * curve.tangent, V, xi)


def _implicit_coefficients(curve, params, dt):
    """Row coefficients and stencil of ``-dt * L`` and the vector ``L gamma``."""
    a = 1.0 / curve.speed
    if params.order == 4:
        st = COMPACT_STENCILS[4]
        coef = dt * params.sigma * a**4 / curve.h**4
        Lg = -params.sigma * (a**4)[:, None] * apply_stencil(curve.nodes, 4, curve.h, curve.periodic, COMPACT_STENCILS)
    else:
        st = COMPACT_STENCILS[2]
        coef = -dt * params.lam * a**2 / curve.h**2
        Lg = params.lam * (a**2)[:, None] * apply_stencil(curve.nodes, 2, curve.h, curve.periodic, COMPACT_STENCILS)
    if not curve.periodic:
        mask = ~curve.interior_mask
        coef = np.where(mask, 0.0, coef)
        Lg[mask] = 0.0
    return coef, st, Lg


def step(curve: DiscreteCurve, params: FlowParams, dt: float,
         vel: Optional[Velocity] = None) -> DiscreteCurve:
    """One IMEX step of length ``dt``.

    Solves ``(I - dt L) gamma_new = gamma + dt (v - L gamma)`` where ``L`` is
    the frozen-speed leading operator and ``v`` the full velocity.

    Raises
    ------
    StepRejected
        On a failed solve or if a segment collapses below ``rho_min * h``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if vel is None:
        vel = velocity(curve, params)
    coef, st, Lg = _implicit_coefficients(curve, params, dt)
    rhs = curve.nodes + dt * (vel.full - Lg)
    try:
        if not np.any(coef):
            new = rhs
        elif curve.periodic:
            new = solve_cyclic_stencil(coef, st, rhs)
        else:
            new = solve_banded_system(stencil_matrix_bands(coef, 1.0, st), rhs)
        return curve.with_nodes(new)
    except (SolveError, ValueError) as exc:
        raise StepRejected(str(exc)) from exc


@dataclass
class Termination:
    status: str
    T_hat: Optional[float] = None
    message: str = ""


@dataclass
class Trajectory:
    """Output of :func:`simulate`.

    ``series`` holds per-step scalars, all of the same length as
    ``series["t"]``.  ``snapshots`` are curves at ``snapshot_times``.
    """

    params: FlowParams
    solver: SolverConfig
    series: Dict[str, np.ndarray]
    snapshot_times: List[float]
    snapshots: List[DiscreteCurve]
    termination: Termination
    steps: int = 0
    rejections: int = 0

    @property
    def times(self) -> np.ndarray:
        return self.series["t"]

    def __getitem__(self, key) -> np.ndarray:
        return self.series[key]


SERIES_KEYS = ("t", "dt", "E", "D", "B", "F", "V2", "k2", "kinf", "N",
               "dissipation", "sdf_dissipation")


def _state_scalars(curve, params, vel):
    k = curve.curvature
    k2 = np.sum(k * k, axis=1)
    B = 0.5 * integrate(curve, k2)
    D = direction_energy(curve, check=False)
    V2 = integrate(curve, np.sum(vel.normal**2, axis=1))
    nk = curve.nabla_kappa
    sdf_rate = integrate(curve, np.sum(nk * nk, axis=1) + params.mu * k2**2)
    kin = k2[curve.interior]
    N = np.nan
    if curve.dim == 2:
        from .diagnostics import rotation_number

        try:
            N = rotation_number(curve)
        except ValueError:
            N = np.nan
    return {
        "E": B + D,
        "D": D,
        "B": B,
        "F": params.sigma * B + params.lam * D,
        "V2": V2,
        "k2": 2 * B,
        "kinf": float(np.sqrt(kin.max())),
        "N": N,
        "_sdf_rate": sdf_rate,
    }


def simulate(curve0: DiscreteCurve, params: FlowParams, solver: SolverConfig,
             callback=None) -> Trajectory:
    """Integrate the flow from ``curve0``.

    Stops at ``t_end`` (ReachedEnd), when ``max|kappa| > kappa_max`` or the
    adaptive step falls below ``dt_min`` (BlowupDetected, with an estimate
    ``T_hat`` of the singular time), or when a fixed-step run produces an
    invalid curve (StepRejected).
    """
    ad = solver.adaptive
    curve = curve0
    t = 0.0
    dt = solver.dt if ad is None else min(solver.dt, ad.dt_max)
    rows: Dict[str, list] = {k: [] for k in SERIES_KEYS}
    snaps, snap_times = [curve0], [0.0]
    snap_dt = solver.snapshot_dt
    next_snap = snap_dt if snap_dt else math.inf
    accepted_dts: List[float] = []
    accepted_times: List[float] = []
    diss = sdf_diss = 0.0
    prev = None
    n_steps = rejections = streak = 0
    termination = None

    def record(curve, vel, t, dt_used):
        nonlocal diss, sdf_diss, prev
        sc = _state_scalars(curve, params, vel)
        if prev is not None:
            diss += 0.5 * dt_used * (prev["V2"] + sc["V2"])
            sdf_diss += 0.5 * dt_used * (prev["_sdf_rate"] + sc["_sdf_rate"])
        prev = sc
        return sc, {"t": t, "dt": dt_used, "dissipation": diss, "sdf_dissipation": sdf_diss}

    vel = velocity(curve, params)
    sc, extra = record(curve, vel, t, 0.0)
    for key in SERIES_KEYS:
        rows[key].append(extra.get(key, sc.get(key)))

    while True:
        if t >= solver.t_end - 1e-12 * max(1.0, solver.t_end):
            termination = Termination(REACHED_END)
            break
        if sc["kinf"] > solver.kappa_max:
            termination = Termination(BLOWUP, _extrapolate(accepted_times, accepted_dts),
                                      f"max curvature {sc['kinf']:.3g} exceeded")
            break
        if n_steps >= solver.max_steps:
            termination = Termination(REJECTED, message="step budget exhausted")
            break
        vmax = float(np.sqrt(np.max(np.sum(vel.full**2, axis=1))))
        new = None
        while new is None:
            if ad is not None:
                if dt < ad.dt_min:
                    break
                too_fast = vmax * dt > ad.safety * curve.h
                if ad.parabolic is not None:
                    too_fast |= dt * sc["kinf"] ** params.order > ad.parabolic
                if too_fast:
                    dt *= 0.5
                    rejections += 1
                    streak = 0
                    continue
            dt_used = min(dt, solver.t_end - t)
            try:
                new = step(curve, params, dt_used, vel)
            except StepRejected as exc:
                if ad is None:
                    termination = Termination(REJECTED, message=str(exc))
                    break
                dt *= 0.5
                rejections += 1
                streak = 0
        if termination is not None:
            break
        if new is None:
            termination = Termination(BLOWUP, _extrapolate(accepted_times, accepted_dts),
                                      "time step fell below dt_min")
            break

        t += dt_used
        n_steps += 1
        accepted_dts.append(dt_used)
        accepted_times.append(t)
        curve = new
        if n_steps % solver.reparametrize_every == 0:
            try:
                curve = resample_arclength(curve)
            except ValueError as exc:
                termination = Termination(REJECTED, message=str(exc))
                break
        if ad is not None:
            streak += 1
            if streak >= ad.grow_after:
                dt = min(dt * ad.grow, ad.dt_max)
                streak = 0
        vel = velocity(curve, params)
        sc, extra = record(curve, vel, t, dt_used)
        last = t >= solver.t_end - 1e-12 * max(1.0, solver.t_end)
        if n_steps % solver.record_every == 0 or last or sc["kinf"] > solver.kappa_max:
            for key in SERIES_KEYS:
                rows[key].append(extra.get(key, sc.get(key)))
        if t >= next_snap or (last and snap_dt):
            snaps.append(curve)
            snap_times.append(t)
            while next_snap <= t:
                next_snap += snap_dt
        if callback is not None:
            callback(t, curve)

    if snap_times[-1] != t:
        snaps.append(curve)
        snap_times.append(t)
    series = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    log.info("simulate %s: %s at t=%.6g after %d steps (%d rejections)",
             params.name, termination.status, t, n_steps, rejections)
    return Trajectory(params, solver, series, snap_times, snaps, termination, n_steps, rejections)


def _extrapolate(times, dts, shrink=16.0, max_window=5000):
    """Estimate the singular time from the shrinking step sizes.

    Near a singularity the controlled step is proportional to the remaining
    time, so the accepted steps decay geometrically and ``dt`` is linear in
    ``t``.  A least-squares line through the recent ``(t, dt)`` pairs, over
    a window in which ``dt`` dropped by ``shrink``, is extrapolated to
    ``dt = 0``.  Falls back to the last time when no decay is visible.
    """
    if len(dts) < 3:
        return times[-1] if times else 0.0
    d = np.asarray(dts[-max_window:])
    t = np.asarray(times[-max_window:])
    big = np.flatnonzero(d >= shrink * d[-1])
    start = big[-1] if big.size else 0
    d, t = d[start:], t[start:]
    t_last = t[-1]
    if d.size < 3:
        return t_last
    b, a = np.polyfit(t - t_last, d, 1)
    if not b < 0:
        return t_last
    return t_last + max(-a / b, 0.0)
