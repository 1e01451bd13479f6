"""Trajectory and curve diagnostics.

Rotation numbers, limit classification, stationarity residuals, blow-up
rate fits, energy audits, energy quantization, loop tracking, smoothing
envelopes and an audit of the cutoff-localized energy identities.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .energies import bending_energy, direction_energy, localized_energy, DIRECTION, BENDING
from .geometry import (
    CutoffWeight,
    DiscreteCurve,
    _s_derivative,
    covariant_derivative,
    integrate,
    tangent_angle,
)

LINE = "Line"
ELASTICA = "BorderlineElastica"
UNKNOWN = "Unknown"


# rotation number ------------------------------------------------------------


def rotation_number_raw(curve: DiscreteCurve, end_tol: float = 0.2) -> float:
    """Total tangential angle increment divided by 2 pi (not rounded).

    Open curves must have ends close to the first basis direction; the
    chord directions of the evolving segments are unwrapped.
    """
    if curve.dim != 2:
        raise ValueError("rotation number needs a planar curve")
    d = np.diff(curve.nodes, axis=0)
    if curve.periodic:
        d = np.vstack([d, curve.nodes[:1] - curve.nodes[-1:]])
    else:
        i = curve.interior
        d = d[i.start : i.stop - 1]
        T = curve.tangent[i]
        e1 = np.array([1.0, 0.0])
        if np.linalg.norm(T[0] - e1) > end_tol or np.linalg.norm(T[-1] - e1) > end_tol:
            raise ValueError("ends are not asymptotically horizontal")
    ang = np.arctan2(d[:, 1], d[:, 0])
    inc = np.diff(ang)
    if curve.periodic:
        inc = np.append(inc, ang[0] - ang[-1])
    inc = (inc + np.pi) % (2 * np.pi) - np.pi
    return float(inc.sum() / (2 * np.pi))


def rotation_number(curve: DiscreteCurve, margin: float = 0.1) -> int:
    """Rotation number of a planar curve, rounded to the nearest integer.

    Raises
    ------
    ValueError
        If the raw value is more than ``margin`` away from an integer or the
        ends are not horizontal.
    """
    raw = rotation_number_raw(curve)
    n = int(round(raw))
    if abs(raw - n) > margin:
        raise ValueError(f"rotation number {raw:.3f} is not close to an integer")
    return n


# classification -------------------------------------------------------------


@dataclass(frozen=True)
class Tolerances:
    tol_B: float = 1e-3
    tol_T: float = 0.02
    elastica_factor: float = 20.0
    snap_margin: float = 0.1

    def elastica(self, h: float) -> float:
        return self.elastica_factor * h * h


@dataclass
class LimitClassification:
    verdict: str
    bending: float
    tangent_deviation: float
    profile_residual: Optional[float] = None
    stationarity_residual: Optional[float] = None
    kappa_max: Optional[float] = None
    s0: Optional[float] = None
    omega: Optional[list] = None

    def to_dict(self) -> dict:
        return asdict(self)


def tangent_deviation(curve: DiscreteCurve) -> float:
    """sup over evolving nodes of |T - e1|."""
    T = curve.tangent[curve.interior]
    e1 = np.eye(curve.dim)[0]
    return float(np.max(np.linalg.norm(T - e1, axis=1)))


def classify_limit(curve: DiscreteCurve, tol: Tolerances = Tolerances()) -> LimitClassification:
    """Decide whether an open curve is a line, a borderline elastica, or neither.

    The elastica test locates the curvature peak (refined by a parabola
    through the three top nodes), compares |kappa| with 2 sech(s - s_peak)
    in sup norm and takes the loop plane from the peak offset.
    """
    if curve.periodic:
        raise ValueError("classification needs an open curve")
    B = bending_energy(curve)
    dev = tangent_deviation(curve)
    if B <= tol.tol_B and dev <= tol.tol_T:
        return LimitClassification(LINE, B, dev)

    i = curve.interior
    s = curve.arclength[i]
    k = np.linalg.norm(curve.curvature[i], axis=1)
    p = int(np.argmax(k))
    s_peak = s[p]
    if 0 < p < k.size - 1:
        ym, y0, yp = k[p - 1], k[p], k[p + 1]
        den = ym - 2 * y0 + yp
        if den < 0:
            off = 0.5 * (ym - yp) / den
            s_peak = s[p] + off * 0.5 * (s[p + 1] - s[p - 1])
    prof = float(np.max(np.abs(k - 2 / np.cosh(s - s_peak))))
    stat = stationarity_residual(curve, 1.0)["sup"]
    P = curve.nodes[i]
    ends = 0.5 * (P[0] + P[-1])
    off = P[p] - ends
    off[0] = 0.0
    nrm = np.linalg.norm(off)
    omega = (off / nrm).tolist() if nrm > 0 else None
    te = tol.elastica(curve.h)
    kmax = float(k.max())
    verdict = UNKNOWN
    if prof <= te and abs(kmax - 2) <= te:
        verdict = ELASTICA
    return LimitClassification(verdict, B, dev, prof, stat, kmax, float(-s_peak), omega)


def stationarity_residual(curve: DiscreteCurve, lam: float) -> Dict[str, float]:
    """Sup and L2 norms of ``nabla^2 kappa + |kappa|^2 kappa / 2 - lam kappa``."""
    if curve.n_nodes < 9:
        raise ValueError("resolution too coarse for fourth-order stencils")
    k = curve.curvature
    R = curve.nabla2_kappa + 0.5 * np.sum(k * k, axis=1)[:, None] * k - lam * k
    r = np.linalg.norm(R, axis=1)
    return {"sup": float(np.max(r[curve.interior])), "l2": float(np.sqrt(integrate(curve, r**2)))}


# blow-up ----------------------------------------------------------------------


@dataclass
class BlowupFit:
    T_hat: float
    beta: float
    window: Tuple[float, float]
    residual: float
    n_samples: int
    log_prefactor: float
    normalized: Tuple[float, float] = (np.nan, np.nan)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_blowup_rate(traj, window=(50.0, 500.0), min_samples: int = 8,
                    T_hat: Optional[float] = None, key: str = "k2",
                    reference_exponent: float = 0.5) -> BlowupFit:
    """Fit ``int |kappa|^2 ~ C (T_hat - t)^(-beta)`` near the singular time.

    The window is ``tau = T_hat - t`` in ``[w0 u, w1 u]`` with ``u`` the
    gap between the last recorded time and ``T_hat``; this keeps the fit
    away from the part of the data dominated by the extrapolation of
    ``T_hat``.  ``normalized`` gives the range of
    ``tau^reference_exponent * int |kappa|^2`` over the window.
    """
    term = traj.termination
    if T_hat is None:
        if term.status != "BlowupDetected" or term.T_hat is None:
            raise ValueError("trajectory did not end in a detected blow-up")
        T_hat = term.T_hat
    t = np.asarray(traj.series["t"])
    y = np.asarray(traj.series[key])
    u = T_hat - t[-1]
    if not u > 0:
        u = np.min(np.diff(t)[-5:])
    tau = T_hat - t
    lo, hi = window[0] * u, window[1] * u
    sel = (tau >= lo) & (tau <= hi) & (y > 0)
    if sel.sum() < min_samples:
        raise ValueError(f"only {int(sel.sum())} samples in the fit window")
    X = np.log(tau[sel])
    Y = np.log(y[sel])
    A = np.column_stack([np.ones_like(X), -X])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    res = Y - A @ coef
    prod = tau[sel] ** reference_exponent * y[sel]
    return BlowupFit(float(T_hat), float(coef[1]), (float(lo), float(hi)),
                     float(np.sqrt(np.mean(res**2))), int(sel.sum()), float(coef[0]),
                     (float(prod.min()), float(prod.max())))


# energy audits ------------------------------------------------------------------


@dataclass
class EnergyAudit:
    law: str
    delta: float
    dissipated: float
    defect: float
    relative_defect: float
    max_step_violation: float
    monotone: bool
    snapshot_monotone: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _strictly_nonincreasing(v, rtol=1e-12):
    v = np.asarray(v)
    return bool(np.all(np.diff(v) <= rtol * np.maximum(1.0, np.abs(v[:-1]))))


def energy_decay_audit(traj, params=None, snapshots: bool = True) -> EnergyAudit:
    """Compare the energy drop with the accumulated dissipation.

    Gradient flows of ``sigma B + lam D`` are checked against
    ``F(T) - F(0) = -int int |V|^2``.  Fourth-order flows without length
    penalty (SDF, Chen) are checked against
    ``D(T) - D(0) = -int int (|nabla_s kappa|^2 + mu |kappa|^4)``.
    """
    params = traj.params if params is None else params
    s = traj.series
    if params.is_gradient_flow:
        law, key, dkey = "F", "F", "dissipation"
    elif params.sigma > 0 and params.lam == 0:
        law, key, dkey = "D", "D", "sdf_dissipation"
    else:
        raise ValueError("flow has no known energy law")
    E = np.asarray(s[key])
    W = np.asarray(s[dkey])
    delta = float(E[-1] - E[0])
    diss = float(W[-1] - W[0])
    defect = abs(delta + diss)
    rel = defect / abs(delta) if delta != 0 else (0.0 if defect == 0 else np.inf)
    step_viol = float(np.max(np.abs(np.diff(E) + np.diff(W)))) if E.size > 1 else 0.0
    snap_mono = None
    if snapshots:
        if law == "F":
            vals = [params.sigma * bending_energy(c) + params.lam * direction_energy(c, check=False)
                    for c in traj.snapshots]
        else:
            vals = [direction_energy(c, check=False) for c in traj.snapshots]
        snap_mono = _strictly_nonincreasing(vals)
    return EnergyAudit(law, delta, diss, defect, rel, step_viol,
                       _strictly_nonincreasing(E), snap_mono)


@dataclass
class Quantization:
    E: float
    N: int
    slack: float

    def to_dict(self) -> dict:
        return asdict(self)


def quantization_check(curve: DiscreteCurve, rtol: float = 0.01) -> Quantization:
    """``E = B + D`` against the lower bound ``8 |N|``."""
    N = rotation_number(curve)
    E = bending_energy(curve) + direction_energy(curve)
    slack = E - 8 * abs(N)
    if slack < -rtol * E:
        raise AssertionError(f"E - 8|N| = {slack:.4g} below quadrature tolerance")
    return Quantization(float(E), N, float(slack))


# loops ----------------------------------------------------------------------------


@dataclass
class LoopTrack:
    times: List[float]
    base_points: List[np.ndarray]
    rotation: List[int]
    rotation_changed: bool

    def separations(self) -> np.ndarray:
        """Consecutive base-point gaps per snapshot, shape (snapshots, N-1)."""
        return np.array([np.diff(b) for b in self.base_points])


def loop_base_points(curve: DiscreteCurve, N: int) -> np.ndarray:
    """Arclength positions where the angle first crosses 2 pi (i - 1/2) upward."""
    i = curve.interior
    th = tangent_angle(curve)[i]
    th = th - 2 * np.pi * np.round(th[0] / (2 * np.pi))
    s = curve.arclength[i]
    out = []
    for j in range(1, N + 1):
        level = 2 * np.pi * (j - 0.5)
        a, b = th[:-1] - level, th[1:] - level
        idx = np.flatnonzero((a < 0) & (b >= 0))
        if idx.size == 0:
            out.append(np.nan)
            continue
        k = idx[0]
        w = -a[k] / (b[k] - a[k])
        out.append(s[k] + w * (s[k + 1] - s[k]))
    return np.asarray(out)


def loop_tracker(traj) -> LoopTrack:
    """Loop base points for every snapshot of a planar trajectory."""
    rot = []
    for c in traj.snapshots:
        try:
            rot.append(rotation_number(c))
        except ValueError:
            rot.append(None)
    N0 = rot[0]
    if N0 is None:
        raise ValueError("initial rotation number undefined")
    pts = [loop_base_points(c, max(N0, 0)) if N0 > 0 else np.empty(0) for c in traj.snapshots]
    changed = any(r != N0 for r in rot)
    return LoopTrack(list(traj.snapshot_times), pts, rot, changed)


def longest_increasing_run(x) -> int:
    """Length of the longest run of strictly increasing consecutive values."""
    x = np.asarray(x, dtype=float)
    best = run = 1 if x.size else 0
    for a, b in zip(x[:-1], x[1:]):
        run = run + 1 if b > a else 1
        best = max(best, run)
    return best


# smoothing envelopes --------------------------------------------------------------


def kappa_derivative_norms(curve: DiscreteCurve, m_max: int = 3, margin: int = 0) -> np.ndarray:
    """sup norms of nabla_s^m kappa for m = 0..m_max over evolving nodes."""
    i = curve.interior
    lo, hi = i.start + margin, i.stop - margin
    X = curve.curvature
    out = []
    for m in range(m_max + 1):
        if m:
            X = covariant_derivative(curve, X, 1)
        out.append(float(np.max(np.linalg.norm(X[lo:hi], axis=1))))
    return np.asarray(out)


@dataclass
class SmoothingEnvelope:
    exponents: List[float]
    constants: List[float]

    def to_dict(self) -> dict:
        return asdict(self)


def smoothing_monitor(traj, m_max: int = 3, order: Optional[int] = None,
                      t_max: Optional[float] = None, margin: int = 4) -> SmoothingEnvelope:
    """Smallest ``C_m`` with ``||nabla^m kappa||_inf <= C_m (1 + t^(-e_m))``.

    ``e_m = (2m+1)/8`` for fourth-order flows and ``(2m+1)/4`` for CSF.
    Only snapshots with ``0 < t <= t_max`` enter.
    """
    if traj.termination.status == "BlowupDetected":
        raise ValueError("smoothing envelopes are undefined for blow-up runs")
    order = traj.params.order if order is None else order
    div = 8.0 if order == 4 else 4.0
    e = [(2 * m + 1) / div for m in range(m_max + 1)]
    C = np.zeros(m_max + 1)
    for t, c in zip(traj.snapshot_times, traj.snapshots):
        if t <= 0 or (t_max is not None and t > t_max):
            continue
        nrm = kappa_derivative_norms(c, m_max, margin)
        C = np.maximum(C, nrm / (1 + t ** -np.asarray(e)))
    return SmoothingEnvelope(e, C.tolist())


# localized identities -------------------------------------------------------------


def localized_rates(curve: DiscreteCurve, vel, eta: CutoffWeight, e1=None) -> Dict[str, float]:
    """Right-hand sides of the time derivatives of the localized energies.

    ``vel`` is the velocity split of the flow; ``eta`` is a fixed function of
    the node index.
    """
    z = np.asarray(eta.values)
    dz = _s_derivative(curve, z[:, None])[:, 0]
    ddz = _s_derivative(curve, dz[:, None])[:, 0]
    k = curve.curvature
    V = vel.normal
    xi = vel.xi
    T = curve.tangent
    e = np.eye(curve.dim)[0] if e1 is None else e1
    kV = np.sum(k * V, axis=1)
    dD = (-integrate(curve, kV * z)
          - integrate(curve, xi * (1 - T @ e) * dz)
          + integrate(curve, (V @ e) * dz))
    k2 = np.sum(k * k, axis=1)
    grad = curve.nabla2_kappa + 0.5 * k2[:, None] * k
    dB = (integrate(curve, np.sum(grad * V, axis=1) * z)
          - integrate(curve, 0.5 * k2 * xi * dz)
          + 2 * integrate(curve, np.sum(curve.nabla_kappa * V, axis=1) * dz)
          + integrate(curve, kV * ddz))
    return {DIRECTION: dD, BENDING: dB}


def localized_identity_audit(traj, eta: CutoffWeight) -> Dict[str, float]:
    """Compare finite-difference rates of the localized energies with their formulas.

    Requires a trajectory recorded without arclength resampling so that the
    cutoff stays attached to material parameter values.  Returns the largest
    mismatch and the largest rate for each energy kind.
    """
    from .flows import velocity

    if traj.steps >= traj.solver.reparametrize_every:
        raise ValueError("audit needs a trajectory without resampling")
    ts = np.asarray(traj.snapshot_times)
    vals = {kind: np.array([localized_energy(c, eta, kind) for c in traj.snapshots])
            for kind in (DIRECTION, BENDING)}
    rates = [localized_rates(c, velocity(c, traj.params), eta) for c in traj.snapshots]
    out = {}
    for kind in (DIRECTION, BENDING):
        r = np.array([q[kind] for q in rates])
        fd = np.diff(vals[kind]) / np.diff(ts)
        mid = 0.5 * (r[1:] + r[:-1])
        out[f"{kind}_mismatch"] = float(np.max(np.abs(fd - mid)))
        out[f"{kind}_scale"] = float(np.max(np.abs(mid)))
    return out


# shape tracking -------------------------------------------------------------------


def max_node_drift(traj) -> float:
    """Largest displacement of any evolving node from its initial position over all snapshots."""
    c0 = traj.snapshots[0]
    i = c0.interior
    P0 = c0.nodes[i]
    worst = 0.0
    for c in traj.snapshots[1:]:
        if c.n_nodes != c0.n_nodes:
            raise ValueError("snapshots have different node counts")
        worst = max(worst, float(np.max(np.linalg.norm(c.nodes[i] - P0, axis=1))))
    return worst


def grim_reaper_offset(curve: DiscreteCurve, t: float, width: float = np.pi) -> float:
    """sup distance from the nodes to the grim reaper of ``width`` translated by ``t c e2``.

    The profile is ``y = -log(cos(c x)) / c`` with ``c = pi / width`` and
    translation speed ``c``; the vertical offset is converted to a normal
    distance with the local slope.
    """
    c = np.pi / width
    P = curve.nodes[curve.interior]
    x, y = P[:, 0], P[:, 1]
    cx = np.cos(c * x)
    if np.any(cx <= 0):
        return np.inf
    dy = y - c * t + np.log(cx) / c
    return float(np.max(np.abs(dy) * cx))


def circle_radius_error(traj, t_max: float) -> float:
    """sup relative error of ``r = 2 pi / int |kappa|^2`` against ``sqrt(r0^2 - 2t)``."""
    t = np.asarray(traj.series["t"])
    k2 = np.asarray(traj.series["k2"])
    r0 = 2 * np.pi / k2[0]
    sel = t <= t_max
    exact = np.sqrt(r0**2 - 2 * t[sel])
    return float(np.max(np.abs(2 * np.pi / k2[sel] - exact) / exact))
