"""Length, direction, bending and adapted energies with their first variations.

Integrals of nodal quantities use the chord-length trapezoid rule from
:func:`curveflow.geometry.integrate`.  First-order quantities (length and
direction energy) are summed segment by segment with the chord direction as
tangent, so that the discrete form of ``int <T, e1> ds`` telescopes exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    CutoffWeight,
    DiscreteCurve,
    integrate,
    segment_tangents,
)

DIRECTION = "direction"
BENDING = "bending"


def _unit(e, dim):
    e = np.zeros(dim) if e is None else np.asarray(e, dtype=float)
    if e.size == 0 or not e.any():
        e = np.eye(dim)[0]
    if e.shape != (dim,):
        raise ValueError("direction has the wrong dimension")
    if abs(np.linalg.norm(e) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return e


def _trap_error(curve, f):
    """Quadrature error estimate from the trapezoid rule on every other node."""
    if curve.periodic:
        return 0.0
    s = curve.arclength[curve.interior]
    fi = f[curve.interior]
    return abs(_trapz(fi, s) - _trapz(fi[::2], s[::2])) / 3.0


def length(curve: DiscreteCurve) -> float:
    """Chord length of the evolving part of the curve."""
    return curve.length


def direction_energy(curve: DiscreteCurve, e=None, check: bool = True) -> float:
    """Direction energy ``1/2 int |T - e|^2 ds``.

    The value is also computed as ``int (1 - <T, e>) ds``; the two agree
    algebraically for unit tangents and are compared when ``check`` is set.

    Parameters
    ----------
    curve : DiscreteCurve
    e : array_like, optional
        Unit reference direction, default the first basis vector.
    """
    e = _unit(e, curve.dim)
    T, c = segment_tangents(curve)
    d1 = 0.5 * float(np.sum(c * np.sum((T - e) ** 2, axis=1)))
    d2 = float(np.sum(c * (1.0 - T @ e)))
    if check and abs(d1 - d2) > 1e-10 * max(abs(d1), abs(d2)) + 1e-13 * curve.length:
        raise AssertionError(f"direction energy formulas disagree: {d1} vs {d2}")
    return d2


def bending_energy(curve: DiscreteCurve) -> float:
    """Bending energy ``1/2 int |kappa|^2 ds``."""
    k = curve.curvature
    return 0.5 * integrate(curve, np.sum(k * k, axis=1))


@dataclass
class EnergyReport:
    """Energies of a single curve.

    ``length_divergent`` marks open curves, whose length grows without bound
    with the truncation; the stored length is then the truncated value.
    """

    length: float
    length_divergent: bool
    direction: float
    bending: float
    adapted: float
    sigma: float
    lam: float
    errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def adapted_energy(curve: DiscreteCurve, sigma: float = 1.0, lam: float = 1.0, e=None) -> EnergyReport:
    """``sigma * B + lam * D`` together with its parts."""
    if sigma < 0 or lam < 0:
        raise ValueError("energy coefficients must be nonnegative")
    D = direction_energy(curve, e)
    B = bending_energy(curve)
    k2 = np.sum(curve.curvature**2, axis=1)
    errors = {"bending": 0.5 * _trap_error(curve, k2)}
    return EnergyReport(
        length=curve.length,
        length_divergent=not curve.periodic,
        direction=D,
        bending=B,
        adapted=sigma * B + lam * D,
        sigma=float(sigma),
        lam=float(lam),
        errors=errors,
    )


def energy_value(curve: DiscreteCurve, sigma: float = 1.0, lam: float = 1.0) -> float:
    """Scalar ``sigma * B + lam * D`` without building a report."""
    return sigma * bending_energy(curve) + lam * direction_energy(curve, check=False)


def localized_energy(curve: DiscreteCurve, eta: CutoffWeight, kind: str = BENDING, e=None) -> float:
    """Cutoff-weighted direction or bending energy.

    The direction part weights each chord by the mean cutoff value of its
    endpoints, so a cutoff equal to one on every evolving node reproduces
    :func:`direction_energy` exactly.
    """
    z = np.asarray(eta.values)
    if z.shape != (curve.n_nodes,):
        raise ValueError("cutoff length does not match the curve")
    if kind == BENDING:
        k = curve.curvature
        return 0.5 * integrate(curve, np.sum(k * k, axis=1), eta)
    if kind == DIRECTION:
        e = _unit(e, curve.dim)
        T, c = segment_tangents(curve)
        if curve.periodic:
            zm = 0.5 * (z + np.roll(z, -1))
        else:
            i = curve.interior
            zi = z[i]
            zm = 0.5 * (zi[:-1] + zi[1:])
        return float(np.sum(c * (1.0 - T @ e) * zm))
    raise ValueError(f"unknown energy kind {kind!r}")


def l2_gradient(curve: DiscreteCurve, sigma: float, lam: float) -> np.ndarray:
    """Nodal L2 gradient ``sigma (nabla^2 kappa + |kappa|^2 kappa / 2) - lam kappa``."""
    k = curve.curvature
    k2 = np.sum(k * k, axis=1)[:, None]
    return sigma * (curve.nabla2_kappa + 0.5 * k2 * k) - lam * k


def _check_support(curve, phi):
    if curve.periodic:
        return
    G = curve.ghost
    if np.any(phi[: 2 * G]) or np.any(phi[-2 * G :]):
        raise ValueError("variation must vanish on and next to the clamped layers")


def first_variation(curve: DiscreteCurve, sigma: float, lam: float, phi) -> float:
    """Directional derivative of ``sigma B + lam D`` along ``phi``.

    Computed from the continuum formula
    ``int <sigma (nabla^2 kappa + |kappa|^2 kappa / 2) - lam kappa, phi> ds``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != curve.nodes.shape:
        raise ValueError("variation shape does not match the curve")
    _check_support(curve, phi)
    G = l2_gradient(curve, sigma, lam)
    return integrate(curve, np.sum(G * phi, axis=1))


def finite_difference_variation(curve: DiscreteCurve, functional, phi,
                                eps=(1e-3, 1e-4, 1e-5)) -> float:
    """Richardson-extrapolated central difference of ``functional`` along ``phi``.

    ``eps`` must decrease by a constant ratio; the central difference error
    is even in the step, so each level removes one power of ``eps**2``.
    """
    phi = np.asarray(phi, dtype=float)
    vals = []
    for e in eps:
        fp = functional(curve.with_nodes(curve.nodes + e * phi))
        fm = functional(curve.with_nodes(curve.nodes - e * phi))
        vals.append((fp - fm) / (2 * e))
    q = (eps[0] / eps[1]) ** 2
    while len(vals) > 1:
        vals = [(q * vals[i + 1] - vals[i]) / (q - 1) for i in range(len(vals) - 1)]
        q *= (eps[0] / eps[1]) ** 2
    return float(vals[0])


def e1_flux(curve: DiscreteCurve) -> float:
    """Discrete ``int <T, e1> ds`` (chord sum of the first coordinate)."""
    T, c = segment_tangents(curve)
    return float(np.sum(c * T[:, 0]))


@dataclass
class GraphicalEndReport:
    is_graphical_outside: bool
    u1_l2: float
    u2_l2: float
    direction_tilde: float
    half_u1_sq: float
    bound_holds: bool
    nongraphical_inside: bool

    def to_dict(self) -> dict:
        return asdict(self)


def graphical_end_report(curve: DiscreteCurve, R: float) -> GraphicalEndReport:
    """Check that the curve is a graph over the first axis outside ``|x1| <= R``.

    On the graphical ends the curve is written as ``x -> (x, u(x))`` and the
    report gives ``||u'||``, ``||u''||`` in L2(dx) together with
    ``D~ = int |u'|^2 / (1 + sqrt(1 + |u'|^2)) dx``, which satisfies
    ``D~ <= ||u'||^2 / 2``.
    """
    if curve.periodic:
        raise ValueError("graphical ends need an open curve")
    i = curve.interior
    P = curve.nodes[i]
    x = P[:, 0]
    outside = np.abs(x) > R
    if not outside.any():
        raise ValueError("curve lies entirely inside the slab")
    m = x.size
    left = 0
    while left < m and x[left] < -R:
        left += 1
    right = m
    while right > 0 and x[right - 1] > R:
        right -= 1
    tails_ok = outside[left:right].sum() == 0
    mono_left = np.all(np.diff(x[:left]) > 0) if left > 1 else True
    mono_right = np.all(np.diff(x[right:]) > 0) if m - right > 1 else True
    graphical = bool(tails_ok and mono_left and mono_right)
    inner = x[left:right]
    nongraphical_inside = bool(inner.size > 1 and np.any(np.diff(inner) <= 0))

    u1sq = u2sq = dt = 0.0
    for sl in (slice(0, left), slice(right, m)):
        xs = x[sl]
        if xs.size < 3 or not graphical:
            continue
        U = P[sl, 1:]
        du = np.gradient(U, xs, axis=0, edge_order=2)
        ddu = np.gradient(du, xs, axis=0, edge_order=2)
        a = np.sum(du**2, axis=1)
        u1sq += _trapz(a, xs)
        u2sq += _trapz(np.sum(ddu**2, axis=1), xs)
        dt += _trapz(a / (1 + np.sqrt(1 + a)), xs)
    return GraphicalEndReport(
        is_graphical_outside=graphical,
        u1_l2=float(np.sqrt(u1sq)),
        u2_l2=float(np.sqrt(u2sq)),
        direction_tilde=float(dt),
        half_u1_sq=0.5 * float(u1sq),
        bound_holds=bool(dt <= 0.5 * u1sq * (1 + 1e-12) + 1e-15),
        nongraphical_inside=nongraphical_inside,
    )


def _trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))
