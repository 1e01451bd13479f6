"""Discrete immersed curves and their intrinsic differential operators.

A :class:`DiscreteCurve` is a polyline sampled on a uniform parameter grid.
Open curves are *clamped*: ``ghost`` layers of nodes at each end are pinned
and only serve to complete difference stencils.  Closed curves are
*periodic*, the last node connecting back to the first.

All parameter derivatives use central fourth-order stencils (seven points
for orders three and four), and arclength quantities are obtained from them
by the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

CLAMPED = "clamped"
PERIODIC = "periodic"

# central stencils, offset -> weight (before dividing by h**k)
# fourth-order accurate, used for all geometric quantities
STENCILS = {
    1: {-2: 1 / 12, -1: -8 / 12, 1: 8 / 12, 2: -1 / 12},
    2: {-2: -1 / 12, -1: 16 / 12, 0: -30 / 12, 1: 16 / 12, 2: -1 / 12},
    3: {-3: 1 / 8, -2: -1.0, -1: 13 / 8, 1: -13 / 8, 2: 1.0, 3: -1 / 8},
    4: {-3: -1 / 6, -2: 2.0, -1: -13 / 2, 0: 28 / 3, 1: -13 / 2, 2: 2.0, 3: -1 / 6},
}
# compact second-order stencils, used for the implicit part of time steps
COMPACT_STENCILS = {
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
}
GHOST = max(abs(o) for st in STENCILS.values() for o in st)


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def _norm(a):
    return np.sqrt(_dot(a, a))


def apply_stencil(f, k, h, periodic, stencils=STENCILS):
    """k-th parameter derivative of nodal values ``f`` (first axis = nodes).

    For non-periodic arrays the nodes lacking a full stencil copy the
    nearest valid value; those nodes are ghost nodes and never evolve.
    """
    st = stencils[k]
    if periodic:
        out = sum(w * np.roll(f, -off, axis=0) for off, w in st.items())
        return out / h**k
    p = max(abs(o) for o in st)
    m = f.shape[0]
    out = np.empty_like(f, dtype=float)
    core = sum(w * f[p + off : m - p + off] for off, w in st.items())
    out[p : m - p] = core / h**k
    out[:p] = out[p]
    out[m - p :] = out[m - p - 1]
    return out


def project_normal(vec, T):
    """Remove the component of ``vec`` along the unit tangent ``T``."""
    return vec - _dot(vec, T)[:, None] * T


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """Polyline over a uniform parameter grid in R^n.

    Parameters
    ----------
    nodes : array_like, shape (M, n)
        Node positions, n >= 2.
    h : float
        Uniform parameter step.
    end_condition : {"clamped", "periodic"}
    ghost : int
        Pinned layers per side for clamped curves.
    base_index : int, optional
        Node whose arclength coordinate is zero.  Defaults to the middle node.
    rho_min : float
        Minimum admissible ratio of segment length to ``h``.
    """

    nodes: np.ndarray
    h: float
    end_condition: str = CLAMPED
    ghost: int = GHOST
    base_index: Optional[int] = None
    rho_min: float = 1e-3

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] < 2:
            raise ValueError("nodes must have shape (M, n) with n >= 2")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("nodes must be finite")
        if not self.h > 0:
            raise ValueError("grid spacing h must be positive")
        if self.end_condition not in (CLAMPED, PERIODIC):
            raise ValueError(f"unknown end condition {self.end_condition!r}")
        m = nodes.shape[0]
        if m < 5:
            raise ValueError("a curve needs at least 5 nodes")
        if self.end_condition == CLAMPED:
            if self.ghost < 1 or m < 2 * self.ghost + 3:
                raise ValueError("not enough nodes for the ghost layers")
        else:
            object.__setattr__(self, "ghost", 0)
        base = m // 2 if self.base_index is None else int(self.base_index)
        if not 0 <= base < m:
            raise ValueError("base_index out of range")
        object.__setattr__(self, "base_index", base)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if self.segment_lengths.min() < self.rho_min * self.h:
            raise ValueError("degenerate segment: curve is not immersed")

    # basic shape ------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def periodic(self) -> bool:
        return self.end_condition == PERIODIC

    @property
    def interior(self) -> slice:
        """Slice of the evolving (non-ghost) nodes."""
        if self.periodic:
            return slice(0, self.n_nodes)
        return slice(self.ghost, self.n_nodes - self.ghost)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.interior] = True
        return mask

    @cached_property
    def segment_lengths(self) -> np.ndarray:
        d = np.diff(self.nodes, axis=0)
        if self.periodic:
            d = np.vstack([d, self.nodes[:1] - self.nodes[-1:]])
        return _norm(d)

    @cached_property
    def arclength(self) -> np.ndarray:
        """Cumulative chord length, zero at ``base_index``."""
        s = np.concatenate([[0.0], np.cumsum(self.segment_lengths[: self.n_nodes - 1])])
        return s - s[self.base_index]

    @cached_property
    def length(self) -> float:
        """Total chord length of the evolving part of the curve."""
        if self.periodic:
            return float(self.segment_lengths.sum())
        i = self.interior
        return float(self.segment_lengths[i.start : i.stop - 1].sum())

    def with_nodes(self, nodes, h=None, base_index=None) -> "DiscreteCurve":
        """Copy with new node positions (same end condition)."""
        return DiscreteCurve(
            nodes,
            self.h if h is None else h,
            self.end_condition,
            self.ghost if not self.periodic else GHOST,
            self.base_index if base_index is None else base_index,
            self.rho_min,
        )

    # parameter derivatives --------------------------------------------
    def dx(self, k: int) -> np.ndarray:
        return self._dx[k - 1]

    @cached_property
    def _dx(self):
        return [apply_stencil(self.nodes, k, self.h, self.periodic) for k in (1, 2, 3, 4)]

    @cached_property
    def speed(self) -> np.ndarray:
        """|d gamma / dx| per node."""
        return _norm(self.dx(1))

    @cached_property
    def tangent(self) -> np.ndarray:
        return self.dx(1) / self.speed[:, None]

    @cached_property
    def _speed_derivs(self):
        g1, g2, g3 = self.dx(1), self.dx(2), self.dx(3)
        v = self.speed
        v1 = _dot(g1, g2) / v
        v2 = (_dot(g2, g2) + _dot(g1, g3) - v1**2) / v
        return v, v1, v2

    @cached_property
    def curvature(self) -> np.ndarray:
        """Curvature vector, tangential part removed exactly."""
        v = self.speed
        return project_normal(self.dx(2) / v[:, None] ** 2, self.tangent)

    @cached_property
    def nabla_kappa(self) -> np.ndarray:
        """Normal derivative of the curvature vector."""
        v, v1, _ = self._speed_derivs
        w = self.dx(3) / v[:, None] ** 3 - 3 * (v1 / v**4)[:, None] * self.dx(2)
        return project_normal(w, self.tangent)

    @cached_property
    def nabla2_kappa(self) -> np.ndarray:
        """Second normal derivative of the curvature vector."""
        v, v1, v2 = self._speed_derivs
        w = (
            self.dx(4) / v[:, None] ** 4
            - 6 * (v1 / v**5)[:, None] * self.dx(3)
            + ((15 * v1**2 - 4 * v * v2) / v**6)[:, None] * self.dx(2)
        )
        k = self.curvature
        return project_normal(w, self.tangent) + _dot(k, k)[:, None] * k


@dataclass(frozen=True)
class NormalField:
    """Per-node vectors normal to a curve."""

    vectors: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.vectors, dtype=dtype)

    @classmethod
    def project(cls, curve: DiscreteCurve, vectors) -> "NormalField":
        vec = np.asarray(vectors, dtype=float)
        if vec.shape != curve.nodes.shape:
            raise ValueError("field shape does not match the curve")
        return cls(project_normal(vec, curve.tangent))

    def orthogonality_defect(self, curve: DiscreteCurve) -> float:
        """max_i |<X_i, T_i>| / |X_i| over nonzero vectors."""
        X = np.asarray(self.vectors)
        nrm = _norm(X)
        ok = nrm > 0
        if not ok.any():
            return 0.0
        return float(np.max(np.abs(_dot(X, curve.tangent))[ok] / nrm[ok]))


def tangent(curve: DiscreteCurve) -> np.ndarray:
    """Unit tangent per node."""
    return curve.tangent


def curvature_vector(curve: DiscreteCurve) -> np.ndarray:
    """Curvature vector per node, exactly orthogonal to the tangent."""
    return curve.curvature


def _s_derivative(curve, X):
    h = curve.h
    if curve.periodic:
        d = (np.roll(X, -1, axis=0) - np.roll(X, 1, axis=0)) / (2 * h)
    else:
        d = np.gradient(X, h, axis=0, edge_order=2)
    return d / curve.speed[:, None]


def covariant_derivative(curve: DiscreteCurve, X, m: int, m_max: int = 4) -> np.ndarray:
    """``m``-fold normal covariant derivative of a normal field.

    Each pass differentiates in arclength and projects onto the normal
    bundle.

    Raises
    ------
    ValueError
        If ``m`` exceeds ``m_max`` or the curve has fewer than ``8*m`` nodes.
    """
    X = np.asarray(X, dtype=float)
    if m < 0 or m > m_max:
        raise ValueError(f"derivative order must be in [0, {m_max}]")
    if curve.n_nodes < 8 * m:
        raise ValueError("resolution too coarse for the requested order")
    if X.shape != curve.nodes.shape:
        raise ValueError("field shape does not match the curve")
    for _ in range(m):
        X = project_normal(_s_derivative(curve, X), curve.tangent)
    return X


def quadrature_weights(curve: DiscreteCurve) -> np.ndarray:
    """Trapezoid weights for integrals against ds, zero on ghost nodes.

    Each node carries half of the chord length of its two adjacent segments.
    """
    c = curve.segment_lengths
    if curve.periodic:
        return 0.5 * (c + np.roll(c, 1))
    out = np.zeros(curve.n_nodes)
    i = curve.interior
    cc = c[i.start : i.stop - 1]
    out[i.start : i.stop - 1] += 0.5 * cc
    out[i.start + 1 : i.stop] += 0.5 * cc
    return out


def segment_tangents(curve: DiscreteCurve):
    """Unit chord directions and chord lengths of the evolving segments."""
    d = np.diff(curve.nodes, axis=0)
    if curve.periodic:
        d = np.vstack([d, curve.nodes[:1] - curve.nodes[-1:]])
    else:
        i = curve.interior
        d = d[i.start : i.stop - 1]
    c = _norm(d)
    return d / c[:, None], c


def integrate(curve: DiscreteCurve, f, weight: Optional["CutoffWeight"] = None) -> float:
    """Trapezoid rule for ``int f ds`` over the evolving part of the curve."""
    f = np.asarray(f, dtype=float)
    if f.shape != (curve.n_nodes,):
        raise ValueError("integrand length does not match the curve")
    if weight is not None:
        zeta = np.asarray(weight.values)
        if zeta.shape != f.shape:
            raise ValueError("weight length does not match the curve")
        f = f * zeta
    return float(np.dot(quadrature_weights(curve), f))


def tangent_angle(curve: DiscreteCurve) -> np.ndarray:
    """Unwrapped tangential angle of a planar curve per node."""
    if curve.dim != 2:
        raise ValueError("tangent angle needs a planar curve")
    T = curve.tangent
    return np.unwrap(np.arctan2(T[:, 1], T[:, 0]))


# resampling ----------------------------------------------------------------


def resample_arclength(curve: DiscreteCurve, base_index: Optional[int] = None,
                       tol: float = 1e-13, max_iter: int = 100) -> DiscreteCurve:
    """Redistribute nodes at equal chord length along a cubic spline.

    The node count and the two extreme nodes (node 0 for closed curves) are
    kept.  The new base index is the node nearest to the arclength position
    of the old base node.

    Parameters
    ----------
    curve : DiscreteCurve
    base_index : int, optional
        Overrides the base node of the input curve.
    """
    P = curve.nodes
    m = curve.n_nodes
    seg = curve.segment_lengths
    if seg.min() <= 0:
        raise ValueError("degenerate segment")
    base = curve.base_index if base_index is None else int(base_index)
    if curve.periodic:
        u = np.concatenate([[0.0], np.cumsum(seg)])
        spline = CubicSpline(u, np.vstack([P, P[:1]]), bc_type="periodic")
        n_seg = m
    else:
        u = np.concatenate([[0.0], np.cumsum(seg)])
        spline = CubicSpline(u, P)
        n_seg = m - 1
    dspl = spline.derivative()
    U = u[-1]
    s_base = u[base]

    uu = np.linspace(0.0, U, n_seg + 1)
    for _ in range(max_iter):
        Q = spline(uu)
        c = _norm(np.diff(Q, axis=0))
        C = np.concatenate([[0.0], np.cumsum(c)])
        target = np.linspace(0.0, C[-1], n_seg + 1)
        err = target - C
        if np.max(np.abs(err)) <= tol * C[-1]:
            break
        step = err / _norm(dspl(uu))
        step[0] = step[-1] = 0.0
        uu = uu + step
    Q = spline(uu)
    chord = C[-1] / n_seg
    nodes = Q[:m]
    new_base = int(np.argmin(np.abs(uu[:m] - s_base)))
    return curve.with_nodes(nodes, h=chord, base_index=new_base)


# cutoff weights ------------------------------------------------------------


def smoothstep(t):
    """Quintic smoothstep on [0, 1], clipped outside; max slope 15/8."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2)


@dataclass(frozen=True, eq=False)
class CutoffWeight:
    """Nonnegative compactly supported nodal weight with Lipschitz bound."""

    values: np.ndarray
    lipschitz: float

    def __post_init__(self):
        z = np.array(self.values, dtype=float)
        if z.ndim != 1 or np.any(z < 0) or not np.all(np.isfinite(z)):
            raise ValueError("cutoff values must be finite and nonnegative")
        if not self.lipschitz > 0:
            raise ValueError("lipschitz bound must be positive")
        nz = np.flatnonzero(z > 0)
        if nz.size and np.any(z[nz[0] : nz[-1] + 1] == 0):
            raise ValueError("cutoff support must be contiguous")
        z.setflags(write=False)
        object.__setattr__(self, "values", z)

    @property
    def support(self) -> np.ndarray:
        return self.values > 0

    def slope(self, curve: DiscreteCurve) -> np.ndarray:
        """Discrete arclength derivative of the weight."""
        return _s_derivative(curve, self.values[:, None])[:, 0]

    def check(self, curve: DiscreteCurve) -> bool:
        return bool(np.max(np.abs(self.slope(curve))) <= self.lipschitz * (1 + 1e-12))

    @classmethod
    def plateau(cls, curve: DiscreteCurve, a: float, b: float, ramp: float) -> "CutoffWeight":
        """Weight equal to one for arclength in [a, b], ramping to zero over ``ramp``."""
        if ramp <= 0 or b < a:
            raise ValueError("need ramp > 0 and a <= b")
        s = curve.arclength
        z = smoothstep((s - (a - ramp)) / ramp) * smoothstep(((b + ramp) - s) / ramp)
        if not curve.periodic:
            z = np.where(curve.interior_mask, z, 0.0)
        lam = 15.0 / (8.0 * ramp)
        tmp = cls(z, lam)
        # chord-based arclength may slightly exceed the analytic slope bound
        lam = max(lam, float(np.max(np.abs(tmp.slope(curve)))))
        return cls(z, lam)

    @classmethod
    def ones(cls, curve: DiscreteCurve) -> "CutoffWeight":
        z = np.where(curve.interior_mask, 1.0, 0.0) if not curve.periodic else np.ones(curve.n_nodes)
        return cls(z, 1.0)


# reference curves ----------------------------------------------------------


@dataclass(frozen=True)
class Line:
    direction: Sequence[float] = (1.0, 0.0)


@dataclass(frozen=True)
class Circle:
    radius: float = 1.0


@dataclass(frozen=True)
class BorderlineElastica:
    s0: float = 0.0
    omega: Sequence[float] = (0.0, 1.0)


@dataclass(frozen=True)
class GrimReaper:
    width: float = np.pi


@dataclass(frozen=True)
class PowerEnd:
    """Graph of (1 + x^2)^(alpha/2), growing like |x|^alpha."""
    alpha: float = 0.3


@dataclass(frozen=True)
class PowerSinLogEnd:
    """Graph of (1 + x^2)^(alpha/2) sin(log(1 + x^2)/2)."""
    alpha: float = 0.3


@dataclass(frozen=True)
class Gaussian:
    amplitude: float = 0.3
    width: float = 1.0


@dataclass(frozen=True)
class Tabulated:
    x: Sequence[float]
    u: Sequence[float]


@dataclass(frozen=True)
class Graph:
    profile: Union[PowerEnd, PowerSinLogEnd, Gaussian, Tabulated]


@dataclass(frozen=True)
class Loops:
    """Planar curve with ``count`` loops and horizontal ends.

    The tangent angle is a sum of borderline elastica angle profiles
    ``4 arctan(exp(s - c_j))`` centered ``separation`` apart, so each loop
    adds one full turn.
    """

    count: int = 2
    separation: float = 5.0


Kind = Union[Line, Circle, BorderlineElastica, GrimReaper, Graph, Loops]


@dataclass(frozen=True)
class ReferenceCurveSpec:
    """Recipe for one of the reference curves.

    ``S`` is the half-width of the parameter domain of the evolving nodes.
    Resolution is given either by the node count ``N`` or directly by ``h``.
    Circles ignore ``S`` and use ``N`` nodes around the circumference.
    """

    kind: Kind
    S: float = 10.0
    N: Optional[int] = None
    h: Optional[float] = None
    dim: int = 2
    ghost: int = GHOST

    def __post_init__(self):
        if self.N is None and self.h is None:
            raise ValueError("give either N or h")
        if self.N is not None and self.N < 5:
            raise ValueError("resolution N must be at least 5")
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be positive")
        if not self.S > 0:
            raise ValueError("S must be positive")
        if self.dim < 2:
            raise ValueError("ambient dimension must be at least 2")
        k = self.kind
        if isinstance(k, Circle) and not k.radius > 0:
            raise ValueError("radius must be positive")
        if isinstance(k, GrimReaper) and not k.width > 0:
            raise ValueError("width must be positive")
        if isinstance(k, Graph) and isinstance(k.profile, (PowerEnd, PowerSinLogEnd)):
            if not 0 < k.profile.alpha < 0.5:
                raise ValueError("power-end exponent must lie in (0, 1/2)")


def _embed(xy, dim):
    out = np.zeros((xy.shape[0], dim))
    out[:, : xy.shape[1]] = xy
    return out


def graph_profile(profile, x):
    """Values of a graph profile u(x)."""
    if isinstance(profile, PowerEnd):
        return (1 + x**2) ** (profile.alpha / 2)
    if isinstance(profile, PowerSinLogEnd):
        return (1 + x**2) ** (profile.alpha / 2) * np.sin(0.5 * np.log1p(x**2))
    if isinstance(profile, Gaussian):
        return profile.amplitude * np.exp(-((x / profile.width) ** 2))
    if isinstance(profile, Tabulated):
        return CubicSpline(np.asarray(profile.x), np.asarray(profile.u))(x)
    raise TypeError(f"unknown profile {profile!r}")


def borderline_elastica_points(s, s0=0.0):
    """Planar arclength parametrization (s - 2 tanh(s+s0), 2 sech(s+s0))."""
    r = s + s0
    return np.column_stack([s - 2 * np.tanh(r), 2 / np.cosh(r)])


def build_reference(spec: ReferenceCurveSpec) -> DiscreteCurve:
    """Sample a reference curve.

    Open kinds are clamped, with ``spec.ghost`` extra layers beyond the
    parameter interval [-S, S]; circles are periodic.
    """
    k = spec.kind
    if isinstance(k, Circle):
        n = spec.N if spec.N is not None else int(round(2 * np.pi * k.radius / spec.h))
        th = 2 * np.pi * np.arange(n) / n
        xy = k.radius * np.column_stack([np.cos(th), np.sin(th)])
        return DiscreteCurve(_embed(xy, spec.dim), 2 * np.pi * k.radius / n, PERIODIC)

    if spec.N is not None:
        h = 2 * spec.S / (spec.N - 1)
        n = spec.N
    else:
        n = int(round(2 * spec.S / spec.h)) + 1
        h = 2 * spec.S / (n - 1)
    G = spec.ghost
    s = -spec.S + h * np.arange(-G, n + G)

    if isinstance(k, Line):
        d = np.asarray(k.direction, dtype=float)
        d = np.pad(d, (0, max(0, spec.dim - d.size)))[: spec.dim]
        nd = np.linalg.norm(d)
        if nd == 0:
            raise ValueError("line direction must be nonzero")
        nodes = s[:, None] * (d / nd)[None, :]
    elif isinstance(k, BorderlineElastica):
        xy = borderline_elastica_points(s, k.s0)
        omega = np.asarray(k.omega, dtype=float)
        omega = np.pad(omega, (0, max(0, spec.dim - omega.size)))[: spec.dim]
        if abs(omega[0]) > 1e-12 or not np.isclose(np.linalg.norm(omega), 1.0):
            raise ValueError("omega must be a unit vector orthogonal to e1")
        nodes = xy[:, :1] * np.eye(spec.dim)[0] + xy[:, 1:2] * omega
    elif isinstance(k, GrimReaper):
        c = np.pi / k.width
        x = (2 / c) * np.arctan(np.tanh(c * s / 2))
        y = np.log(np.cosh(c * s)) / c
        nodes = _embed(np.column_stack([x, y]), spec.dim)
    elif isinstance(k, Loops):
        if k.count < 1:
            raise ValueError("need at least one loop")
        centers = k.separation * (np.arange(k.count) - 0.5 * (k.count - 1))
        theta = sum(4 * np.arctan(np.exp(s - c)) for c in centers)
        T = np.column_stack([np.cos(theta), np.sin(theta)])
        xy = cumulative_trapezoid(T, s, axis=0, initial=0.0)
        xy -= xy[xy.shape[0] // 2]
        curve = DiscreteCurve(_embed(xy, spec.dim), h, CLAMPED, G)
        return resample_arclength(curve)
    elif isinstance(k, Graph):
        u = graph_profile(k.profile, s)
        curve = DiscreteCurve(_embed(np.column_stack([s, u]), spec.dim), h, CLAMPED, G)
        return resample_arclength(curve)
    else:
        raise TypeError(f"unknown reference kind {k!r}")
    return DiscreteCurve(nodes, h, CLAMPED, G)


def spec_from_dict(d: dict) -> ReferenceCurveSpec:
    """Build a :class:`ReferenceCurveSpec` from a JSON-style mapping."""
    d = dict(d)
    kind = d.pop("kind")
    if isinstance(kind, dict):
        kind = dict(kind)
    kname = kind.pop("type") if isinstance(kind, dict) else kind
    kargs = kind if isinstance(kind, dict) else {}
    kname = kname.lower()
    if kname == "graph":
        prof = dict(kargs.pop("profile"))
        pname = prof.pop("type").lower()
        pcls = {"powerend": PowerEnd, "powersinlogend": PowerSinLogEnd,
                "gaussian": Gaussian, "tabulated": Tabulated}[pname]
        k = Graph(pcls(**prof))
    else:
        kcls = {"line": Line, "circle": Circle, "borderlineelastica": BorderlineElastica,
                "grimreaper": GrimReaper, "loops": Loops}
        if kname not in kcls:
            raise ValueError(f"unknown curve kind {kname!r}")
        k = kcls[kname](**kargs)
    return ReferenceCurveSpec(kind=k, **d)
