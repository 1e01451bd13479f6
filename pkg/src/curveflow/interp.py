"""Weighted interpolation inequalities along curves, evaluated numerically.

Every check returns an :class:`InequalityCheck` holding both sides with the
unknown constant set to one, the ratio of the two sides and the smallest
constant that makes the inequality hold for that sample.  A batch driver
samples random (curve, normal field, cutoff) triples and summarizes the
empirical constants.

Powers of a cutoff follow the convention ``zeta**0 = 1`` on ``[zeta > 0]``
and ``0`` elsewhere, so every integral is restricted to the support.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize_scalar

from .geometry import (
    CutoffWeight,
    DiscreteCurve,
    NormalField,
    covariant_derivative,
    project_normal,
    quadrature_weights,
)

WEIGHTED_GRADIENT = "weighted_gradient"
GAGLIARDO_NIRENBERG = "gagliardo_nirenberg"
MONOMIAL = "monomial"
LEMMAS = (WEIGHTED_GRADIENT, GAGLIARDO_NIRENBERG, MONOMIAL)


def _wpow(z, e):
    """``z**e`` on the support of ``z`` and zero elsewhere."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    out[pos] = z[pos] ** e
    return out


def _field(X):
    return np.asarray(X.vectors if isinstance(X, NormalField) else X, dtype=float)


def _zeta(curve, zeta):
    z = np.asarray(zeta.values if isinstance(zeta, CutoffWeight) else zeta, dtype=float)
    if z.shape != (curve.n_nodes,):
        raise ValueError("cutoff length does not match the curve")
    return z


def _ratio(lhs, rhs):
    if lhs == 0.0:
        return 0.0
    return lhs / rhs if rhs > 0 else math.inf


def _pstr(p):
    return "inf" if math.isinf(p) else f"{p:g}"


@dataclass
class InequalityCheck:
    """Both sides of a weighted inequality for one sample.

    ``rhs`` is the right side with the unknown constant equal to one.
    ``constant`` is the smallest constant for which the inequality holds
    (terms carrying an explicit epsilon are not scaled).
    """

    lemma: str
    params: dict
    lhs: float
    rhs: float
    ratio: float
    constant: float
    terms: dict = field(default_factory=dict)
    holds: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _finish(lemma, params, lhs, eps_term, c_terms, C):
    rest = float(sum(c_terms.values()))
    rhs = eps_term + rest
    excess = lhs - eps_term
    if excess <= 0 or lhs == 0.0:
        constant = 0.0
    else:
        constant = excess / rest if rest > 0 else math.inf
    holds = lhs <= (eps_term + C * rest) * (1 + 1e-12) + 1e-300
    terms = dict(c_terms)
    if eps_term:
        terms["eps_term"] = eps_term
    return InequalityCheck(lemma, params, float(lhs), float(rhs), _ratio(lhs, rhs),
                           float(constant), {k: float(v) for k, v in terms.items()}, bool(holds))


# seminorms -----------------------------------------------------------------


@dataclass
class SeminormSet:
    """Weighted seminorms of a normal field.

    ``zero2`` is ``|X|_{0,2}``, ``k2`` is ``|X|_{k,2}`` for the requested
    ``k`` and ``zero_p`` maps ``p`` to ``|X|_{0,p}``.
    """

    k: int
    zero2: float
    k2: float
    zero_p: dict

    def to_dict(self) -> dict:
        return {"k": self.k, "zero2": self.zero2, "k2": self.k2,
                "zero_p": {_pstr(p): v for p, v in self.zero_p.items()}}


def _lp(w, f, p):
    if math.isinf(p):
        return float(np.max(f, initial=0.0))
    return float(np.dot(w, f**p)) ** (1.0 / p)


def seminorms(curve: DiscreteCurve, X, zeta, k: int, p_values: Sequence[float] = (4, 6, math.inf),
              m_max: int = 4) -> SeminormSet:
    """Weighted seminorms ``|X|_{0,2}``, ``|X|_{k,2}`` and ``|X|_{0,p}``.

    ``|X|_{k,2} = ||zeta^k nabla_s^k X||_2 + |X|_{0,2}`` and
    ``|X|_{0,p} = ||zeta^(1/2 - 1/p) X||_{L^p([zeta > 0])}``.
    """
    X = _field(X)
    z = _zeta(curve, zeta)
    w = quadrature_weights(curve)
    ind = (z > 0).astype(float)
    nx = np.linalg.norm(X, axis=1)
    zero2 = float(np.sqrt(np.dot(w * ind, nx**2)))
    if k == 0:
        k2 = zero2
    else:
        D = covariant_derivative(curve, X, k, m_max=m_max)
        nd = np.linalg.norm(D, axis=1)
        k2 = float(np.sqrt(np.dot(w, (_wpow(z, k) * nd) ** 2))) + zero2
    zp = {}
    for p in p_values:
        if p < 2:
            raise ValueError("p must be at least 2")
        e = 0.5 if math.isinf(p) else 0.5 - 1.0 / p
        zp[p] = _lp(w * ind, _wpow(z, e) * nx * ind, p)
    return SeminormSet(k, zero2, k2, zp)


# Gagliardo-Nirenberg type estimate ----------------------------------------


def _gn(w, z, nx, ndx, r, p, C, lemma, params):
    if not p >= 2:
        raise ValueError("p must lie in [2, inf]")
    if r < 0:
        raise ValueError("r must be nonnegative")
    A = float(np.dot(w, ndx**2 * _wpow(z, 2 * r + 2)))
    B = float(np.dot(w, nx**2 * _wpow(z, 2 * r)))
    if math.isinf(p):
        theta = 0.5
        lhs = float(np.max(_wpow(z, r + 0.5) * nx, initial=0.0))
    else:
        theta = (p - 2) / (2 * p)
        lhs = float(np.dot(w, nx**p * _wpow(z, p * (r + theta)))) ** (1.0 / p)
    mixed = (A ** (theta / 2)) * B ** ((1 - theta) / 2) if theta > 0 else math.sqrt(B)
    terms = {"mixed": mixed, "lower": math.sqrt(B)}
    params = dict(params, r=float(r), p=_pstr(p), theta=theta)
    return _finish(lemma, params, lhs, 0.0, terms, C)


def check_gn(curve: DiscreteCurve, X, zeta, r: float, p: float, C: float = 1.0) -> InequalityCheck:
    """Weighted Gagliardo-Nirenberg estimate for a normal field.

    ``lhs = (int |X|^p zeta^(p(r+theta)) ds)^(1/p)`` with
    ``theta = (p-2)/(2p)`` (``||zeta^(r+1/2) X||_inf`` for ``p = inf``) and
    ``rhs = A^(theta/2) B^((1-theta)/2) + B^(1/2)`` where
    ``A = int |nabla_s X|^2 zeta^(2r+2)`` and ``B = int |X|^2 zeta^(2r)``.
    """
    X = _field(X)
    z = _zeta(curve, zeta)
    w = quadrature_weights(curve)
    dX = covariant_derivative(curve, X, 1)
    return _gn(w, z, np.linalg.norm(X, axis=1), np.linalg.norm(dX, axis=1), r, p, C,
               GAGLIARDO_NIRENBERG, {})


def check_line_corollary(x, u, xi, r: float, p: float, C: float = 1.0) -> InequalityCheck:
    """Gagliardo-Nirenberg estimate for a scalar function on a uniform grid of the line."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if not (x.shape == u.shape == xi.shape) or x.ndim != 1 or x.size < 3:
        raise ValueError("x, u and xi must be 1-D arrays of equal length >= 3")
    if np.any(xi < 0):
        raise ValueError("cutoff must be nonnegative")
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    du = np.gradient(u, x, edge_order=2)
    return _gn(w, xi, np.abs(u), np.abs(du), r, p, C, "line_corollary", {})


# weighted gradient estimate ------------------------------------------------


def check_gradient_interpolation(curve: DiscreteCurve, X, zeta, ell: int, eps: float,
                                 C: float = 1.0) -> InequalityCheck:
    """``int |nabla X|^2 zeta^l <= eps int |nabla^2 X|^2 zeta^(l+2) + (C/eps) int |X|^2 zeta^(l-2)``."""
    if int(ell) != ell or ell < 2:
        raise ValueError("ell must be an integer >= 2")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    X = _field(X)
    z = _zeta(curve, zeta)
    w = quadrature_weights(curve)
    d1 = covariant_derivative(curve, X, 1)
    d2 = covariant_derivative(curve, d1, 1)
    lhs = float(np.dot(w, np.sum(d1**2, axis=1) * _wpow(z, ell)))
    top = eps * float(np.dot(w, np.sum(d2**2, axis=1) * _wpow(z, ell + 2)))
    low = float(np.dot(w, np.sum(X**2, axis=1) * _wpow(z, ell - 2))) / eps
    return _finish(WEIGHTED_GRADIENT, {"ell": int(ell), "eps": float(eps)}, lhs, top, {"lower": low}, C)


# curvature monomials -------------------------------------------------------


@dataclass(frozen=True)
class MonomialSpec:
    """Product ``nabla^{i_1} kappa * ... * nabla^{i_b} kappa`` by its derivative orders."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 2 or min(idx) < 0:
            raise ValueError("a monomial needs at least two nonnegative indices")
        object.__setattr__(self, "indices", idx)

    @property
    def a(self) -> int:
        return sum(self.indices)

    @property
    def b(self) -> int:
        return len(self.indices)

    @property
    def c(self) -> int:
        return max(self.indices)

    @property
    def weight_exponent(self) -> float:
        return self.a + self.b / 2 - 1

    def delta(self, k: int) -> float:
        return self.weight_exponent / k

    def admissible(self, k: int) -> bool:
        return k >= 1 and self.c <= k and self.weight_exponent < 2 * k

    def label(self) -> str:
        return "-".join(str(i) for i in self.indices)


def kappa_derivatives(curve: DiscreteCurve, order: int) -> list:
    """``[kappa, nabla_s kappa, ..., nabla_s^order kappa]`` as nodal arrays."""
    out = [curve.curvature]
    if order >= 1:
        out.append(curve.nabla_kappa)
    if order >= 2:
        out.append(curve.nabla2_kappa)
    for m in range(3, order + 1):
        out.append(covariant_derivative(curve, out[2], m - 2))
    return out[: order + 1]


def monomial_integral(curve: DiscreteCurve, spec: MonomialSpec, zeta, derivs=None) -> float:
    """``int prod_j |nabla^{i_j} kappa| zeta^(a + b/2 - 1) ds``.

    The product of norms bounds every contraction of the factors, so it is
    used as the size of the monomial.
    """
    z = _zeta(curve, zeta)
    if derivs is None:
        if spec.c > 4:
            raise ValueError("derivative order too high for the available stencils")
        derivs = kappa_derivatives(curve, spec.c)
    prod = np.ones(curve.n_nodes)
    for i in spec.indices:
        prod = prod * np.linalg.norm(derivs[i], axis=1)
    return float(np.dot(quadrature_weights(curve), prod * _wpow(z, spec.weight_exponent)))


def check_p_interpolation(curve: DiscreteCurve, spec: MonomialSpec, zeta, k: int, eps: float,
                          C: float = 1.0, derivs=None) -> InequalityCheck:
    """Monomial estimate ``int |P| zeta^(a+b/2-1) <= eps int |nabla^k kappa|^2 zeta^(2k) + C K^q1 + C K^q2``.

    Here ``K = int_{zeta > 0} |kappa|^2``, ``delta = (a + b/2 - 1)/k``,
    ``q1 = (b - delta)/(2 - delta)`` and ``q2 = b/2``.
    """
    if not spec.admissible(k):
        raise ValueError(f"monomial {spec.indices} is not admissible for k={k}")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    z = _zeta(curve, zeta)
    if derivs is None:
        derivs = kappa_derivatives(curve, k)
    w = quadrature_weights(curve)
    lhs = monomial_integral(curve, spec, z, derivs)
    top = eps * float(np.dot(w, np.sum(derivs[k] ** 2, axis=1) * _wpow(z, 2 * k)))
    K = float(np.dot(w * (z > 0), np.sum(derivs[0] ** 2, axis=1)))
    d = spec.delta(k)
    terms = {"K_delta": K ** ((spec.b - d) / (2 - d)), "K_half_b": K ** (spec.b / 2)}
    params = {"spec": spec.label(), "k": int(k), "eps": float(eps), "delta": d,
              "a": spec.a, "b": spec.b, "c": spec.c}
    return _finish(MONOMIAL, params, lhs, top, terms, C)


# random samples ------------------------------------------------------------


@dataclass
class BatchConfig:
    """Settings of a randomized batch.

    Each trial draws one curve, one normal field and one cutoff and evaluates
    every variant listed here on that triple.
    """

    trials: int = 1000
    seed: int = 0
    ells: tuple = (2, 3, 4)
    p_values: tuple = (2.0, 4.0, 6.0, math.inf)
    r_values: tuple = (0.0, 0.5, 1.0)
    specs: tuple = ((0, 0, 0, 0), (1, 1), (2, 0, 0, 0))
    k: int = 2
    monomial_eps: float = 0.5
    max_modes: int = 12
    h: float = 0.05
    dims: tuple = (2, 3)

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ValueError("a batch needs at least one trial")
        self.trials = int(self.trials)
        self.p_values = tuple(math.inf if str(p).lower() in ("inf", "infinity") else float(p)
                              for p in self.p_values)
        self.specs = tuple(tuple(s) for s in self.specs)
        for s in self.specs:
            if not MonomialSpec(s).admissible(self.k):
                raise ValueError(f"monomial {s} is not admissible for k={self.k}")
        if not 1 <= self.max_modes <= 12:
            raise ValueError("max_modes must lie in [1, 12]")

    @classmethod
    def from_dict(cls, d: dict) -> "BatchConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown batch keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_values"] = [_pstr(p) for p in self.p_values]
        return d


def random_line(rng, cfg: BatchConfig) -> DiscreteCurve:
    """Graph over ``[-16, 16]`` perturbed by a few random Fourier modes."""
    dim = int(rng.choice(cfg.dims))
    G = 3
    n = int(round(32 / cfg.h)) + 1
    x = -16 + cfg.h * np.arange(-G, n + G)
    P = np.zeros((x.size, dim))
    P[:, 0] = x
    m = int(rng.integers(1, cfg.max_modes + 1))
    amp = rng.uniform(0.0, 1.5)
    for c in range(1, dim):
        om = rng.uniform(0.2, 2.0, m)
        ph = rng.uniform(0, 2 * np.pi, m)
        a = rng.uniform(-1, 1, m) * amp / (m * (1 + om**2))
        P[:, c] = np.sin(np.outer(x, om) + ph) @ a
    return DiscreteCurve(P, cfg.h)


def random_loop(rng, cfg: BatchConfig) -> DiscreteCurve:
    """Closed polar curve ``r(t) = R (1 + sum a_j cos(j t + phi_j))``."""
    dim = int(rng.choice(cfg.dims))
    R = rng.uniform(2.0, 4.0)
    n = int(np.ceil(2 * np.pi * R / cfg.h))
    t = 2 * np.pi * np.arange(n) / n
    m = int(rng.integers(1, cfg.max_modes + 1))
    js = rng.choice(np.arange(1, 13), size=m, replace=False)
    c = rng.uniform(-1, 1, m)
    c *= rng.uniform(0, 0.3) / max(np.abs(c).sum(), 1e-12)
    rad = R * (1 + np.cos(np.outer(t, js) + rng.uniform(0, 2 * np.pi, m)) @ (c / js**2))
    P = np.zeros((n, dim))
    P[:, 0] = rad * np.cos(t)
    P[:, 1] = rad * np.sin(t)
    if dim > 2:
        b = rng.uniform(-0.3, 0.3, m) / js**2
        P[:, 2] = R * np.sin(np.outer(t, js)) @ b
    return DiscreteCurve(P, 2 * np.pi / n, end_condition="periodic")


def random_cutoff(rng, curve: DiscreteCurve) -> CutoffWeight:
    """Smoothstep plateau with Lipschitz bound at most one.

    Closed curves get the constant weight in 30% of the draws.
    """
    s = curve.arclength
    if curve.periodic:
        half = 0.5 * curve.length
        if rng.uniform() < 0.3:
            return CutoffWeight.ones(curve)
        ramp = 2.0 + (min(3.0, half - 0.5) - 2.0) * rng.uniform() ** 2
        w = max(half - ramp - 0.5, 0.0) * rng.uniform() ** 2
        return CutoffWeight.plateau(curve, -w, w, ramp)
    # squared uniforms put more samples on narrow, steep cutoffs, where the
    # ratios are largest
    ramp = 2.0 + 2.0 * rng.uniform() ** 2
    c = rng.uniform(-3.0, 3.0)
    w = 5.0 * rng.uniform() ** 2
    zeta = CutoffWeight.plateau(curve, c - w, c + w, ramp)
    if s[-1] - (c + w + ramp) < 1 or (c - w - ramp) - s[0] < 1:
        raise RuntimeError("cutoff support reaches the ends of the sample curve")
    return zeta


def field_basis(rng, curve: DiscreteCurve, max_modes: int) -> np.ndarray:
    """Random finite family of normal fields, shape ``(nb, M, dim)``.

    Scalar profiles (low-degree polynomials on open curves, the lowest
    Fourier modes on closed ones, plus up to ``max_modes`` random modes) are
    multiplied by the normal projections of the coordinate directions.
    """
    s = curve.arclength
    m = int(rng.integers(1, max_modes + 1))
    ph = rng.uniform(0, 2 * np.pi, m)
    if curve.periodic:
        L = curve.length
        om = 2 * np.pi * rng.integers(0, 6, m) / L
        t = 2 * np.pi * s / L
        prof = [np.ones_like(s), np.sin(t), np.cos(t), np.sin(2 * t), np.cos(2 * t)]
    else:
        om = rng.uniform(0.0, 3.0, m)
        u = s / 8.0
        prof = [np.ones_like(s), u, u * u]
    prof += [np.cos(o * s + q) for o, q in zip(om, ph)]
    frame = [project_normal(np.broadcast_to(e, curve.nodes.shape), curve.tangent)
             for e in np.eye(curve.dim)]
    return np.array([g[:, None] * e for g in prof for e in frame])


def random_normal_field(rng, curve: DiscreteCurve, max_modes: int, basis=None) -> NormalField:
    """Random combination of :func:`field_basis` fields."""
    if basis is None:
        basis = field_basis(rng, curve, max_modes)
    coef = rng.normal(size=len(basis))
    return NormalField(np.tensordot(coef, basis, axes=1))


def sharpest_gradient_field(curve: DiscreteCurve, basis, zeta, ell: int, eps=None,
                            eps_range=(1e-3, 1.0)):
    """Field in ``span(basis)`` maximizing the weighted gradient ratio.

    For fixed ``eps`` the ratio is a quotient of two quadratic forms, so the
    maximizer is the top generalized eigenvector; directions invisible on
    the support are discarded first.  With ``eps=None`` the least favorable
    ``eps`` in ``eps_range`` is located by a log-spaced scan refined with a
    bounded scalar search.

    Returns
    -------
    field : NormalField
    eps : float
    ratio : float
        Largest ratio with the constant set to one.
    """
    z = _zeta(curve, zeta)
    w = quadrature_weights(curve)
    F = np.asarray(basis, dtype=float)
    d1 = np.array([covariant_derivative(curve, f, 1) for f in F])
    d2 = np.array([covariant_derivative(curve, f, 1) for f in d1])

    def gram(G, wt):
        flat = (G * np.sqrt(wt)[None, :, None]).reshape(len(G), -1)
        return flat @ flat.T

    Lm = gram(d1, w * _wpow(z, ell))
    Am = gram(d2, w * _wpow(z, ell + 2))
    Bm = gram(F, w * _wpow(z, ell - 2))
    lam, V = np.linalg.eigh(Bm)
    keep = lam > 1e-12 * lam.max()
    T = V[:, keep] / np.sqrt(lam[keep])
    Lr, Ar = T.T @ Lm @ T, T.T @ Am @ T

    def top(e):
        # in the B-orthonormal coordinates the denominator is e*A + I/e
        mu, Y = eigh(Lr, e * Ar + np.eye(len(Lr)) / e)
        return mu[-1], Y[:, -1]

    if eps is None:
        grid = np.geomspace(eps_range[0], eps_range[1], 25)
        vals = [top(e)[0] for e in grid]
        i = int(np.argmax(vals))
        lo, hi = np.log(grid[max(i - 1, 0)]), np.log(grid[min(i + 1, len(grid) - 1)])
        res = minimize_scalar(lambda t: -top(np.exp(t))[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-6})
        eps = float(np.exp(res.x)) if -res.fun >= vals[i] else float(grid[i])
    mu, y = top(eps)
    x = T @ y
    return NormalField(np.tensordot(x, F, axes=1)), float(eps), float(mu)


def sample_triple(cfg: BatchConfig, trial: int):
    """Deterministic (curve, field basis, field, cutoff) for one trial index."""
    rng = np.random.default_rng([int(cfg.seed), int(trial)])
    curve = random_line(rng, cfg) if rng.uniform() < 0.5 else random_loop(rng, cfg)
    zeta = random_cutoff(rng, curve)
    basis = field_basis(rng, curve, cfg.max_modes)
    X = random_normal_field(rng, curve, cfg.max_modes, basis)
    return rng, curve, basis, X, zeta


def run_trial(cfg: BatchConfig, trial: int) -> list:
    """All checks for one trial as flat CSV-ready rows."""
    rng, curve, basis, X, zeta = sample_triple(cfg, trial)
    kind = "loop" if curve.periodic else "line"
    base = {"trial": trial, "curve": kind, "dim": curve.dim, "lipschitz": zeta.lipschitz}
    checks = []
    for ell in cfg.ells:
        Xs, eps, _ = sharpest_gradient_field(curve, basis, zeta, ell)
        checks.append(check_gradient_interpolation(curve, Xs, zeta, ell, eps))
    for p in cfg.p_values:
        r = float(rng.choice(cfg.r_values))
        checks.append(check_gn(curve, X, zeta, r, p))
    derivs = kappa_derivatives(curve, cfg.k)
    for s in cfg.specs:
        checks.append(check_p_interpolation(curve, MonomialSpec(s), zeta, cfg.k, cfg.monomial_eps,
                                            derivs=derivs))
    rows = []
    for chk in checks:
        rows.append(dict(base, lemma=chk.lemma, variant=variant_key(chk), params=json.dumps(chk.params),
                         lhs=chk.lhs, rhs=chk.rhs, ratio=chk.ratio, constant=chk.constant))
    return rows


def variant_key(chk: InequalityCheck) -> str:
    """Group label: constants are compared only within one group."""
    p = chk.params
    if chk.lemma == WEIGHTED_GRADIENT:
        return f"ell={p['ell']}"
    if chk.lemma in (GAGLIARDO_NIRENBERG, "line_corollary"):
        return f"p={p['p']},r={p['r']:g}"
    if chk.lemma == MONOMIAL:
        return f"spec={p['spec']},k={p['k']}"
    return ""


def _run_chunk(args):
    cfg, lo, hi = args
    rows = []
    for t in range(lo, hi):
        rows.extend(run_trial(cfg, t))
    return rows


def run_batch(cfg: BatchConfig, threads: int = 1, start: int = 0) -> list:
    """Rows for trials ``start .. start + cfg.trials - 1`` in trial order."""
    stop = start + cfg.trials
    if threads <= 1:
        return _run_chunk((cfg, start, stop))
    edges = np.linspace(start, stop, threads * 4 + 1).astype(int)
    jobs = [(cfg, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(_run_chunk, jobs))
    return [r for part in parts for r in part]


def summarize(rows: list) -> dict:
    """Max and median ratio and constant per lemma and variant."""
    groups = {}
    for r in rows:
        groups.setdefault((r["lemma"], r["variant"]), []).append(r)
    out = {}
    for (lemma, variant), rs in sorted(groups.items()):
        ratio = np.array([r["ratio"] for r in rs])
        const = np.array([r["constant"] for r in rs])
        out[f"{lemma}[{variant}]"] = {
            "lemma": lemma,
            "variant": variant,
            "n": len(rs),
            "max_ratio": float(ratio.max()),
            "median_ratio": float(np.median(ratio)),
            "max_constant": float(const.max()),
            "median_constant": float(np.median(const)),
            "finite": bool(np.all(np.isfinite(ratio)) and np.all(np.isfinite(const))),
        }
    return out


def lemma_summary(rows: list) -> dict:
    """Max ratio and constant per lemma, pooling its variants."""
    out = {}
    for r in rows:
        g = out.setdefault(r["lemma"], {"n": 0, "max_ratio": 0.0, "max_constant": 0.0})
        g["n"] += 1
        g["max_ratio"] = max(g["max_ratio"], r["ratio"])
        g["max_constant"] = max(g["max_constant"], r["constant"])
    return out


@dataclass
class StabilityReport:
    """Calibration on a batch and validation on the doubled batch."""

    trials: int
    calibrated: dict
    doubled: dict
    max_rel_change: float
    violations: int
    p2_max_ratio: float
    stable: bool

    def to_dict(self) -> dict:
        return asdict(self)


def doubling_check(cfg: BatchConfig, threads: int = 1, tol: float = 0.1, rows=None):
    """Calibrate constants on ``cfg.trials`` trials and recheck on twice as many.

    The calibrated constant of each group is its batch maximum.  The doubled
    batch reuses the first trials and adds as many new ones; every new trial
    must be covered by ``(1 + tol)`` times the calibrated constant and each
    group maximum may change by at most ``tol`` relative.  Rows of groups
    that are absent from the calibration batch count as violations.
    """
    if rows is None:
        first = run_batch(cfg, threads)
    else:
        first = [r for r in rows if r["trial"] < cfg.trials]
    second = run_batch(cfg, threads, start=cfg.trials)
    cal = summarize(first)
    dbl = summarize(first + second)
    worst = 0.0
    for key, g in cal.items():
        for q in ("max_ratio", "max_constant"):
            a, b = g[q], dbl[key][q]
            if a > 0:
                worst = max(worst, abs(b - a) / a)
            elif b > 0:
                worst = math.inf
    viol = 0
    for r in second:
        g = cal.get(f"{r['lemma']}[{r['variant']}]")
        # a group never drawn during calibration has no constant to check against
        if g is None or r["constant"] > g["max_constant"] * (1 + tol):
            viol += 1
    p2 = max((r["ratio"] for r in first + second
              if r["lemma"] == GAGLIARDO_NIRENBERG and r["variant"].startswith("p=2,")), default=0.0)
    rep = StabilityReport(cfg.trials, cal, dbl, worst, viol, p2,
                          bool(worst <= tol and viol == 0 and all(g["finite"] for g in dbl.values())))
    return rep, first + second


CSV_FIELDS = ("trial", "lemma", "variant", "curve", "dim", "lipschitz", "params", "lhs", "rhs",
              "ratio", "constant")


def write_batch_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
