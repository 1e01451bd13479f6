import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from curveflow import interp
from curveflow.geometry import (
    BorderlineElastica,
    Circle,
    CutoffWeight,
    Line,
    NormalField,
    ReferenceCurveSpec,
    build_reference,
)
from curveflow.interp import (
    GAGLIARDO_NIRENBERG,
    MONOMIAL,
    WEIGHTED_GRADIENT,
    BatchConfig,
    MonomialSpec,
    check_gn,
    check_gradient_interpolation,
    check_line_corollary,
    check_p_interpolation,
    monomial_integral,
    seminorms,
)


@pytest.fixture(scope="module")
def flat():
    return build_reference(ReferenceCurveSpec(Line(), S=12, h=0.01))


def gaussian_field(curve, c=0.0, w=1.0):
    s = curve.nodes[:, 0]
    X = np.zeros_like(curve.nodes)
    X[:, 1] = np.exp(-((s - c) / w) ** 2)
    return X


def plateau(curve, a=-5.0, b=5.0, ramp=1.0):
    return CutoffWeight.plateau(curve, a, b, ramp)


# seminorms -------------------------------------------------------------------


def test_seminorms_zero_field(flat):
    sn = seminorms(flat, np.zeros_like(flat.nodes), plateau(flat), 2)
    assert sn.zero2 == sn.k2 == 0.0
    assert all(v == 0.0 for v in sn.zero_p.values())


def test_seminorm_gaussian_oracle(flat):
    zeta = plateau(flat)
    sn = seminorms(flat, gaussian_field(flat), zeta, 1)
    supp = flat.nodes[zeta.support, 0]
    exact = quad(lambda s: np.exp(-2 * s**2), supp.min(), supp.max(), epsabs=1e-14)[0]
    assert sn.zero2**2 == pytest.approx(exact, abs=1e-6)


def test_seminorm_k0(flat):
    sn = seminorms(flat, gaussian_field(flat, 0.5), plateau(flat), 0)
    assert sn.k2 == sn.zero2
    assert set(sn.zero_p) == {4, 6, math.inf}
    with pytest.raises(ValueError):
        seminorms(flat, gaussian_field(flat), plateau(flat), 1, p_values=(1.5,))


# Gagliardo-Nirenberg --------------------------------------------------------------


def test_gn_zero_field(flat):
    chk = check_gn(flat, np.zeros_like(flat.nodes), plateau(flat), 0.5, 4)
    assert chk.lhs == chk.rhs == chk.ratio == 0.0
    assert chk.holds


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0])
def test_gn_p2(flat, r):
    zeta = plateau(flat, -3, 2, 2.0)
    X = gaussian_field(flat, 0.7, 1.5)
    chk = check_gn(flat, X, zeta, r, 2)
    w = np.asarray(zeta.values)
    direct = np.sqrt(np.sum(flat.segment_lengths[0] * (w**r * X[:, 1]) ** 2 * (w > 0)))
    assert chk.lhs == pytest.approx(direct, rel=1e-3)
    assert chk.terms["mixed"] == chk.terms["lower"] == pytest.approx(chk.lhs, rel=1e-12)
    assert chk.ratio <= 0.5 * (1 + 1e-10)


def test_gn_gaussian_p4(flat):
    chk = check_gn(flat, gaussian_field(flat), plateau(flat), 0.0, 4)
    assert 0 < chk.ratio <= 3
    assert chk.params["theta"] == pytest.approx(0.25)
    assert chk.constant <= 1.0


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.01, 100), p=st.sampled_from([2.0, 4.0, 6.0, math.inf]), r=st.floats(0, 2))
def test_gn_homogeneous(flat, a, p, r):
    zeta = plateau(flat)
    X = gaussian_field(flat, 0.3)
    base = check_gn(flat, X, zeta, r, p)
    scaled = check_gn(flat, a * X, zeta, r, p)
    assert scaled.ratio == pytest.approx(base.ratio, rel=1e-9)
    assert scaled.lhs == pytest.approx(a * base.lhs, rel=1e-9)


def test_gn_constant_is_minimal(flat):
    chk = check_gn(flat, gaussian_field(flat, 0, 0.3), plateau(flat, -1, 1, 2.0), 0.0, math.inf)
    tight = check_gn(flat, gaussian_field(flat, 0, 0.3), plateau(flat, -1, 1, 2.0), 0.0, math.inf,
                     C=chk.constant)
    assert tight.holds
    assert not check_gn(flat, gaussian_field(flat, 0, 0.3), plateau(flat, -1, 1, 2.0), 0.0,
                        math.inf, C=0.99 * chk.constant).holds or chk.constant == 0


def test_gn_validation(flat):
    with pytest.raises(ValueError):
        check_gn(flat, gaussian_field(flat), plateau(flat), -1.0, 4)
    with pytest.raises(ValueError):
        check_gn(flat, gaussian_field(flat), plateau(flat), 0.0, 1.0)


def test_line_corollary_sech():
    x = np.linspace(-20, 20, 8001)
    u = 1 / np.cosh(x)
    xi = np.clip(11 - np.abs(x), 0, 1)  # plateau on [-10, 10]
    chk = check_line_corollary(x, u, xi, 0.0, math.inf)
    assert chk.lhs == pytest.approx(1.0, abs=1e-12)
    # rhs oracle: sqrt(int |u'|^2 xi^2)^(1/2) (int u^2)^(1/4) + sqrt(int u^2) with xi = 1 where u matters
    A = quad(lambda t: (np.tanh(t) / np.cosh(t)) ** 2, -10, 10)[0]
    B = quad(lambda t: 1 / np.cosh(t) ** 2, -10, 10)[0]
    assert chk.rhs == pytest.approx(A**0.25 * B**0.25 + B**0.5, rel=1e-4)
    assert chk.lemma == "line_corollary"


def test_line_corollary_trivial_and_p2():
    x = np.linspace(-5, 5, 501)
    assert check_line_corollary(x, 0 * x, np.ones_like(x), 0, 4).ratio == 0.0
    chk = check_line_corollary(x, np.exp(-x**2), np.exp(-x**2 / 4), 1.0, 2)
    assert chk.ratio <= 0.5 * (1 + 1e-10)
    with pytest.raises(ValueError):
        check_line_corollary(x, x, -np.ones_like(x), 0, 4)
    with pytest.raises(ValueError):
        check_line_corollary(x[:2], x[:2], x[:2], 0, 4)


# weighted gradient estimate ----------------------------------------------------


def test_gradient_interpolation_terms(flat):
    X = gaussian_field(flat)
    chk = check_gradient_interpolation(flat, X, plateau(flat), 2, 0.5)
    assert chk.lemma == WEIGHTED_GRADIENT
    assert set(chk.terms) == {"lower", "eps_term"}
    assert chk.holds
    with pytest.raises(ValueError):
        check_gradient_interpolation(flat, X, plateau(flat), 1, 0.5)
    with pytest.raises(ValueError):
        check_gradient_interpolation(flat, X, plateau(flat), 2, 1.5)


def test_sharpest_field_beats_random(rng):
    cfg = BatchConfig(trials=1)
    _, curve, basis, X, zeta = interp.sample_triple(cfg, 3)
    Xs, eps, ratio = interp.sharpest_gradient_field(curve, basis, zeta, 2)
    assert 1e-3 <= eps <= 1
    chk = check_gradient_interpolation(curve, Xs, zeta, 2, eps)
    assert chk.ratio == pytest.approx(ratio, rel=1e-6)
    for _ in range(20):
        Y = np.tensordot(rng.normal(size=len(basis)), basis, axes=1)
        assert check_gradient_interpolation(curve, Y, zeta, 2, eps).ratio <= ratio * (1 + 1e-8)


# monomials ----------------------------------------------------------------------


@pytest.mark.parametrize("idx", [(0, 0), (1, 1), (0, 0, 0, 0), (2, 0, 0, 0)])
def test_monomial_on_line(flat, idx):
    spec = MonomialSpec(idx)
    assert monomial_integral(flat, spec, plateau(flat)) == pytest.approx(0.0, abs=1e-20)
    chk = check_p_interpolation(flat, spec, plateau(flat), 2, 0.5)
    assert chk.lhs == pytest.approx(0.0, abs=1e-20)
    assert chk.holds


def test_monomial_elastica():
    c = build_reference(ReferenceCurveSpec(BorderlineElastica(), S=20, h=0.01))
    val = monomial_integral(c, MonomialSpec((0, 0)), CutoffWeight.ones(c))
    assert val == pytest.approx(8.0, abs=1e-3)


def test_monomial_circle_arc(circle):
    zeta = CutoffWeight.plateau(circle, -1.0, 1.0, 0.5)
    val = monomial_integral(circle, MonomialSpec((0, 0, 0, 0)), zeta)
    # |kappa| = 1, so the integral is the weighted arc length
    w = np.asarray(zeta.values) ** MonomialSpec((0, 0, 0, 0)).weight_exponent
    assert val == pytest.approx(np.dot(interp.quadrature_weights(circle), w), rel=1e-3)
    assert 2.0 < val < 3.0


def test_monomial_spec_arithmetic():
    s = MonomialSpec((1, 1, 0, 0))
    assert (s.a, s.b, s.c) == (2, 4, 1)
    assert s.delta(2) == 1.5
    assert s.admissible(2)
    assert not MonomialSpec((3, 0)).admissible(2)
    assert not MonomialSpec((2, 2, 2)).admissible(2)
    assert s.label() == "1-1-0-0"
    with pytest.raises(ValueError):
        MonomialSpec((1,))
    with pytest.raises(ValueError):
        MonomialSpec((1, -1))


def test_p_interpolation_validation(flat):
    with pytest.raises(ValueError):
        check_p_interpolation(flat, MonomialSpec((3, 0)), plateau(flat), 2, 0.5)
    with pytest.raises(ValueError):
        check_p_interpolation(flat, MonomialSpec((0, 0)), plateau(flat), 2, 0.0)


def test_p_interpolation_params(circle):
    chk = check_p_interpolation(circle, MonomialSpec((1, 1)), CutoffWeight.ones(circle), 2, 0.5)
    assert chk.lemma == MONOMIAL
    assert chk.params["delta"] == pytest.approx(1.0)
    assert set(chk.terms) >= {"K_delta", "K_half_b"}


# batch ----------------------------------------------------------------------------


def test_batch_config():
    cfg = BatchConfig.from_dict({"trials": 5, "p_values": [2, "inf"]})
    assert cfg.p_values == (2.0, math.inf)
    assert cfg.to_dict()["p_values"] == ["2", "inf"]
    with pytest.raises(ValueError):
        BatchConfig(trials=0)
    with pytest.raises(ValueError):
        BatchConfig.from_dict({"trails": 3})
    with pytest.raises(ValueError):
        BatchConfig(specs=((3, 3),))
    with pytest.raises(ValueError):
        BatchConfig(max_modes=20)


def test_trial_rows():
    cfg = BatchConfig(trials=2)
    rows = interp.run_batch(cfg)
    per = len(cfg.ells) + len(cfg.p_values) + len(cfg.specs)
    assert len(rows) == 2 * per
    assert {r["lemma"] for r in rows} == {WEIGHTED_GRADIENT, GAGLIARDO_NIRENBERG, MONOMIAL}
    for r in rows:
        assert np.isfinite(r["ratio"]) and r["ratio"] >= 0
        assert r["lipschitz"] <= 1 + 1e-9


def test_batch_prefix_reuse():
    a = interp.run_batch(BatchConfig(trials=2))
    b = interp.run_batch(BatchConfig(trials=3))
    assert a == b[: len(a)]
    c = interp.run_batch(BatchConfig(trials=1), start=2)
    assert c == b[len(a):]


def test_batch_csv_deterministic(tmp_path):
    for name in ("a.csv", "b.csv"):
        interp.write_batch_csv(interp.run_batch(BatchConfig(trials=2, seed=7)), tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    with open(tmp_path / "a.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(interp.CSV_FIELDS)


def test_summaries():
    rows = interp.run_batch(BatchConfig(trials=3))
    s = interp.summarize(rows)
    assert all(g["finite"] for g in s.values())
    assert sum(g["n"] for g in s.values()) == len(rows)
    pooled = interp.lemma_summary(rows)
    assert pooled[MONOMIAL]["n"] == 9
    assert pooled[GAGLIARDO_NIRENBERG]["max_ratio"] == max(
        g["max_ratio"] for g in s.values() if g["lemma"] == GAGLIARDO_NIRENBERG)


def test_samplers_respect_bounds():
    cfg = BatchConfig()
    for trial in range(30):
        _, curve, basis, X, zeta = interp.sample_triple(cfg, trial)
        assert zeta.lipschitz <= 1 + 1e-9
        assert zeta.check(curve)
        assert NormalField(X.vectors).orthogonality_defect(curve) <= 1e-10
        assert basis.shape[1:] == curve.nodes.shape
