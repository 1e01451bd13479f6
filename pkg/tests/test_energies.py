import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curveflow.energies import (
    BENDING,
    DIRECTION,
    adapted_energy,
    bending_energy,
    direction_energy,
    e1_flux,
    energy_value,
    finite_difference_variation,
    first_variation,
    graphical_end_report,
    l2_gradient,
    length,
    localized_energy,
)
from curveflow.flows import preset, velocity
from curveflow.geometry import (
    Circle,
    CutoffWeight,
    DiscreteCurve,
    Gaussian,
    Graph,
    Line,
    Loops,
    PowerEnd,
    ReferenceCurveSpec,
    build_reference,
    integrate,
)


def bump(h=0.02, S=6, amp=0.3):
    return build_reference(ReferenceCurveSpec(Graph(Gaussian(amp)), S=S, h=h))


def interior_field(curve, vec):
    phi = np.array(vec, dtype=float)
    G = curve.ghost
    phi[: 2 * G] = 0
    phi[-2 * G :] = 0
    return phi


def test_line_energies_vanish(line):
    assert direction_energy(line) == 0.0
    assert bending_energy(line) == pytest.approx(0.0, abs=1e-20)
    assert adapted_energy(line, 0, 1).adapted == 0.0


def test_leftward_line():
    c = build_reference(ReferenceCurveSpec(Line((-1.0, 0.0)), S=5, h=0.1))
    ell = length(c)
    assert ell == pytest.approx(10.0)
    assert direction_energy(c) == pytest.approx(2 * ell)


def test_direction_rejects_nonunit(line):
    with pytest.raises(ValueError):
        direction_energy(line, e=(2.0, 0.0))


def test_elastica_energies(elastica):
    assert bending_energy(elastica) == pytest.approx(4.0, abs=1e-3)
    rep = adapted_energy(elastica, 1, 1)
    assert rep.adapted == pytest.approx(8.0, abs=1e-3)
    assert rep.bending + rep.direction == pytest.approx(rep.adapted)
    assert rep.length_divergent


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_circle_bending(r):
    c = build_reference(ReferenceCurveSpec(Circle(r), N=512))
    assert bending_energy(c) == pytest.approx(np.pi / r, rel=0.01)
    rep = adapted_energy(c, 1.0, 0.0)
    assert not rep.length_divergent
    assert rep.length == pytest.approx(2 * np.pi * r, rel=1e-4)


def test_adapted_energy_weights(elastica):
    rep = adapted_energy(elastica, 1.0, 0.0)
    assert rep.adapted == pytest.approx(bending_energy(elastica))
    assert energy_value(elastica, 2.0, 3.0) == pytest.approx(2 * rep.bending + 3 * rep.direction)
    with pytest.raises(ValueError):
        adapted_energy(elastica, -1.0, 1.0)
    with pytest.raises(ValueError):
        adapted_energy(elastica, 1.0, -0.5)


def test_energy_report_json(elastica):
    import json

    d = json.loads(adapted_energy(elastica).to_json())
    assert {"direction", "bending", "adapted", "length"} <= set(d)


@settings(max_examples=25, deadline=None)
@given(amp=st.floats(-1, 1), width=st.floats(0.5, 3))
def test_energies_nonnegative(amp, width):
    c = build_reference(ReferenceCurveSpec(Graph(Gaussian(amp, width)), S=8, h=0.05))
    assert direction_energy(c) >= 0
    assert bending_energy(c) >= 0


def test_localized_trivial_cutoffs(elastica):
    zero = CutoffWeight(np.zeros(elastica.n_nodes), 1.0)
    one = CutoffWeight.ones(elastica)
    for kind in (BENDING, DIRECTION):
        assert localized_energy(elastica, zero, kind) == 0.0
    assert localized_energy(elastica, one, BENDING) == pytest.approx(bending_energy(elastica), rel=1e-14)
    assert localized_energy(elastica, one, DIRECTION) == pytest.approx(direction_energy(elastica), rel=1e-14)
    with pytest.raises(ValueError):
        localized_energy(elastica, one, "twisting")


def test_localized_half_elastica(elastica):
    # ramp centered on s = 0: the symmetric smoothstep removes the first-order ramp error
    eta = CutoffWeight.plateau(elastica, -30.0, -0.5, 1.0)
    assert localized_energy(elastica, eta, BENDING) == pytest.approx(2.0, abs=1e-3)


def test_first_variation_line(line, rng):
    phi = interior_field(line, rng.normal(size=line.nodes.shape))
    assert first_variation(line, 1.0, 0.0, phi) == pytest.approx(0.0, abs=1e-12)


def test_first_variation_elastica(elastica, rng):
    x = elastica.nodes[:, 0]
    phi = np.column_stack([np.sin(x), np.cos(2 * x)]) * np.exp(-x**2 / 8)[:, None]
    phi = interior_field(elastica, phi)
    scale = integrate(elastica, np.linalg.norm(phi, axis=1))
    assert abs(first_variation(elastica, 1.0, 1.0, phi)) <= 10 * elastica.h**2 * scale


def test_first_variation_along_elastic_velocity():
    c = bump()
    V = velocity(c, preset("ElasticFlow", lam=1.0)).normal
    phi = interior_field(c, V)
    fv = first_variation(c, 1.0, 1.0, phi)
    fd = finite_difference_variation(c, lambda cc: energy_value(cc, 1.0, 1.0), phi)
    assert fv == pytest.approx(-integrate(c, np.sum(phi * phi, axis=1)), rel=1e-4)
    assert fv == pytest.approx(fd, rel=1e-4)


def test_first_variation_rejects_clamped_support(line):
    phi = np.zeros_like(line.nodes)
    phi[1, 1] = 1.0
    with pytest.raises(ValueError):
        first_variation(line, 1, 1, phi)
    with pytest.raises(ValueError):
        first_variation(line, 1, 1, np.zeros((3, 2)))


def test_gradient_of_circle():
    c = build_reference(ReferenceCurveSpec(Circle(1.0), N=256))
    G = l2_gradient(c, 1.0, 0.0)
    # nabla^2 kappa vanishes and |kappa|^2 kappa / 2 has length 1/2
    np.testing.assert_allclose(np.linalg.norm(G, axis=1), 0.5, atol=1e-4)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_null_lagrangian(seed):
    r = np.random.default_rng(seed)
    c = bump(h=0.05)
    phi = interior_field(c, r.normal(size=c.nodes.shape))
    assert abs(finite_difference_variation(c, e1_flux, phi)) <= 1e-8


def test_graphical_line():
    c = build_reference(ReferenceCurveSpec(Line(), S=10, h=0.1))
    rep = graphical_end_report(c, 2.0)
    assert rep.is_graphical_outside
    assert rep.u1_l2 == 0.0
    assert not rep.nongraphical_inside
    with pytest.raises(ValueError):
        graphical_end_report(c, 50.0)


def test_graphical_power_end():
    c = build_reference(ReferenceCurveSpec(Graph(PowerEnd(0.3)), S=100, h=0.1))
    rep = graphical_end_report(c, 5.0)
    assert rep.is_graphical_outside
    assert rep.u1_l2 > 0
    assert rep.bound_holds
    assert rep.direction_tilde <= rep.half_u1_sq


def test_graphical_loop_inside_slab():
    c = build_reference(ReferenceCurveSpec(Loops(1), S=20, h=0.02))
    rep = graphical_end_report(c, 6.0)
    assert rep.is_graphical_outside
    assert rep.nongraphical_inside


def test_graphical_rejects_closed(circle):
    with pytest.raises(ValueError):
        graphical_end_report(circle, 0.1)


@pytest.mark.parametrize("h", [0.04, 0.02])
def test_direction_energy_matches_graph_form(h):
    from scipy.integrate import quad

    def f(x):
        du = -0.8 * x * np.exp(-x**2)
        return du**2 / (1 + np.sqrt(1 + du**2))

    exact = quad(f, -20, 20, points=[0.0], epsabs=1e-13)[0]
    c = build_reference(ReferenceCurveSpec(Graph(Gaussian(0.4)), S=20, h=h))
    assert direction_energy(c) == pytest.approx(exact, rel=h**2)


def test_direction_energy_shape_only():
    # rigid translation leaves both energies unchanged
    c = bump(h=0.05)
    moved = c.with_nodes(c.nodes + np.array([3.0, -1.0]))
    assert direction_energy(moved) == pytest.approx(direction_energy(c), rel=1e-12)
    assert bending_energy(moved) == pytest.approx(bending_energy(c), rel=1e-10)


def test_e1_flux_is_end_to_end_distance():
    c = bump(h=0.05)
    i = c.interior
    P = c.nodes[i]
    assert e1_flux(c) == pytest.approx(P[-1, 0] - P[0, 0], rel=1e-14)


def test_discrete_curve_directly():
    s = np.linspace(-5, 5, 101)
    c = DiscreteCurve(np.column_stack([s, np.zeros_like(s)]), s[1] - s[0])
    assert direction_energy(c) == 0.0
