from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from curveflow.diagnostics import (
    ELASTICA,
    LINE,
    UNKNOWN,
    Tolerances,
    circle_radius_error,
    classify_limit,
    energy_decay_audit,
    fit_blowup_rate,
    grim_reaper_offset,
    kappa_derivative_norms,
    longest_increasing_run,
    loop_base_points,
    loop_tracker,
    max_node_drift,
    quantization_check,
    rotation_number,
    rotation_number_raw,
    smoothing_monitor,
    stationarity_residual,
    tangent_deviation,
)
from curveflow.energies import bending_energy
from curveflow.flows import BLOWUP, REACHED_END, SolverConfig, Termination, preset, simulate
from curveflow.geometry import (
    BorderlineElastica,
    Circle,
    DiscreteCurve,
    Gaussian,
    Graph,
    GrimReaper,
    Line,
    Loops,
    ReferenceCurveSpec,
    build_reference,
    resample_arclength,
)


def ref(kind, **kw):
    kw.setdefault("S", 20)
    kw.setdefault("h", 0.02)
    return build_reference(ReferenceCurveSpec(kind, **kw))


def angle_curve(theta_fn, S=20.0, h=0.02):
    """Planar clamped curve with prescribed tangent angle as a function of arclength."""
    s = -S + h * np.arange(-3, int(round(2 * S / h)) + 4)
    th = theta_fn(s)
    T = np.column_stack([np.cos(th), np.sin(th)])
    xy = cumulative_trapezoid(T, s, axis=0, initial=0.0)
    return resample_arclength(DiscreteCurve(xy - xy[xy.shape[0] // 2], h))


# rotation ------------------------------------------------------------------


def test_rotation_numbers(line, elastica, circle):
    assert rotation_number(ref(Line())) == 0
    assert rotation_number(elastica) == 1
    assert abs(rotation_number(circle)) == 1
    flipped = circle.with_nodes(circle.nodes[::-1].copy())
    assert rotation_number(flipped) == -rotation_number(circle)
    assert rotation_number(ref(Loops(2, 5.0), S=25, h=0.05)) == 2


def test_rotation_rejects_vertical_ends():
    c = ref(GrimReaper(), S=8)
    with pytest.raises(ValueError):
        rotation_number(c)
    with pytest.raises(ValueError):
        rotation_number(ref(BorderlineElastica(omega=(0, 0, 1)), dim=3, S=5, h=0.1))


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-2, 2), c=st.floats(-3, 3))
def test_rotation_invariant_under_bumps(a, c):
    curve = angle_curve(lambda s: 4 * np.arctan(np.exp(s)) + a * np.exp(-(s - c) ** 2), S=15, h=0.05)
    assert rotation_number(curve) == 1
    assert rotation_number_raw(curve) == pytest.approx(1.0, abs=1e-3)


# classification ------------------------------------------------------------


def test_classify_line():
    rep = classify_limit(ref(Line(), h=0.05))
    assert rep.verdict == LINE
    assert rep.bending == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("h", [0.05, 0.02, 0.01])
def test_classify_elastica_shift(h):
    c = ref(BorderlineElastica(s0=1.3), h=h)
    rep = classify_limit(c)
    assert rep.verdict == ELASTICA
    assert rep.s0 == pytest.approx(1.3, abs=2 * h)
    assert rep.kappa_max == pytest.approx(2.0, abs=20 * h**2)
    assert rep.omega == pytest.approx([0.0, 1.0])


def test_classify_unknown_at_half_bending():
    def B(a):
        return bending_energy(ref(Graph(Gaussian(a)), h=0.05)) - 0.5

    a = brentq(B, 0.1, 2.0, xtol=1e-10)
    c = ref(Graph(Gaussian(a)), h=0.05)
    assert bending_energy(c) == pytest.approx(0.5, abs=1e-6)
    assert classify_limit(c).verdict == UNKNOWN


def test_classify_tolerances():
    c = ref(Graph(Gaussian(0.01)), h=0.05)
    assert classify_limit(c).verdict == LINE
    assert classify_limit(c, Tolerances(tol_B=1e-8)).verdict == UNKNOWN
    with pytest.raises(ValueError):
        classify_limit(build_reference(ReferenceCurveSpec(Circle(), N=64)))


def test_tangent_deviation(elastica):
    assert tangent_deviation(ref(Line())) == 0.0
    assert tangent_deviation(elastica) == pytest.approx(2.0, abs=1e-6)


# stationarity ------------------------------------------------------------------


def test_stationarity_line_and_circle(line, circle):
    assert stationarity_residual(line, 0.7)["sup"] == pytest.approx(0.0, abs=1e-12)
    res = stationarity_residual(circle, 0.0)
    assert res["sup"] == pytest.approx(0.5, abs=1e-4)
    assert res["l2"] == pytest.approx(0.5 * np.sqrt(2 * np.pi), rel=1e-4)


def test_stationarity_order():
    r = [stationarity_residual(ref(BorderlineElastica(), h=h), 1.0)["sup"] for h in (0.02, 0.01)]
    assert r[1] <= 1e-2
    assert np.log2(r[0] / r[1]) >= 1.8


# blow-up fit ---------------------------------------------------------------


def synthetic_blowup(T=0.37, beta=0.5, C=2.0, n=4000):
    t = T - np.geomspace(1.0, 1e-7, n) * T
    series = {"t": t, "k2": C * (T - t) ** -beta}
    return SimpleNamespace(series=series, termination=Termination(BLOWUP, T))


@pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
def test_fit_synthetic_power_law(beta):
    tr = synthetic_blowup(beta=beta)
    fit = fit_blowup_rate(tr)
    assert fit.beta == pytest.approx(beta, abs=1e-8)
    assert fit.T_hat == 0.37
    assert np.exp(fit.log_prefactor) == pytest.approx(2.0, rel=1e-6)
    assert fit.residual <= 1e-8


def test_fit_normalized_product():
    tr = synthetic_blowup(beta=0.5, C=np.pi * np.sqrt(2))
    lo, hi = fit_blowup_rate(tr).normalized
    assert lo == pytest.approx(np.pi * np.sqrt(2), rel=1e-10)
    assert hi == pytest.approx(np.pi * np.sqrt(2), rel=1e-10)


def test_fit_errors():
    tr = synthetic_blowup()
    tr.termination = Termination(REACHED_END)
    with pytest.raises(ValueError):
        fit_blowup_rate(tr)
    short = synthetic_blowup(n=5)
    with pytest.raises(ValueError):
        fit_blowup_rate(short)


# energy audit, quantization ---------------------------------------------------


def test_audit_stationary_line(line):
    tr = simulate(line, preset("ElasticFlow"), SolverConfig(dt=0.01, t_end=0.2, snapshot_dt=0.05))
    a = energy_decay_audit(tr)
    assert a.defect == 0.0
    assert a.relative_defect == 0.0
    assert a.monotone and a.snapshot_monotone


def test_audit_rejects_unknown_law(line):
    tr = simulate(line, preset("CSF"), SolverConfig(dt=0.01, t_end=0.02))
    with pytest.raises(ValueError):
        energy_decay_audit(tr, preset("Chen").__class__(0.0, 1.0, 1.0, 2.0))


def test_quantization_line_and_elastica(elastica):
    q = quantization_check(ref(Line()))
    assert (q.E, q.N, q.slack) == (0.0, 0, 0.0)
    q = quantization_check(elastica)
    assert q.N == 1
    assert q.E == pytest.approx(8.0, abs=1e-3)
    assert abs(q.slack) <= 1e-3


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.2, 1.5), c=st.floats(-3, 3), w=st.floats(0.5, 2))
def test_quantization_slack_positive(a, c, w):
    curve = angle_curve(lambda s: 4 * np.arctan(np.exp(s)) + a * np.exp(-((s - c) / w) ** 2), h=0.05)
    q = quantization_check(curve)
    assert q.N == 1
    assert q.slack > 0


# loops ------------------------------------------------------------------------


def test_single_loop_base_point(elastica):
    s = loop_base_points(elastica, 1)
    assert s[0] == pytest.approx(0.0, abs=elastica.h)
    i = int(np.argmin(np.abs(elastica.arclength - s[0])))
    np.testing.assert_allclose(elastica.tangent[i], [-1.0, 0.0], atol=1e-3)


def test_loop_tracker_static():
    c2 = ref(Loops(2, 5.0), S=25, h=0.05)
    tr = SimpleNamespace(snapshots=[c2, c2], snapshot_times=[0.0, 1.0])
    track = loop_tracker(tr)
    sep = track.separations()
    assert sep.shape == (2, 1)
    assert sep[0, 0] == pytest.approx(5.0, abs=0.05)
    assert not track.rotation_changed

    flat = ref(Line())
    track = loop_tracker(SimpleNamespace(snapshots=[flat], snapshot_times=[0.0]))
    assert track.base_points[0].size == 0


def test_loop_tracker_flags_rotation_change(elastica):
    tr = SimpleNamespace(snapshots=[elastica, ref(Line())], snapshot_times=[0.0, 1.0])
    assert loop_tracker(tr).rotation_changed


@pytest.mark.parametrize("x, n", [
    ([], 0),
    ([1.0], 1),
    ([1, 2, 3, 2, 3, 4, 5], 4),
    ([3, 2, 1], 1),
    ([1, 1, 1], 1),
])
def test_longest_increasing_run(x, n):
    assert longest_increasing_run(x) == n


# smoothing, shape tracking --------------------------------------------------------


def test_smoothing_stationary_line(line):
    tr = simulate(line, preset("ElasticFlow"), SolverConfig(dt=0.01, t_end=0.1, snapshot_dt=0.02))
    env = smoothing_monitor(tr)
    assert env.constants == [0.0] * 4
    assert env.exponents == [1 / 8, 3 / 8, 5 / 8, 7 / 8]


def test_smoothing_rejects_blowup():
    tr = SimpleNamespace(termination=Termination(BLOWUP, 0.5))
    with pytest.raises(ValueError):
        smoothing_monitor(tr)


def test_smoothing_csf_hump():
    c = ref(Graph(Gaussian(0.5)), S=10, h=0.05)
    tr = simulate(c, preset("CSF"), SolverConfig(dt=1e-3, t_end=1.0, snapshot_dt=0.05))
    env = smoothing_monitor(tr, m_max=1)
    assert env.exponents == [0.25, 0.75]
    assert all(np.isfinite(env.constants))
    # the envelope bounds every snapshot after the first step
    for t, s in zip(tr.snapshot_times[1:], tr.snapshots[1:]):
        nrm = kappa_derivative_norms(s, 1, margin=4)
        assert np.all(nrm <= np.asarray(env.constants) * (1 + t ** -np.asarray(env.exponents)) * (1 + 1e-12))


def test_kappa_norms_circle(circle):
    n = kappa_derivative_norms(circle, 2)
    assert n[0] == pytest.approx(1.0, abs=1e-4)
    assert n[1] <= 1e-4 and n[2] <= 1e-4


def test_shape_tracking_helpers(line):
    tr = SimpleNamespace(snapshots=[line, line.with_nodes(line.nodes + [0.0, 0.01])])
    assert max_node_drift(tr) == pytest.approx(0.01)
    g = ref(GrimReaper(), S=6)
    assert grim_reaper_offset(g, 0.0) <= 1e-12
    assert grim_reaper_offset(g.with_nodes(g.nodes + [0.0, 0.3]), 0.3) <= 1e-12


def test_circle_radius_error_exact():
    t = np.linspace(0, 0.4, 50)
    tr = SimpleNamespace(series={"t": t, "k2": 2 * np.pi / np.sqrt(1 - 2 * t)})
    assert circle_radius_error(tr, 0.4) <= 1e-14
