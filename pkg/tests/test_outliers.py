from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bbp_location, bbp_overlap, null_model, two_bulk_model
from spectra.errors import PreconditionError
from spectra.model import PopulationModel, attach_spikes, spikes_from_sigma_g
from spectra.outliers import (
    check_nonoverlap,
    classify_spikes,
    critical_sigma,
    default_c0,
    generalized_nonoutlier_bound,
    nonoutlier_vector_bound,
    nu_value,
    outlier_report,
    overlap_error_bound,
    overlap_limit,
    predict_outliers,
    projection_limit,
    sticking_bounds,
    write_outlier_report,
)
from spectra.stieltjes import FFunction, f_eval, find_bulk_structure


def setup(model: PopulationModel, asymptotic: bool = False, **kw):
    F = FFunction(model.bulk, model.c_N)
    B = find_bulk_structure(F, model.N)
    return F, B, classify_spikes(model, B, asymptotic=asymptotic, **kw)


def test_bbp_threshold_asymptotic():
    F, B, cl = setup(null_model(400, 800, [0.5, 1.0]), asymptotic=True)
    assert critical_sigma(B, 1) - 1 == pytest.approx(2**-0.5, abs=1e-12)
    flags = {e.spike.d: e.is_outlier for e in cl}
    assert flags == {0.5: False, 1.0: True}


def test_finite_n_threshold_uses_margin():
    # d = 1 sits 0.146 (relative) right of the critical point; N**(-1/3 + 0.05) = 0.150 at N = 800
    _, _, cl = setup(null_model(400, 800, [1.0, 3.0]))
    flags = {e.spike.d: e.is_outlier for e in cl}
    assert flags == {1.0: False, 3.0: True}
    assert cl.entries[0].threshold == pytest.approx(800 ** (-1 / 3 + 0.05))


def test_two_bulk_classification(two_bulk):
    model, _, B = two_bulk
    cl = classify_spikes(model, B)
    # spikes are ordered by relative perturbation d: 3 for the spike at 4, 17/18 for 35
    assert [(e.sigma_g, e.component, e.rank, e.is_outlier) for e in cl] == [
        (4.0, 2, 1, True),
        (35.0, 1, 1, True),
    ]
    assert cl.r_plus == [1, 1]
    assert cl.r_per_component == [1, 1]


def test_zero_margin_is_not_outlier():
    model = null_model(400, 800)
    F = FFunction(model.bulk, model.c_N)
    B = find_bulk_structure(F, model.N)
    sg = critical_sigma(B, 1)
    spiked = model.with_spikes(attach_spikes(model.bulk, [(0, sg - 1.0)]))
    e = classify_spikes(spiked, B, asymptotic=True).entries[0]
    assert abs(e.margin) < 1e-12
    assert not e.is_outlier


def test_c0_validation(two_bulk):
    model, _, B = two_bulk
    gap = B.x(2) - B.x(3)
    assert default_c0(B) == pytest.approx(0.1 * gap)
    with pytest.raises(PreconditionError):
        classify_spikes(model, B, c0=gap / 2)
    with pytest.raises(PreconditionError):
        classify_spikes(model, B, c0=0.0)


def test_spike_near_upper_critical_point_excluded(two_bulk):
    model, F, B = two_bulk
    # -1/sigma just below x_2: inside component 2's interval but within c0 of x_2
    sg = -1.0 / (B.x(2) - 0.5 * default_c0(B))
    spiked = model.with_spikes(spikes_from_sigma_g(model.bulk, [(200, sg)]))
    e = classify_spikes(spiked, B).entries[0]
    assert e.component == 2 and not e.is_outlier


def test_classification_order_invariant(two_bulk):
    model, _, B = two_bulk
    a = classify_spikes(model, B)
    rev = attach_spikes(model.bulk, [(s.base_index, s.d) for s in reversed(model.spikes.spikes)])
    b = classify_spikes(model.with_spikes(rev), B)
    key = lambda cl: sorted((e.spike.base_index, e.component, e.rank, e.is_outlier) for e in cl)
    assert key(a) == key(b)


def test_two_bulk_predictions(two_bulk):
    model, F, B = two_bulk
    cl = classify_spikes(model, B)
    preds = {p.sigma_g: p for p in predict_outliers(F, B, cl, model.N)}
    assert preds[35.0].location == pytest.approx(44.522, abs=5e-3)
    assert preds[4.0].location == pytest.approx(3.0476, abs=5e-3)
    for p in preds.values():
        assert p.location > B.a(2 * p.component - 1)
        assert 0 < p.overlap <= 1


@pytest.mark.parametrize("d", [1.0, 2.0, 5.0])
def test_null_reduction(d):
    F, B, cl = setup(null_model(400, 800, [d]), asymptotic=True)
    p = predict_outliers(F, B, cl, 800)[0]
    assert p.location == pytest.approx(bbp_location(d, 2.0), abs=1e-10)
    assert p.overlap == pytest.approx(bbp_overlap(d, 2.0), abs=1e-10)


def test_subcritical_edge_fallback():
    F, B, cl = setup(null_model(400, 800, [0.5]), asymptotic=True)
    p = predict_outliers(F, B, cl, 800)[0]
    assert not p.is_outlier
    assert p.location == pytest.approx((1 + 2**-0.5) ** 2, rel=1e-12)
    assert p.overlap is None
    with pytest.raises(PreconditionError):
        overlap_limit(F, B, cl.entries[0])


def test_overlap_null_closed_form():
    F, B, _ = setup(null_model(400, 800))
    assert overlap_limit(F, B, 4.0) == pytest.approx(bbp_overlap(3.0, 2.0), rel=1e-12)
    assert overlap_limit(F, B, 1.0 + 1e6) > 0.999


def test_overlap_monotone_in_spike():
    model = two_bulk_model()
    F = FFunction(model.bulk, model.c_N)
    B = find_bulk_structure(F, model.N)
    sig = np.linspace(28.0, 80.0, 60)
    u = [overlap_limit(F, B, s) for s in sig]
    assert np.all(np.diff(u) > 0)
    assert all(0 < x <= 1 for x in u)


def test_location_continuous_at_threshold(two_bulk):
    _, F, B = two_bulk
    x1 = B.x(1)
    gaps = [f_eval(F, x1 + h) - B.a(1) for h in (1e-2, 1e-3, 1e-4)]
    assert all(g > 0 for g in gaps)
    assert gaps[0] > gaps[1] > gaps[2]


def test_scale_consistency(two_bulk):
    model, F, B = two_bulk
    s = 2.0
    scaled = PopulationModel(
        model.bulk.scaled(s),
        spikes_from_sigma_g(model.bulk.scaled(s), [(x.base_index, s * x.sigma_g) for x in model.spikes]),
        model.N,
    )
    Fs, Bs, cls = setup(scaled)
    a = predict_outliers(F, B, classify_spikes(model, B), model.N)
    b = predict_outliers(Fs, Bs, cls, scaled.N)
    for p, q in zip(a, b):
        assert q.location == pytest.approx(s * p.location, rel=1e-12)
        assert q.overlap == pytest.approx(p.overlap, rel=1e-12)


def test_error_bound_scaling(two_bulk):
    model, _, B = two_bulk
    e = classify_spikes(model, B).by_index(0)
    r1 = overlap_error_bound(e, e, B, math.inf, 10**16)
    r4 = overlap_error_bound(e, e, B, math.inf, 4 * 10**16)
    assert r4 / r1 == pytest.approx(0.5, abs=1e-3)


def test_error_bound_distinct_spikes(two_bulk):
    model, _, B = two_bulk
    e1, e2 = classify_spikes(model, B).entries
    nu = abs(e1.x - e2.x)
    assert overlap_error_bound(e1, e2, B, nu, 800) == pytest.approx(1 / (nu**2 * 800))
    assert math.isinf(overlap_error_bound(e1, e2, B, 0.0, 800))


def test_two_bulk_error_bound_finite(two_bulk):
    model, F, B = two_bulk
    preds = predict_outliers(F, B, classify_spikes(model, B), model.N)
    assert all(math.isfinite(p.overlap_error) and p.overlap_error > 0 for p in preds)


def test_projection_limit_reductions(two_bulk):
    model, F, B = two_bulk
    cl = classify_spikes(model, B)
    u = {e.spike.base_index: overlap_limit(F, B, e) for e in cl}
    w = np.zeros(model.M)
    w[0] = 1.0
    assert projection_limit(w, {0}, F, B, cl, model.N)[0] == pytest.approx(u[0])
    w = np.zeros(model.M)
    w[5] = 1.0
    assert projection_limit(w, {0, 200}, F, B, cl, model.N) == (0.0, 0.0)
    w = np.zeros(model.M)
    w[[0, 200]] = 2**-0.5
    value, bound = projection_limit(w, {0, 200}, F, B, cl, model.N)
    assert value == pytest.approx((u[0] + u[200]) / 2)
    assert bound > 0


def test_projection_requires_outliers():
    F, B, cl = setup(null_model(400, 800, [0.5]), asymptotic=True)
    with pytest.raises(PreconditionError):
        projection_limit(np.eye(400)[0], {0}, F, B, cl, 800)


def test_sticking_two_bulk(two_bulk):
    model, _, B = two_bulk
    cl = classify_spikes(model, B)
    sb = sticking_bounds(B, cl, model.N)
    assert sb[0].alpha_plus == pytest.approx(abs(-1 / 35 - B.x(1)))
    assert sb[0].regime == "sticking"
    assert sb[0].bound == pytest.approx(800**0.04 / (800 * sb[0].alpha_plus))


def test_sticking_no_spikes_rigidity():
    F, B, cl = setup(null_model(400, 800))
    sb = sticking_bounds(B, cl, 800)[0]
    assert sb.regime == "rigidity" and math.isinf(sb.alpha_plus)
    assert sb.bound_at(1) == pytest.approx(800 ** (-2 / 3 + 0.02))
    assert sb.bound_at(8) == pytest.approx(800 ** (-2 / 3 + 0.02) / 2)


def test_sticking_order_one_alpha_beats_rigidity():
    F, B, cl = setup(null_model(400, 800, [5.0]))
    sb = sticking_bounds(B, cl, 800)[0]
    assert sb.regime == "sticking"
    assert sb.bound < 800 ** (-2 / 3)


def test_nonoutlier_bounds(two_bulk):
    model, _, B = two_bulk
    e = classify_spikes(model, B).by_index(0)
    N = 800
    mid = nonoutlier_vector_bound(e, 1, 100, B, N)
    kappa = (100 / N) ** (2 / 3)
    assert mid <= N ** (-1 + 6 * 0.02) / kappa
    edge = nonoutlier_vector_bound(e, 1, 1, B, N)
    margin_sq = (1 / e.sigma_g + B.x(1)) ** 2
    assert edge == pytest.approx(N**0.12 / (N * (N ** (-2 / 3) + margin_sq)))
    js = np.arange(1, 101)
    vals = [nonoutlier_vector_bound(e, 1, int(j), B, N) for j in js]
    assert np.all(np.diff(vals) < 0)
    w = np.zeros(model.M)
    w[0] = 1.0
    assert generalized_nonoutlier_bound(w, classify_spikes(model, B), 1, 100, B, N) == pytest.approx(mid)


def test_nonoverlap_checks(two_bulk):
    model, _, B = two_bulk
    cl = classify_spikes(model, B)
    assert check_nonoverlap(B, cl, {0}, model.N).passed
    F, Bn, one = setup(null_model(400, 800, [4.0]))
    rep = check_nonoverlap(Bn, one, {0}, 800)
    assert rep.passed and math.isinf(rep.checks[0].value)


def test_nonoverlap_identical_spikes_fail():
    F, B, cl = setup(null_model(400, 800, [4.0, 4.0]))
    assert nu_value(cl.entries[0], {0}, list(cl)) == 0.0
    assert not check_nonoverlap(B, cl, {0}, 800).passed


def test_report_json(tmp_path, two_bulk):
    import json

    model, F, B = two_bulk
    cl = classify_spikes(model, B)
    rec = outlier_report(predict_outliers(F, B, cl, model.N), sticking_bounds(B, cl, model.N))
    write_outlier_report(tmp_path / "r.json", rec)
    back = json.loads((tmp_path / "r.json").read_text())
    assert {"component", "rank", "is_outlier", "predicted_location", "half_width", "overlap", "overlap_error", "sticking"} <= set(back[0])


@settings(max_examples=40, deadline=None)
@given(st.floats(0.75, 20.0))
def test_null_location_property(d):
    F, B, cl = setup(null_model(100, 200, [d]), asymptotic=True)
    p = predict_outliers(F, B, cl, 200)[0]
    assert p.is_outlier
    assert p.location == pytest.approx(bbp_location(d, 2.0), abs=1e-10)
    assert p.location > B.a(1)
