import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import pair_scan_log_holder
from varexp.exponent import (
    ExponentField,
    build_exponent,
    cube_oscillation_check,
    dual_exponent,
    log_holder_constant,
    rescale_exponent,
)
from varexp.grid import make_domain
from varexp.whitney import Cube, whitney_decomposition


@pytest.fixture(scope="module")
def square():
    return make_domain("rectangle", 33)


def ramp(domain, a=1.4, b=2.0):
    return build_exponent("linear-ramp", {"start": a, "stop": b, "axis": 0}, domain)


def test_build_examples(square):
    c = build_exponent("constant", {"value": 2.0}, square)
    assert c.p_minus == c.p_plus == 2.0
    r = ramp(square)
    assert r.p_minus == pytest.approx(1.4 + 0.6 / 32)
    assert r.values[square.active_mask].min() == pytest.approx(1.4)
    assert r.values[square.active_mask].max() == pytest.approx(2.0)
    cb = build_exponent("checkerboard", {"low": 1.2, "high": 1.8, "tiles": 4}, square)
    assert (cb.p_minus, cb.p_plus) == (1.2, 1.8)


def test_below_one_rejected(square):
    with pytest.raises(ValueError):
        build_exponent("constant", {"value": 0.9}, square)
    with pytest.raises(ValueError):
        build_exponent("linear-ramp", {"start": 0.5, "stop": 2.0}, square)
    with pytest.raises(ValueError):
        build_exponent("spiral", {}, square)


def test_log_holder_constant_zero(square):
    assert log_holder_constant(build_exponent("constant", {"value": 1.7}, square)) == 0.0


def test_log_holder_matches_pair_scan(square):
    p = ramp(square)
    m = square.inside_mask
    oracle = pair_scan_log_holder(square.coords[m], p.values[m])
    assert log_holder_constant(p) == pytest.approx(oracle, rel=1e-12)


def test_log_holder_pair_scan_bump():
    d = make_domain("disk", 17)
    p = build_exponent("smooth-bump", {"base": 1.3, "amplitude": 0.5, "width": 0.2}, d)
    m = d.inside_mask
    assert log_holder_constant(p) == pytest.approx(pair_scan_log_holder(d.coords[m], p.values[m]), rel=1e-12)


def test_checkerboard_detected():
    vals = []
    for res in (17, 33, 65):
        d = make_domain("rectangle", res)
        p = build_exponent("checkerboard", {"low": 1.2, "high": 1.8, "tiles": 4}, d)
        if res <= 33:
            m = d.inside_mask
            assert log_holder_constant(p) == pytest.approx(pair_scan_log_holder(d.coords[m], p.values[m]), rel=1e-12)
        vals.append(log_holder_constant(p))
    assert vals[0] < vals[1] < vals[2]


def test_dual_examples(square):
    two = build_exponent("constant", {"value": 2.0}, square)
    assert np.allclose(dual_exponent(two).values, 2.0)
    assert np.allclose(dual_exponent(build_exponent("constant", {"value": 1.5}, square)).values, 3.0)
    p = ramp(square)
    pd = dual_exponent(p)
    assert np.abs(1 / p.values + 1 / pd.values - 1).max() <= 1e-12
    assert np.abs(dual_exponent(pd).values - p.values).max() <= 1e-12
    with pytest.raises(ValueError):
        dual_exponent(build_exponent("linear-ramp", {"start": 1.0, "stop": 2.0}, square))


def test_rescale_examples(square):
    c = build_exponent("constant", {"value": 1.6}, square)
    assert np.allclose(rescale_exponent(c, (0.2, 0.1), 0.3, square).values, 1.6)
    p = ramp(square)
    q = rescale_exponent(p, (0.0, 0.0), 0.5, square)
    expect = 1.4 + 0.3 * square.coords[..., 0]
    assert np.abs(q.values - expect)[square.active_mask].max() <= 1e-12
    ident = rescale_exponent(p, (0.0, 0.0), 1.0, square)
    assert np.abs(ident.values - p.values)[square.active_mask].max() <= 1e-12
    # the image samples p on its closed domain, so compare with the range over active nodes
    pa = p.values[square.active_mask]
    assert q.p_minus >= pa.min() - 1e-12 and q.p_plus <= pa.max() + 1e-12


def test_rescale_outside_rejected(square):
    with pytest.raises(ValueError):
        rescale_exponent(ramp(square), (0.5, 0.5), 1.0, square)
    with pytest.raises(ValueError):
        rescale_exponent(ramp(square), (0.0, 0.0), -1.0, square)


def test_cube_oscillation(square):
    cubes = whitney_decomposition(square)
    assert cube_oscillation_check(build_exponent("constant", {"value": 1.5}, square), cubes) == 1.0
    # ramp: bounded, and stays bounded on finer Whitney families
    vals = []
    for res in (17, 33, 65):
        d = make_domain("rectangle", res)
        p = ramp(d)
        osc = cube_oscillation_check(p, whitney_decomposition(d))
        assert osc <= np.exp(2 * log_holder_constant(p))
        vals.append(osc)
    assert max(vals) / min(vals) < 1.5


def test_cube_oscillation_checkerboard_blows_up():
    d = make_domain("rectangle", 129)
    p = build_exponent("checkerboard", {"low": 1.2, "high": 1.8, "tiles": 4}, d)
    sides = [1 / 4, 1 / 16, 1 / 64]
    vals = [cube_oscillation_check(p, [Cube((0.25, 0.125), s / 2, 0)]) for s in sides]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 100


def test_json_roundtrip(square):
    p = ramp(square)
    back = ExponentField.from_json(json.loads(json.dumps(p.to_json())), square)
    assert np.array_equal(back.values, p.values)
    with pytest.raises(ValueError):
        ExponentField.from_json(p.to_json(), make_domain("rectangle", 17))


@given(
    kind=st.sampled_from(["constant", "linear-ramp", "smooth-bump", "checkerboard"]),
    shape=st.sampled_from(["rectangle", "lshape", "disk"]),
    a=st.floats(1.0, 3.0),
    b=st.floats(1.0, 3.0),
)
def test_bounds_hold_everywhere(kind, shape, a, b):
    d = make_domain(shape, 17)
    params = {"value": a, "start": a, "stop": b, "low": min(a, b), "high": max(a, b), "base": a, "amplitude": b - 1}
    p = build_exponent(kind, params, d)
    v = p.values[d.inside_mask]
    assert p.p_minus <= v.min() and v.max() <= p.p_plus
    assert p.p_minus >= 1.0


@given(
    lam=st.floats(0.1, 1.0),
    x0=st.tuples(st.floats(0.0, 0.5), st.floats(0.0, 0.5)),
)
def test_log_holder_contraction(lam, x0):
    d = make_domain("rectangle", 17)
    p = build_exponent("smooth-bump", {"base": 1.3, "amplitude": 0.6, "width": 0.3}, d)
    lam = min(lam, 1.0 - max(x0))
    q = rescale_exponent(p, x0, lam, d)
    assert log_holder_constant(q) <= log_holder_constant(p) + 1e-9


@pytest.mark.parametrize("shape", ["rectangle", "lshape", "disk"])
def test_cube_oscillation_log_holder_bound(shape):
    d = make_domain(shape, 33)
    for p in (ramp(d), build_exponent("smooth-bump", {}, d)):
        c = log_holder_constant(p)
        assert cube_oscillation_check(p, whitney_decomposition(d)) <= np.exp(d.dim * c)
