import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocyclelab.errors import DegenerateSingularValues, SingularMatrix
from cocyclelab.mat2 import (ProjPoint, det, inverse, op_norm, proj_apply, proj_distance,
                             rotation, singular_frame, sl2_normalize)

entries = st.floats(-5.0, 5.0, allow_nan=False)
angles = st.floats(0.0, math.pi, allow_nan=False, exclude_max=True)


@st.composite
def invertible(draw, floor=1e-2):
    g = np.array([[draw(entries), draw(entries)], [draw(entries), draw(entries)]])
    if abs(det(g)) < floor:
        g = g + np.eye(2) * 3.0
    if abs(det(g)) < floor:
        g = np.diag([1.5, 0.7])
    return g


def svd_norm(g):
    return float(np.linalg.svd(g, compute_uv=False)[0])


# op_norm

def test_op_norm_examples():
    assert op_norm(np.diag([2.0, 0.5])) == pytest.approx(2.0, abs=1e-15)
    assert op_norm(rotation(0.731)) == pytest.approx(1.0, abs=1e-15)
    shear = np.array([[1.0, 1.0], [0.0, 1.0]])
    assert op_norm(shear) == pytest.approx(math.sqrt((3 + math.sqrt(5)) / 2), abs=1e-14)


def test_op_norm_shear_power_iteration():
    shear = np.array([[1.0, 1.0], [0.0, 1.0]])
    v = np.array([1.0, 0.3])
    for _ in range(200):
        v = shear.T @ (shear @ v)
        v /= np.linalg.norm(v)
    assert op_norm(shear) == pytest.approx(np.linalg.norm(shear @ v), rel=1e-12)


@given(invertible())
def test_op_norm_matches_svd_and_transpose(g):
    assert op_norm(g) == pytest.approx(svd_norm(g), rel=1e-12, abs=1e-14)
    assert op_norm(g) == pytest.approx(op_norm(g.T), rel=1e-12, abs=1e-14)


@given(invertible())
def test_sl2_inverse_has_same_norm(g):
    s = sl2_normalize(g)
    assert op_norm(inverse(s)) == pytest.approx(op_norm(s), rel=1e-10)


# sl2_normalize

def test_sl2_normalize_examples():
    np.testing.assert_allclose(sl2_normalize(np.diag([2.0, 2.0])), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(sl2_normalize(np.diag([2.0, 1.0])),
                               np.diag([math.sqrt(2), 1 / math.sqrt(2)]), atol=1e-15)
    g = np.array([[2.0, 3.0], [1.0, 2.0]])
    np.testing.assert_array_equal(sl2_normalize(g), g)


def test_sl2_normalize_rejects_singular():
    with pytest.raises(SingularMatrix):
        sl2_normalize(np.array([[1.0, 2.0], [2.0, 4.0]]))


@given(invertible())
def test_sl2_normalize_unit_det(g):
    assert abs(abs(det(sl2_normalize(g))) - 1.0) <= 1e-12


# projective action and metric

def test_proj_apply_examples():
    p = ProjPoint(0.4)
    assert proj_apply(np.eye(2), p).theta == pytest.approx(0.4, abs=1e-15)
    q = proj_apply(np.diag([2.0, 0.5]), ProjPoint(math.pi / 4))
    assert q.theta == pytest.approx(math.atan(0.25), abs=1e-15)
    assert proj_apply(rotation(math.pi / 2), ProjPoint(0.0)).theta == pytest.approx(math.pi / 2)


def test_proj_distance_examples():
    assert proj_distance(ProjPoint(0.0), ProjPoint(math.pi / 2)) == pytest.approx(1.0)
    assert proj_distance(ProjPoint(0.0), ProjPoint.from_vector([1, 1])) == pytest.approx(
        math.sqrt(2) / 2, abs=1e-15)
    assert proj_distance(ProjPoint(1.1), ProjPoint(1.1)) == 0.0


def test_projpoint_normalization():
    assert ProjPoint(-0.1).theta == pytest.approx(math.pi - 0.1)
    assert ProjPoint(math.pi + 0.2).theta == pytest.approx(0.2)
    assert ProjPoint(math.pi).theta == 0.0
    assert ProjPoint.from_vector([-1.0, 0.0]).theta == 0.0


@given(invertible(), angles, angles)
def test_distance_distortion_identity(g, a, b):
    p, q = ProjPoint(a), ProjPoint(b)
    lhs = proj_distance(proj_apply(g, p), proj_apply(g, q))
    rhs = abs(det(g)) / (np.linalg.norm(g @ p.vector) * np.linalg.norm(g @ q.vector)) \
        * proj_distance(p, q)
    assert lhs == pytest.approx(rhs, abs=1e-10)


@given(invertible(), angles, angles)
def test_lipschitz_bound_for_sl2(g, a, b):
    s = sl2_normalize(g)
    p, q = ProjPoint(a), ProjPoint(b)
    d = proj_distance(proj_apply(s, p), proj_apply(s, q))
    assert d <= op_norm(s) ** 2 * proj_distance(p, q) + 1e-12


def test_group_action_random_triples(rng):
    worst = 0.0
    for _ in range(1000):
        g, h = rng.normal(size=(2, 2, 2))
        p = ProjPoint(rng.uniform(0, math.pi))
        lhs = proj_apply(g @ h, p)
        rhs = proj_apply(g, proj_apply(h, p))
        worst = max(worst, proj_distance(lhs, rhs))
    assert worst <= 1e-10


@given(angles, angles)
def test_distance_symmetric_and_bounded(a, b):
    p, q = ProjPoint(a), ProjPoint(b)
    d = proj_distance(p, q)
    assert 0.0 <= d <= 1.0
    assert d == proj_distance(q, p)


# singular frame

def test_singular_frame_examples():
    fr = singular_frame(np.diag([3.0, 1 / 3]))
    assert fr.v_plus.theta == pytest.approx(0.0, abs=1e-15)
    assert fr.s1 == pytest.approx(3.0)
    with pytest.raises(DegenerateSingularValues):
        singular_frame(rotation(0.3))
    fr = singular_frame(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert fr.s1 == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-14)
    # oracle: top eigenvector of g^T g
    w, V = np.linalg.eigh(np.array([[1.0, 1.0], [1.0, 2.0]]))
    assert proj_distance(fr.v_plus, ProjPoint.from_vector(V[:, 1])) <= 1e-12
    # the golden-ratio angle atan((sqrt5 - 1)/2) is the output direction, top of g g^T
    assert fr.u_plus.theta == pytest.approx(math.atan((math.sqrt(5) - 1) / 2), abs=1e-12)
    assert fr.v_plus.theta == pytest.approx(math.atan((math.sqrt(5) + 1) / 2), abs=1e-12)


@settings(max_examples=200)
@given(invertible())
def test_singular_frame_invariants(g):
    s1, s2 = np.linalg.svd(g, compute_uv=False)
    if s1 - s2 < 1e-6 * s1:
        return
    fr = singular_frame(g)
    assert proj_distance(fr.v_plus, fr.v_minus) == pytest.approx(1.0, abs=1e-12)
    assert fr.s1 * fr.s2 == pytest.approx(abs(det(g)), rel=1e-10)
    assert np.linalg.norm(g @ fr.v_plus.vector) == pytest.approx(fr.s1, rel=1e-10)
