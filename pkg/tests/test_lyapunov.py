import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from cocyclelab import jacobi as jb
from cocyclelab._io import csv_body
from cocyclelab.cocycle import Cocycle, diagonal_cocycle
from cocyclelab.errors import ZeroEigenvalue
from cocyclelab.lyapunov import (LdtCurve, closed_form_diag_le, finite_scale_doublings,
                                 hoeffding_bound, ldt_curve, ldt_tail, log_norm_bound, mc_le,
                                 sl_reduction_split)
from cocyclelab.mat2 import rotation

LOG2 = math.log(2.0)


@pytest.fixture(scope="module")
def diag28():
    return diagonal_cocycle([2.0, 8.0], [0.5, 0.5])


@pytest.fixture(scope="module")
def identity():
    return Cocycle([np.eye(2), np.eye(2)], [0.5, 0.5])


def exact_tail(n, eps):
    k = np.arange(n + 1)
    dev = np.abs(LOG2 * (2.0 * k / n - 1.0))
    return float(stats.binom.pmf(k, n, 0.5)[dev > eps].sum())


def test_closed_form_examples():
    assert closed_form_diag_le([2.0, 0.5], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)
    assert closed_form_diag_le([2.0, 8.0], [0.5, 0.5]) == pytest.approx(2 * LOG2, abs=1e-15)
    assert closed_form_diag_le([math.e, math.e], [0.3, 0.7]) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ZeroEigenvalue):
        closed_form_diag_le([0.0, 2.0], [0.5, 0.5])


def test_mc_le_examples(diag28, identity):
    assert mc_le(identity, 50, 100, seed=0).mean == 0.0
    est = mc_le(diag28, 1000, 2000, seed=1)
    assert abs(est.mean - 2 * LOG2) <= 0.02
    # toy process at E = 0 is diagonal with L = |E log omega|
    for omegas, expected in (((2.0, 0.5), 0.0), ((2.0, 8.0), 2 * LOG2)):
        toy = jb.ToyEnsemble(omegas, (0.5, 0.5)).energy_cocycle(0.0)
        est = mc_le(toy, 1000, 2000, seed=2)
        assert abs(est.mean - expected) <= max(0.02, 3 * est.std_err)


def test_mc_le_top_above_bottom(diag28):
    A = Cocycle([rotation(0.4) @ np.diag([3.0, 0.5]), np.array([[1.0, 2.0], [0.0, 1.0]])],
                [0.5, 0.5])
    est = mc_le(A, 300, 1000, seed=3)
    top, bottom = est.top_bottom
    assert top >= bottom - 3 * math.hypot(est.std_err, est.bottom_std_err)


def test_sl2_exponents_are_opposite():
    A = Cocycle([rotation(0.4) @ np.diag([3.0, 1 / 3]), np.array([[1.0, 2.0], [0.0, 1.0]])],
                [0.5, 0.5])
    est = mc_le(A, 300, 1000, seed=4)
    top, bottom = est.top_bottom
    assert bottom == pytest.approx(-top, abs=1e-9)


def test_ldt_tail_examples(diag28, identity):
    assert ldt_tail(identity, 50, 0.01, reference_L=0.0, samples=500, seed=0)[0] == 0.0
    n, eps, samples = 100, 0.2, 20000
    emp, _ = ldt_tail(diag28, n, eps, reference_L=2 * LOG2, samples=samples, seed=5)
    exact = exact_tail(n, eps)
    assert abs(emp - exact) <= 3 * math.sqrt(exact * (1 - exact) / samples)
    big = log_norm_bound(diag28) + 2 * LOG2 + 0.1
    assert ldt_tail(diag28, 30, big, reference_L=2 * LOG2, samples=2000, seed=6)[0] == 0.0
    with pytest.raises(ValueError):
        ldt_tail(diag28, 30, 0.0)


def test_hoeffding_examples():
    assert hoeffding_bound(1.0, 0.1, 1000) == pytest.approx(math.exp(-5.0), rel=1e-15)
    assert hoeffding_bound(3.0, 0.4, 0) == 1.0


@given(st.floats(0.1, 5), st.floats(0.01, 1), st.integers(1, 10_000))
def test_hoeffding_monotone_in_n(K, eps, n):
    assert hoeffding_bound(K, eps, n + 1) <= hoeffding_bound(K, eps, n)


def test_ldt_curve_rate_against_exact(diag28):
    n_list = [25, 50, 75, 100]
    curve = ldt_curve(diag28, n_list, 0.2, samples=20000, seed=7, reference_n=2000)
    assert curve.fit_status == "ok"
    exact = [exact_tail(n, 0.2) for n in n_list]
    exact_rate = np.polyfit(n_list, -np.log(exact), 1)[0]
    assert exact_rate / 4 <= curve.c <= 4 * exact_rate
    K = log_norm_bound(diag28)
    for row in curve.rows:
        assert row["tail_prob"] <= hoeffding_bound(K, 0.2, row["n"]) + 3 * row["std_err"]


def test_ldt_curve_identity_degenerate(identity):
    curve = ldt_curve(identity, [10, 20, 40], 0.1, samples=500, seed=0)
    assert all(r["tail_prob"] == 0.0 for r in curve.rows)
    assert curve.fit_status == "degenerate"


def test_ldt_curve_power_rule_and_determinism(diag28):
    a = ldt_curve(diag28, [16, 32, 64], ("power", 1 / 6), samples=2000, seed=8)
    b = ldt_curve(diag28, [16, 32, 64], ("power", 1 / 6), samples=2000, seed=8)
    assert a.a == pytest.approx(1 / 6)
    assert a.rows[0]["epsilon"] == pytest.approx(16 ** (-1 / 6))
    assert csv_body(LdtCurve.COLUMNS, a.table()) == csv_body(LdtCurve.COLUMNS, b.table())


def test_sl_reduction_split_examples(rng):
    A = Cocycle([rotation(0.3) @ np.diag([2.0, 0.5])], [1.0])
    total, sl2, half = sl_reduction_split(A, [0] * 10)
    assert half == pytest.approx(0.0, abs=1e-14)
    assert total == pytest.approx(sl2, abs=1e-12)
    S = Cocycle([2 * np.eye(2), 2 * np.eye(2)], [0.5, 0.5])
    total, sl2, half = sl_reduction_split(S, [0, 1] * 5)
    assert total == pytest.approx(10 * LOG2)
    assert sl2 == pytest.approx(0.0, abs=1e-12)
    assert half == pytest.approx(10 * math.log(4) / 2)
    G = Cocycle(rng.normal(size=(3, 2, 2)) + np.eye(2), [0.2, 0.3, 0.5])
    for _ in range(100):
        path = rng.integers(0, 3, 40)
        total, sl2, half = sl_reduction_split(G, path)
        assert total == pytest.approx(sl2 + half, abs=1e-8)


def test_inverse_cocycle_exponent_matches():
    from cocyclelab.cocycle import inverse_cocycle
    from cocyclelab.mat2 import sl2_normalize
    A = Cocycle([rotation(0.9) @ np.diag([2.0, 0.8]), np.array([[1.0, 1.0], [0.0, 1.5]])],
                [0.5, 0.5])
    # in general the top exponent of the inverse is minus the bottom one
    a = mc_le(A, 200, 2000, seed=9)
    b = mc_le(inverse_cocycle(A), 200, 2000, seed=10)
    assert abs(b.mean + a.top_bottom[1]) <= 3 * math.hypot(a.bottom_std_err, b.std_err)
    # and for unit determinants the two exponents coincide
    S = Cocycle([sl2_normalize(g) for g in A.mats], A.probs)
    a = mc_le(S, 200, 2000, seed=9)
    b = mc_le(inverse_cocycle(S), 200, 2000, seed=10)
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.std_err, b.std_err)


def test_finite_scale_doublings_settle():
    # E|S_n|/n for a drift-0.2 log 2 walk approaches its mean at rate 1/n
    A = diagonal_cocycle([2.0, 0.5], [0.6, 0.4])
    ests = finite_scale_doublings(A, 8, 4, samples=20000, seed=11)
    diffs = [abs(b.mean - a.mean) for a, b in zip(ests, ests[1:])]
    slack = [3 * math.hypot(a.std_err, b.std_err) for a, b in zip(ests, ests[1:])]
    assert diffs[-1] <= diffs[0] + slack[-1]
    assert [e.scale_n for e in ests] == [8, 16, 32, 64, 128]
