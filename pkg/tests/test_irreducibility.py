import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from cocyclelab import irreducibility as ir
from cocyclelab.cocycle import (Cocycle, diagonal_cocycle, entry_perturbed, inverse_cocycle,
                                rotation_perturbed, simultaneous_diagonalize)
from cocyclelab.errors import ConesCollapsed, NotHyperbolic, ZeroLyapunov
from cocyclelab.mat2 import (ProjPoint, det, eigen_directions, inverse, op_norm, proj_apply,
                             proj_distance, rotation)
from cocyclelab._io import to_jsonable

LOG2 = math.log(2.0)
ETAS = (1e-2, 1e-3, 1e-4, 1e-5)


@pytest.fixture(scope="module")
def diag28():
    return diagonal_cocycle([2.0, 8.0], [0.5, 0.5])


def brute_rho(B, sigma_H):
    """Exhaustive max over hyperbolic i and all j, eigenvectors from numpy."""
    out = {"+": 0.0, "-": 0.0}
    for i in sigma_H:
        w, V = np.linalg.eig(B.mats[i])
        order = np.argsort(-np.abs(w))
        lines = {"+": ProjPoint.from_vector(V[:, order[0]].real),
                 "-": ProjPoint.from_vector(V[:, order[1]].real)}
        for g in B.mats:
            for sign, e in lines.items():
                out[sign] = max(out[sign], proj_distance(proj_apply(g, e), e))
    return out["-"], out["+"]


# hyperbolic symbols

def test_hyperbolic_symbols_examples(diag28):
    diag = simultaneous_diagonalize(diag28)
    assert ir.hyperbolic_symbols(diag28, diag) == [1]
    E = diagonal_cocycle([math.e, math.e], [0.5, 0.5])
    assert ir.hyperbolic_symbols(E, simultaneous_diagonalize(E)) == [0, 1]
    Z = diagonal_cocycle([2.0, 0.5], [0.5, 0.5])
    with pytest.raises(ZeroLyapunov):
        ir.hyperbolic_symbols(Z, simultaneous_diagonalize(Z))


def test_hyperbolic_symbols_contracting_orientation():
    # negative signed exponent: the expanding axis is the second coordinate
    A = diagonal_cocycle([0.5, 1 / 8], [0.5, 0.5])
    diag = simultaneous_diagonalize(A)
    e_plus, _, a, L = ir.diag_axes(A, diag)
    assert L == pytest.approx(2 * LOG2)
    assert proj_distance(e_plus, ProjPoint(math.pi / 2)) <= 1e-12
    assert ir.hyperbolic_symbols(A, diag) == [1]


# rho

def test_rho_diagonal_is_zero(diag28):
    assert ir.rho_measure(diag28, [1]) == (0.0, 0.0, 0.0)


def test_rho_against_brute_force(diag28, rng):
    # a lower-left entry never moves the vertical line, so only rho+ responds to it
    for eta, entry in ((1e-1, (1, 0)), (1e-2, (0, 1)), (1e-3, (0, 1))):
        B = entry_perturbed(diag28, eta, index=0, entry=entry)
        rm, rp, rho = ir.rho_measure(B, [1])
        bm, bp = brute_rho(B, [1])
        assert (rm if entry == (0, 1) else rp) > 0
        assert rm == pytest.approx(bm, rel=1e-8, abs=1e-14)
        assert rp == pytest.approx(bp, rel=1e-8, abs=1e-14)
        assert rho == max(rm, rp)
    for _ in range(20):
        B = Cocycle(np.array([np.diag([2.0, 0.5]), np.diag([8.0, 1 / 8])])
                    + rng.normal(scale=0.05, size=(2, 2, 2)), [0.5, 0.5])
        rm, rp, _ = ir.rho_measure(B, [0, 1])
        bm, bp = brute_rho(B, [0, 1])
        assert (rm, rp) == pytest.approx((bm, bp), rel=1e-7, abs=1e-12)


def test_rho_inverse_swaps_signs(diag28):
    L = max(diag28.norm_bound(), 1.0)
    for eta in (1e-2, 1e-3):
        B = rotation_perturbed(diag28, eta, index=1)
        rm, rp, _ = ir.rho_measure(B, [1])
        im, ip, _ = ir.rho_measure(inverse_cocycle(B), [1])
        for a, b in ((ip, rm), (im, rp)):
            assert b / L ** 4 <= a <= b * L ** 4


def test_rho_rejects_non_hyperbolic():
    B = Cocycle([rotation(0.5), np.diag([3.0, 1 / 3])], [0.5, 0.5])
    with pytest.raises(NotHyperbolic):
        ir.rho_measure(B, [0])


# N(B)

def test_measure_N_diagonal_is_infinite(diag28):
    est = ir.measure_N_detail(diag28, n_max=128, dir_grid_size=32, samples=400, seed=1)
    assert est.value == ir.INFINITY
    assert est.status == "infinity"
    # on the slow line the growth rate is exactly -L
    assert abs(est.min_growth[-1] + 2 * LOG2) <= 3 * est.min_growth_se[-1]


def test_measure_N_grows_as_eta_shrinks(diag28):
    Ns = [ir.measure_N(rotation_perturbed(diag28, eta), n_max=512, samples=500, seed=2)
          for eta in (1e-2, 1e-3, 1e-4)]
    assert all(isinstance(n, int) for n in Ns)
    assert Ns == sorted(Ns) and Ns[0] < Ns[-1]


def test_measure_N_zero_exponent():
    Z = Cocycle([rotation(0.3)], [1.0])
    with pytest.raises(ZeroLyapunov):
        ir.measure_N(Z, n_max=64, samples=200)


# proximity projection

def test_proximity_fixed_lines_unchanged():
    g = np.diag([3.0, 1 / 3])
    out = ir.proximity_project(g, ProjPoint(0.0), ProjPoint(math.pi / 2))
    np.testing.assert_allclose(out, g, atol=1e-12)


def test_proximity_small_rotation():
    g = rotation(1e-3)
    pp, pm = ProjPoint(0.0), ProjPoint(math.pi / 2)
    out = ir.proximity_project(g, pp, pm)
    assert abs(out[0, 1]) <= 1e-15 and abs(out[1, 0]) <= 1e-15
    disp = max(proj_distance(proj_apply(g, pp), pp), proj_distance(proj_apply(g, pm), pm))
    assert op_norm(out - g) <= 4 * math.sqrt(2) * disp * 2


def test_proximity_collapse():
    with pytest.raises(ConesCollapsed):
        ir.proximity_project(np.eye(2), ProjPoint(0.3), ProjPoint(0.3 + 1e-8))


@settings(max_examples=300)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(0, math.pi, exclude_max=True), st.floats(0.05, math.pi - 0.05))
def test_proximity_fixes_lines_and_unit_det(a, b, c, d, t, gap):
    g = np.array([[a, b], [c, d]])
    if abs(det(g)) < 1e-2:
        g = g + 2 * np.eye(2)
    if abs(det(g)) < 1e-2:
        return
    pp, pm = ProjPoint(t), ProjPoint(t + gap)
    out = ir.proximity_project(g, pp, pm)
    assert abs(abs(det(out)) - 1.0) <= 1e-12
    assert proj_distance(proj_apply(out, pp), pp) <= 1e-10
    assert proj_distance(proj_apply(out, pm), pm) <= 1e-10


def test_certified_bound_holds_per_instance(rng):
    # the default bound uses the deformation constant, so it holds with L = |g|, c = d(p+, p-)
    worst = 0.0
    for _ in range(500):
        s = rng.uniform(1.0, 4.0)
        g = rotation(rng.uniform(0, math.pi)) @ np.diag([s, 1 / s]) @ rotation(rng.uniform(0, 3))
        pp, pm = ProjPoint(rng.uniform(0, math.pi)), ProjPoint(rng.uniform(0, math.pi))
        c = proj_distance(pp, pm)
        if c < 0.5:
            continue
        disp = max(proj_distance(proj_apply(g, pp), pp), proj_distance(proj_apply(g, pm), pm))
        if disp == 0.0:
            continue
        ratio = op_norm(ir.proximity_project(g, pp, pm) - g) / disp
        worst = max(worst, ratio / ir.proximity_bound(max(op_norm(g), 1.0), c))
    assert worst <= 1.0


# distance to the diagonalizable set

def test_diag_distance_diagonal(diag28):
    assert ir.diag_distance_upper(entry_perturbed(diag28, 0.0), [1]) == pytest.approx(0.0,
                                                                                      abs=1e-15)


def test_diag_distance_scales_with_eta(diag28):
    uppers = np.array([ir.diag_distance_upper(rotation_perturbed(diag28, e), [1]) for e in ETAS])
    ratio = uppers / np.array(ETAS)
    assert np.all((ratio >= 0.1) & (ratio <= 100))
    slope = np.polyfit(np.log(ETAS), np.log(uppers), 1)[0]
    assert abs(slope - 1.0) <= 0.2
    # and the measured constant against rho is stable across the family
    C = uppers / np.array([ir.rho_measure(rotation_perturbed(diag28, e), [1])[2] for e in ETAS])
    assert C.max() / C.min() <= 1.5


def test_witness_is_diagonalizable_and_close_to_optimum(diag28):
    B = rotation_perturbed(diag28, 0.05)
    w = ir.diagonal_witness(B, [1])
    simultaneous_diagonalize(w.cocycle, tol=1e-9)

    # oracle: local minimization over conjugations and diagonals from several starts
    def dist(x):
        P = np.array([[math.cos(x[0]), math.cos(x[1])], [math.sin(x[0]), math.sin(x[1])]])
        if abs(np.linalg.det(P)) < 1e-3:
            return 1e3
        Pi = inverse(P)
        return max(op_norm(B.mats[j] - P @ np.diag([x[2 + 2 * j], x[3 + 2 * j]]) @ Pi)
                   for j in range(2))

    best = math.inf
    for a in np.linspace(0, 0.3, 4):
        x0 = [a, math.pi / 2 + a, 2.0, 0.5, 8.0, 1 / 8]
        best = min(best, minimize(dist, x0, method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000}).fun)
    assert best <= w.distance + 1e-9
    assert w.distance <= 10 * best


# constant ledger

def test_ledger_examples(diag28):
    diag = simultaneous_diagonalize(diag28)
    led = ir.constant_ledger(diag28, diag, 1e-4, L_bound=8.0, delta=0.1, C_prox=10.0)
    # L / (42 L + 60 log 8) with L = 2 log 2
    assert led.r == pytest.approx(2 * LOG2 / (84 * LOG2 + 60 * math.log(8)), rel=1e-14)
    assert led.r == pytest.approx(0.0075758, abs=1e-7)
    assert led.lambda_star[1] == pytest.approx(32.0, rel=1e-13)
    assert 0 < led.r < 1 / 42
    assert led.M == pytest.approx(math.exp(led.kappa) * led.s * led.M0, rel=1e-12)
    assert led.n1 == math.ceil(2 / led.L_A * math.log(1e4))
    assert led.n2 == math.ceil(math.log(1e4) / led.L_A)
    assert led.c0 == pytest.approx(led.q + 3 / led.L_A)
    assert led.n_B == pytest.approx(led.c0 * math.log(1e4))
    assert isinstance(led.s, float)
    json.dumps(to_jsonable(led.to_dict()))


def test_ledger_l0_scan():
    c_hat, r = 0.01, 0.008
    l0 = ir.ledger_l0(c_hat, r)
    assert l0 == math.ceil(-math.log(0.001 * (1 - math.exp(-0.01))) / 0.01)
    scan = next(l for l in range(10 ** 6)
                if math.exp(-c_hat * l) / (1 - math.exp(-c_hat)) < r / 8)
    assert l0 == scan


def test_ledger_without_rho(diag28):
    diag = simultaneous_diagonalize(diag28)
    led = ir.constant_ledger(diag28, diag, 0.0)
    assert led.n1 is None and led.n2 is None and led.n_B is None
    assert led.r > 0 and led.q > 0


def test_report_fields(diag28):
    B = rotation_perturbed(diag28, 1e-3)
    rep = ir.irreducibility_report(B, [1])
    d = rep.to_dict()
    assert d["rho"] == max(d["rho_minus"], d["rho_plus"])
    assert set(d) >= {"rho_minus", "rho_plus", "rho", "N_B", "N_Binv", "sigma_H", "e_plus_i",
                      "e_minus_i", "diag_dist_upper"}
    assert rep.diag_dist_upper > 0
    assert ir.is_diagonalizable(diag28) and not ir.is_diagonalizable(B)


def test_rho_zero_iff_diagonalizable(rng):
    for _ in range(50):
        P = rotation(rng.uniform(0, math.pi)) @ np.diag([1.0, rng.uniform(0.5, 2)])
        ts = rng.uniform(1.5, 6, 2)
        A = Cocycle([P @ np.diag([t, 1 / t]) @ inverse(P) for t in ts], [0.5, 0.5])
        diag, sigma_H = ir.reference_from(A)
        assert ir.rho_measure(A, sigma_H)[2] <= 1e-12 or ir.is_diagonalizable(A)
        B = entry_perturbed(A, 1e-3, index=int(rng.integers(2)), entry=(0, 1))
        assert eigen_directions(B.mats[sigma_H[0]]) is not None
        assert ir.rho_measure(B, sigma_H)[2] > 1e-12
        assert not ir.is_diagonalizable(B)
