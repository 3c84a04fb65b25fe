"""Irreducibility measurements and the constants built from them.

Three measurements of how far a cocycle ``B`` near a diagonalizable ``A`` is
from being diagonalizable:

* ``rho(B)``: how far the member actions move the eigen-lines of the
  hyperbolic members;
* ``N(B)``: the first scale at which every direction grows at half the
  exponent on average;
* an explicit diagonalizable witness ``B*`` and the distance ``|B - B*|``,
  an upper bound for the distance to the diagonalizable set.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from ._parallel import map_path_chunks
from .cocycle import Cocycle, DiagForm, simultaneous_diagonalize
from .errors import ConesCollapsed, NotDiagonalizable, NotHyperbolic, ZeroLyapunov
from .lyapunov import closed_form_diag_le, mc_le
from .mat2 import (ProjPoint, eigen_directions, op_norm, proj_apply, proj_distance,
                   sl2_normalize)

INFINITY = math.inf
COLLAPSE_FLOOR = 1e-6
_KEY_N = 11
_KEY_N_LE = 12


@dataclass
class IrredReport:
    rho_minus: float
    rho_plus: float
    rho: float
    N_B: object = None
    N_Binv: object = None
    sigma_H: list = field(default_factory=list)
    e_plus_i: dict = field(default_factory=dict)
    e_minus_i: dict = field(default_factory=dict)
    diag_dist_upper: float = None

    def to_dict(self):
        out = asdict(self)
        out["e_plus_i"] = {str(i): p.theta for i, p in self.e_plus_i.items()}
        out["e_minus_i"] = {str(i): p.theta for i, p in self.e_minus_i.items()}
        return out


@dataclass
class ConstantLedger:
    L_A: float
    delta_cone: float
    L_bound: float
    C_prox: float
    r: float
    M0: float
    lambda_tilde: list
    lambda_star: list
    s: float
    c_hat: float
    l0: int
    kappa: float
    M: float
    log_M: float
    n0: int
    b0: float
    q: int
    n1: object
    n2: object
    c0: float
    n_B: object
    a: list
    rho_B: float

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# diagonal reference cocycle


def diag_axes(A, diag):
    """Expanding/contracting lines of a diagonalizable ``A`` and eigenvalues on ``e+``.

    Returns ``(e_plus, e_minus, a, L)`` where ``A_j e+ = a_j e+``.
    """
    thetas = np.asarray(diag.thetas, dtype=float)
    col0 = ProjPoint.from_vector(diag.conj[:, 0])
    col1 = ProjPoint.from_vector(diag.conj[:, 1])
    signed = float(np.dot(A.probs, np.log(np.abs(thetas))))
    if signed >= 0.0:
        return col0, col1, thetas, abs(signed)
    dets = A.mats[:, 0, 0] * A.mats[:, 1, 1] - A.mats[:, 0, 1] * A.mats[:, 1, 0]
    return col1, col0, dets / thetas, abs(signed)


def hyperbolic_symbols(A, diag, zero_tol=1e-12):
    """``{i : |a_i| >= e^L(A)}``, the members expanding at least at rate L."""
    _, _, a, L = diag_axes(A, diag)
    if L <= zero_tol:
        raise ZeroLyapunov("L(A) = 0")
    logs = np.log(np.abs(a))
    return [i for i in range(A.k) if logs[i] >= L - zero_tol]


# ---------------------------------------------------------------------------
# rho


def _eigen_lines(B, sigma_H_ref):
    lines = {}
    for i in sigma_H_ref:
        e = eigen_directions(B.mats[i])
        if e is None:
            raise NotHyperbolic(i)
        lines[i] = (e[2], e[3])
    return lines


def rho_details(B, sigma_H_ref):
    """All displacements plus the maximizing ``(sign, i, j)`` for each sign."""
    lines = _eigen_lines(B, sigma_H_ref)
    best = {"+": (0.0, None, None), "-": (0.0, None, None)}
    for i, (ep, em) in lines.items():
        for j, g in enumerate(B.mats):
            for sign, e in (("+", ep), ("-", em)):
                d = proj_distance(proj_apply(g, e), e)
                if d > best[sign][0] or best[sign][1] is None:
                    best[sign] = (d, i, j)
    return lines, best


def rho_measure(B, sigma_H_ref):
    """``(rho_minus, rho_plus, rho)``."""
    _, best = rho_details(B, sigma_H_ref)
    rm, rp = best["-"][0], best["+"][0]
    return rm, rp, max(rm, rp)


# ---------------------------------------------------------------------------
# N(B)


def direction_set(B, grid_size=256):
    """Uniform angle grid plus member eigen-lines and their 1- and 2-step images."""
    thetas = list(np.arange(grid_size) * (math.pi / grid_size))
    seeds = []
    for g in B.mats:
        e = eigen_directions(g)
        if e is not None:
            seeds.extend(e[2:])
    extra = list(seeds)
    for p in seeds:
        for g in B.mats:
            q = proj_apply(g, p)
            extra.append(q)
            extra.extend(proj_apply(h, q) for h in B.mats)
    thetas.extend(p.theta for p in extra)
    thetas = np.unique(np.round(np.asarray(thetas), 15))
    vecs = np.column_stack([np.cos(thetas), np.sin(thetas)])
    vecs[np.abs(vecs) < 1e-15] = 0.0  # keep the vertical line exactly invariant
    return vecs


@dataclass
class NEstimate:
    value: object  # int, INFINITY, or None when inconclusive
    status: str
    L_B: float
    L_std_err: float
    min_growth: np.ndarray
    min_growth_se: np.ndarray


def _growth_profile(B, vecs, n, samples, seed, workers):
    chunks = map_path_chunks(lambda sym: _kernels.vector_log_growth(B.mats, sym, vecs),
                             B.cdf, n, samples, seed, (_KEY_N, n), workers)
    total = sum(c[0] for c in chunks)
    total_sq = sum(c[1] for c in chunks)
    t = np.arange(1, n + 1, dtype=float)
    mean = total / samples / t
    var = np.maximum(total_sq / samples - (total / samples) ** 2, 0.0) * samples / (samples - 1)
    se = np.sqrt(var / samples) / t
    return mean, se


def measure_N_detail(B, n_max=4096, dir_grid_size=256, samples=2000, seed=0,
                     workers=None, L_B=None, L_scale=None, start=64):
    """Least ``n`` with ``E[(1/n) log|B^(n) v|] > L(B)/2`` for all sampled ``v``.

    The condition must hold with a 3-standard-error margin in every
    direction.  Scales are scanned in doubling windows up to ``n_max``.
    """
    if L_B is None:
        L_scale = L_scale or max(512, min(n_max, 2048))
        est = mc_le(B, L_scale, samples, seed, workers, key=(_KEY_N_LE,))
        L_B, L_se = est.mean, est.std_err
    else:
        L_se = 0.0
    if not L_B - 3.0 * L_se > 0.0:
        raise ZeroLyapunov(f"L(B) = {L_B:.3g} +- {L_se:.2g} is not positive")
    vecs = direction_set(B, dir_grid_size)
    half = 0.5 * L_B
    horizon = min(start, n_max)
    while True:
        mean, se = _growth_profile(B, vecs, horizon, samples, seed, workers)
        ok = np.all(mean - 3.0 * se > half, axis=0)
        worst = np.argmin(mean, axis=0)
        cols = np.arange(horizon)
        min_growth, min_se = mean[worst, cols], se[worst, cols]
        hits = np.flatnonzero(ok)
        if hits.size:
            return NEstimate(int(hits[0]) + 1, "found", L_B, L_se, min_growth, min_se)
        if horizon >= n_max:
            below = np.any(mean[:, -1] + 3.0 * se[:, -1] < half)
            status = "infinity" if below else "inconclusive"
            return NEstimate(INFINITY if below else None, status, L_B, L_se, min_growth, min_se)
        horizon = min(2 * horizon, n_max)


def measure_N(B, n_max=4096, dir_grid_size=256, samples=2000, seed=0, workers=None, **kw):
    """``N(B)`` as an int, ``INFINITY`` when never reached, ``None`` when inconclusive."""
    return measure_N_detail(B, n_max, dir_grid_size, samples, seed, workers, **kw).value


# ---------------------------------------------------------------------------
# explicit diagonalizable witness


def _unit_pair(p_plus, p_minus):
    u = p_plus.vector
    w = p_minus.vector
    if u @ w < 0.0:
        w = -w
    return u, w


def proximity_project(g, p_plus, p_minus):
    """Unit-determinant matrix fixing both lines, close to ``g``.

    With ``m = [g p+/|g p+|, g p-/|g p-|]`` and ``m' = [p+, p-]`` the result
    is the unit-determinant rescaling of ``m' m^{-1} g``.
    """
    if proj_distance(p_plus, p_minus) < COLLAPSE_FLOOR:
        raise ConesCollapsed("p+ and p- are (nearly) the same line")
    u, w = _unit_pair(p_plus, p_minus)
    gu, gw = g @ u, g @ w
    m = np.column_stack([gu / np.hypot(*gu), gw / np.hypot(*gw)])
    m_prime = np.column_stack([u, w])
    g_prime = m_prime @ np.linalg.solve(m, g)
    return sl2_normalize(g_prime)


def proximity_bound(L, c, lemma_L=None):
    """Ratio bound ``|g*' - g| / max-displacement`` for ``|g| <= L``, ``d(p+, p-) >= c``.

    ``4 sqrt(2) L^3 / c`` times the rescaling factor ``K^{7/2} + K^{1/2}``.
    The rescaling step needs ``K`` to bound the norms and inverse
    determinants along the deformation from ``g`` to ``g'``, which gives the
    default ``K = max(4 L^3 / c, 1 / c)``; pass ``lemma_L=L`` for the
    cruder form with ``K = L``.
    """
    K = max(4.0 * L ** 3 / c, 1.0 / c) if lemma_L is None else lemma_L
    return 4.0 * math.sqrt(2.0) * L ** 3 / c * (K ** 3.5 + K ** 0.5)


@dataclass
class Witness:
    cocycle: Cocycle
    distance: float
    i0: int
    p_plus: ProjPoint
    p_minus: ProjPoint
    rho_pair: tuple  # (sign, i, j) realizing rho


def diagonal_witness(B, sigma_H_ref):
    lines, best = rho_details(B, sigma_H_ref)
    sign = "-" if best["-"][0] >= best["+"][0] else "+"
    _, i0, j0 = best[sign]
    p_plus, p_minus = lines[i0]
    star = np.array([proximity_project(g, p_plus, p_minus) for g in B.mats])
    dist = max(op_norm(g - h) for g, h in zip(B.mats, star))
    return Witness(Cocycle(star, B.probs), dist, i0, p_plus, p_minus, (sign, i0, j0))


def diag_distance_upper(B, sigma_H_ref):
    """Certified upper bound on the distance from ``B`` to the diagonalizable set."""
    return diagonal_witness(B, sigma_H_ref).distance


# ---------------------------------------------------------------------------
# cone radius and constant ledger


def _arc(e_center, e_other, a, points=201):
    """Angles of the cone ``{d(x, e_center) < a d(x, e_other)}``, sampled densely."""
    def ratio(phi):
        return abs(math.sin(phi - e_center.theta)) / max(abs(math.sin(phi - e_other.theta)), 1e-300)

    gap = (e_other.theta - e_center.theta) % math.pi
    ends = []
    for direction, span in ((1.0, gap), (-1.0, math.pi - gap)):
        lo, hi = 0.0, span
        if ratio(e_center.theta + direction * span * (1 - 1e-15)) < a:
            ends.append(direction * span)
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if ratio(e_center.theta + direction * mid) < a:
                lo = mid
            else:
                hi = mid
        ends.append(direction * lo)
    return e_center.theta + np.linspace(ends[1], ends[0], points)


def log_norm_range(g, phis):
    v = np.stack([np.cos(phis), np.sin(phis)])
    n = np.log(np.hypot(*(g @ v)))
    return float(n.max() - n.min())


def cone_radius(A, diag, fraction=1.0 / 20.0, start=1.0):
    """Largest ``delta`` (to 1%) whose doubled cones keep ``log|A_i v|`` within ``fraction * L``."""
    e_plus, e_minus, _, L = diag_axes(A, diag)

    def ok(delta):
        worst = 0.0
        for center, other in ((e_plus, e_minus), (e_minus, e_plus)):
            phis = _arc(center, other, 2.0 * delta)
            worst = max(worst, max(log_norm_range(g, phis) for g in A.mats))
        return worst < fraction * L

    delta = start
    while not ok(delta):
        delta *= 0.5
        if delta < 1e-300:
            return 0.0
    lo, hi = delta, 2.0 * delta
    if delta == start:
        return delta
    while hi / lo > 1.01:
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def ledger_l0(c_hat, r):
    """Smallest integer ``l`` with ``exp(-c l) / (1 - exp(-c)) < r / 8``."""
    x = math.log(8.0 / (r * -math.expm1(-c_hat))) / c_hat
    l0 = max(int(math.floor(x)) + 1, 0)
    while l0 > 0 and math.exp(-c_hat * (l0 - 1)) / -math.expm1(-c_hat) < r / 8.0:
        l0 -= 1
    return l0


def constant_ledger(A, diag, rho_B, B=None, L_bound=None, delta=None, C_prox=None,
                    s_margin=1.01):
    """Evaluate the prison-break constants for ``A`` (and optionally ``B``).

    Missing inputs default to: ``L_bound`` slightly above the norms of ``A``
    and ``B`` and their inverses; ``delta`` from :func:`cone_radius`;
    ``C_prox`` as 10/9 of the measured ``|B - B*| / rho(B)`` when ``B`` is
    given, otherwise 10/9 of the certified proximity constant.  ``s`` is
    ``s_margin`` times the larger of its two lower bounds.
    """
    e_plus, e_minus, a, L_A = diag_axes(A, diag)
    if L_A <= 1e-12:
        raise ZeroLyapunov("L(A) = 0")
    sigma_H = hyperbolic_symbols(A, diag)
    if L_bound is None:
        L_bound = A.norm_bound() if B is None else max(A.norm_bound(), B.norm_bound())
        L_bound *= 1.0 + 1e-6
    if delta is None:
        delta = cone_radius(A, diag)
    if C_prox is None:
        if B is not None and rho_B > 0:
            C_prox = 10.0 / 9.0 * diag_distance_upper(B, sigma_H) / rho_B
        else:
            c = 0.5 * proj_distance(e_plus, e_minus)
            C_prox = 10.0 / 9.0 * proximity_bound(L_bound, c)
    logL = math.log(L_bound)
    r = L_A / (42.0 * L_A + 60.0 * logL)
    contr = math.exp(-5.0 * L_A / 3.0)
    M0 = C_prox * contr / (1.0 - contr) + C_prox / (1.0 - contr) + 1.0
    log_a = np.log(np.abs(a))
    lam_tilde = np.exp(2.0 * log_a - L_A / 3.0)
    lam_star = np.exp(2.0 * log_a - L_A / 2.0)
    s_bound1 = np.max(3.0 / (lam_tilde - lam_star))
    s_bound2 = np.max((1.0 + 1.0 / lam_star) / (1.0 / lam_star - 1.0 / lam_tilde))
    s = float(s_margin * max(s_bound1, s_bound2))
    c_hat = (L_A / (2.0 * logL + L_A / 2.0)) ** 2 / 18.0
    l0 = ledger_l0(c_hat, r)
    kappa = l0 * float(np.max(-np.log(lam_star)))
    log_M = kappa + math.log(s) + math.log(M0)
    M = math.exp(log_M) if log_M < 709.0 else math.inf
    M_prime = M + C_prox / (1.0 - contr)
    n0 = int(math.floor(0.6 * math.log(M_prime * (L_bound ** 2 + 1.0)) / L_A)) + 1
    n0 = max(n0, 1)
    if B is not None and rho_B > 0:
        _, best = rho_details(B, sigma_H)
        _, i, j = best["-"]
        b0 = A.probs[i] ** n0 * A.probs[j]
    else:
        b0 = min(A.probs[i] ** n0 for i in sigma_H) * float(np.min(A.probs))
    q = int(math.ceil(math.log(4.0 / r) / b0))
    c0 = q + 3.0 / L_A
    if rho_B > 0:
        log_inv = math.log(1.0 / rho_B)
        n1 = int(math.ceil(2.0 / L_A * log_inv))
        n2 = int(math.ceil(log_inv / L_A))
        n_B = c0 * log_inv
    else:
        n1 = n2 = n_B = None
    return ConstantLedger(L_A, delta, L_bound, C_prox, r, M0, lam_tilde.tolist(),
                          lam_star.tolist(), s, c_hat, l0, kappa, M, log_M, n0, float(b0), q,
                          n1, n2, c0, n_B, a.tolist(), float(rho_B))


def irreducibility_report(B, sigma_H_ref, with_N=False, **n_kwargs):
    lines, best = rho_details(B, sigma_H_ref)
    rm, rp = best["-"][0], best["+"][0]
    report = IrredReport(rm, rp, max(rm, rp), sigma_H=list(sigma_H_ref),
                         e_plus_i={i: l[0] for i, l in lines.items()},
                         e_minus_i={i: l[1] for i, l in lines.items()})
    if max(rm, rp) > 0:
        report.diag_dist_upper = diag_distance_upper(B, sigma_H_ref)
    else:
        report.diag_dist_upper = 0.0
    if with_N:
        from .cocycle import inverse_cocycle
        for attr, C in (("N_B", B), ("N_Binv", inverse_cocycle(B))):
            try:
                setattr(report, attr, measure_N(C, **n_kwargs))
            except ZeroLyapunov:
                setattr(report, attr, None)
    return report


def is_diagonalizable(B, tol=1e-9):
    try:
        simultaneous_diagonalize(B, tol)
        return True
    except NotDiagonalizable:
        return False


def reference_from(A, tol=1e-9):
    """Diagonal form and hyperbolic symbol set of a diagonalizable ``A``."""
    diag = simultaneous_diagonalize(A, tol)
    return diag, hyperbolic_symbols(A, diag)


__all__ = [
    "IrredReport", "ConstantLedger", "DiagForm", "INFINITY", "hyperbolic_symbols",
    "rho_measure", "measure_N", "measure_N_detail", "proximity_project",
    "diag_distance_upper", "constant_ledger", "closed_form_diag_le",
]
