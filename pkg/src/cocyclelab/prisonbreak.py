"""Projective random walks, escape from cones, and the prison-break experiment.

Cones are taken relative to a frame ``(e+, e-)`` of unit vectors.  Writing
``x = u e+ + w e-`` the ratio ``d(x, e-) / d(x, e+)`` equals ``|u / w|``, so
``D-(a)`` is ``{|psi_-| < a}`` with ``psi_- = u / w`` and ``D+(a)`` is
``{|psi_+| < a}`` with ``psi_+ = w / u``.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from ._parallel import derive_rng, draw_symbols, map_path_chunks
from .errors import LedgerInfeasible, NotStochastic, ZeroRho
from .irreducibility import diagonal_witness, rho_measure
from .mat2 import ProjPoint, proj_apply, proj_distance

_KEY_ESCAPE = 21
_KEY_PRISON = 22
C0_GRID = (0.5, 1, 1.5, 2, 3, 4, 5, 7, 10, 15, 20, 30, 50, 70, 100)


# ---------------------------------------------------------------------------
# charts and cones


def _frame(e_plus, e_minus):
    P = np.column_stack([e_plus.vector, e_minus.vector])
    return np.linalg.inv(P)


def chart_psi(p, sign, e_plus=ProjPoint(0.0), e_minus=ProjPoint(math.pi / 2)):
    """Affine coordinate ``psi_sign`` of ``p``; ``math.inf`` at the opposite axis."""
    u, w = _frame(e_plus, e_minus) @ p.vector
    num, den = (u, w) if sign in ("-", -1) else (w, u)
    if den == 0.0:
        return math.inf
    with np.errstate(over="ignore"):
        return float(num / den)


def point_from_psi(psi, sign, e_plus=ProjPoint(0.0), e_minus=ProjPoint(math.pi / 2)):
    """Inverse of :func:`chart_psi`."""
    if math.isinf(psi):
        return e_plus if sign in ("-", -1) else e_minus
    u, w = (psi, 1.0) if sign in ("-", -1) else (1.0, psi)
    return ProjPoint.from_vector(u * e_plus.vector + w * e_minus.vector)


def in_cone(p, sign, a, e_plus, e_minus):
    return abs(chart_psi(p, sign, e_plus, e_minus)) < a


@dataclass
class ConeFamily:
    e_plus: ProjPoint
    e_minus: ProjPoint
    delta: float
    M_rho: float

    @property
    def radii(self):
        """Radii of the cell, the prison and the state (all ``D-`` cones)."""
        return self.M_rho, 1.0 / self.delta, 1.0 / self.M_rho

    @property
    def nested(self):
        return self.M_rho < self.delta

    def band(self, lo, hi, count=32, include_axis=False):
        """``count`` starts with ``lo <= |psi_-| < hi``, log-spaced."""
        if not lo < hi:
            return []
        lo_eff = lo if lo > 0 else hi * 1e-6
        psis = np.geomspace(lo_eff, hi, count + 1)[:-1]
        pts = [point_from_psi(float(s), "-", self.e_plus, self.e_minus) for s in psis]
        if include_axis:
            pts.insert(0, self.e_minus)
        return pts


# ---------------------------------------------------------------------------
# walks


def walk_step(B, p, rng):
    j = int(draw_symbols(rng, B.cdf, (1,))[0])
    return j, proj_apply(B.mats[j], p)


def walk(B, p, n, rng):
    """Orbit ``xi_0 .. xi_n`` of one walk as a list of ProjPoints."""
    out = [p]
    for _ in range(n):
        _, p = walk_step(B, p, rng)
        out.append(p)
    return out


@dataclass
class EscapeStats:
    horizon: int
    rows: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _walk_times(B, start, e_plus, e_minus, exit_radius, track_radius, n, samples, seed, key,
                workers):
    chunks = map_path_chunks(
        lambda sym: _kernels.cone_walk(B.mats, sym, start.vector, e_plus.vector,
                                       e_minus.vector, exit_radius, track_radius),
        B.cdf, n, samples, seed, key, workers)
    first = np.concatenate([c[0] for c in chunks])
    last = np.concatenate([c[1] for c in chunks])
    return first, last


def escape_prob(B, start, cone_radius, n, samples, seed, e_plus=ProjPoint(0.0),
                e_minus=ProjPoint(math.pi / 2), workers=None, stream=0):
    """Monte-Carlo ``P[xi_j not in D-(a) for some 0 <= j <= n]`` from ``start``."""
    first, _ = _walk_times(B, start, e_plus, e_minus, cone_radius, cone_radius, n, samples,
                           seed, (_KEY_ESCAPE, stream), workers)
    escaped = int(np.count_nonzero(first <= n))
    p = escaped / samples
    se = math.sqrt(p * (1.0 - p) / samples)
    row = {"start_theta": start.theta, "escape": p, "stay": (samples - escaped) / samples,
           "std_err": se, "samples": samples}
    return EscapeStats(n, [row])


# ---------------------------------------------------------------------------
# exact finite-chain oracle


def check_stochastic(T, tol=1e-12):
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise NotStochastic("transition matrix must be square")
    if np.any(T < 0) or np.any(np.abs(T.sum(axis=1) - 1.0) > tol):
        raise NotStochastic("rows must be non-negative and sum to 1")
    return T


def chain_escape_oracle(T, subset, n):
    """Exact ``(P_n(x, E), P*_n(x, E))`` for every state ``x``.

    ``P*_n(x, E)`` is the probability that the chain stays in ``E`` at times
    ``0 .. n``; it is ``1_E`` pushed through ``n`` powers of ``T`` restricted
    to ``E``.
    """
    T = check_stochastic(T)
    mask = np.zeros(T.shape[0], dtype=bool)
    mask[list(subset)] = True
    TE = T * mask[None, :]
    stay = mask.astype(float)
    for _ in range(n):
        stay = TE @ stay
    stay = stay * mask
    return 1.0 - stay, stay


def stay_sup(T, subset, n):
    """``P*_n(E) = max_{x in E} P*_n(x, E)``."""
    _, stay = chain_escape_oracle(T, subset, n)
    idx = list(subset)
    return float(stay[idx].max()) if idx else 0.0


# ---------------------------------------------------------------------------
# the experiment


def effective_M(ledger):
    """``M`` with ``kappa`` floored at 0; keeps the cones usable when ``kappa < 0``."""
    return math.exp(max(ledger.kappa, 0.0) + math.log(ledger.s) + math.log(ledger.M0))


def cone_family(B, sigma_H_ref, ledger):
    witness = diagonal_witness(B, sigma_H_ref)
    rho_minus, _, rho = rho_measure(B, sigma_H_ref)
    return ConeFamily(witness.p_plus, witness.p_minus, ledger.delta_cone,
                      effective_M(ledger) * rho), witness


def n_conditions(ledger, cones, rho_B, witness, A):
    """Which of the checkable neighborhood conditions hold for this ``(A, B)``."""
    d_AD = max(np.linalg.norm(a - d, 2) for a, d in zip(A.mats, witness.cocycle.mats))
    return {
        "N6": bool(effective_M(ledger) * math.sqrt(rho_B) < ledger.delta_cone),
        "nested_cones": bool(cones.nested),
        "N11": bool(math.log(1.0 / rho_B) > max(2.0 * ledger.kappa, ledger.l0 * ledger.L_A)),
        "witness_distance": float(witness.distance),
        "d_A_witness": float(d_AD),
    }


def _band_rates(B, cones, starts, exit_radius, n, samples, seed, tag, workers):
    out = []
    for s, p in enumerate(starts):
        first, _ = _walk_times(B, p, cones.e_plus, cones.e_minus, exit_radius, exit_radius, n,
                               samples, seed, (_KEY_PRISON, tag, s), workers)
        out.append(float(np.count_nonzero(first <= n)) / samples)
    return out


def _assumption(name, rates, threshold, horizon, starts):
    if not starts:
        return {"name": name, "status": "vacuous", "horizon": horizon, "threshold": threshold}
    worst = min(rates)
    return {"name": name, "status": "pass" if worst >= threshold else "fail", "horizon": horizon,
            "threshold": threshold, "worst": worst, "starts": len(starts)}


def prison_break_experiment(A, B, ledger, sigma_H_ref, samples=10000, seed=0, workers=None,
                            strict=False, c0_grid=C0_GRID, tail_factor=10):
    """Empirical counterpart of the prison-break scheme for ``B`` near ``A``.

    Checks (A1)-(A4) on grid starts, then sweeps ``c0`` upward until
    ``P[exists j >= c0 log(1/rho): xi_j in Sigma_1] < r`` holds from every
    grid start.  Returns trajectories only through summary numbers.
    """
    rho_minus, _, rho = rho_measure(B, sigma_H_ref)
    if not rho_minus > 0.0:
        raise ZeroRho("experiment needs rho_-(B) > 0")
    cones, witness = cone_family(B, sigma_H_ref, ledger)
    conds = n_conditions(ledger, cones, rho, witness, A)
    if strict and not (conds["N6"] and conds["nested_cones"]):
        raise LedgerInfeasible(f"neighborhood conditions fail: {conds}")
    cell, prison, state = cones.radii
    log_inv = math.log(1.0 / rho)
    n_B = ledger.c0 * log_inv

    starts0 = cones.band(0.0, cell, include_axis=True)
    starts1 = cones.band(cell, prison) if cell < prison else []
    starts2 = cones.band(prison, state) if prison < state else []
    r = ledger.r
    checks = [
        _assumption("A1", _band_rates(B, cones, starts0, cell, ledger.n0, samples, seed, 1,
                                      workers), ledger.b0, ledger.n0, starts0),
        _assumption("A2", _band_rates(B, cones, starts1, prison, ledger.n1, samples, seed, 2,
                                      workers), 1.0 - r / 4.0, ledger.n1, starts1),
        _assumption("A3", _band_rates(B, cones, starts2, state, ledger.n2, samples, seed, 3,
                                      workers), 1.0 - r / 4.0, ledger.n2, starts2),
    ]
    # final bound: returns to the prison after c0 log(1/rho)
    starts = cones.band(0.0, prison, include_axis=True)
    fitted = None
    sweep = []
    for c0 in c0_grid:
        n_c = int(math.ceil(c0 * log_inv))
        horizon = tail_factor * n_c
        worst = 0.0
        worst_se = 0.0
        for s, p in enumerate(starts):
            _, last = _walk_times(B, p, cones.e_plus, cones.e_minus, prison, prison, horizon,
                                  samples, seed, (_KEY_PRISON, 5, n_c, s), workers)
            prob = float(np.count_nonzero(last >= n_c)) / samples
            if prob >= worst:
                worst, worst_se = prob, math.sqrt(prob * (1.0 - prob) / samples)
            if worst >= r:
                break
        sweep.append({"c0": c0, "n": n_c, "horizon": horizon, "worst_return_prob": worst,
                      "std_err": worst_se})
        if worst < r:
            fitted = {"c0": c0, "n": n_c, "bound_estimate": worst, "std_err": worst_se}
            break

    # (A4): from outside Sigma_2, never enter Sigma_1 for 10 fitted n_B
    a4_horizon = tail_factor * (fitted["n"] if fitted else int(math.ceil(n_B)))
    # without nesting, points just outside Sigma_2 can still lie in Sigma_1
    outer = max(state, prison)
    outside = [point_from_psi(float(s), "-", cones.e_plus, cones.e_minus)
               for s in np.geomspace(outer * (1 + 1e-9), outer * 1e6, 32)]
    stay_rates = []
    for s, p in enumerate(outside):
        _, last = _walk_times(B, p, cones.e_plus, cones.e_minus, prison, prison, a4_horizon,
                              samples, seed, (_KEY_PRISON, 4, s), workers)
        stay_rates.append(float(np.count_nonzero(last < 0)) / samples)
    checks.append(_assumption("A4", stay_rates, 1.0 - r / 2.0, a4_horizon, outside))
    checks[-1]["start_radius"] = outer
    return {
        "rho": rho, "rho_minus": rho_minus, "r": r, "n_B": n_B, "M_effective": effective_M(ledger),
        "cones": {"e_plus": cones.e_plus.theta, "e_minus": cones.e_minus.theta,
                  "delta": cones.delta, "M_rho": cones.M_rho, "radii": list(cones.radii)},
        "n_conditions": conds, "assumptions": checks, "c0_sweep": sweep, "fitted": fitted,
        "final_bound_holds": fitted is not None, "ledger": ledger.to_dict(),
        "samples": samples, "seed": seed, "grid_starts": len(starts),
    }


def contraction_factor(g, e_plus, e_minus, radius, points=64):
    """Largest pairwise contraction ``d(gx, gy) / d(x, y)`` over a grid in ``D-(radius)``."""
    psis = np.linspace(-radius, radius, points + 2)[1:-1]
    pts = [point_from_psi(float(s), "-", e_plus, e_minus) for s in psis]
    imgs = [proj_apply(g, p) for p in pts]
    worst = 0.0
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            d = proj_distance(pts[a], pts[b])
            if d > 0:
                worst = max(worst, proj_distance(imgs[a], imgs[b]) / d)
    return worst


def cycle_chain_cocycle(m, p_fwd, p_back):
    """Lazy walk on ``m`` equally spaced lines via rotations by ``+-pi/m`` and identity.

    Returns ``(cocycle, transition_matrix, lines)`` with line ``s`` at angle ``s pi / m``.
    """
    from .cocycle import Cocycle
    from .mat2 import rotation
    step = math.pi / m
    probs = [p_fwd, p_back, 1.0 - p_fwd - p_back]
    C = Cocycle(np.array([rotation(step), rotation(-step), np.eye(2)]), probs)
    T = np.zeros((m, m))
    for s in range(m):
        T[s, (s + 1) % m] += p_fwd
        T[s, (s - 1) % m] += p_back
        T[s, s] += probs[2]
    return C, T, [ProjPoint(s * step) for s in range(m)]
