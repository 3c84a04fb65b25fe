"""Random Jacobi operators, their transfer matrices and the IDS.

The operator acts as ``(H psi)_n = -(w_{n+1} psi_{n+1} + w_n psi_{n-1}) + v_n psi_n``.
Finite truncations use Dirichlet boundary conditions.  Sturm counting uses
``w^2`` so the sign of the coupling never matters.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._parallel import derive_rng, map_chunks
from .cocycle import Cocycle
from .errors import GridTooNarrow, ZeroWeight
from .lyapunov import mc_le

_KEY_IDS = 41
_KEY_LE = 42
_KEY_DIRECT = 43
THOULESS_EDGE_TOL = 1e-3


def _nonzero(w, name="w"):
    if w == 0:
        raise ZeroWeight(f"{name} must be nonzero")


def transfer_matrix(v, w_n, w_np1, E):
    _nonzero(w_np1, "w_{n+1}")
    return np.array([[(v - E) / w_np1, -w_n / w_np1], [1.0, 0.0]])


def sl2_conjugated_transfer(v, w, E):
    _nonzero(w)
    return np.array([[(v - E) / w, -w], [1.0 / w, 0.0]])


def toy_two_step(omega, E):
    _nonzero(omega, "omega")
    return np.array([[(E * E - 1.0) / omega, -E * omega], [E / omega, -omega]])


def _check_probs(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must be positive and sum to 1")
    return p


def _draw(rng, support, probs, shape):
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.asarray(support)[np.searchsorted(cdf, rng.random(shape), side="right")]


@dataclass(frozen=True, eq=False)
class JacobiEnsemble:
    """i.i.d. potentials ``v_n`` and weights ``w_n`` with finite supports."""

    v_support: tuple
    v_probs: tuple
    w_support: tuple
    w_probs: tuple

    def __post_init__(self):
        for s, p in ((self.v_support, self.v_probs), (self.w_support, self.w_probs)):
            if len(s) != len(_check_probs(p)):
                raise ValueError("support and probabilities differ in length")
        if any(w == 0 for w in self.w_support):
            raise ZeroWeight("0 in the weight support")

    @classmethod
    def free(cls):
        return cls((0.0,), (1.0,), (1.0,), (1.0,))

    @property
    def mean_log_w(self):
        return float(np.dot(self.w_probs, np.log(np.abs(self.w_support))))

    def sample(self, rng, rows, n):
        """Diagonal ``(rows, n)`` and squared off-diagonal ``(rows, n-1)`` arrays."""
        v = _draw(rng, self.v_support, self.v_probs, (rows, n)).astype(float)
        w = _draw(rng, self.w_support, self.w_probs, (rows, n - 1)).astype(float)
        return v, w * w

    def energy_cocycle(self, E):
        """Unit-determinant transfer cocycle over the symbols ``(v, w)``."""
        mats, probs = [], []
        for v, pv in zip(self.v_support, self.v_probs):
            for w, pw in zip(self.w_support, self.w_probs):
                mats.append(sl2_conjugated_transfer(v, w, E))
                probs.append(pv * pw)
        return Cocycle(np.array(mats), probs)

    def lyapunov(self, E, n, samples, seed, workers=None):
        """``(L+(E), std_err)`` per site."""
        est = mc_le(self.energy_cocycle(E), n, samples, seed, workers, key=(_KEY_LE, n))
        return est.mean, est.std_err

    def to_dict(self):
        return {"v_support": list(self.v_support), "v_probs": list(self.v_probs),
                "w_support": list(self.w_support), "w_probs": list(self.w_probs)}


@dataclass(frozen=True, eq=False)
class ToyEnsemble:
    """Zero potential with weights ``..., 1, omega_0, 1, omega_1, ...``; the omegas are i.i.d."""

    mu_support: tuple
    mu_probs: tuple

    def __post_init__(self):
        if len(self.mu_support) != len(_check_probs(self.mu_probs)):
            raise ValueError("support and probabilities differ in length")
        if any(not w > 0 for w in self.mu_support):
            raise ValueError("omega support must lie in (0, inf)")

    @property
    def mean_log_w(self):
        """Average of ``log w_n`` over sites (half of ``E log omega``)."""
        return 0.5 * float(np.dot(self.mu_probs, np.log(self.mu_support)))

    def sample(self, rng, rows, n):
        v = np.zeros((rows, n))
        w = np.ones((rows, n - 1))
        m = (n - 1) // 2
        w[:, 1::2] = _draw(rng, self.mu_support, self.mu_probs, (rows, m))
        return v, w * w

    def energy_cocycle(self, E):
        return Cocycle(np.array([toy_two_step(w, E) for w in self.mu_support]), self.mu_probs)

    def lyapunov(self, E, n, samples, seed, workers=None):
        """Per-site ``(L+(E), std_err)``, half the two-step exponent."""
        est = mc_le(self.energy_cocycle(E), n, samples, seed, workers, key=(_KEY_LE, n))
        return 0.5 * est.mean, 0.5 * est.std_err

    def to_dict(self):
        return {"mu_support": list(self.mu_support), "mu_probs": list(self.mu_probs)}


def jacobi_le_direct(ens, E, n, samples, seed):
    """Per-site exponent from the raw transfer matrices ``g_n`` (not unit determinant)."""
    rng = derive_rng(seed, _KEY_DIRECT, n)
    v = _draw(rng, ens.v_support, ens.v_probs, (samples, n))
    w = _draw(rng, ens.w_support, ens.w_probs, (samples, n + 1))
    a, b, c, d = np.ones(samples), np.zeros(samples), np.zeros(samples), np.ones(samples)
    scale = np.zeros(samples)
    for t in range(n):
        x00, x01 = (v[:, t] - E) / w[:, t + 1], -w[:, t] / w[:, t + 1]
        a, b, c, d = x00 * a + x01 * c, x00 * b + x01 * d, a, b
        m = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
        a, b, c, d = a / m, b / m, c / m, d / m
        scale += np.log(m)
    top = scale + np.log(0.5 * (np.hypot(a + d, b - c) + np.hypot(a - d, b + c)))
    vals = top / n
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


# ---------------------------------------------------------------------------
# eigenvalue counting and the IDS


def eig_count_leq(v_seq, w_seq, E):
    """Number of eigenvalues ``<= E`` of the Dirichlet truncation."""
    v = np.asarray(v_seq, dtype=float).reshape(1, -1)
    w = np.asarray(w_seq, dtype=float).reshape(1, -1)
    if w.shape[1] != v.shape[1] - 1:
        raise ValueError("need len(w_seq) == len(v_seq) - 1")
    return int(_kernels.sturm_counts(v, w * w, np.array([float(E)]))[0, 0])


def dense_matrix(v_seq, w_seq):
    v = np.asarray(v_seq, dtype=float)
    w = np.asarray(w_seq, dtype=float)
    return np.diag(v) - np.diag(w, 1) - np.diag(w, -1)


@dataclass
class IdsCurve:
    energies: np.ndarray
    N_values: np.ndarray
    n_truncation: int
    samples: int
    std_err: np.ndarray = None

    def table(self):
        return [[float(e), float(v), float(s)]
                for e, v, s in zip(self.energies, self.N_values, self.std_err)]


def ids_counts(ens, energies, n, samples, seed, workers=None, chunk=64):
    """Per-sample eigenvalue counts, shape ``(samples, len(energies))``."""
    energies = np.asarray(energies, dtype=float)

    def run(i, lo, hi):
        v, w2 = ens.sample(derive_rng(seed, _KEY_IDS, n, i), hi - lo, n)
        return _kernels.sturm_counts(v, w2, energies)

    return np.concatenate(map_chunks(run, samples, workers, chunk=chunk))


def ids_curve(ens, energies, n, samples, seed, workers=None):
    if n < 16:
        raise ValueError("n must be at least 16")
    energies = np.sort(np.asarray(energies, dtype=float))
    frac = ids_counts(ens, energies, n, samples, seed, workers) / n
    se = frac.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros(len(energies))
    return IdsCurve(energies, frac.mean(axis=0), n, samples, se)


def free_ids(E):
    """``1 - arccos(E/2) / pi`` on ``[-2, 2]``, clipped outside."""
    return 1.0 - np.arccos(np.clip(np.asarray(E, dtype=float) / 2.0, -1.0, 1.0)) / math.pi


def free_le(E):
    E = abs(E)
    return math.log((E + math.sqrt(E * E - 4.0)) / 2.0) if E > 2.0 else 0.0


# ---------------------------------------------------------------------------
# Thouless formula


def log_potential(ids, E):
    """``int log|E - E'| dN(E')`` from the IDS on its grid.

    The window ``|E' - E| < h`` (``h`` the grid step) is replaced by the
    analytic value ``(N(E+h) - N(E-h)) (log h - 1)``.
    """
    x = ids.energies
    N = ids.N_values
    if N[0] > THOULESS_EDGE_TOL or N[-1] < 1.0 - THOULESS_EDGE_TOL:
        raise GridTooNarrow(f"N = {N[0]:.3g} .. {N[-1]:.3g} at the grid ends")
    h = float(np.max(np.diff(x)))
    lo, hi = E - h, E + h
    total = []
    for a, b in zip(x[:-1], x[1:]):
        for s, t in ((a, min(b, lo)), (max(a, hi), b)):
            if t > s:
                dN = np.interp(t, x, N) - np.interp(s, x, N)
                total.append(math.log(abs(E - 0.5 * (s + t))) * dN)
    inner = np.interp(hi, x, N) - np.interp(lo, x, N)
    total.append(inner * (math.log(h) - 1.0))
    return math.fsum(total)


def thouless_check(ids, ens, energies=None, n_le=2000, samples=400, seed=0, workers=None):
    """Rows ``(E, thouless, L_mc, std_err, residual)``.

    With general weights the formula picks up ``-E log|w|``:
    ``L(E) = int log|E - E'| dN(E') - E log|w|``.
    """
    if energies is None:
        energies = ids.energies[1:-1]
    rows = []
    for E in energies:
        th = log_potential(ids, float(E)) - ens.mean_log_w
        L, se = ens.lyapunov(float(E), n_le, samples, seed, workers)
        rows.append({"E": float(E), "thouless": th, "L_mc": L, "std_err": se,
                     "residual": abs(th - L)})
    return rows


# ---------------------------------------------------------------------------
# case study


def wegner_profile(ids, window, levels):
    """Max eigenvalue density over nested dyadic cells, coarse to fine.

    ``ids`` must be evaluated on the ``2^levels + 1`` dyadic nodes of ``window``.
    """
    N = ids.N_values
    out = []
    for lev in range(levels + 1):
        stride = 2 ** (levels - lev)
        width = (window[1] - window[0]) / 2 ** lev
        dens = np.diff(N[::stride]) / width
        out.append({"width": width, "max_density": float(dens.max())})
    return out


def toy_ids_localization_diag(mu_support, mu_probs, energy_window=(-0.5, 0.5), n=2000,
                              samples=200, seed=0, le_energies=None, levels=6, workers=None,
                              n_le=2000):
    """Exponent, IDS and Wegner-type density diagnostics for the toy operator."""
    ens = ToyEnsemble(tuple(mu_support), tuple(mu_probs))
    if le_energies is None:
        le_energies = np.linspace(energy_window[0], energy_window[1], 11)
    le_rows = []
    for E in le_energies:
        est = mc_le(ens.energy_cocycle(float(E)), n_le, samples, seed, workers, key=(_KEY_LE, n_le))
        le_rows.append({"E": float(E), "L_two_step": est.mean, "L_site": 0.5 * est.mean,
                        "std_err": est.std_err})
    nodes = np.linspace(energy_window[0], energy_window[1], 2 ** levels + 1)
    ids = ids_curve(ens, nodes, n, samples, seed, workers)
    return {"ensemble": ens.to_dict(), "le": le_rows, "ids": ids.table(),
            "wegner": wegner_profile(ids, energy_window, levels), "n": n, "samples": samples,
            "seed": seed}
