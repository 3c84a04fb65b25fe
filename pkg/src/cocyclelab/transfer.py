"""Grid discretizations of the Markov and Laplace-Markov operators on symbols x lines.

A state is a pair ``(i, m)`` of a symbol and a grid node ``theta_m = m pi / G``,
flattened as ``i * G + m``.  From ``(i, m)`` the chain moves to
``(l, B_i theta_m)`` with probability ``p_l``; the image line is split between
the two bracketing nodes by linear interpolation, so rows stay exactly
stochastic.  The Laplace version multiplies the ``l`` branch by
``exp(t log|B_l y|)`` with ``y`` the exact unit image vector.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigs

from . import _kernels
from ._parallel import map_path_chunks
from .errors import DegenerateCurvature, NoConvergence

_KEY_KAPPA = 51
SNAP = 1e-9


@dataclass
class GridFunction:
    values: np.ndarray  # (k, G)
    grid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @property
    def marginal(self):
        return self.values.sum(axis=0)


@dataclass
class GridOperator:
    matrix: sp.csr_matrix
    t: float
    k: int
    G: int

    @property
    def grid(self):
        return np.arange(self.G) * (math.pi / self.G)

    def to_coo_text(self):
        coo = self.matrix.tocoo()
        return "\n".join(f"{r} {c} {float(v)!r}" for r, c, v in zip(coo.row, coo.col, coo.data))


@dataclass
class StationaryMeasure(GridFunction):
    residual: float = 0.0
    iterations: int = 0
    non_unique: bool = False
    second_eigenvalue: float = None


@dataclass
class PressureCurve:
    t: np.ndarray
    lam: np.ndarray
    c: np.ndarray
    second_diff: np.ndarray
    h: float
    c_prime0: float = None
    t_max: float = None
    extra: dict = field(default_factory=dict)

    def table(self):
        return [[float(a), float(b), float(c), float(d)]
                for a, b, c, d in zip(self.t, self.lam, self.c, self.second_diff)]


def discretize(B, G, t=0.0):
    if G < 8:
        raise ValueError("G must be at least 8")
    k = B.k
    step = math.pi / G
    theta = np.arange(G) * step
    v = np.stack([np.cos(theta), np.sin(theta)])
    rows, cols, vals = [], [], []
    for i, g in enumerate(B.mats):
        img = g @ v
        img /= np.hypot(*img)
        phi = np.mod(np.arctan2(img[1], img[0]), math.pi)
        x = phi / step
        near = np.rint(x)
        x = np.where(np.abs(x - near) < SNAP, near, x)
        lo = np.floor(x).astype(np.int64)
        frac = x - lo
        lo %= G
        hi = (lo + 1) % G
        for l, pl in enumerate(B.probs):
            w = pl * np.ones(G)
            if t != 0.0:
                w = w * np.exp(t * np.log(np.hypot(*(B.mats[l] @ img))))
            src = i * G + np.arange(G)
            rows += [src, src]
            cols += [l * G + lo, l * G + hi]
            vals += [w * (1.0 - frac), w * frac]
    Q = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(k * G, k * G)).tocsr()
    Q.eliminate_zeros()
    return GridOperator(Q, float(t), k, G)


def _second_modulus(Q):
    try:
        vals = eigs(Q.matrix.T.astype(float), k=2, which="LM", return_eigenvectors=False,
                    maxiter=5000, tol=1e-10)
        return float(np.sort(np.abs(vals))[0])
    except Exception:
        return None


def stationary_measure(Q, tol=1e-12, max_iter=100_000, check_unique=True, start=None):
    """Left fixed vector of the lazy chain ``(I + Q)/2``, which has the same fixed points."""
    if Q.t != 0.0:
        raise ValueError("stationary measure needs the t = 0 operator")
    n = Q.matrix.shape[0]
    QT = Q.matrix.T.tocsr()
    nu = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float).ravel()
    residual = math.inf
    for it in range(1, max_iter + 1):
        nxt = QT @ nu
        residual = float(np.abs(nxt - nu).sum())
        nu = 0.5 * (nu + nxt)
        nu /= nu.sum()
        if residual <= tol:
            break
    else:
        raise NoConvergence(max_iter, residual)
    second = _second_modulus(Q) if check_unique else None
    return StationaryMeasure(nu.reshape(Q.k, Q.G), Q.grid, residual, it,
                             bool(second is not None and second > 1.0 - 1e-6), second)


def furstenberg_le(B, nu):
    """``sum_i p_i sum_m nu_m log|B_i v_m|`` with ``nu`` the line marginal."""
    weights = nu.marginal if isinstance(nu, GridFunction) else np.asarray(nu, dtype=float)
    weights = weights / weights.sum()
    G = weights.shape[0]
    theta = np.arange(G) * (math.pi / G)
    v = np.stack([np.cos(theta), np.sin(theta)])
    total = 0.0
    for g, p in zip(B.mats, B.probs):
        total += p * float(weights @ np.log(np.hypot(*(g @ v))))
    return total


def dominant_eigenvalue(Q, tol=1e-12, max_iter=100_000):
    """Perron eigenvalue by power iteration on positive vectors (lazy form)."""
    M = Q.matrix
    f = np.ones(M.shape[0])
    lam = 1.0
    for it in range(max_iter):
        g = 0.5 * (f + M @ f)
        mu = g.sum() / f.sum()
        g /= g.max()
        new = 2.0 * mu - 1.0
        if abs(new - lam) <= tol * max(1.0, abs(new)) and np.abs(g - f).max() <= math.sqrt(tol):
            return new
        f, lam = g, new
    raise NoConvergence(max_iter, abs(new - lam))


def pressure(B, t_list, G=512, t_max=0.5, tol=1e-12, max_iter=100_000):
    t = np.asarray(sorted(t_list), dtype=float)
    if np.any(np.abs(t) > t_max + 1e-15):
        raise ValueError(f"|t| must not exceed {t_max}")
    lam = np.array([dominant_eigenvalue(discretize(B, G, ti), tol, max_iter) for ti in t])
    c = np.log(lam)
    second = np.full(len(t), np.nan)
    if len(t) >= 3:
        dt = np.diff(t)
        second[1:-1] = 2.0 * (dt[:-1] * c[2:] - (dt[:-1] + dt[1:]) * c[1:-1] + dt[1:] * c[:-2]) / (
            dt[:-1] * dt[1:] * (dt[:-1] + dt[1:]))
    h = float(np.nanmax(np.abs(second))) if len(t) >= 3 else 0.0
    c1 = None
    zero = np.flatnonzero(t == 0.0)
    if zero.size and 0 < zero[0] < len(t) - 1:
        z = zero[0]
        c1 = float((c[z + 1] - c[z - 1]) / (t[z + 1] - t[z - 1]))
    return PressureCurve(t, lam, c, second, h, c1, float(np.abs(t).max()))


def rate_function(curve, eps):
    """``max_{|t| <= t_max} (t eps - h t^2 / 2)``."""
    h = curve.h if isinstance(curve, PressureCurve) else float(curve)
    t_max = curve.t_max if isinstance(curve, PressureCurve) else math.inf
    if h <= 1e-12:
        raise DegenerateCurvature(f"h = {h:.3g}")
    eps = abs(eps)
    if eps / h <= t_max:
        return eps * eps / (2.0 * h)
    return t_max * eps - 0.5 * h * t_max * t_max


def _directions(dir_grid):
    theta = np.arange(dir_grid) * (math.pi / dir_grid)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def kappa_alpha_detail(B, n, alpha, dir_grid=64, samples=4000, seed=0, workers=None, exact=False):
    """``(value, std_err, argmax angle)`` for ``max_x E|B^(n) x|^{-2 alpha}`` over the grid.

    ``exact=True`` enumerates all ``k^n`` paths (small ``k^n`` only).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    vecs = _directions(dir_grid)
    if exact:
        if B.k ** n > 1 << 20:
            raise ValueError("too many paths for exact enumeration")
        paths = np.array(np.unravel_index(np.arange(B.k ** n), (B.k,) * n)).T.astype(np.int64)
        paths = np.ascontiguousarray(paths)
        weights = np.prod(B.probs[paths], axis=1)
        logs = _kernels.vector_log_norms(B.mats, paths, vecs)
        vals = np.exp(-2.0 * alpha * logs) @ weights
        j = int(np.argmax(vals))
        return float(vals[j]), 0.0, float(j * math.pi / dir_grid)
    chunks = map_path_chunks(
        lambda sym: _kernels.vector_log_norms(B.mats, sym, vecs), B.cdf, n, samples, seed,
        (_KEY_KAPPA, n), workers)
    x = np.exp(-2.0 * alpha * np.concatenate(chunks, axis=1))
    mean = x.mean(axis=1)
    se = x.std(axis=1, ddof=1) / math.sqrt(samples)
    j = int(np.argmax(mean))
    return float(mean[j]), float(se[j]), float(j * math.pi / dir_grid)


def kappa_alpha(B, n, alpha, dir_grid=64, samples=4000, seed=0, workers=None, exact=False):
    return kappa_alpha_detail(B, n, alpha, dir_grid, samples, seed, workers, exact)[0]


def holder_seminorm(f, alpha):
    """``max_i max_{p != q} |f(i,p) - f(i,q)| / d(p,q)^alpha`` over grid nodes."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    vals = f.values if isinstance(f, GridFunction) else np.atleast_2d(f)
    G = vals.shape[1]
    theta = np.arange(G) * (math.pi / G)
    d = np.abs(np.sin(theta[:, None] - theta[None, :]))
    np.fill_diagonal(d, 1.0)
    best = 0.0
    for row in vals:
        diff = np.abs(row[:, None] - row[None, :])
        np.fill_diagonal(diff, 0.0)
        best = max(best, float((diff / d ** alpha).max()))
    return best


def apply_power(Q, f, n):
    """``Q^n f`` for a grid function ``f`` of shape ``(k, G)``."""
    x = np.asarray(f.values if isinstance(f, GridFunction) else f, dtype=float).ravel()
    for _ in range(n):
        x = Q.matrix @ x
    return GridFunction(x.reshape(Q.k, Q.G), Q.grid)
