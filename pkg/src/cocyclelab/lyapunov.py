"""Lyapunov exponents, finite-scale estimates and large-deviation tails."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._parallel import map_path_chunks
from .errors import ZeroEigenvalue
from .mat2 import op_norm, sl2_normalize

# Streams used by the estimators below; distinct keys keep runs independent.
_KEY_LE = 1
_KEY_TAIL = 2
_KEY_REF = 3


@dataclass(frozen=True)
class LyapEstimate:
    scale_n: int
    mean: float
    std_err: float
    samples: int
    top_bottom: tuple
    bottom_std_err: float = 0.0


@dataclass
class LdtCurve:
    rows: list
    a: float = None
    b: float = None
    c: float = None
    fit_status: str = "degenerate"
    reference_L: dict = field(default_factory=dict)

    COLUMNS = ("n", "epsilon", "tail_prob", "std_err", "hoeffding_bound", "samples", "seed")

    def table(self):
        return [[row[c] for c in self.COLUMNS] for row in self.rows]


def closed_form_diag_le(thetas, probs):
    """``|sum_j p_j log|theta_j||`` for a diagonal cocycle."""
    thetas = np.asarray(thetas, dtype=float)
    if np.any(thetas == 0.0):
        raise ZeroEigenvalue("theta must be nonzero")
    return abs(float(np.dot(probs, np.log(np.abs(thetas)))))


def path_log_norms(A, n, samples, seed, key=(_KEY_LE,), workers=None):
    """``log|A^(n)|`` and ``log|det A^(n)|`` over i.i.d. paths."""
    chunks = map_path_chunks(lambda sym: _kernels.log_norm_products(A.mats, sym),
                             A.cdf, n, samples, seed, key, workers)
    top = np.concatenate([c[0] for c in chunks])
    logdet = np.concatenate([c[1] for c in chunks])
    return top, logdet


def mc_le(A, n, samples, seed, workers=None, key=(_KEY_LE,)):
    """Monte-Carlo finite-scale exponents ``L+`` and ``L-`` at scale ``n``."""
    if n < 1 or samples < 2:
        raise ValueError("need n >= 1 and samples >= 2")
    top, logdet = path_log_norms(A, n, samples, seed, key, workers)
    up = top / n
    down = (logdet - top) / n
    se_up = float(up.std(ddof=1) / math.sqrt(samples))
    se_down = float(down.std(ddof=1) / math.sqrt(samples))
    mean = float(up.mean())
    return LyapEstimate(n, mean, se_up, samples, (mean, float(down.mean())), se_down)


def ldt_tail(A, n, epsilon, reference_L=None, samples=10000, seed=0, workers=None):
    """Empirical ``P[|(1/n) log|A^(n)| - L| > eps]`` and its binomial std error.

    Without ``reference_L`` the finite-scale exponent at the same ``n`` is
    estimated from an independent stream.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if reference_L is None:
        reference_L = mc_le(A, n, samples, seed, workers, key=(_KEY_REF, n)).mean
    top, _ = path_log_norms(A, n, samples, seed, (_KEY_TAIL, n), workers)
    hits = np.count_nonzero(np.abs(top / n - reference_L) > epsilon)
    prob = hits / samples
    return prob, math.sqrt(prob * (1.0 - prob) / samples)


def hoeffding_bound(K, epsilon, n):
    return math.exp(-epsilon * epsilon * n / (2.0 * K * K))


def log_norm_bound(A):
    """Almost-sure bound ``K`` on ``|log|A_j||`` and ``|log|A_j^{-1}||``."""
    return math.log(A.norm_bound())


def _eps_for(eps_rule, n):
    if isinstance(eps_rule, (tuple, list)):
        kind, value = eps_rule
        if kind != "power":
            raise ValueError(f"unknown eps rule {kind!r}")
        return float(n) ** (-float(value))
    return float(eps_rule)


def ldt_curve(A, n_list, eps_rule, samples, seed, reference="asymptotic",
              reference_n=None, workers=None, K=None):
    """Tail probabilities across scales plus decay fits.

    ``eps_rule`` is a fixed epsilon or ``("power", a)`` for ``eps = n^-a``.
    ``reference="asymptotic"`` centres every row at one high-``n`` estimate;
    ``"finite"`` uses the finite-scale exponent at each row's ``n``.
    Fits use rows with ``10/samples <= tail <= 0.5``: ``c`` is the slope of
    ``-log tail`` against ``n`` and ``b`` the slope of ``log(-log tail)``
    against ``log n``.
    """
    n_list = [int(n) for n in n_list]
    if K is None:
        K = log_norm_bound(A)
    ref_info = {"mode": reference}
    if reference == "asymptotic":
        reference_n = reference_n or 4 * max(n_list)
        est = mc_le(A, reference_n, samples, seed, workers, key=(_KEY_REF, 0))
        ref_info.update(n=reference_n, L=est.mean, std_err=est.std_err)
    elif reference != "finite":
        raise ValueError(f"unknown reference mode {reference!r}")
    rows = []
    for n in n_list:
        eps = _eps_for(eps_rule, n)
        ref = ref_info["L"] if reference == "asymptotic" else None
        prob, se = ldt_tail(A, n, eps, ref, samples, seed, workers)
        rows.append({"n": n, "epsilon": eps, "tail_prob": prob, "std_err": se,
                     "hoeffding_bound": hoeffding_bound(K, eps, n) if K > 0 else 0.0,
                     "samples": samples, "seed": seed})
    curve = LdtCurve(rows, reference_L=ref_info)
    if isinstance(eps_rule, (tuple, list)):
        curve.a = float(eps_rule[1])
    fit = [r for r in rows if 10.0 / samples <= r["tail_prob"] <= 0.5]
    if len(fit) >= 2 and len({r["n"] for r in fit}) >= 2:
        ns = np.array([r["n"] for r in fit], dtype=float)
        tails = np.array([r["tail_prob"] for r in fit])
        curve.c = float(np.polyfit(ns, -np.log(tails), 1)[0])
        curve.b = float(np.polyfit(np.log(ns), np.log(-np.log(tails)), 1)[0])
        curve.fit_status = "ok"
    return curve


def sl_reduction_split(A, path):
    """``(log|A^(n)|, log|A_*^(n)|, (1/2) sum log|det A_{x_i}|)`` along ``path``."""
    path = np.asarray(path, dtype=np.int64).reshape(1, -1)
    total, logdet = _kernels.log_norm_products(A.mats, path)
    star = np.array([sl2_normalize(g) for g in A.mats])
    sl2, _ = _kernels.log_norm_products(star, path)
    return float(total[0]), float(sl2[0]), 0.5 * float(logdet[0])


def finite_scale_doublings(A, n_start, doublings, samples, seed, workers=None):
    """``L^(n)`` along ``n_start * 2^i``; returns a list of LyapEstimate."""
    return [mc_le(A, n_start * 2 ** i, samples, seed, workers, key=(_KEY_LE, i))
            for i in range(doublings + 1)]


def max_norm(A):
    return max(op_norm(g) for g in A.mats)
