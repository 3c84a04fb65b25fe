"""The Avalanche Principle for chains of 2x2 matrices.

For a chain ``g_0, ..., g_{n-1}`` whose members have large norms (gap) and
whose consecutive pairs do not cancel (angle), the log-norm of the product
is well approximated by

    -sum_{i=1}^{n-2} log|g_i| + sum_{i=1}^{n-1} log|g_i g_{i-1}|.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from ._parallel import map_path_chunks
from .errors import ChainTooShort
from .lyapunov import mc_le

RESIDUAL_CONSTANT = 10.0
DEFAULT_TAIL_EPS = 0.05
_KEY_BRIDGE = 31
_KEY_BRIDGE_LE = 32


@dataclass
class ApReport:
    n: int
    eps: float
    kappa_inv: float
    ap_value: float
    exact_value: float
    residual: float
    conditions_ok: list = None

    @property
    def bound(self):
        """Calibrated residual bound ``10 n kappa^2 / eps^2`` at the measured ``eps, kappa``."""
        if self.eps <= 0.0:
            return math.inf
        return RESIDUAL_CONSTANT * self.n / (self.kappa_inv * self.eps) ** 2

    def to_dict(self):
        return asdict(self)


def _as_chain(gs):
    gs = np.asarray(gs, dtype=float).reshape(-1, 2, 2)
    if gs.shape[0] < 3:
        raise ChainTooShort(f"chain of length {gs.shape[0]}; need at least 3")
    return gs


def _norms(gs):
    a, b, c, d = gs[:, 0, 0], gs[:, 0, 1], gs[:, 1, 0], gs[:, 1, 1]
    return 0.5 * (np.hypot(a + d, b - c) + np.hypot(a - d, b + c))


def _log_pair_norms(gs):
    """``log|g_i g_{i-1}|`` for ``i = 1..n-1``, rescaled to stay finite."""
    s = _norms(gs)
    unit = gs / s[:, None, None]
    pairs = np.einsum("nij,njk->nik", unit[1:], unit[:-1])
    return np.log(_norms(pairs)) + np.log(s[1:]) + np.log(s[:-1])


def ap_conditions(gs, eps, kappa):
    """Per-index ``(gap, angle)`` booleans.

    ``gap[i]`` is ``|g_i| >= 1/kappa`` for ``i = 0..n-1``; ``angle[i-1]`` is
    ``|g_i g_{i-1}| >= eps |g_i| |g_{i-1}|`` for ``i = 1..n-1``.
    """
    gs = _as_chain(gs)
    log_s = np.log(_norms(gs))
    gap = log_s >= -math.log(kappa)
    ratio = _log_pair_norms(gs) - log_s[1:] - log_s[:-1]
    angle = ratio >= math.log(eps)
    return gap, angle


def exact_log_norm(gs):
    """``log|g_{n-1} ... g_0|`` with per-step renormalization."""
    prod = np.eye(2)
    scale = []
    for g in gs:
        prod = g @ prod
        m = np.abs(prod).max()
        prod /= m
        scale.append(math.log(m))
    return math.fsum(scale) + math.log(_norms(prod[None])[0])


def ap_value(gs):
    gs = _as_chain(gs)
    log_s = np.log(_norms(gs))
    return math.fsum(_log_pair_norms(gs)) - math.fsum(log_s[1:-1])


def ap_estimate(gs, eps=None, kappa=None):
    """AP value, exact log-norm, residual and the measured ``eps``, ``1/kappa``.

    When ``eps`` and ``kappa`` are given the per-index conditions are
    evaluated against them; the residual is reported either way.
    """
    gs = _as_chain(gs)
    log_s = np.log(_norms(gs))
    ratios = _log_pair_norms(gs) - log_s[1:] - log_s[:-1]
    ap = ap_value(gs)
    exact = exact_log_norm(gs)
    ok = None
    if eps is not None and kappa is not None:
        gap, angle = ap_conditions(gs, eps, kappa)
        ok = [bool(gap[0])] + [bool(gap[i] and angle[i - 1]) for i in range(1, len(gs))]
    return ApReport(len(gs), float(np.exp(ratios.min())), float(np.exp(log_s.min())), ap, exact,
                    abs(exact - ap), ok)


def block_layout(n0, n_target):
    """Block starts and lengths for ``n_target = (n - 1) n0 + m0`` with ``n0 <= m0 < 2 n0``."""
    if n0 < 1 or n_target < 3 * n0:
        raise ChainTooShort(f"n_target = {n_target} < 3 n0 = {3 * n0}")
    nb = n_target // n0
    lengths = np.full(nb, n0, dtype=np.int64)
    lengths[-1] = n_target - (nb - 1) * n0
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
    return starts, lengths


def _ap_from_blocks(unit, logs):
    """AP value per path from unit-norm blocks ``(S, nb, 2, 2)`` and their log-norms."""
    pairs = np.einsum("snij,snjk->snik", unit[:, 1:], unit[:, :-1])
    a, b, c, d = pairs[..., 0, 0], pairs[..., 0, 1], pairs[..., 1, 0], pairs[..., 1, 1]
    log_ratio = np.log(0.5 * (np.hypot(a + d, b - c) + np.hypot(a - d, b + c)))
    pair_logs = log_ratio + logs[:, 1:] + logs[:, :-1]
    return pair_logs.sum(axis=1) - logs[:, 1:-1].sum(axis=1), log_ratio


def bridging_experiment(B, n0, n_target, samples, seed, workers=None, tail_eps=None,
                        reference_L=None, c=None):
    """AP-composed versus direct log-norms at scale ``n_target``.

    Block thresholds follow the bridging argument: ``c = L^(n0)/4``,
    ``1/kappa = e^{c n0}`` and ``eps = e^{-8 n0^{4/5}}``.  The LDT tail uses
    ``tail_eps`` (default 0.05) around ``reference_L``
    (default: Monte-Carlo exponent at ``n_target`` on an independent stream).
    """
    starts, lengths = block_layout(n0, n_target)
    if c is None:
        c = mc_le(B, n0, max(samples // 4, 200), seed, workers, key=(_KEY_BRIDGE_LE, n0)).mean / 4.0
    log_gap = c * n0
    log_eps = -8.0 * n0 ** 0.8
    if tail_eps is None:
        tail_eps = DEFAULT_TAIL_EPS
    if reference_L is None:
        reference_L = mc_le(B, n_target, samples, seed, workers,
                            key=(_KEY_BRIDGE_LE, n_target)).mean

    def run(sym):
        unit, logs = _kernels.block_products(B.mats, sym, starts, lengths)
        ap, log_ratio = _ap_from_blocks(unit, logs)
        direct, _ = _kernels.log_norm_products(B.mats, sym)
        ok = np.all(logs >= log_gap, axis=1) & np.all(log_ratio >= log_eps, axis=1)
        return ap, direct, ok

    chunks = map_path_chunks(run, B.cdf, n_target, samples, seed, (_KEY_BRIDGE, n0, n_target),
                             workers)
    ap = np.concatenate([ch[0] for ch in chunks])
    direct = np.concatenate([ch[1] for ch in chunks])
    ok = np.concatenate([ch[2] for ch in chunks])
    diff = np.abs(ap - direct)
    return {
        "n_target": n_target, "n0": n0, "blocks": len(lengths), "m0": int(lengths[-1]),
        "cond_fail_fraction": float(1.0 - ok.mean()),
        "ap_vs_direct_max_abs_diff": float(diff.max()),
        "within_n34_fraction": float(np.mean(diff <= n_target ** 0.75)),
        "tail_prob_ap": float(np.mean(np.abs(ap / n_target - reference_L) > tail_eps)),
        "tail_prob_direct": float(np.mean(np.abs(direct / n_target - reference_L) > tail_eps)),
        "tail_eps": tail_eps, "reference_L": reference_L, "c": c, "samples": samples,
        "seed": seed,
    }
