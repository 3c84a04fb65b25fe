"""Locally constant random cocycles over a Bernoulli shift.

A cocycle is a tuple of invertible 2x2 matrices ``A_0 .. A_{k-1}`` with a
probability vector.  Symbol paths are int64 arrays; the shift acts by
re-indexing, and the n-step product is ``A[x_{n-1}] ... A[x_0]``.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._parallel import derive_rng, draw_symbols
from .errors import (DimensionMismatch, NotDiagonalizable, NotInvariant, Overflow,
                     SingularMatrix)
from .mat2 import (DET_FLOOR, ProjPoint, det, eigen_directions, inverse, op_norm,
                   proj_apply, proj_distance)

PROB_TOL = 1e-12
DEFAULT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Cocycle:
    mats: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        mats = np.array(self.mats, dtype=float).reshape(-1, 2, 2)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if mats.shape[0] < 1 or mats.shape[0] != probs.shape[0]:
            raise DimensionMismatch(f"{mats.shape[0]} matrices but {probs.shape[0]} probabilities")
        if not np.all(np.isfinite(mats)):
            raise ValueError("matrix entries must be finite")
        if np.any(probs <= 0.0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise ValueError("probabilities must be positive and sum to 1")
        dets = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
        bad = np.flatnonzero(~(np.abs(dets) >= DET_FLOOR))
        if bad.size:
            raise SingularMatrix(f"matrix {bad[0]} is singular")
        mats.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "mats", mats)
        object.__setattr__(self, "probs", probs)

    @property
    def k(self):
        return self.mats.shape[0]

    @property
    def cdf(self):
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c

    def norm_bound(self):
        """``max_j max(|A_j|, |A_j^{-1}|)``."""
        return max(max(op_norm(g), op_norm(inverse(g))) for g in self.mats)

    def is_sl2(self, tol=1e-12):
        return all(abs(abs(det(g)) - 1.0) <= tol for g in self.mats)

    def to_dict(self):
        return {"probs": self.probs.tolist(), "mats": self.mats.reshape(-1, 4).tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["mats"], dtype=float).reshape(-1, 2, 2), data["probs"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class DiagForm:
    conj: np.ndarray
    thetas: np.ndarray
    residual: float
    anchor: int


def diagonal_cocycle(thetas, probs):
    """``(diag(t, 1/t))_j``."""
    return Cocycle(np.array([np.diag([t, 1.0 / t]) for t in thetas]), probs)


def cocycle_distance(A, B):
    if A.k != B.k:
        raise DimensionMismatch(f"k = {A.k} vs {B.k}")
    return max(op_norm(a - b) for a, b in zip(A.mats, B.mats))


def sample_path(k, probs, n, rng_seed, stream=0):
    probs = np.asarray(probs, dtype=float)
    if len(probs) != k:
        raise DimensionMismatch(f"{len(probs)} probabilities for {k} symbols")
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return draw_symbols(derive_rng(rng_seed, stream), cdf, (n,))


def sample_paths(A, n, samples, rng):
    """``samples`` i.i.d. paths of length ``n`` as a ``(samples, n)`` array."""
    return draw_symbols(rng, A.cdf, (samples, n))


def iterate_product(A, path):
    out = np.eye(2)
    for j in path:
        with np.errstate(over="ignore", invalid="ignore"):
            out = A.mats[j] @ out
        if not np.all(np.abs(out) <= 1e300):
            raise Overflow("product overflows; use log_norm_product")
    return out


def log_norm_product(A, path):
    path = np.asarray(path, dtype=np.int64).reshape(1, -1)
    top, _ = _kernels.log_norm_products(A.mats, path)
    return float(top[0])


def inverse_cocycle(A):
    return Cocycle(np.array([inverse(g) for g in A.mats]), A.probs)


def _reconstruct(p, pinv, g):
    conj = pinv @ g @ p
    theta = conj[0, 0]
    other = det(g) / theta
    recon = p @ np.diag([theta, other]) @ pinv
    return theta, op_norm(g - recon)


def simultaneous_diagonalize(A, tol=DEFAULT_TOL):
    """Common eigenbasis anchored on a hyperbolic member.

    Anchors are tried by decreasing ``|tr| - 2`` of the unit-determinant
    rescaling; the first with residual ``<= tol`` wins.
    """
    anchors = []
    for i, g in enumerate(A.mats):
        if eigen_directions(g) is not None:
            anchors.append((abs(g[0, 0] + g[1, 1]) / math.sqrt(abs(det(g))) - 2.0, i))
    anchors.sort(key=lambda t: (-t[0], t[1]))
    if not anchors:
        scalar = all(abs(g[0, 1]) + abs(g[1, 0]) + abs(g[0, 0] - g[1, 1]) == 0.0 for g in A.mats)
        if scalar:
            return DiagForm(np.eye(2), A.mats[:, 0, 0].copy(), 0.0, -1)
        raise NotDiagonalizable(math.inf)
    best = math.inf
    for _, i in anchors:
        _, _, e_big, e_small = eigen_directions(A.mats[i])
        p = np.column_stack([e_big.vector, e_small.vector])
        pinv = inverse(p)
        thetas = np.empty(A.k)
        residual = 0.0
        for j, g in enumerate(A.mats):
            thetas[j], r = _reconstruct(p, pinv, g)
            residual = max(residual, r)
        if residual <= tol:
            return DiagForm(p, thetas, residual, i)
        best = min(best, residual)
    raise NotDiagonalizable(best)


def invariant_line_le(A, line, tol=DEFAULT_TOL):
    """Exponent of the cocycle restricted to an invariant line."""
    v = line.vector
    total = 0.0
    worst = 0.0
    for g, pj in zip(A.mats, A.probs):
        worst = max(worst, proj_distance(proj_apply(g, line), line))
        total += pj * math.log(abs(v @ g @ v))
    if worst > tol:
        raise NotInvariant(worst)
    return total


def invariant_lines(A, tol=DEFAULT_TOL):
    """Lines fixed by every member, found among member eigen-lines."""
    candidates = []
    for g in A.mats:
        e = eigen_directions(g)
        if e is not None:
            candidates.extend(e[2:])
    if not candidates:
        return []
    out = []
    for c in candidates:
        if all(proj_distance(proj_apply(g, c), c) <= tol for g in A.mats):
            if all(proj_distance(c, o) > tol for o in out):
                out.append(c)
    return out


def quasi_irreducible_proxy(A, le_estimate, std_err, tol=DEFAULT_TOL):
    """True unless some invariant line carries an exponent below ``L - 3 sigma``."""
    for line in invariant_lines(A, tol):
        if invariant_line_le(A, line, tol) < le_estimate - 3.0 * std_err:
            return False
    return True


def rotation_perturbed(A, eta, index=0):
    """Copy of ``A`` with member ``index`` replaced by ``R(eta) A_index``."""
    from .mat2 import rotation
    mats = np.array(A.mats)
    mats[index] = rotation(eta) @ mats[index]
    return Cocycle(mats, A.probs)


def entry_perturbed(A, eta, index=0, entry=(1, 0)):
    """Copy of ``A`` with ``eta`` added to one entry of member ``index``."""
    mats = np.array(A.mats)
    mats[index][entry] += eta
    return Cocycle(mats, A.probs)
