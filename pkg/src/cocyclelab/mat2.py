"""2x2 real matrices and the projective line.

Matrices are plain ``numpy`` arrays of shape ``(2, 2)``.  Projective points
are stored as an angle in ``[0, pi)``, which makes equality and the sine
metric branch-free.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSingularValues, SingularMatrix

DET_FLOOR = 1e-300
GAP_TOL = 1e-12
_HALF_PI = 0.5 * math.pi


def as_mat2(g):
    g = np.asarray(g, dtype=float)
    if g.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("matrix entries must be finite")
    return g


def det(g):
    return g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]


def singular_values(g):
    """Closed-form ``(s1, s2)`` with ``s1 >= s2 >= 0``."""
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    p = math.hypot(a + d, b - c)
    q = math.hypot(a - d, b + c)
    return 0.5 * (p + q), 0.5 * abs(p - q)


def op_norm(g):
    """Largest singular value of ``g``."""
    return singular_values(g)[0]


def _check_invertible(g, floor):
    dt = det(g)
    if not abs(dt) >= floor:
        raise SingularMatrix(f"|det| = {abs(dt):.3e} below floor {floor:.1e}")
    return dt


def inverse(g, floor=DET_FLOOR):
    dt = _check_invertible(g, floor)
    return np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / dt


def sl2_normalize(g, floor=DET_FLOOR):
    """Rescale ``g`` to unit absolute determinant."""
    dt = _check_invertible(g, floor)
    return g / math.sqrt(abs(dt))


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ProjPoint:
    """The line through ``(cos theta, sin theta)``."""

    theta: float

    def __post_init__(self):
        t = math.fmod(float(self.theta), math.pi)
        if t < 0.0:
            t += math.pi
        if t >= math.pi:
            t = 0.0
        object.__setattr__(self, "theta", t)

    @classmethod
    def from_vector(cls, v):
        return cls(math.atan2(v[1], v[0]))

    @property
    def vector(self):
        if self.theta == _HALF_PI:
            return np.array([0.0, 1.0])  # cos(pi/2) is 6e-17 in floating point
        return np.array([math.cos(self.theta), math.sin(self.theta)])


@dataclass(frozen=True)
class SingularFrame:
    v_plus: ProjPoint
    v_minus: ProjPoint
    s1: float
    s2: float
    u_plus: ProjPoint  # image direction of v_plus, the most expanding direction of g^T


def proj_apply(g, p, floor=DET_FLOOR):
    _check_invertible(g, floor)
    c, s = p.vector
    return ProjPoint(math.atan2(g[1, 0] * c + g[1, 1] * s, g[0, 0] * c + g[0, 1] * s))


def proj_distance(p, q):
    return abs(math.sin(p.theta - q.theta))


def singular_frame(g):
    s1, s2 = singular_values(g)
    if s1 - s2 <= GAP_TOL * max(s1, 1.0):
        raise DegenerateSingularValues("singular values coincide; directions undefined")
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    # principal axis of g^T g
    phi = 0.5 * math.atan2(2.0 * (a * b + c * d), a * a + c * c - b * b - d * d)
    v_plus = ProjPoint(phi)
    v_minus = ProjPoint(phi + 0.5 * math.pi)
    return SingularFrame(v_plus, v_minus, s1, s2, proj_apply(g, v_plus, floor=0.0))


def eigen_directions(g):
    """Eigenvalues and eigen-lines of ``g`` when they are real and distinct.

    Returns ``(lam_big, lam_small, e_big, e_small)`` ordered by modulus, or
    ``None`` when the eigenvalues are complex or coincide.
    """
    tr = g[0, 0] + g[1, 1]
    dt = det(g)
    disc = tr * tr - 4.0 * dt
    if not disc > 0.0:
        return None
    r = math.sqrt(disc)
    # stable quadratic roots
    big = 0.5 * (tr + math.copysign(r, tr)) if tr != 0.0 else 0.5 * r
    small = dt / big
    if abs(small) > abs(big):
        big, small = small, big
    if abs(abs(big) - abs(small)) <= GAP_TOL * abs(big):
        return None
    return big, small, _eigvec(g, big), _eigvec(g, small)


def _eigvec(g, lam):
    a, b, c, d = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    v1 = (b, lam - a)
    v2 = (lam - d, c)
    v = v1 if math.hypot(*v1) >= math.hypot(*v2) else v2
    return ProjPoint(math.atan2(v[1], v[0]))
