"""Hot inner loops, in two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version written as explicit
loops, and a pure-numpy version vectorized over samples.  Both use the same
elementwise arithmetic; per-path results are identical and sums over paths
agree to rounding.  The backend is picked once at import time from the environment
variable ``COCYCLELAB_NUMBA`` (``0``/``off``/``false`` selects numpy); it can
be switched afterwards with :func:`set_backend`.

Conventions
-----------
``mats`` is a C-contiguous float64 array of shape ``(k, 2, 2)``.
``symbols`` is an int64 array of shape ``(S, n)``; row ``s`` is one path
``x_0 ... x_{n-1}`` and the product is ``A[x_{n-1}] ... A[x_0]``.
"""

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

RENORM_PERIOD = 64
_FALSY = {"0", "off", "false", "no"}


def _numba_requested():
    return os.environ.get("COCYCLELAB_NUMBA", "1").strip().lower() not in _FALSY


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _np_top_singular(a, b, c, d):
    p = np.sqrt((a + d) ** 2 + (b - c) ** 2)
    q = np.sqrt((a - d) ** 2 + (b + c) ** 2)
    return 0.5 * (p + q)


def np_log_norm_products(mats, symbols):
    S, n = symbols.shape
    a = np.ones(S)
    b = np.zeros(S)
    c = np.zeros(S)
    d = np.ones(S)
    scale = np.zeros(S)
    logdet = np.zeros(S)
    ma, mb, mc, md = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    mlogdet = np.log(np.abs(ma * md - mb * mc))
    for t in range(n):
        j = symbols[:, t]
        xa, xb, xc, xd = ma[j], mb[j], mc[j], md[j]
        a, b, c, d = (xa * a + xb * c, xa * b + xb * d,
                      xc * a + xd * c, xc * b + xd * d)
        logdet += mlogdet[j]
        if (t + 1) % RENORM_PERIOD == 0:
            m = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
            a = a / m
            b = b / m
            c = c / m
            d = d / m
            scale += np.log(m)
    top = scale + np.log(_np_top_singular(a, b, c, d))
    return top, logdet


def np_vector_log_growth(mats, symbols, vecs):
    S, n = symbols.shape
    D = vecs.shape[0]
    x = np.repeat(vecs[:, 0:1], S, axis=1)
    y = np.repeat(vecs[:, 1:2], S, axis=1)
    acc = np.zeros((D, S))
    total = np.zeros((D, n))
    total_sq = np.zeros((D, n))
    ma, mb, mc, md = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    for t in range(n):
        j = symbols[:, t]
        nx = ma[j] * x + mb[j] * y
        ny = mc[j] * x + md[j] * y
        r = np.sqrt(nx * nx + ny * ny)
        x = nx / r
        y = ny / r
        acc += np.log(r)
        total[:, t] = acc.sum(axis=1)
        total_sq[:, t] = (acc * acc).sum(axis=1)
    return total, total_sq


def np_vector_log_norms(mats, symbols, vecs):
    S, n = symbols.shape
    x = np.repeat(vecs[:, 0:1], S, axis=1)
    y = np.repeat(vecs[:, 1:2], S, axis=1)
    acc = np.zeros((vecs.shape[0], S))
    ma, mb, mc, md = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    for t in range(n):
        j = symbols[:, t]
        nx = ma[j] * x + mb[j] * y
        ny = mc[j] * x + md[j] * y
        r = np.sqrt(nx * nx + ny * ny)
        x = nx / r
        y = ny / r
        acc += np.log(r)
    return acc


def np_cone_walk(mats, symbols, start, e_plus, e_minus, exit_radius, track_radius):
    S, n = symbols.shape
    x = np.full(S, start[0])
    y = np.full(S, start[1])
    first_exit = np.full(S, n + 1, dtype=np.int64)
    last_inside = np.full(S, -1, dtype=np.int64)
    ma, mb, mc, md = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    for t in range(n + 1):
        if t > 0:
            j = symbols[:, t - 1]
            nx = ma[j] * x + mb[j] * y
            ny = mc[j] * x + md[j] * y
            r = np.sqrt(nx * nx + ny * ny)
            x = nx / r
            y = ny / r
        dm = np.abs(x * e_minus[1] - y * e_minus[0])
        dp = np.abs(x * e_plus[1] - y * e_plus[0])
        outside = ~(dm < exit_radius * dp)
        first_exit = np.where(outside & (first_exit == n + 1), t, first_exit)
        inside = dm < track_radius * dp
        last_inside = np.where(inside, t, last_inside)
    return first_exit, last_inside


def np_sturm_counts(v, w2, energies):
    S, n = v.shape
    E = energies.shape[0]
    counts = np.zeros((S, E), dtype=np.int64)
    tiny = 1e-300
    d = v[:, 0:1] - energies[None, :]
    counts += d <= 0.0
    d = np.where(d == 0.0, -tiny, d)
    for i in range(1, n):
        d = (v[:, i:i + 1] - energies[None, :]) - w2[:, i - 1:i] / d
        counts += d <= 0.0
        d = np.where(d == 0.0, -tiny, d)
    return counts


def np_block_products(mats, symbols, starts, lengths):
    S = symbols.shape[0]
    nb = starts.shape[0]
    out = np.zeros((S, nb, 2, 2))
    logs = np.zeros((S, nb))
    ma, mb, mc, md = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]
    for q in range(nb):
        a = np.ones(S)
        b = np.zeros(S)
        c = np.zeros(S)
        d = np.ones(S)
        scale = np.zeros(S)
        for u in range(lengths[q]):
            j = symbols[:, starts[q] + u]
            xa, xb, xc, xd = ma[j], mb[j], mc[j], md[j]
            a, b, c, d = (xa * a + xb * c, xa * b + xb * d,
                          xc * a + xd * c, xc * b + xd * d)
            if (u + 1) % RENORM_PERIOD == 0:
                m = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
                a = a / m
                b = b / m
                c = c / m
                d = d / m
                scale += np.log(m)
        s1 = _np_top_singular(a, b, c, d)
        out[:, q, 0, 0] = a / s1
        out[:, q, 0, 1] = b / s1
        out[:, q, 1, 0] = c / s1
        out[:, q, 1, 1] = d / s1
        logs[:, q] = scale + np.log(s1)
    return out, logs


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if numba is not None:
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def _nb_top_singular(a, b, c, d):
        p = np.sqrt((a + d) ** 2 + (b - c) ** 2)
        q = np.sqrt((a - d) ** 2 + (b + c) ** 2)
        return 0.5 * (p + q)

    @njit
    def nb_log_norm_products(mats, symbols):
        S, n = symbols.shape
        top = np.empty(S)
        logdet = np.empty(S)
        k = mats.shape[0]
        mlogdet = np.empty(k)
        for j in range(k):
            mlogdet[j] = np.log(abs(mats[j, 0, 0] * mats[j, 1, 1] - mats[j, 0, 1] * mats[j, 1, 0]))
        for s in range(S):
            a = 1.0
            b = 0.0
            c = 0.0
            d = 1.0
            scale = 0.0
            ld = 0.0
            for t in range(n):
                j = symbols[s, t]
                xa = mats[j, 0, 0]
                xb = mats[j, 0, 1]
                xc = mats[j, 1, 0]
                xd = mats[j, 1, 1]
                a, b, c, d = (xa * a + xb * c, xa * b + xb * d,
                              xc * a + xd * c, xc * b + xd * d)
                ld += mlogdet[j]
                if (t + 1) % RENORM_PERIOD == 0:
                    m = max(max(abs(a), abs(b)), max(abs(c), abs(d)))
                    a = a / m
                    b = b / m
                    c = c / m
                    d = d / m
                    scale += np.log(m)
            top[s] = scale + np.log(_nb_top_singular(a, b, c, d))
            logdet[s] = ld
        return top, logdet

    @njit
    def nb_vector_log_growth(mats, symbols, vecs):
        S, n = symbols.shape
        D = vecs.shape[0]
        total = np.zeros((D, n))
        total_sq = np.zeros((D, n))
        for q in range(D):
            for s in range(S):
                x = vecs[q, 0]
                y = vecs[q, 1]
                acc = 0.0
                for t in range(n):
                    j = symbols[s, t]
                    nx = mats[j, 0, 0] * x + mats[j, 0, 1] * y
                    ny = mats[j, 1, 0] * x + mats[j, 1, 1] * y
                    r = np.sqrt(nx * nx + ny * ny)
                    x = nx / r
                    y = ny / r
                    acc += np.log(r)
                    total[q, t] += acc
                    total_sq[q, t] += acc * acc
        return total, total_sq

    @njit
    def nb_vector_log_norms(mats, symbols, vecs):
        # directions run in the inner loop; growth is multiplied up and only
        # logged before it can over- or underflow
        S, n = symbols.shape
        D = vecs.shape[0]
        out = np.zeros((D, S))
        x = np.empty(D)
        y = np.empty(D)
        acc = np.empty(D)
        prod = np.empty(D)
        for s in range(S):
            x[:] = vecs[:, 0]
            y[:] = vecs[:, 1]
            acc[:] = 0.0
            prod[:] = 1.0
            for t in range(n):
                j = symbols[s, t]
                a, b, c, d = mats[j, 0, 0], mats[j, 0, 1], mats[j, 1, 0], mats[j, 1, 1]
                for q in range(D):
                    nx = a * x[q] + b * y[q]
                    ny = c * x[q] + d * y[q]
                    r = np.sqrt(nx * nx + ny * ny)
                    x[q] = nx / r
                    y[q] = ny / r
                    prod[q] *= r
                for q in range(D):
                    if prod[q] > 1e100 or prod[q] < 1e-100:
                        acc[q] += np.log(prod[q])
                        prod[q] = 1.0
            for q in range(D):
                out[q, s] = acc[q] + np.log(prod[q])
        return out

    @njit
    def nb_cone_walk(mats, symbols, start, e_plus, e_minus, exit_radius, track_radius):
        S, n = symbols.shape
        first_exit = np.full(S, n + 1, dtype=np.int64)
        last_inside = np.full(S, -1, dtype=np.int64)
        for s in range(S):
            x = start[0]
            y = start[1]
            for t in range(n + 1):
                if t > 0:
                    j = symbols[s, t - 1]
                    nx = mats[j, 0, 0] * x + mats[j, 0, 1] * y
                    ny = mats[j, 1, 0] * x + mats[j, 1, 1] * y
                    r = np.sqrt(nx * nx + ny * ny)
                    x = nx / r
                    y = ny / r
                dm = abs(x * e_minus[1] - y * e_minus[0])
                dp = abs(x * e_plus[1] - y * e_plus[0])
                if not (dm < exit_radius * dp):
                    if first_exit[s] == n + 1:
                        first_exit[s] = t
                if dm < track_radius * dp:
                    last_inside[s] = t
        return first_exit, last_inside

    @njit
    def nb_sturm_counts(v, w2, energies):
        S, n = v.shape
        E = energies.shape[0]
        counts = np.zeros((S, E), dtype=np.int64)
        tiny = 1e-300
        d = np.empty(E)
        for s in range(S):
            for e in range(E):
                d[e] = v[s, 0] - energies[e]
                if d[e] <= 0.0:
                    counts[s, e] += 1
                if d[e] == 0.0:
                    d[e] = -tiny
            for i in range(1, n):
                vi = v[s, i]
                wi = w2[s, i - 1]
                for e in range(E):
                    de = (vi - energies[e]) - wi / d[e]
                    if de <= 0.0:
                        counts[s, e] += 1
                    if de == 0.0:
                        de = -tiny
                    d[e] = de
        return counts

    @njit
    def nb_block_products(mats, symbols, starts, lengths):
        S = symbols.shape[0]
        nb = starts.shape[0]
        out = np.zeros((S, nb, 2, 2))
        logs = np.zeros((S, nb))
        for s in range(S):
            for q in range(nb):
                a = 1.0
                b = 0.0
                c = 0.0
                d = 1.0
                scale = 0.0
                for u in range(lengths[q]):
                    j = symbols[s, starts[q] + u]
                    xa = mats[j, 0, 0]
                    xb = mats[j, 0, 1]
                    xc = mats[j, 1, 0]
                    xd = mats[j, 1, 1]
                    a, b, c, d = (xa * a + xb * c, xa * b + xb * d,
                                  xc * a + xd * c, xc * b + xd * d)
                    if (u + 1) % RENORM_PERIOD == 0:
                        m = max(max(abs(a), abs(b)), max(abs(c), abs(d)))
                        a = a / m
                        b = b / m
                        c = c / m
                        d = d / m
                        scale += np.log(m)
                s1 = _nb_top_singular(a, b, c, d)
                out[s, q, 0, 0] = a / s1
                out[s, q, 0, 1] = b / s1
                out[s, q, 1, 0] = c / s1
                out[s, q, 1, 1] = d / s1
                logs[s, q] = scale + np.log(s1)
        return out, logs


_NAMES = ("log_norm_products", "vector_log_growth", "vector_log_norms",
          "cone_walk", "sturm_counts", "block_products")

NUMPY = {name: globals()["np_" + name] for name in _NAMES}
NUMBA = {name: globals()["nb_" + name] for name in _NAMES} if numba is not None else None

_active = {}


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend name."""
    previous = backend()
    if name == "numba":
        if NUMBA is None:
            raise RuntimeError("numba is not installed")
        _active.update(NUMBA)
        _active["name"] = "numba"
    elif name == "numpy":
        _active.update(NUMPY)
        _active["name"] = "numpy"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def backend():
    return _active.get("name")


set_backend("numba" if (NUMBA is not None and _numba_requested()) else "numpy")


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def log_norm_products(mats, symbols):
    """Return ``(log s1, log|det|)`` of each path product."""
    return _active["log_norm_products"](_c(mats), _c(symbols, np.int64))


def vector_log_growth(mats, symbols, vecs):
    """Per direction and time, sums over paths of ``log|A^(t) v|`` and its square."""
    return _active["vector_log_growth"](_c(mats), _c(symbols, np.int64), _c(vecs))


def vector_log_norms(mats, symbols, vecs):
    """``log|A^(n) v|`` for every direction (rows) and path (columns)."""
    return _active["vector_log_norms"](_c(mats), _c(symbols, np.int64), _c(vecs))


def cone_walk(mats, symbols, start, e_plus, e_minus, exit_radius, track_radius):
    """First exit time from ``D_-(exit_radius)`` and last visit time to ``D_-(track_radius)``.

    Time 0 is the start point.  A path that never exits gets ``n + 1``; a
    path that never visits the tracked cone gets ``-1``.
    """
    return _active["cone_walk"](_c(mats), _c(symbols, np.int64), _c(start), _c(e_plus),
                                _c(e_minus), float(exit_radius), float(track_radius))


def sturm_counts(v, w2, energies):
    """Number of eigenvalues ``<= E`` of each tridiagonal sample at each energy."""
    return _active["sturm_counts"](_c(v), _c(w2), _c(energies))


def block_products(mats, symbols, starts, lengths):
    """Unit-norm block products and their log-norms."""
    return _active["block_products"](_c(mats), _c(symbols, np.int64),
                                     _c(starts, np.int64), _c(lengths, np.int64))
