"""Numba kernels behind :mod:`compound_oracle.exactcore` and the two-valued engine.

All kernels are pure and release the GIL, so callers may fan them out over
threads without changing results.
"""

import math

import numba as nb
import numpy as np

EPS = np.finfo(np.float64).eps
_BIG = 2.0**100


@nb.njit(cache=True, nogil=True)
def _lse_round(x):
    m = x[0]
    for v in x:
        if v > m:
            m = v
    s = 0.0
    for v in x:
        s += math.exp(v - m)
    return math.floor(m + math.log(s) + 0.5)


@nb.njit(cache=True, nogil=True)
def balance(L):
    """Shift rows and columns by integers until every log row/column sum is within 1/2 of 0.

    Returns the balanced copy and the total shift. A near doubly stochastic
    matrix has a permanent within ``e^n`` of ``n!/n^n``, which bounds the
    cancellation in Ryser's signed sum. Integer shifts keep the step exact
    for dyadic inputs.
    """
    n = L.shape[0]
    B = L.copy()
    total = 0.0
    for _ in range(8 * n + 32):
        moved = False
        for i in range(n):
            r = _lse_round(B[i])
            if r != 0.0:
                moved = True
                total += r
                for j in range(n):
                    B[i, j] -= r
        for j in range(n):
            c = _lse_round(B[:, j].copy())
            if c != 0.0:
                moved = True
                total += c
                for i in range(n):
                    B[i, j] -= c
        if not moved:
            break
    return B, total


@nb.njit(cache=True, nogil=True)
def assignment_scale(L):
    """Shift rows and columns by the dual potentials of the max-weight assignment.

    After the shift every entry is ``<= 0`` and the optimal matching sits on
    zeros, so the scaled permanent is at least 1. This is what keeps Ryser
    accurate when one matching dominates (likelihoods of well separated
    parameters). Returns the shifted copy and the total shift, which equals
    the weight of the optimal matching.
    """
    n = L.shape[0]
    # Hungarian method with potentials on the cost -L (1-based, column 0 is a sentinel)
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = np.inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = -L[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    B = np.empty((n, n))
    total = 0.0
    for i in range(n):
        total -= u[i + 1]
        for j in range(n):
            B[i, j] = L[i, j] + u[i + 1] + v[j + 1]
    for j in range(n):
        total -= v[j + 1]
    return B, total


@nb.njit(cache=True, nogil=True)
def ryser_log(L):
    """Return ``(log|perm(exp(L))|, sign)`` for a square float64 matrix.

    The matrix is first scaled by the optimal assignment and balanced (see
    :func:`assignment_scale` and :func:`balance`), then rows are shifted
    by their max before exponentiation; subsets are walked in Gray-code order
    so each step adds or removes one column from the running row sums, and
    the signed terms go through Neumaier summation.
    """
    n = L.shape[0]
    if n == 0:
        return 0.0, 1
    L, shift = assignment_scale(L)
    L, extra = balance(L)
    shift += extra
    cols = np.empty((n, n))  # cols[j, i] = A[i, j]
    for i in range(n):
        r = L[i, 0]
        for j in range(1, n):
            if L[i, j] > r:
                r = L[i, j]
        shift += r
        for j in range(n):
            cols[j, i] = math.exp(L[i, j] - r)
    rowsum = np.zeros(n)
    total = 0.0
    comp = 0.0
    for g in range(1, 1 << n):
        j = 0
        while not (g >> j) & 1:
            j += 1
        if ((g ^ (g >> 1)) >> j) & 1:
            for i in range(n):
                rowsum[i] += cols[j, i]
        else:
            for i in range(n):
                rowsum[i] -= cols[j, i]
        p = 1.0
        for i in range(n):
            p *= rowsum[i]
        if g & 1:
            p = -p
        t = total + p
        if abs(total) >= abs(p):
            comp += (total - t) + p
        else:
            comp += (p - t) + total
        total = t
    total += comp
    if n & 1:
        total = -total
    if total > 0.0:
        return math.log(total) + shift, 1
    if total < 0.0:
        return math.log(-total) + shift, -1
    return -np.inf, 0


@nb.njit(cache=True, nogil=True)
def minors_rows(L, rows, out_log, out_sign):
    """Fill rows ``rows`` of the permanental-minor table of ``L``."""
    n = L.shape[0]
    sub = np.empty((n - 1, n - 1))
    for i in rows:
        for j in range(n):
            a = 0
            for r in range(n):
                if r == i:
                    continue
                b = 0
                for c in range(n):
                    if c == j:
                        continue
                    sub[a, b] = L[r, c]
                    b += 1
                a += 1
            la, s = ryser_log(sub)
            out_log[i, j] = la
            out_sign[i, j] = s


@nb.njit(cache=True, nogil=True)
def esp_log_direct(lr, kmax):
    """Log-space ESP recurrence ``e_k <- e_k + rho_m e_{k-1}`` via log-add-exp."""
    n = lr.shape[0]
    out = np.full(kmax + 1, -np.inf)
    out[0] = 0.0
    for m in range(n):
        r = lr[m]
        top = m + 1 if m + 1 < kmax else kmax
        for k in range(top, 0, -1):
            a = out[k]
            b = out[k - 1] + r
            if a == -np.inf:
                out[k] = b
            elif a > b:
                out[k] = a + math.log1p(math.exp(b - a))
            else:
                out[k] = b + math.log1p(math.exp(a - b))
    return out


@nb.njit(cache=True, nogil=True)
def esp_ext(lrc, kmax):
    """Same recurrence in extended-range linear arithmetic.

    Entry ``k`` is ``ldexp(v[k], E[k])`` with integer ``E[k]``; mantissas are
    renormalised by exact powers of two once they pass ``2**100``, so the
    only rounding is in the recurrence itself. Requires ``|lrc| <= 250``
    (the caller centres the logs) to keep every product in range.
    """
    n = lrc.shape[0]
    E = np.zeros(kmax + 1, dtype=np.int64)
    v = np.zeros(kmax + 1)
    c = np.ones(kmax + 1)  # c[k] = 2**(E[k-1] - E[k])
    v[0] = 1.0
    for m in range(n):
        rho = math.exp(lrc[m])
        top = m + 1
        if top <= kmax:
            # new highest entry: e_{m+1} = rho_m * e_m
            x = v[top - 1] * rho
            fm, fe = math.frexp(x)
            v[top] = fm
            E[top] = E[top - 1] + fe
            c[top] = math.ldexp(1.0, -fe)
            hi = top - 1
        else:
            hi = kmax
        for k in range(hi, 0, -1):
            x = v[k] + rho * c[k] * v[k - 1]
            if x > _BIG:
                fm, fe = math.frexp(x)
                v[k] = fm
                E[k] += fe
                c[k] = math.ldexp(1.0, E[k - 1] - E[k])
                if k + 1 <= kmax and k + 1 <= top:
                    c[k + 1] = math.ldexp(1.0, E[k] - E[k + 1])
            else:
                v[k] = x
    return E, v


_LN2 = math.log(2.0)


@nb.njit(cache=True, nogil=True)
def ext_to_log(E, v, n):
    out = np.empty(E.shape[0])
    for k in range(E.shape[0]):
        out[k] = -np.inf if k > n else E[k] * _LN2 + math.log(v[k])
    return out


@nb.njit(cache=True, nogil=True)
def ext_ratios(E, v):
    """``q[k] = e_{k-1} / e_k`` with relative error ``qerr[k]``."""
    n = E.shape[0] - 1
    q = np.zeros(n + 1)
    qerr = np.zeros(n + 1)
    for k in range(1, n + 1):
        q[k] = math.ldexp(v[k - 1] / v[k], E[k - 1] - E[k])
        qerr[k] = 2.0 * EPS
    return q, qerr


@nb.njit(cache=True, nogil=True)
def log_ratios(le):
    """``log(e_{k-1} / e_k)`` with absolute error ``qerr[k]`` (so relative error of the ratio)."""
    n = le.shape[0] - 1
    lq = np.zeros(n + 1)
    qerr = np.zeros(n + 1)
    for k in range(1, n + 1):
        lq[k] = le[k - 1] - le[k]
        qerr[k] = EPS * (2.0 + abs(le[k - 1]) + abs(le[k]))
    return lq, qerr


@nb.njit(cache=True, nogil=True, inline="always")
def _rho_q(lrc_i, rho_i, qk, logq):
    # rho_i * q_k and the relative rounding error of forming it
    if logq:
        a = lrc_i + qk
        return math.exp(a), EPS * (1.0 + abs(a))
    return rho_i * qk, EPS


@nb.njit(cache=True, nogil=True, error_model="numpy")
def inclusion_probs(lrc, q, qerr, K, tol, logq):
    """Leave-one-out inclusion probabilities ``rho_i e_{K-1}(rho_-i) / e_K(rho)``.

    ``q[k] = e_{k-1}(rho) / e_k(rho)`` (k = 1..n, relative error ``qerr[k]``)
    comes from the full table of ``rho = exp(lrc)``; with ``logq`` set, ``q``
    holds ``log q`` instead and every product ``rho_i q_k`` is formed as one
    exponential, which cannot overflow halfway. Every coordinate runs the
    upward ratio recursion ``t_k = 1 - rho_i q_k t_{k-1}``, stable while the
    running inclusion probability stays below 1/2. Those whose propagated
    error bound exceeds ``tol``, or whose probability is above 1/2, rerun the
    downward one ``u_{k-1} = (1 - u_k) / (rho_i q_k)``, which yields the
    exclusion probability to relative accuracy. Coordinates where both bounds
    fail come back with ``ok = False`` for a full recompute by the caller.
    The loops run over ``i`` innermost so they vectorise.
    """
    n = lrc.shape[0]
    rho = np.exp(lrc) if not logq else np.zeros(n)
    t = np.ones(n)
    x = np.zeros(n)
    err = np.zeros(n)
    for k in range(1, K):
        qk = q[k]
        for i in range(n):
            rq, r_err = _rho_q(lrc[i], rho[i], qk, logq)
            xi = rq * t[i]
            ti = 1.0 - xi
            # a sign change or 0 in t poisons the bound, sending i to the fallback
            amp = abs(xi / ti) if ti > 0.0 else np.inf
            err[i] = amp * (err[i] + EPS + r_err + qerr[k]) + EPS
            t[i] = ti
    qk = q[K]
    out = np.empty(n)
    ok = np.zeros(n, dtype=np.bool_)
    redo = 0
    for i in range(n):
        rq, r_err = _rho_q(lrc[i], rho[i], qk, logq)
        xi = rq * t[i]
        x[i] = xi
        # a non-positive t means total cancellation; the NaN test catches 0/0
        if t[i] > 0.0 and err[i] + r_err + qerr[K] <= tol and 0.0 <= xi <= 1.0:
            out[i] = xi
            ok[i] = True
        # above 1/2 the downward pass gives the complement to relative accuracy
        if not ok[i] or xi > 0.5:
            redo += 1
    if redo == 0:
        return out, ok
    idx = np.empty(redo, dtype=np.int64)
    r = 0
    for i in range(n):
        if not ok[i] or x[i] > 0.5:
            idx[r] = i
            r += 1
    u = np.zeros(redo)
    e2 = np.zeros(redo)
    for k in range(n, K, -1):
        qk = q[k]
        for m in range(redo):
            i = idx[m]
            rq, r_err = _rho_q(lrc[i], rho[i], qk, logq)
            w = 1.0 - u[m]
            amp = abs(u[m] / w) if w > 0.0 else np.inf
            e2[m] = amp * e2[m] + 2.0 * EPS + r_err + qerr[k]
            u[m] = w / rq
    for m in range(redo):
        i = idx[m]
        if e2[m] <= tol and 0.0 <= u[m] <= 1.0:
            out[i] = 1.0 - u[m]
            ok[i] = True
        elif not ok[i]:
            out[i] = np.nan
    return out, ok
