"""Exact combinatorial kernels.

* :func:`permanent_log`: Ryser's formula over Gray-code ordered subsets,
  row-scaled and Neumaier-compensated, returning a :class:`LogValue`.
* :func:`permanental_minors_log`: the table of log-permanents with one row
  and one column deleted.
* :func:`esp_log`: log elementary symmetric polynomials of positive reals.
* :func:`enumerate_posterior`: the brute-force posterior mean over all
  ``n!`` matchings of observations to parameters.

Capacity walls are hard limits, not tuning knobs: exceeding them raises
:class:`~compound_oracle.errors.CapacityError` before any work starts.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import CapacityError, ContractError
from .families import ParameterMultiset, as_entries

__all__ = [
    "LogValue",
    "EspTable",
    "LOG_FLOOR",
    "MAX_PERMANENT_N",
    "MAX_MINORS_N",
    "MAX_ENUM_N",
    "permanent_log",
    "permanental_minors_log",
    "esp_log",
    "enumerate_posterior",
]

LOG_FLOOR = -745.0
MAX_PERMANENT_N = 25
MAX_MINORS_N = 17
MAX_ENUM_N = 8
# centred log-ratios wider than this go through the log-add-exp recurrence
_SCALED_RANGE = 250.0


@dataclass(frozen=True)
class LogValue:
    """A real number stored as ``sign * exp(log_abs)``."""

    log_abs: float
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ContractError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign != 0 and not math.isfinite(self.log_abs):
            raise ContractError("log_abs must be finite for a nonzero value")

    @classmethod
    def zero(cls) -> "LogValue":
        return cls(-math.inf, 0)

    def __float__(self):
        return 0.0 if self.sign == 0 else self.sign * math.exp(self.log_abs)


@dataclass(frozen=True)
class EspTable:
    """``log_e[k] = log e_k(rho_1..rho_n)`` for ``k = 0..len(log_e) - 1``."""

    log_e: np.ndarray

    @property
    def kmax(self) -> int:
        return self.log_e.size - 1

    def __getitem__(self, k):
        return self.log_e[k]


def _square(log_entries) -> np.ndarray:
    a = np.array(log_entries, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {a.shape}")
    if np.isnan(a).any() or np.isposinf(a).any():
        raise ContractError("log entries must be finite or -inf")
    # -inf (a zero density) cannot ride through the signed sums
    a[np.isneginf(a)] = LOG_FLOOR
    return np.ascontiguousarray(a)


def permanent_log(log_entries) -> LogValue:
    """``log perm(exp(log_entries))`` by Ryser's formula; ``n <= 25``.

    Cost is ``O(2^n n)``. Accuracy target is ``1e-9`` relative for
    well-conditioned (bounded-parameter) likelihood matrices up to n = 17.
    """
    a = _square(log_entries)
    if a.shape[0] > MAX_PERMANENT_N:
        raise CapacityError(f"permanent of size {a.shape[0]} exceeds the n <= {MAX_PERMANENT_N} wall")
    la, s = _kernels.ryser_log(a)
    return LogValue(la, int(s)) if s != 0 else LogValue.zero()


def permanental_minors_log(log_entries, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Log-permanents of every ``(n-1) x (n-1)`` minor, as ``(log_abs, sign)`` arrays.

    ``log_abs[i, j]`` belongs to the matrix with row ``i`` and column ``j``
    removed. Each minor is an independent Ryser evaluation through the same
    kernel as :func:`permanent_log`, so the table is bitwise identical to
    slicing and calling :func:`permanent_log` and does not depend on
    ``workers``.
    """
    a = _square(log_entries)
    n = a.shape[0]
    if n < 2:
        raise ContractError("permanental minors need n >= 2")
    if n > MAX_MINORS_N:
        raise CapacityError(f"minor table of size {n} exceeds the n <= {MAX_MINORS_N} wall")
    out_log = np.empty((n, n))
    out_sign = np.empty((n, n), dtype=np.int64)
    if workers <= 1:
        _kernels.minors_rows(a, np.arange(n), out_log, out_sign)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(lambda i: _kernels.minors_rows(a, np.array([i]), out_log, out_sign), range(n)))
    return out_log, out_sign


def _centre(log_rhos: np.ndarray) -> tuple[np.ndarray, float, bool]:
    lo, hi = float(log_rhos.min()), float(log_rhos.max())
    centre = 0.5 * (lo + hi)
    return log_rhos - centre, centre, hi - centre <= _SCALED_RANGE


def _esp_centred(log_rhos: np.ndarray, kmax: int) -> tuple[np.ndarray, float]:
    """Log ESPs of ``rho / exp(centre)`` and the centre used."""
    if log_rhos.size == 0:
        out = np.full(kmax + 1, -np.inf)
        out[0] = 0.0
        return out, 0.0
    lrc, centre, scaled = _centre(log_rhos)
    if scaled:
        E, v = _kernels.esp_ext(lrc, kmax)
        return _kernels.ext_to_log(E, v, lrc.size), centre
    return _kernels.esp_log_direct(lrc, kmax), centre


def _esp_ratios(log_rhos: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Centred log-ratios, ``q[k] = e_{k-1}/e_k`` for k = 1..n with its relative
    error, and whether ``q`` is held as ``log q`` (wide inputs)."""
    lrc, _, scaled = _centre(log_rhos)
    n = lrc.size
    if scaled:
        E, v = _kernels.esp_ext(lrc, n)
        q, qerr = _kernels.ext_ratios(E, v)
        return lrc, q, qerr, False
    lq, qerr = _kernels.log_ratios(_kernels.esp_log_direct(lrc, n))
    return lrc, lq, qerr, True


def esp_log(log_rhos, kmax: int | None = None) -> EspTable:
    """Elementary symmetric polynomials ``e_0..e_kmax`` of ``rho = exp(log_rhos)``.

    Runs the recurrence ``e_k <- e_k + rho_m e_{k-1}`` on all-positive terms
    in ``O(n * kmax)``; entries with ``k > n`` are ``-inf``.
    """
    lr = np.ascontiguousarray(np.asarray(log_rhos, dtype=float).ravel())
    if not np.all(np.isfinite(lr)):
        raise ContractError("log-ratios must be finite")
    n = lr.size
    kmax = n if kmax is None else int(kmax)
    if kmax < 0:
        raise ContractError("kmax must be non-negative")
    lc, centre = _esp_centred(lr, kmax)
    k = np.arange(kmax + 1)
    out = np.where(np.isneginf(lc), -np.inf, lc + k * centre)
    out[0] = 0.0
    return EspTable(out)


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    p = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    p.setflags(write=False)
    return p


def _canonical_rows(a: np.ndarray) -> np.ndarray:
    # lexicographic row order; makes permutation covariance exact in floating point
    return np.lexsort(a.T[::-1])


def enumerate_posterior(loglik, mus) -> np.ndarray:
    """Posterior mean of the labels by literal summation over all ``n!`` matchings.

    Matching ``pi`` gets weight proportional to ``prod_i f_{mu_pi(i)}(Y_i)``;
    the estimate at ``i`` is the weighted mean of ``mu_pi(i)``. ``n <= 8``.
    """
    a = as_entries(loglik)
    mus = ParameterMultiset.coerce(mus)
    n = a.shape[0]
    if n != mus.n:
        raise ContractError(f"matrix is {n}x{n} but multiset has {mus.n} values")
    if n > MAX_ENUM_N:
        raise CapacityError(f"enumeration over {n}! matchings exceeds the n <= {MAX_ENUM_N} wall")
    order = _canonical_rows(a)
    a = a[order]
    mu = mus.values
    perms = _permutations(n)
    logw = a[np.arange(n), perms].sum(axis=1)
    # max-shifted weights; the normalisation happens in the ratio below
    w = np.exp(logw - logw.max())
    base = mu[0]
    # centred at min(mu) so a constant multiset comes back bit-exact
    est = base + w @ (mu[perms] - base) / w.sum()
    out = np.empty(n)
    out[order] = np.clip(est, mu[0], mu[-1])
    return out
