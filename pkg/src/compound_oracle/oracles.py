"""The two oracle rules: best simple symmetric and best permutation-invariant.

Both are posterior means under the model where a uniformly random matching
assigns the known parameters to the observations. The simple rule conditions
on ``Y_i`` alone; the permutation-invariant rule conditions on all of
``Y_1..Y_n`` and comes in three interchangeable engines:

``enum``
    literal sum over all matchings (n <= 8);
``permanent``
    ratios of permanental minors (2 <= n <= 17);
``two-valued``
    elementary symmetric polynomials of the likelihood ratios, for a
    multiset with at most two distinct values (any n).

Every estimate is returned as a float array aligned with the observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import CapacityError, ContractError
from .exactcore import (
    MAX_ENUM_N,
    MAX_MINORS_N,
    _canonical_rows,
    _esp_centred,
    _esp_ratios,
    enumerate_posterior,
    permanental_minors_log,
)
from .families import ParameterMultiset, as_entries

__all__ = [
    "TwoValuedSpec",
    "weights",
    "simple_rule",
    "pi_rule_enum",
    "pi_rule_permanent",
    "pi_rule_two_valued",
    "simple_rule_two_valued",
    "inclusion_probabilities",
    "two_valued_spec",
]

# relative error bound (about six lost digits) that triggers a full recompute
DOWNDATE_TOL = 1e6 * np.finfo(float).eps


@dataclass(frozen=True)
class TwoValuedSpec:
    """``K`` of the ``n`` parameters equal ``mu1``; the rest equal ``mu0``."""

    K: int
    n: int
    mu0: float = 0.0
    mu1: float = 1.0

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.K <= self.n:
            raise ContractError(f"need 0 <= K <= n and n >= 1, got K={self.K}, n={self.n}")


def two_valued_spec(mus) -> TwoValuedSpec:
    """Describe a multiset with at most two distinct values."""
    mus = ParameterMultiset.coerce(mus)
    d = mus.distinct()
    if d.size > 2:
        raise ContractError(f"multiset has {d.size} distinct values; the two-valued engine needs <= 2")
    if d.size == 1:
        return TwoValuedSpec(K=mus.n, n=mus.n, mu0=float(d[0]), mu1=float(d[0]))
    return TwoValuedSpec(K=int(np.count_nonzero(mus.values == d[1])), n=mus.n, mu0=float(d[0]), mu1=float(d[1]))


def _centred_mean(mu: np.ndarray, w: np.ndarray) -> np.ndarray:
    # rows of w are unnormalised nonnegative weights over mu
    base = mu[0]
    est = base + (w @ (mu - base)) / w.sum(axis=1)
    return np.clip(est, mu[0], mu[-1])


def weights(loglik) -> np.ndarray:
    """Row-wise softmax ``p[i, j] = f_j(Y_i) / sum_k f_k(Y_i)``."""
    a = as_entries(loglik)
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def simple_rule(loglik, mus) -> np.ndarray:
    """``mu_hat_i = sum_j mu_j p_j(Y_i)``; coordinate ``i`` reads row ``i`` only."""
    a = as_entries(loglik)
    mus = ParameterMultiset.coerce(mus)
    if a.shape[0] != mus.n:
        raise ContractError(f"matrix is {a.shape[0]}x{a.shape[0]} but multiset has {mus.n} values")
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return _centred_mean(mus.values, e)


def pi_rule_enum(loglik, mus) -> np.ndarray:
    """Permutation-invariant oracle by enumeration of all matchings (n <= 8)."""
    return enumerate_posterior(loglik, mus)


def pi_rule_permanent(loglik, mus, workers: int = 1) -> np.ndarray:
    """Permutation-invariant oracle from permanental minors (2 <= n <= 17).

    Observation ``i`` carries ``mu_j`` with posterior weight proportional to
    ``f_j(Y_i) * perm(minor without row i, column j)``; the ``(n-1)!``
    normalisers cancel within each row.
    """
    a = as_entries(loglik)
    mus = ParameterMultiset.coerce(mus)
    n = a.shape[0]
    if n != mus.n:
        raise ContractError(f"matrix is {n}x{n} but multiset has {mus.n} values")
    if not 2 <= n <= MAX_MINORS_N:
        raise CapacityError(f"permanent engine covers 2 <= n <= {MAX_MINORS_N}, got n={n}")
    order = _canonical_rows(a)
    a = a[order]
    log_minor, sign = permanental_minors_log(a, workers=workers)
    out = np.empty(n)
    out[order] = _pi_from_minors(a, mus.values, log_minor, sign)
    return out


def _pi_from_minors(a: np.ndarray, mu: np.ndarray, log_minor: np.ndarray, sign: np.ndarray) -> np.ndarray:
    if np.any(sign <= 0):
        raise ContractError("a permanental minor lost its sign to cancellation; input is too ill-conditioned")
    lw = a + log_minor
    w = np.exp(lw - lw.max(axis=1, keepdims=True))
    return _centred_mean(mu, w)


def _check_two_valued(log_rho, spec: TwoValuedSpec) -> np.ndarray:
    lr = np.asarray(log_rho, dtype=float).ravel()
    if lr.size != spec.n:
        raise ContractError(f"got {lr.size} log-ratios for n={spec.n}")
    if not np.all(np.isfinite(lr)):
        raise ContractError("log-ratios must be finite")
    return lr


def inclusion_probabilities(log_rho, K: int) -> np.ndarray:
    """``P(M_i = mu1 | Y_1..Y_n)`` when exactly ``K`` labels are ``mu1``.

    Equals ``rho_i e_{K-1}(rho_-i) / e_K(rho)`` with ``rho_i = f1/f0 (Y_i)``.
    The leave-one-out polynomials come from stable ratio recursions against
    the full table; any coordinate whose error bound passes
    ``DOWNDATE_TOL`` is recomputed from scratch without index ``i``.
    """
    lr = np.ascontiguousarray(np.asarray(log_rho, dtype=float).ravel())
    n = lr.size
    if K <= 0:
        return np.zeros(n)
    if K >= n:
        return np.ones(n)
    order = np.argsort(lr, kind="stable")
    s = lr[order]
    lrc, q, qerr, logq = _esp_ratios(s)
    p, ok = _kernels.inclusion_probs(lrc, q, qerr, K, DOWNDATE_TOL, logq)
    bad = ~ok | ~np.isfinite(p) | (p < 0.0) | (p > 1.0)
    for i in np.flatnonzero(bad):
        rest, c = _esp_centred(np.delete(s, i), K)
        # log of rho_i e_{K-1}(rho_-i) and e_K(rho_-i), both on the same centre
        num = (s[i] - c) + rest[K - 1]
        den = rest[K]
        p[i] = expit(num - den)
    out = np.empty(n)
    out[order] = p
    return out


def pi_rule_two_valued(log_rho, spec: TwoValuedSpec) -> np.ndarray:
    """Permutation-invariant oracle for a two-valued multiset."""
    lr = _check_two_valued(log_rho, spec)
    if spec.K == 0:
        return np.full(spec.n, spec.mu0)
    if spec.K == spec.n:
        return np.full(spec.n, spec.mu1)
    p = inclusion_probabilities(lr, spec.K)
    return np.clip(spec.mu0 + (spec.mu1 - spec.mu0) * p, min(spec.mu0, spec.mu1), max(spec.mu0, spec.mu1))


def simple_rule_two_valued(log_rho, spec: TwoValuedSpec) -> np.ndarray:
    """Simple oracle for a two-valued multiset: ``P = K rho / (K rho + n - K)``."""
    lr = _check_two_valued(log_rho, spec)
    if spec.K == 0:
        return np.full(spec.n, spec.mu0)
    if spec.K == spec.n:
        return np.full(spec.n, spec.mu1)
    p = expit(lr + np.log(spec.K) - np.log(spec.n - spec.K))
    return np.clip(spec.mu0 + (spec.mu1 - spec.mu0) * p, min(spec.mu0, spec.mu1), max(spec.mu0, spec.mu1))


ENGINES = ("enum", "permanent", "two-valued")


def engine_capacity(engine: str, n: int) -> None:
    """Raise CapacityError if ``engine`` cannot handle size ``n``."""
    if engine == "enum":
        if not 1 <= n <= MAX_ENUM_N:
            raise CapacityError(f"enum engine covers 1 <= n <= {MAX_ENUM_N}, got n={n}")
    elif engine == "permanent":
        if not 2 <= n <= MAX_MINORS_N:
            raise CapacityError(f"permanent engine covers 2 <= n <= {MAX_MINORS_N}, got n={n}")
    elif engine != "two-valued":
        raise ContractError(f"unknown engine {engine!r}; expected one of {ENGINES}")
