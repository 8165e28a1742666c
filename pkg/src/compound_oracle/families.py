"""Distribution families, parameter multisets and the log-likelihood matrix.

Every density is evaluated in log space with respect to Lebesgue measure.
Randomness comes from counter-based Philox streams keyed by
``(master_seed, index)``; the high counter word carries a purpose tag so that
different consumers of the same master seed never share a stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import ContractError, DomainError

__all__ = [
    "Family",
    "ParameterMultiset",
    "LogLikelihoodMatrix",
    "stream",
    "log_density",
    "sample",
    "loglik_matrix",
]

GAUSSIAN_LOCATION = "gaussian-location"
GAUSSIAN_SCALE = "gaussian-scale"
TWO_POINT = "two-point"
KINDS = (GAUSSIAN_LOCATION, GAUSSIAN_SCALE, TWO_POINT)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_MASK64 = (1 << 64) - 1


def stream(seed, index: int = 0, tag: int = 0) -> np.random.Generator:
    """Return the Philox generator for ``(seed, index)`` under purpose ``tag``.

    ``seed`` may also be a ``(seed, index)`` pair. The Philox key is the pair
    itself, so stream ``i`` never depends on how many streams were opened
    before it.
    """
    if isinstance(seed, (tuple, list)):
        seed, index = seed
    key = np.array([int(seed) & _MASK64, int(index) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(tag) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class Family:
    """A one-parameter family ``F_mu`` on the real line.

    ``gaussian-location`` is ``N(mu, 1)``; ``gaussian-scale`` is ``N(0, mu)``
    with ``mu`` the variance. ``two-point`` wraps two members of a Gaussian
    family, ``points[0]`` and ``points[1]``, and is indexed by the labels
    0 and 1.
    """

    kind: str = GAUSSIAN_LOCATION
    base: str | None = None
    points: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == TWO_POINT:
            if self.base not in (GAUSSIAN_LOCATION, GAUSSIAN_SCALE):
                raise ContractError("two-point family needs base gaussian-location or gaussian-scale")
            if self.points is None or len(self.points) != 2:
                raise ContractError("two-point family needs exactly two member parameters")
            pts = (float(self.points[0]), float(self.points[1]))
            object.__setattr__(self, "points", pts)
            inner = Family(self.base)
            for p in pts:
                inner.check(p)
        elif self.base is not None or self.points is not None:
            raise ContractError(f"{self.kind} family takes no base/points")

    @classmethod
    def gaussian_location(cls) -> "Family":
        return cls(GAUSSIAN_LOCATION)

    @classmethod
    def gaussian_scale(cls) -> "Family":
        return cls(GAUSSIAN_SCALE)

    @classmethod
    def two_point(cls, base: str, mu0: float, mu1: float) -> "Family":
        return cls(TWO_POINT, base=base, points=(mu0, mu1))

    def admissible(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if self.kind == GAUSSIAN_LOCATION:
            return np.isfinite(mu)
        if self.kind == GAUSSIAN_SCALE:
            return np.isfinite(mu) & (mu > 0)
        return (mu == 0.0) | (mu == 1.0)

    def check(self, mu) -> None:
        if not np.all(self.admissible(mu)):
            bad = np.asarray(mu, dtype=float)[~self.admissible(mu)].ravel()
            raise DomainError(f"parameter {bad[0]!r} not admissible for {self.kind} family")

    def _resolve(self, mu: np.ndarray) -> tuple[str, np.ndarray]:
        if self.kind != TWO_POINT:
            return self.kind, mu
        return self.base, np.where(mu == 1.0, self.points[1], self.points[0])

    def logpdf(self, mu, y) -> np.ndarray:
        """Broadcasting ``log f_mu(y)``; ``mu`` must already be admissible."""
        kind, m = self._resolve(np.asarray(mu, dtype=float))
        y = np.asarray(y, dtype=float)
        if kind == GAUSSIAN_LOCATION:
            d = y - m
            return -_HALF_LOG_2PI - 0.5 * d * d
        return -_HALF_LOG_2PI - 0.5 * np.log(m) - 0.5 * y * y / m

    def draw(self, mu, rng: np.random.Generator, size=None) -> np.ndarray:
        """Draw from ``F_mu`` (broadcast over ``mu``) using ``rng``."""
        kind, m = self._resolve(np.asarray(mu, dtype=float))
        if size is None:
            size = m.shape
        z = rng.standard_normal(size)
        if kind == GAUSSIAN_LOCATION:
            return m + z
        return np.sqrt(m) * z

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == TWO_POINT:
            d["base"] = self.base
            d["points"] = list(self.points)
        return d


@dataclass(frozen=True, eq=False)
class ParameterMultiset:
    """The known parameter multiset, stored sorted ascending."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if v.size < 1:
            raise ContractError("a parameter multiset needs n >= 1 values")
        if not np.all(np.isfinite(v)):
            raise DomainError("parameter values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def coerce(cls, mus) -> "ParameterMultiset":
        return mus if isinstance(mus, cls) else cls(mus)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def spread(self) -> float:
        """``max |mu_i - mu_j|``."""
        return float(self.values[-1] - self.values[0])

    def distinct(self) -> np.ndarray:
        return np.unique(self.values)

    def __eq__(self, other):
        if not isinstance(other, ParameterMultiset):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash(self.values.tobytes())

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"ParameterMultiset({self.values.tolist()!r})"


@dataclass(frozen=True, eq=False)
class LogLikelihoodMatrix:
    """``entries[i, j] = log f_{mu_j}(Y_i)``: rows are observations, columns parameters."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ContractError(f"log-likelihood matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ContractError("log-likelihood entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def log_density(family: Family, mu: float, y: float) -> float:
    """``log f_mu(y)`` for a single admissible ``mu``."""
    family.check(mu)
    return float(family.logpdf(mu, y))


def sample(family: Family, mu: float, seed) -> float:
    """One draw from ``F_mu``; the value is a pure function of ``seed``."""
    family.check(mu)
    return float(family.draw(mu, stream(seed), size=None))


def loglik_matrix(family: Family, mus, ys: Iterable[float]) -> LogLikelihoodMatrix:
    mus = ParameterMultiset.coerce(mus)
    family.check(mus.values)
    ys = np.asarray(ys, dtype=float).ravel()
    if ys.size != mus.n:
        raise ContractError(f"got {ys.size} observations for {mus.n} parameters")
    return LogLikelihoodMatrix(family.logpdf(mus.values[None, :], ys[:, None]))


def as_entries(loglik) -> np.ndarray:
    """Accept a LogLikelihoodMatrix or any square array-like."""
    if isinstance(loglik, LogLikelihoodMatrix):
        return loglik.entries
    return LogLikelihoodMatrix(loglik).entries
