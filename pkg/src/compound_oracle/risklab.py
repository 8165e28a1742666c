"""Paired Monte Carlo risk estimation and numerical condition checks.

Replication ``r`` of an experiment seeded with ``seed`` draws everything from
the Philox stream keyed ``(seed, r)``, and the reductions run over arrays
held in replication order, so results do not depend on how replications
were scheduled across worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError
from .families import Family, ParameterMultiset, loglik_matrix, stream
from .oracles import (
    engine_capacity,
    pi_rule_enum,
    pi_rule_permanent,
    pi_rule_two_valued,
    simple_rule,
    simple_rule_two_valued,
    two_valued_spec,
)

__all__ = [
    "RiskEstimate",
    "GapReport",
    "ConditionReport",
    "MuGenerator",
    "draw_instance",
    "mc_gap",
    "gap_curve",
    "check_G1",
    "check_G2",
    "check_B1",
    "check_two_valued_condition",
]

# high counter word of each stream family
TAG_REPLICATION = 0
TAG_G1 = 1
TAG_G2 = 2
TAG_B1 = 3
TAG_TWO_VALUED = 4
TAG_GENERATOR = 5

G1_MAX_DISTINCT = 50
G2_BLOCK_ELEMENTS = 2_000_000


def _mean(x: np.ndarray) -> float:
    return math.fsum(x.tolist()) / x.size


def _stderr(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0


@dataclass(frozen=True)
class RiskEstimate:
    """Monte Carlo mean of a per-replication total (summed over coordinates)."""

    mean: float
    stderr: float
    reps: int
    master_seed: int

    @classmethod
    def from_samples(cls, x: np.ndarray, seed: int) -> "RiskEstimate":
        return cls(_mean(x), _stderr(x), int(x.size), int(seed))


@dataclass(frozen=True)
class GapReport:
    """Paired estimates from one :func:`mc_gap` run.

    ``risk_diff.mean`` is defined as ``risk_s.mean - risk_pi.mean`` so the
    identity holds bit for bit; its stderr is that of the paired
    per-replication differences. ``pythagoras_stderr`` is the stderr of the
    per-replication residual ``|S-M|^2 - |PI-M|^2 - |S-PI|^2``.
    """

    n: int
    engine: str
    gap_sq: RiskEstimate
    risk_s: RiskEstimate
    risk_pi: RiskEstimate
    risk_diff: RiskEstimate
    pythagoras_residual: float
    pythagoras_stderr: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConditionReport:
    """Realised quantities behind one assumption, with MC standard errors."""

    assumption: str
    values: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    reps: int = 0
    master_seed: int = 0

    def to_dict(self) -> dict:
        return {
            "assumption": self.assumption,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "values": self.values,
            "stderr": self.stderr,
            "flags": self.flags,
        }


@dataclass(frozen=True)
class MuGenerator:
    """Deterministic recipe for the parameter multiset at size ``n``.

    ``explicit``: ``values`` (n must match); ``iid-uniform``: ``A`` and
    ``seed``, i.i.d. uniform on ``[-A, A]`` from stream ``(seed, n)``;
    ``two-valued``: ``mu0``, ``mu1``, ``gamma`` with ``floor(gamma n)``
    copies of ``mu1``; ``constant``: ``value``.
    """

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("explicit", "iid-uniform", "two-valued", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ContractError(f"unknown generator {self.kind!r}; expected one of {self.KINDS}")

    def make(self, n: int) -> ParameterMultiset:
        p = self.params
        if self.kind == "explicit":
            vals = list(p["values"])
            if len(vals) != n:
                raise ContractError(f"explicit multiset has {len(vals)} values, asked for n={n}")
            return ParameterMultiset(vals)
        if self.kind == "iid-uniform":
            A = float(p["A"])
            rng = stream(int(p.get("seed", 0)), n, TAG_GENERATOR)
            return ParameterMultiset(rng.uniform(-A, A, size=n))
        if self.kind == "two-valued":
            K = int(math.floor(float(p["gamma"]) * n))
            return ParameterMultiset(np.r_[np.full(n - K, float(p["mu0"])), np.full(K, float(p["mu1"]))])
        return ParameterMultiset(np.full(n, float(p["value"])))

    def distinct_bound(self) -> int | None:
        """Upper bound on distinct values, if known without drawing."""
        if self.kind == "constant":
            return 1
        if self.kind == "two-valued":
            return 2
        if self.kind == "explicit":
            return len(set(float(v) for v in self.params["values"]))
        return None


def draw_instance(family: Family, mus, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(labels, ys)``: a uniform matching of the multiset, then ``Y_i ~ F_{M_i}``."""
    mus = ParameterMultiset.coerce(mus)
    family.check(mus.values)
    rng = stream(seed)
    labels = mus.values[rng.permutation(mus.n)]
    return labels, family.draw(labels, rng)


def _rule_pair(family: Family, mus: ParameterMultiset, engine: str):
    """Return ``ys -> (simple, pi)`` for the chosen engine."""
    if engine == "two-valued":
        spec = two_valued_spec(mus)

        def rules(ys):
            lr = family.logpdf(spec.mu1, ys) - family.logpdf(spec.mu0, ys)
            return simple_rule_two_valued(lr, spec), pi_rule_two_valued(lr, spec)

        return rules
    pi = pi_rule_enum if engine == "enum" else pi_rule_permanent

    def rules(ys):
        L = loglik_matrix(family, mus, ys)
        return simple_rule(L, mus), pi(L, mus)

    return rules


def mc_gap(family: Family, mus, engine: str, reps: int, seed: int, workers: int = 1) -> GapReport:
    """Paired (common random numbers) estimates of both oracle risks and their gap."""
    mus = ParameterMultiset.coerce(mus)
    family.check(mus.values)
    engine_capacity(engine, mus.n)
    if reps < 2:
        raise ContractError("mc_gap needs reps >= 2 for a standard error")
    rules = _rule_pair(family, mus, engine)

    def one(r):
        labels, ys = draw_instance(family, mus, (seed, r))
        s, pi = rules(ys)
        ds, dp, dg = s - labels, pi - labels, s - pi
        return ds @ ds, dp @ dp, dg @ dg

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one, range(reps), chunksize=max(1, reps // (8 * workers))))
    else:
        rows = [one(r) for r in range(reps)]
    a, b, g = np.array(rows, dtype=float).T
    risk_s = RiskEstimate.from_samples(a, seed)
    risk_pi = RiskEstimate.from_samples(b, seed)
    gap_sq = RiskEstimate.from_samples(g, seed)
    risk_diff = RiskEstimate(risk_s.mean - risk_pi.mean, _stderr(a - b), reps, int(seed))
    return GapReport(
        n=mus.n,
        engine=engine,
        gap_sq=gap_sq,
        risk_s=risk_s,
        risk_pi=risk_pi,
        risk_diff=risk_diff,
        pythagoras_residual=abs(risk_s.mean - risk_pi.mean - gap_sq.mean),
        pythagoras_stderr=_stderr(a - b - g),
    )


def gap_curve(family: Family, generator: MuGenerator, n_grid, engine: str, reps: int, seed: int, workers: int = 1):
    """One :class:`GapReport` per grid size, every size run on master seed ``seed``."""
    n_grid = [int(n) for n in n_grid]
    for n in n_grid:
        engine_capacity(engine, n)
    return [mc_gap(family, generator.make(n), engine, reps, seed, workers=workers) for n in n_grid]


def _log_ratio(family: Family, num, den, y):
    return family.logpdf(num, y) - family.logpdf(den, y)


def check_G1(family: Family, mus, gamma: float = 0.1, reps: int = 100_000, seed: int = 0) -> ConditionReport:
    """Realised (G1) quantities: ``max|mu|``, the largest second moment of
    ``f_j/f_i`` under ``F_{mu_i}``, and the smallest ``P(f_j/f_i > gamma)``.

    Pairs are formed over distinct values; above 50 distinct values an evenly
    spaced subset of 50 (always including both extremes) is used.
    """
    if gamma <= 0:
        raise ContractError("gamma must be positive")
    mus = ParameterMultiset.coerce(mus)
    family.check(mus.values)
    d = mus.distinct()
    idx = np.unique(np.round(np.linspace(0, d.size - 1, min(d.size, G1_MAX_DISTINCT))).astype(int))
    sub = d[idx]
    best_m2, best_m2_se, best_pair = -np.inf, 0.0, (0.0, 0.0)
    worst_p, worst_p_se, worst_pair = np.inf, 0.0, (0.0, 0.0)
    for a, mu_i in zip(idx, sub):
        y = family.draw(mu_i, stream(seed, int(a), TAG_G1), size=reps)
        lr = _log_ratio(family, sub[None, :], mu_i, y[:, None])
        r2 = np.exp(2.0 * lr)
        m2 = r2.mean(axis=0)
        above = (lr > math.log(gamma)).mean(axis=0)
        b = int(np.argmax(m2))
        if m2[b] > best_m2:
            best_m2, best_m2_se, best_pair = float(m2[b]), float(r2[:, b].std(ddof=1) / math.sqrt(reps)), (float(mu_i), float(sub[b]))
        c = int(np.argmin(above))
        if above[c] < worst_p:
            worst_p = float(above[c])
            worst_p_se = math.sqrt(worst_p * (1 - worst_p) / reps)
            worst_pair = (float(mu_i), float(sub[c]))
    return ConditionReport(
        "G1",
        values={
            "max_abs_mu": float(np.max(np.abs(mus.values))),
            "ratio_second_moment_max": best_m2,
            "ratio_second_moment_argmax": list(best_pair),
            "prob_ratio_above_gamma_min": worst_p,
            "prob_ratio_above_gamma_argmin": list(worst_pair),
            "gamma": float(gamma),
            "distinct_values_used": int(sub.size),
        },
        stderr={
            "max_abs_mu": 0.0,
            "ratio_second_moment_max": best_m2_se,
            "prob_ratio_above_gamma_min": worst_p_se,
        },
        reps=int(reps),
        master_seed=int(seed),
    )


def check_G2(family: Family, mus, reps: int = 100_000, seed: int = 0) -> ConditionReport:
    """Realised (G2) quantities under the random-matching model.

    ``sum_p2`` is ``E sum_ij p_j(Y_i)^2``; ``inv_min`` is
    ``sum_i E 1/(n min_j p_j(Y_i))`` (to be compared with ``C n``);
    ``weighted_inv_min`` is ``E sum_i sum_j p_j(Y_i)^2 / (n min_j p_j(Y_i))``.
    ``single_obs_sum_p2`` estimates ``E sum_j p_j(Y_1)^2`` as ``sum_p2 / n``,
    which has the same expectation by exchangeability.
    """
    mus = ParameterMultiset.coerce(mus)
    family.check(mus.values)
    n = mus.n
    block = max(1, G2_BLOCK_ELEMENTS // (n * n))
    q1, q2, q3 = [], [], []
    logn = math.log(n)
    for bi, start in enumerate(range(0, reps, block)):
        B = min(block, reps - start)
        rng = stream(seed, bi, TAG_G2)
        labels = rng.permuted(np.broadcast_to(mus.values, (B, n)), axis=1)
        ys = family.draw(labels, rng)
        L = family.logpdf(mus.values[None, None, :], ys[:, :, None])
        lse = logsumexp(L, axis=2, keepdims=True)
        p = np.exp(L - lse)
        s2 = np.sum(p * p, axis=2)
        # 1 / (n min_j p_ij) in log space
        inv = np.exp(lse[..., 0] - L.min(axis=2) - logn)
        q1.append(s2.sum(axis=1))
        q2.append(inv.sum(axis=1))
        q3.append((s2 * inv).sum(axis=1))
    q1, q2, q3 = (np.concatenate(q) for q in (q1, q2, q3))
    values = {
        "sum_p2": _mean(q1),
        "inv_min": _mean(q2),
        "inv_min_over_n": _mean(q2) / n,
        "weighted_inv_min": _mean(q3),
        "single_obs_sum_p2": _mean(q1) / n,
    }
    stderr = {
        "sum_p2": _stderr(q1),
        "inv_min": _stderr(q2),
        "inv_min_over_n": _stderr(q2) / n,
        "weighted_inv_min": _stderr(q3),
        "single_obs_sum_p2": _stderr(q1) / n,
    }
    if family.kind == "gaussian-location":
        A = float(np.max(np.abs(mus.values)))
        values["gaussian_bound_A"] = A
        values["gaussian_single_obs_bound"] = math.exp(12.0 * A * A) / n
    return ConditionReport("G2", values=values, stderr=stderr, reps=int(reps), master_seed=int(seed))


def _var_with_se(x: np.ndarray) -> tuple[float, float]:
    v = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    return v, math.sqrt(max(m4 - v * v, 0.0) / x.size)


def check_B1(family: Family, mus, reps: int = 100_000, seed: int = 0) -> ConditionReport:
    """Realised (B1) quantities: the spread ``A_n`` and the largest variance of
    ``f_(j+1)/f_(j)(Y)`` with ``Y ~ F_(j)`` over consecutive ordered values,
    reported also as ``V_n = n^2 * max``."""
    mus = ParameterMultiset.coerce(mus)
    family.check(mus.values)
    n = mus.n
    if n < 2:
        raise ContractError("B1 needs at least two parameters")
    v = mus.values
    seen = {}
    best, best_se, best_pair = 0.0, 0.0, (float(v[0]), float(v[1]))
    for j in range(n - 1):
        pair = (float(v[j]), float(v[j + 1]))
        if pair[0] == pair[1] or pair in seen:
            continue
        y = family.draw(pair[0], stream(seed, j, TAG_B1), size=reps)
        var, se = _var_with_se(np.exp(_log_ratio(family, pair[1], pair[0], y)))
        seen[pair] = var
        if var > best:
            best, best_se, best_pair = var, se, pair
    return ConditionReport(
        "B1",
        values={
            "spread_A_n": mus.spread,
            "ratio_variance_max": best,
            "ratio_variance_argmax": list(best_pair),
            "V_n": n * n * best,
            "distinct_pairs": len(seen),
        },
        stderr={"spread_A_n": 0.0, "ratio_variance_max": best_se, "V_n": n * n * best_se},
        reps=int(reps),
        master_seed=int(seed),
    )


def check_two_valued_condition(
    family: Family, mu0: float, mu1: float, reps: int = 100_000, seed: int = 0, rounds: int = 4, jump: float = 0.2
) -> ConditionReport:
    """Variance of ``f1/f0`` under ``F_mu0`` and of ``f0/f1`` under ``F_mu1``.

    A finite variance cannot be confirmed by simulation, only discredited:
    each estimate is recomputed on ``reps * 2**r`` draws for ``r = 1..rounds``
    and flagged heavy-tailed when any doubling moves it by more than ``jump``
    (relative).
    """
    family.check([mu0, mu1])
    values, stderr, flags, trace = {}, {}, {}, {}
    for side, (num, den) in enumerate(((mu1, mu0), (mu0, mu1))):
        key = f"mu{side}"
        y = family.draw(den, stream(seed, side, TAG_TWO_VALUED), size=reps << rounds)
        ratio = np.exp(_log_ratio(family, num, den, y))
        path = [_var_with_se(ratio[: reps << r]) for r in range(rounds + 1)]
        est = [p[0] for p in path]
        values[f"var_ratio_under_{key}"] = est[0]
        stderr[f"var_ratio_under_{key}"] = path[0][1]
        trace[f"doubling_under_{key}"] = est
        flags[f"heavy_tail_{key}"] = any(
            abs(b - a) > jump * abs(a) if a != 0 else b != 0 for a, b in zip(est, est[1:])
        )
    flags["heavy_tail"] = flags["heavy_tail_mu0"] or flags["heavy_tail_mu1"]
    values.update(trace)
    values["mu0"], values["mu1"] = float(mu0), float(mu1)
    return ConditionReport("two-valued", values=values, stderr=stderr, flags=flags, reps=int(reps), master_seed=int(seed))
