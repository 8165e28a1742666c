"""Cross-engine property suite behind ``compound-oracle validate``.

Each property runs on ``trials`` random instances drawn from Philox streams
keyed by ``(seed, trial)``; the first failing instance is returned in a
JSON-serialisable form so it can be replayed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exactcore import _canonical_rows, esp_log, permanent_log, permanental_minors_log
from .families import Family, loglik_matrix, stream
from .oracles import (
    _pi_from_minors,
    pi_rule_enum,
    pi_rule_permanent,
    pi_rule_two_valued,
    simple_rule,
    two_valued_spec,
)

TAG_VALIDATE = 7
PERM_RTOL = 1e-10
ENGINE_ATOL = 1e-9
BRIDGE_RTOL = 1e-10
MAX_VALIDATE_N = 7


@dataclass
class PropertyResult:
    name: str
    passed: bool = True
    trials: int = 0
    worst: float = 0.0
    failure: dict | None = field(default=None, repr=False)


def naive_permanent(a: np.ndarray) -> float:
    n = a.shape[0]
    return math.fsum(math.prod(a[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def _instance(rng, n, two_valued):
    if two_valued:
        K = int(rng.integers(0, n + 1))
        mus = np.r_[np.zeros(n - K), np.ones(K)]
    else:
        mus = rng.uniform(-1.0, 1.0, size=n)
    labels = mus[rng.permutation(n)]
    ys = labels + rng.standard_normal(n)
    return mus, ys


def _permanent_engine(L, mus, fault):
    if not fault:
        return pi_rule_permanent(L, mus)
    a = np.asarray(L.entries)
    order = _canonical_rows(a)
    a = a[order]
    log_minor, sign = permanental_minors_log(a)
    log_minor[0, 0] += fault
    out = np.empty(a.shape[0])
    out[order] = _pi_from_minors(a, np.sort(mus), log_minor, sign)
    return out


def check_permanent(rng, n, res, trial):
    a = rng.uniform(0.1, 2.0, size=(n, n))
    ref = naive_permanent(a)
    got = permanent_log(np.log(a))
    err = abs(math.exp(got.log_abs) * got.sign - ref) / ref
    res.worst = max(res.worst, err)
    if err > PERM_RTOL:
        return {"matrix": a.tolist(), "naive": ref, "ryser_log": got.log_abs, "rel_err": err}


def check_engines(rng, n, res, trial, fault=0.0):
    family = Family.gaussian_location()
    mus, ys = _instance(rng, n, two_valued=bool(trial % 2))
    L = loglik_matrix(family, mus, ys)
    outs = {"enum": pi_rule_enum(L, mus), "permanent": _permanent_engine(L, mus, fault)}
    if trial % 2:
        spec = two_valued_spec(mus)
        outs["two-valued"] = pi_rule_two_valued(L.entries[:, -1] - L.entries[:, 0], spec) if spec.mu0 != spec.mu1 else np.full(n, spec.mu0)
    base = outs["enum"]
    err = max(float(np.max(np.abs(v - base))) for v in outs.values())
    res.worst = max(res.worst, err)
    if err > ENGINE_ATOL:
        return {"mus": mus.tolist(), "ys": ys.tolist(), "outputs": {k: v.tolist() for k, v in outs.items()}, "max_abs_diff": err}


def check_covariance(rng, n, res, trial):
    family = Family.gaussian_location()
    two = bool(trial % 2)
    mus, ys = _instance(rng, n, two_valued=two)
    sigma = rng.permutation(n)
    L, Ls = loglik_matrix(family, mus, ys), loglik_matrix(family, mus, ys[sigma])
    rules = {"simple": simple_rule, "enum": pi_rule_enum, "permanent": pi_rule_permanent}
    bad = []
    for name, rule in rules.items():
        if not np.array_equal(rule(Ls, mus), rule(L, mus)[sigma]):
            bad.append(name)
    spec = two_valued_spec(mus) if two else None
    if spec is not None and spec.mu0 != spec.mu1:
        lr = ys * (spec.mu1 - spec.mu0) - 0.5 * (spec.mu1**2 - spec.mu0**2)
        if not np.array_equal(pi_rule_two_valued(lr[sigma], spec), pi_rule_two_valued(lr, spec)[sigma]):
            bad.append("two-valued")
    if bad:
        return {"mus": mus.tolist(), "ys": ys.tolist(), "sigma": sigma.tolist(), "rules": bad}


def check_bridge(rng, n, res, trial):
    K = int(rng.integers(0, n + 1))
    lf0 = rng.normal(size=n)
    lf1 = rng.normal(size=n)
    # column j carries f1 for j < K, f0 otherwise
    L = np.where(np.arange(n)[None, :] < K, lf1[:, None], lf0[:, None])
    direct = permanent_log(L).log_abs
    via = math.lgamma(K + 1) + math.lgamma(n - K + 1) + lf0.sum() + esp_log(lf1 - lf0, K)[K]
    err = abs(math.expm1(via - direct))
    res.worst = max(res.worst, err)
    if err > BRIDGE_RTOL:
        return {"log_f0": lf0.tolist(), "log_f1": lf1.tolist(), "K": K, "ryser": direct, "esp": via, "rel_err": err}


def run(max_n: int = MAX_VALIDATE_N, trials: int = 20, seed: int = 0, fault: float = 0.0) -> list[PropertyResult]:
    suites = [
        ("permanent-vs-naive", check_permanent, 1),
        ("engine-agreement", lambda r, n, res, t: check_engines(r, n, res, t, fault), 2),
        ("covariance", check_covariance, 2),
        ("esp-bridge", check_bridge, 1),
    ]
    results = []
    for tag, (name, fn, n_min) in enumerate(suites):
        res = PropertyResult(name)
        for t in range(trials):
            rng = stream(seed, t, TAG_VALIDATE + (tag << 8))
            n = int(rng.integers(n_min, max_n + 1))
            res.trials += 1
            failure = fn(rng, n, res, t)
            if failure is not None:
                res.passed = False
                res.failure = {"property": name, "seed": seed, "trial": t, "n": n, **failure}
                break
        results.append(res)
    return results
