"""Closed-form tail bounds and exact evaluations for the protocol's
safety, liveness, and cost figures.

Most quantities come in two modes. "bound" evaluates the Chernoff-style
closed forms verbatim; these are the provable guarantees but are loose
(sometimes vacuous) at practical parameter sizes, so every result carries
a vacuity flag. "exact" replaces each tail with the exact binomial,
hypergeometric, or Markov-chain computation; this is the mode that
regenerates the evaluation tables and matches the simulator. Failure
probabilities dominate exact values from above, success probabilities
from below; the test suite sweeps both directions.

All results are clamped to [0, 1] with the raw value preserved, and the
named intermediate quantities (expectations, deltas, per-term values)
ride along for inspection and JSON export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from qscale.crypto import SizeModel
from qscale.params import ProtocolParams

MODES = ("bound", "exact")


@dataclass(frozen=True, slots=True)
class BoundResult:
    value: float  # clamped to [0, 1]
    raw: float
    mode: str
    intermediates: dict
    vacuous: bool = False

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "raw": self.raw,
            "mode": self.mode,
            "vacuous": self.vacuous,
            "intermediates": dict(self.intermediates),
        }


def _clamp(raw: float) -> float:
    return min(max(float(raw), 0.0), 1.0)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _failure(raw, mode, intermediates) -> BoundResult:
    # a failure-probability bound is vacuous once it reaches 1
    return BoundResult(_clamp(raw), float(raw), mode, intermediates, raw >= 1.0)


def _success(raw, mode, intermediates) -> BoundResult:
    # a success-probability bound is vacuous once it drops to 0
    return BoundResult(_clamp(raw), float(raw), mode, intermediates, raw <= 0.0)


# tail primitives


def chernoff_lower(expectation: float, delta: float) -> float:
    """Upper bound on Pr(X <= (1-delta) E[X]) for binomial-like X."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if expectation < 0:
        raise ValueError("expectation must be nonnegative")
    return math.exp(-delta * delta * expectation / 2.0)


def chernoff_upper(expectation: float, delta: float) -> float:
    """Upper bound on Pr(X >= (1+delta) E[X]) for binomial-like X."""
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if expectation < 0:
        raise ValueError("expectation must be nonnegative")
    return math.exp(-delta * delta * expectation / (2.0 + delta))


def binom_tail(n_trials: int, p: float, threshold: int) -> float:
    """Pr(Bin(n_trials, p) >= threshold), summed in log space."""
    if n_trials < 0:
        raise ValueError("n_trials must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if threshold <= 0:
        return 1.0
    if threshold > n_trials:
        return 0.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    ks = np.arange(threshold, n_trials + 1)
    return _clamp(math.exp(logsumexp(stats.binom.logpmf(ks, n_trials, p))))


def hypergeom_cdf(big_n: int, r: int, s: int, k: int) -> float:
    """Pr(X <= k) drawing s from big_n containing r marked, X = marked drawn."""
    if not 0 <= r <= big_n:
        raise ValueError("need 0 <= r <= population")
    if not 0 <= s <= big_n:
        raise ValueError("need 0 <= s <= population")
    return _clamp(stats.hypergeom.cdf(k, big_n, r, s))


# gossip propagation


@lru_cache(maxsize=8)
def _transition_matrix(n: int, p: float) -> np.ndarray:
    """Upper-triangular informed-count chain; row s spreads to Bin(n-s, 1-(1-p)^s)."""
    t = np.zeros((n + 1, n + 1))
    t[0, 0] = 1.0
    t[n, n] = 1.0
    for s in range(1, n):
        reach = 1.0 - (1.0 - p) ** s
        cnt = n - s
        t[s, s:] = stats.binom.pmf(np.arange(cnt + 1), cnt, reach)
    return t


_PROP_CACHE: dict = {}


def propagation_exact(n: int, chi: int, p_prop: float, k: int) -> float:
    """Probability that gossip from chi initial holders reaches all n in k rounds."""
    if not 1 <= chi <= n:
        raise ValueError(f"chi must be in [1, n], got {chi}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if chi == n:
        return 1.0
    key = (n, chi, p_prop, k)
    hit = _PROP_CACHE.get(key)
    if hit is not None:
        return hit
    t = _transition_matrix(n, p_prop)
    v = np.zeros(n + 1)
    v[chi] = 1.0
    for _ in range(k):
        v = v @ t
    out = _clamp(v[n])
    _PROP_CACHE[key] = out
    return out


def propagation_lower_bound(n: int, chi: int, p_prop: float, k: int) -> BoundResult:
    """Closed-form lower bound on full propagation, with its weaker variant.

    The strong form is 1 - (n-chi) exp(-k chi p_prop); the weak form
    1 - (n-chi)/(k chi p_prop) goes negative for small chi at realistic
    gossip rates, so both are clamped and flagged when vacuous.
    """
    if not 1 <= chi <= n:
        raise ValueError(f"chi must be in [1, n], got {chi}")
    if k < 1:
        raise ValueError("k must be at least 1")
    exponent = k * chi * p_prop
    strong = 1.0 - (n - chi) * math.exp(-exponent)
    weak = 1.0 - (n - chi) / exponent if exponent > 0 else -math.inf
    inter = {
        "strong_raw": strong,
        "weak_raw": weak,
        "weak": _clamp(weak),
        "weak_vacuous": weak <= 0.0,
        "exponent": exponent,
    }
    return _success(strong, "bound", inter)


def propagation_monte_carlo(
    n: int, chi: int, p_prop: float, k: int, trials: int, seed: int = 0
) -> float:
    """Sampled estimate of full propagation within k rounds.

    Independent oracle for propagation_exact: every uninformed process draws
    its own count of incoming gossip hits from the current informed set, so
    no closed-form coverage expression is shared with the exact recursion.
    """
    if not 1 <= chi <= n:
        raise ValueError(f"chi must be in [1, n], got {chi}")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    informed = np.full(trials, chi, dtype=np.int64)
    slots = np.arange(n)
    for _ in range(k):
        if bool((informed == n).all()):
            break
        hits = rng.binomial(informed[:, None], p_prop, size=(trials, n))
        fresh = ((hits >= 1) & (slots[None, :] < (n - informed)[:, None])).sum(axis=1)
        informed = informed + fresh
    return float((informed == n).mean())


# certification and safety, partially synchronous


def psync_cert_bound(params: ProtocolParams, mode: str = "bound") -> BoundResult:
    """Probability that any single epoch forms a quorum certificate when up
    to (n+f)/2 processes are candidates to vote."""
    _check_mode(mode)
    n, f, q, pv = params.n, params.f, params.q, params.p_vote
    votes_e = (n + f) * pv
    if mode == "exact":
        raw = binom_tail((n + f) // 2, pv, q)
        return _failure(raw, mode, {"candidates": (n + f) // 2, "p_vote": pv})
    if votes_e == 0.0:
        # no voters at all, so no certificate; the closed form is undefined here
        return _failure(0.0, mode, {"mu": 0.0, "delta": math.inf})
    if q < votes_e / 2.0:
        raise ValueError(
            f"bound mode needs q >= (n+f)*p_vote/2 = {votes_e / 2.0:.4f}, got q={q}"
        )
    delta = 2.0 * q / votes_e - 1.0
    mu = votes_e / 2.0
    raw = chernoff_upper(mu, delta)
    return _failure(raw, mode, {"mu": mu, "delta": delta})


def psync_safety_violation(
    params: ProtocolParams, kappa: int, mode: str = "bound"
) -> BoundResult:
    """Probability that two correct processes commit conflicting blocks,
    as (2 cert)^(kappa-1) over the per-epoch certification probability."""
    if kappa < 2:
        raise ValueError("kappa must be at least 2")
    cert = psync_cert_bound(params, mode)
    raw = (2.0 * cert.raw) ** (kappa - 1)
    inter = {"cert": cert.raw, "kappa": kappa}
    inter.update({f"cert_{k}": v for k, v in cert.intermediates.items()})
    return _failure(raw, mode, inter)


# certification and safety, synchronous


def sync_byz_cert_bound(params: ProtocolParams, mode: str = "bound") -> BoundResult:
    """Probability that the f Byzantine processes alone supply q votes."""
    _check_mode(mode)
    f, q, pv = params.f, params.q, params.p_vote
    if mode == "exact":
        raw = binom_tail(f, pv, q)
        return _failure(raw, mode, {"candidates": f, "p_vote": pv})
    mu = f * pv  # epsilon * n * p_vote, with epsilon = f/n exactly
    if mu == 0.0:
        return _failure(0.0, mode, {"mu": 0.0, "delta": math.inf})
    if q < mu:
        raise ValueError(f"bound mode needs q >= f*p_vote = {mu:.4f}, got q={q}")
    delta = q / mu - 1.0
    raw = chernoff_upper(mu, delta)
    return _failure(raw, mode, {"mu": mu, "delta": delta})


def sync_safety_violation(
    params: ProtocolParams, kappa: int, mode: str = "bound"
) -> BoundResult:
    """Max over the two ways kappa consecutive conflicting epochs happen:
    Byzantine-only certification every epoch, or the first conflicting
    block never propagating to the other committer.

    The propagation term multiplies per-epoch factors over l = 2..kappa,
    each covering 3(l-1) gossip rounds. Bound mode uses the weak
    closed-form factor (n-1)/(3(l-1) p_prop), exact mode the Markov
    complement; the factor count is kappa-1 either way.
    """
    if kappa < 2:
        raise ValueError("kappa must be at least 2")
    _check_mode(mode)
    n, pp = params.n, params.p_prop
    cert = sync_byz_cert_bound(params, mode)
    cert_term = cert.raw ** (kappa - 1)
    if mode == "bound":
        if pp > 0:
            prop_term = 1.0
            for el in range(2, kappa + 1):
                prop_term *= (n - 1) / (3.0 * (el - 1) * pp)
        else:
            prop_term = math.inf
    else:
        prop_term = 1.0
        for el in range(2, kappa + 1):
            prop_term *= 1.0 - propagation_exact(n, 1, pp, 3 * (el - 1))
    raw = max(cert_term, prop_term)
    inter = {
        "cert": cert.raw,
        "cert_term": cert_term,
        "prop_term": prop_term,
        "kappa": kappa,
    }
    inter.update({f"cert_{k}": v for k, v in cert.intermediates.items()})
    return _failure(raw, mode, inter)


# liveness chain

_COVERAGE = 0.6321  # 1 - 1/e, the two-layer dissemination coverage constant
_CANDIDATE_FRACTION = 0.6321


def _correct(params: ProtocolParams) -> int:
    return params.n - params.f


def liveness_sample_bound(
    params: ProtocolParams, varphi: float, mode: str = "bound"
) -> BoundResult:
    """Probability the leader's sample holds at least (1-varphi) of its
    expected count of correct processes."""
    _check_mode(mode)
    if not 0.0 < varphi < 1.0:
        raise ValueError(f"varphi must be in (0, 1), got {varphi}")
    nc = _correct(params)
    ps = params.p_sample
    expect = nc * ps
    threshold = (1.0 - varphi) * expect
    inter = {
        "expect": expect,
        "threshold": threshold,
        # the varphi = 1/2 special case, reported for convenience
        "corollary_half_varphi": 1.0 - 8.0 / expect if expect > 0 else -math.inf,
    }
    if mode == "exact":
        raw = binom_tail(nc, ps, math.ceil(threshold - 1e-9))
        return _success(raw, mode, inter)
    if expect == 0.0:
        return _success(-math.inf, mode, inter)
    raw = 1.0 - 2.0 / (varphi * varphi * expect)
    return _success(raw, mode, inter)


def _candidate_fraction_limit(params: ProtocolParams, varphi: float) -> float:
    nc = _correct(params)
    ps = params.p_sample
    if ps >= 1.0:
        return 1.0
    return 1.0 - math.exp(-(1.0 - varphi) * nc * ps * ps / (1.0 - ps))


def liveness_candidate_fraction(
    params: ProtocolParams, a: float, varphi: float, mode: str = "bound"
) -> BoundResult:
    """Probability that at least an a-fraction of correct processes hold the
    proposal after the two-layer dissemination."""
    _check_mode(mode)
    if not 0.0 < varphi < 1.0:
        raise ValueError(f"varphi must be in (0, 1), got {varphi}")
    if not 0.0 < a < 1.0:
        raise ValueError(f"a must be in (0, 1), got {a}")
    limit = _candidate_fraction_limit(params, varphi)
    if a >= limit:
        raise ValueError(f"a must be below {limit:.6f} at these parameters, got {a}")
    nc = _correct(params)
    ps = params.p_sample
    mu = nc * (1.0 - (1.0 - ps) ** ((1.0 - varphi) * nc * ps))
    inter = {"mu": mu, "limit": limit}
    if mode == "exact":
        threshold = math.ceil(a * nc - 1e-9)
        ms = np.arange(nc + 1)
        first = stats.binom.pmf(ms, nc, ps)
        cover = 1.0 - (1.0 - ps) ** ms
        # Pr(second layer count >= threshold | first layer size m)
        second = stats.binom.sf(threshold - 1, nc, cover)
        raw = float(np.dot(first, second))
        inter["threshold"] = threshold
        return _success(raw, mode, inter)
    delta = 1.0 - a * nc / mu
    inter["delta"] = delta
    raw = (
        1.0
        - 2.0 / (a * delta * delta * nc)
        - 2.0 / (varphi * varphi * nc * ps)
    )
    return _success(raw, mode, inter)


def liveness_qc_probability(params: ProtocolParams, mode: str = "bound") -> BoundResult:
    """Probability that one honest epoch ends with a quorum certificate.

    Exact mode composes the full two-layer chain: sample size m is
    binomial, each correct process then holds the proposal with
    probability 1-(1-p_sample)^m and votes with p_vote, and the vote
    count must reach q. The factored fixed-fraction variant rides along
    in the intermediates.
    """
    _check_mode(mode)
    nc = _correct(params)
    ps, pv, q = params.p_sample, params.p_vote, params.q
    mu = _COVERAGE * nc * pv
    theta = 1.0 - q / mu if mu > 0 else -math.inf
    inter = {"mu": mu, "theta": theta}
    if mode == "exact":
        ms = np.arange(nc + 1)
        first = stats.binom.pmf(ms, nc, ps)
        cover = 1.0 - (1.0 - ps) ** ms
        tails = stats.binom.sf(q - 1, nc, np.clip(cover * pv, 0.0, 1.0))
        raw = float(np.dot(first, tails))
        inter["factored"] = binom_tail(math.ceil(_CANDIDATE_FRACTION * nc), pv, q)
        return _success(raw, mode, inter)
    if theta <= 0.0:
        raise ValueError(
            f"bound mode needs q < {mu:.4f} (0.6321 * correct * p_vote), got q={q}"
        )
    raw = (1.0 - 13.0 / nc - 8.0 / (nc * ps)) * (1.0 - 2.0 / (theta * theta * mu))
    return _success(raw, mode, inter)


def liveness_commit_probability(
    params: ProtocolParams, kappa: int, mode: str = "bound"
) -> BoundResult:
    """Probability that kappa consecutive honest epochs all certify and
    propagate, which commits a block at depth kappa."""
    _check_mode(mode)
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    n, pp = params.n, params.p_prop
    qc = liveness_qc_probability(params, mode)
    if mode == "exact":
        prop = propagation_exact(n, 1, pp, 3)
    else:
        prop = _clamp(1.0 - (n - 1) / (3.0 * pp)) if pp > 0 else 0.0
    raw = (qc.raw * prop) ** kappa if kappa > 0 else 1.0
    inter = {"qc": qc.raw, "prop": prop, "kappa": kappa}
    return _success(raw, mode, inter)


# committee selection


@dataclass(frozen=True, slots=True)
class CommitteeResult:
    feasible: bool
    o_star: float | None
    threshold: int | None
    safety: float | None
    liveness_failure: float | None

    def as_dict(self) -> dict:
        safety = self.safety
        if safety is None:
            log2_safety = None
        elif safety > 0.0:
            log2_safety = math.log2(safety)
        else:
            log2_safety = -math.inf
        return {
            "feasible": self.feasible,
            "o_star": self.o_star,
            "threshold": self.threshold,
            "safety": safety,
            "log2_safety": log2_safety,
            "liveness_failure": self.liveness_failure,
        }


def committee_optimize(
    n: int, f: int, c: int, liveness_target: float = 2.0 ** -30
) -> CommitteeResult:
    """Largest committee vote threshold that correct members alone still
    reach with probability 1 - liveness_target, and the probability that
    Byzantine members exceed it.

    The threshold fraction o is scanned on a 0.01 grid with t = floor(c*o);
    larger feasible t strictly reduces the Byzantine takeover probability,
    so the largest one is optimal.
    """
    if n <= 0 or not 0 <= f <= n:
        raise ValueError("need n > 0 and 0 <= f <= n")
    if c < 0 or c > n:
        raise ValueError("need 0 <= c <= n")
    if c == 0:
        return CommitteeResult(False, None, None, None, None)
    best_t = None
    for grid in range(101):
        t = int(c * (grid / 100.0) + 1e-9)
        if hypergeom_cdf(n, n - f, c, t) < liveness_target:
            if best_t is None or t > best_t:
                best_t = t
    if best_t is None:
        return CommitteeResult(False, None, None, None, None)
    safety = _clamp(stats.hypergeom.sf(best_t, n, f, c))
    return CommitteeResult(
        True,
        best_t / c,
        best_t,
        safety,
        hypergeom_cdf(n, n - f, c, best_t),
    )


# message complexity


@dataclass(frozen=True, slots=True)
class MessageCost:
    count: float  # expected deliveries per epoch, core terms
    bytes: float  # expected bytes per epoch, next-leader extras included
    extra_next_leader: float  # expected extra deliveries beyond `count`
    leader_bytes: float  # bytes sent by the epoch's leader
    breakdown: dict

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "bytes": self.bytes,
            "extra_next_leader": self.extra_next_leader,
            "leader_bytes": self.leader_bytes,
            "breakdown": {k: dict(v) for k, v in self.breakdown.items()},
        }


def expected_messages_per_epoch(
    params: ProtocolParams, size_model: SizeModel | None = None
) -> MessageCost:
    """Expected per-epoch message count and traffic.

    The count is the four-term core: the leader's sample, each sample
    member's forward sample, the votes, and three rounds of gossip.
    Each propose/disseminate sender additionally addresses the next
    leader when not already sampled, adding (1-p_sample) expected
    deliveries per sender; those ride in extra_next_leader and in the
    byte totals but not in the headline count.
    """
    sm = size_model if size_model is not None else SizeModel()
    n, ps, pv, pp = params.n, params.p_sample, params.p_vote, params.p_prop
    txs = params.txs_per_block
    sample = n * ps
    extra = 1.0 - ps  # per propose/disseminate sender, after sampling overlap
    propose_n = sample
    dissem_n = sample * sample
    vote_n = n * pv
    gossip_n = 3.0 * n * n * pp
    count = propose_n + dissem_n + vote_n + gossip_n
    extra_total = (1.0 + sample) * extra
    propose_b = (sample + extra) * sm.propose_bytes(n, txs)
    dissem_b = sample * (sample + extra) * sm.forward_bytes(txs)
    vote_b = vote_n * sm.vote_bytes()
    gossip_b = gossip_n * sm.forward_bytes(txs)
    breakdown = {
        "propose": {"count": propose_n, "bytes": propose_b},
        "disseminate": {"count": dissem_n, "bytes": dissem_b},
        "vote": {"count": vote_n, "bytes": vote_b},
        "propagate": {"count": gossip_n, "bytes": gossip_b},
    }
    return MessageCost(
        count,
        propose_b + dissem_b + vote_b + gossip_b,
        extra_total,
        propose_b,
        breakdown,
    )


def amortized_complexity(params: ProtocolParams, kappa: int) -> float:
    """Expected sends per process over the kappa epochs a block waits to
    commit: propose share, dissemination share, vote, and gossip."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    n, ps, pv, pp = params.n, params.p_sample, params.p_vote, params.p_prop
    return kappa * (ps + n * ps * ps + pv + 3.0 * n * pp)


# kappa selection


def smallest_kappa(violation, target: float, kappa_max: int = 64) -> int | None:
    """First kappa >= 2 whose violation probability is within target."""
    for kappa in range(2, kappa_max + 1):
        if violation(kappa).value <= target:
            return kappa
    return None


def kappa_table(
    params_list, epsilons, targets, mode: str = "exact"
) -> list[dict]:
    """Smallest safe commit depth per (parameter set, corruption, target)."""
    _check_mode(mode)
    rows = []
    for base in params_list:
        for eps in epsilons:
            p = base.with_epsilon(eps)
            for target in targets:
                kappa = smallest_kappa(
                    lambda kk: psync_safety_violation(p, kk, mode), target
                )
                rows.append(
                    {
                        "n": p.n,
                        "q": p.q,
                        "epsilon": eps,
                        "target": target,
                        "kappa": kappa,
                        "mode": mode,
                    }
                )
    return rows
