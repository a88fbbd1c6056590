"""Deterministic round-driven network simulator.

A run instantiates n protocol processes, steps them through fixed-length
rounds, and routes every message they emit. Messages sent in round r are
delivered as an unordered inbox batch at round r+1; under partial
synchrony, sends before the stabilization round are instead subject to a
scheduling policy (dropped, delivered to an adversary-chosen subset, or
queued until stabilization). Corrupted processes run the honest state
machine except where the adversary strategy substitutes its own behavior,
and the harness asserts that adversary-injected messages only ever carry
corrupted identities.

Everything is a pure function of the SimConfig: process keys, coin
outcomes, adversary sampling, and scheduling all derive from config.seed,
so identical configs produce identical traces byte for byte.

The run checks the safety predicates online every round: committable
ledgers of correct processes must stay pairwise prefix-comparable and
individually monotone, newly certified blocks must carry sound
certificates, and correct processes must vote at most once per epoch and
never against their lock.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from qscale import crypto, kernels, protocol, wire
from qscale.crypto import KeyRing, SizeModel
from qscale.params import PSYNC, SYNC, ProtocolParams, validate
from qscale.protocol import (
    CertifiedBlock,
    Hasher,
    ProcessState,
    Proposal,
    Vote,
    build_proposal,
    epoch_of_round,
    make_txs,
)

SCHEMA_VERSION = "1"

KINDS = ("propose", "disseminate", "vote", "propagate")
_KIND_INDEX = {k: i for i, k in enumerate(KINDS)}

PRE_GST_POLICIES = ("drop-to-correct", "adversary-chosen-subset", "delay-until-gst")


@dataclass(frozen=True, slots=True)
class Schedule:
    """Network timing model. gst_round and the policy apply only to the
    partially synchronous model; sends in rounds before gst_round are
    subject to the policy, later sends are delivered next round."""

    model: str = SYNC
    gst_round: int = 0
    pre_gst_policy: str = "drop-to-correct"


# adversary strategies; each controls only corrupted processes


@dataclass(frozen=True, slots=True)
class HonestAll:
    """Corrupted processes stay completely silent (crash-like baseline)."""


@dataclass(frozen=True, slots=True)
class SilentLeader:
    """Corrupted leaders skip their propose phase in the targeted epochs."""

    epochs: frozenset | None = None


@dataclass(frozen=True, slots=True)
class EquivocatingLeader:
    """Corrupted leaders issue two conflicting proposals, each to an
    independently drawn recipient sample plus the next leader."""

    epochs: frozenset | None = None


@dataclass(frozen=True, slots=True)
class VoteSuppressingLeader:
    """Corrupted leaders propose but never aggregate the previous epoch's
    votes, so their predecessor block stays uncertified."""

    epochs: frozenset | None = None


@dataclass(frozen=True, slots=True)
class AlwaysVotingByzantine:
    """Corrupted processes vote for every stored current-epoch proposal,
    every epoch, ignoring the vote coin."""


@dataclass(frozen=True, slots=True)
class BroadcastProposalByzantine:
    """Corrupted leaders send their (otherwise honest) proposal to all n."""

    epochs: frozenset | None = None


@dataclass(frozen=True, slots=True)
class Composite:
    """Combine strategies; on overlapping rounds the later entry wins."""

    parts: tuple


_STRATEGY_NAMES = {
    HonestAll: "honest-all",
    SilentLeader: "silent-leader",
    EquivocatingLeader: "equivocating-leader",
    VoteSuppressingLeader: "vote-suppressing-leader",
    AlwaysVotingByzantine: "always-voting-byzantine",
    BroadcastProposalByzantine: "broadcast-proposal-byzantine",
    Composite: "composite",
}


def strategy_name(strategy) -> str:
    name = _STRATEGY_NAMES.get(type(strategy))
    if name is None:
        raise ValueError(f"unknown adversary strategy {strategy!r}")
    if isinstance(strategy, Composite):
        return "composite(" + ",".join(strategy_name(p) for p in strategy.parts) + ")"
    return name


def parse_adversary(name: str):
    for cls, label in _STRATEGY_NAMES.items():
        if label == name and cls is not Composite:
            return cls()
    raise ValueError(
        f"unknown adversary {name!r}; choose from "
        + ", ".join(sorted(v for k, v in _STRATEGY_NAMES.items() if k is not Composite))
    )


@dataclass(frozen=True, slots=True)
class SimConfig:
    params: ProtocolParams
    seed: int
    rounds: int
    schedule: Schedule = Schedule()
    adversary: object = HonestAll()
    corrupted: frozenset = frozenset()
    record_events: bool = False  # keep per-event lists (memory-heavy on long runs)


def validate_config(config: SimConfig) -> list[str]:
    errors = list(validate(config.params).errors)
    if config.rounds < 1:
        errors.append("rounds must be at least 1")
    if not 0 <= config.seed < 2**64:
        errors.append("seed must fit in 64 bits")
    n, f = config.params.n, config.params.f
    corrupted = config.corrupted
    if len(corrupted) != f:
        errors.append(f"corrupted set has {len(corrupted)} ids, params.f is {f}")
    if any(not 1 <= pid <= n for pid in corrupted):
        errors.append("corrupted ids must be in [1, n]")
    sched = config.schedule
    if sched.model not in (SYNC, PSYNC):
        errors.append(f"unknown schedule model {sched.model!r}")
    if sched.gst_round < 0:
        errors.append("gst_round must be nonnegative")
    if sched.pre_gst_policy not in PRE_GST_POLICIES:
        errors.append(f"unknown pre-GST policy {sched.pre_gst_policy!r}")
    try:
        strategy_name(config.adversary)
    except ValueError as exc:
        errors.append(str(exc))
    return errors


class RoundTrace:
    """Columnar per-round metrics. Row r covers round r (rows start at 1).

    counts/bytes_by_kind record what was sent; delivered records what
    reached an inbox (the difference is pre-stabilization scheduling).
    Per-event lists are only populated when the run records events.
    """

    __slots__ = (
        "rounds",
        "n",
        "corrupted",
        "counts",
        "bytes_by_kind",
        "delivered",
        "proc_sends",
        "certifications",
        "commits",
        "cert_events",
        "commit_events",
    )

    def __init__(self, rounds: int, n: int, corrupted: frozenset, record: bool):
        self.rounds = rounds
        self.n = n
        self.corrupted = corrupted
        self.counts = np.zeros((rounds + 1, len(KINDS)), dtype=np.int64)
        self.bytes_by_kind = np.zeros((rounds + 1, len(KINDS)), dtype=np.int64)
        self.delivered = np.zeros((rounds + 1, len(KINDS)), dtype=np.int64)
        self.proc_sends = np.zeros(n + 1, dtype=np.int64)
        self.certifications = np.zeros(rounds + 1, dtype=np.int64)
        self.commits = np.zeros(rounds + 1, dtype=np.int64)
        self.cert_events: list | None = [] if record else None
        self.commit_events: list | None = [] if record else None

    def total_messages(self) -> int:
        return int(self.counts.sum())

    def total_bytes(self) -> int:
        return int(self.bytes_by_kind.sum())


@dataclass(slots=True)
class SafetyVerdict:
    violated: bool = False
    witness: tuple | None = None  # (pid_a, pid_b, ledger_a, ledger_b)
    invariant_violations: list = field(default_factory=list)


@dataclass(slots=True)
class LivenessReport:
    epochs_resolved: int
    epochs_certified: int
    certification_rate: float
    # an epoch is eligible when its proposer and its vote collector (the
    # next epoch's leader) are both correct; certification of other epochs
    # is at the adversary's whim, so rate comparisons condition on these
    epochs_eligible: int
    certified_eligible: int
    certification_rate_eligible: float
    blocks: dict  # block hash -> {epoch, height, commit_epoch, commit_round, delta}
    commits: int
    mean_commit_delta: float | None


class SimResult(NamedTuple):
    trace: RoundTrace
    safety: SafetyVerdict
    liveness: LivenessReport


def check_prefix(ledger_a, ledger_b) -> bool:
    """True iff one ledger's block-hash sequence is a prefix of the other's."""
    short, long_ = (ledger_a, ledger_b) if len(ledger_a) <= len(ledger_b) else (
        ledger_b,
        ledger_a,
    )
    for cb_s, cb_l in zip(short, long_):
        if crypto.hash_data(wire.encode_block(cb_s.block)) != crypto.hash_data(
            wire.encode_block(cb_l.block)
        ):
            return False
    return True


def _targets(epochs: frozenset | None, epoch: int) -> bool:
    return epochs is None or epoch in epochs


class _AdversaryDriver:
    """Interprets a strategy as per-(round, process) overrides.

    plan() returns (suppress_phase, mute, emitter) or None to leave the
    corrupted process fully honest this round. The emitter runs after the
    state machine stepped and returns extra messages to inject.
    """

    def __init__(self, config: SimConfig, rng: np.random.Generator):
        self.params = config.params
        self.corrupted = config.corrupted
        self.rng = rng

    def plan(self, strategy, round_no: int, epoch: int, state: ProcessState):
        if isinstance(strategy, HonestAll):
            return (True, True, None)
        if isinstance(strategy, SilentLeader):
            if self._leads(round_no, epoch, state, strategy.epochs):
                return (True, False, None)
            return None
        if isinstance(strategy, VoteSuppressingLeader):
            if self._leads(round_no, epoch, state, strategy.epochs):
                return (True, False, self._emit_without_cert)
            return None
        if isinstance(strategy, EquivocatingLeader):
            if self._leads(round_no, epoch, state, strategy.epochs):
                return (True, False, self._emit_equivocation)
            return None
        if isinstance(strategy, BroadcastProposalByzantine):
            if self._leads(round_no, epoch, state, strategy.epochs):
                return (True, False, self._emit_broadcast)
            return None
        if isinstance(strategy, AlwaysVotingByzantine):
            if round_no % 3 == 0:
                return (True, False, self._emit_all_votes)
            return None
        if isinstance(strategy, Composite):
            for part in reversed(strategy.parts):
                plan = self.plan(part, round_no, epoch, state)
                if plan is not None:
                    return plan
            return None
        raise ValueError(f"unknown adversary strategy {strategy!r}")

    @staticmethod
    def _leads(round_no: int, epoch: int, state: ProcessState, epochs) -> bool:
        return (
            round_no % 3 == 1
            and state.leader(epoch) == state.pid
            and _targets(epochs, epoch)
        )

    # emitters; all identities below belong to the corrupted process itself

    def _honest_dests(self, state: ProcessState, epoch: int) -> list:
        value = state.keys.vrf_value(state.pid, wire.seed_propose(epoch))
        h, ln = kernels.fold_prefix(value)
        pids = kernels.sample_pids(
            h, ln, self.params.n, kernels.coin_threshold(self.params.p_sample)
        )
        dests = set(map(int, pids))
        dests.add(state.leader(epoch + 1))
        return sorted(dests)

    def _rng_dests(self, state: ProcessState, epoch: int) -> list:
        draws = self.rng.random(self.params.n)
        dests = set((np.nonzero(draws < self.params.p_sample)[0] + 1).tolist())
        dests.add(state.leader(epoch + 1))
        return sorted(dests)

    def _emit_without_cert(self, state: ProcessState, round_no: int, epoch: int):
        # propose over the stale best certificate; no create_cert call
        p = build_proposal(state, epoch)
        state.on_propose(p)
        return [(d, "propose", p) for d in self._honest_dests(state, epoch)]

    def _emit_equivocation(self, state: ProcessState, round_no: int, epoch: int):
        state.create_cert(epoch)
        p_a = build_proposal(state, epoch)
        p_b = build_proposal(
            state,
            epoch,
            txs=make_txs(epoch, state.pid, self.params.txs_per_block, salt=b"alt"),
        )
        state.on_propose(p_a)
        state.on_propose(p_b)
        out = [(d, "propose", p_a) for d in self._rng_dests(state, epoch)]
        out.extend((d, "propose", p_b) for d in self._rng_dests(state, epoch))
        return out

    def _emit_broadcast(self, state: ProcessState, round_no: int, epoch: int):
        state.create_cert(epoch)
        p = build_proposal(state, epoch)
        state.on_propose(p)
        return [(d, "propose", p) for d in range(1, self.params.n + 1)]

    def _emit_all_votes(self, state: ProcessState, round_no: int, epoch: int):
        next_leader = state.leader(epoch + 1)
        vrf = state.keys.vrf_prove(state.pid, wire.seed_vote(epoch))
        out = []
        for phash in sorted(state.props_by_epoch.get(epoch, ())):
            sig = state.keys.sign(state.pid, phash)
            out.append((next_leader, "vote", Vote(epoch, phash, state.pid, sig, vrf)))
        return out

    def assert_contained(self, extra: list) -> None:
        for _, _, msg in extra:
            if isinstance(msg, Proposal):
                ids = (msg.leader, msg.leader_sig.signer, msg.vrf.prover)
            elif isinstance(msg, Vote):
                ids = (msg.voter, msg.sig.signer) + (
                    (msg.vrf.prover,) if msg.vrf is not None else ()
                )
            else:
                raise RuntimeError(f"adversary emitted unknown message {type(msg)}")
            for pid in ids:
                if pid not in self.corrupted:
                    raise RuntimeError(
                        f"adversary message carries correct identity {pid}"
                    )


class _Router:
    """Maps (send round, sender, destination) to a delivery round or None."""

    def __init__(self, config: SimConfig):
        self.schedule = config.schedule
        self.corrupted = config.corrupted
        self.seed = config.seed
        self.correct = np.array(
            [p for p in range(1, config.params.n + 1) if p not in config.corrupted]
        )
        self._subsets: dict[int, frozenset] = {}

    def deliver_round(self, round_no: int, sender: int, dest: int) -> int | None:
        sched = self.schedule
        if (
            sched.model == SYNC
            or round_no >= sched.gst_round
            or sender in self.corrupted
            or dest in self.corrupted
        ):
            return round_no + 1
        policy = sched.pre_gst_policy
        if policy == "delay-until-gst":
            return sched.gst_round + 1
        if policy == "drop-to-correct":
            return None
        if dest in self._subset(round_no):
            return round_no + 1
        return None

    def _subset(self, round_no: int) -> frozenset:
        cached = self._subsets.get(round_no)
        if cached is None:
            rng = np.random.default_rng([self.seed, 7, round_no])
            size = max(1, len(self.correct) // 2)
            cached = frozenset(rng.permutation(self.correct)[:size].tolist())
            self._subsets[round_no] = cached
        return cached


def _record_invariant(safety: SafetyVerdict, kind: str, round_no: int, pid: int, detail: str):
    safety.invariant_violations.append(
        {"kind": kind, "round": round_no, "pid": pid, "detail": detail}
    )


def run(config: SimConfig, inbox_shuffle_seed: int | None = None) -> SimResult:
    """Execute the configured run; see the module docstring for semantics.

    inbox_shuffle_seed randomly permutes every inbox before delivery; final
    states must not depend on it (processes treat inboxes as unordered).
    """
    errors = validate_config(config)
    if errors:
        raise ValueError("invalid simulation config: " + "; ".join(errors))
    params = config.params
    n, kappa = params.n, params.kappa
    corrupted = config.corrupted
    keys = KeyRing(n, config.seed)
    hasher = Hasher()
    states = [None] + [ProcessState(pid, params, keys, hasher) for pid in range(1, n + 1)]
    correct_pids = [p for p in range(1, n + 1) if p not in corrupted]
    driver = _AdversaryDriver(config, np.random.default_rng([config.seed, 3]))
    router = _Router(config)
    sm = SizeModel()
    kind_bytes = (
        sm.propose_bytes(n, params.txs_per_block),
        sm.forward_bytes(params.txs_per_block),
        sm.vote_bytes(),
        sm.forward_bytes(params.txs_per_block),
    )
    trace = RoundTrace(config.rounds, n, corrupted, config.record_events)
    safety = SafetyVerdict()
    shuffle_rng = (
        np.random.default_rng([config.seed, 13, inbox_shuffle_seed])
        if inbox_shuffle_seed is not None
        else None
    )

    pending: dict[int, dict[int, list]] = {}
    prev_tip: list = [None] * (n + 1)  # per pid: (tip hash, height)
    last_voted = [0] * (n + 1)
    first_commit: dict[bytes, tuple] = {}  # block hash -> (round, epoch)
    proposed: dict[bytes, protocol.Block] = {}
    certified_epochs: set[int] = set()
    q = params.q

    for round_no in range(1, config.rounds + 1):
        epoch = epoch_of_round(round_no)
        inboxes = pending.pop(round_no, {})
        for pid in range(1, n + 1):
            state = states[pid]
            inbox = inboxes.get(pid, [])
            if shuffle_rng is not None and len(inbox) > 1:
                inbox = [inbox[i] for i in shuffle_rng.permutation(len(inbox))]
            for msg in inbox:
                idx = 0 if isinstance(msg, Proposal) else 2
                trace.delivered[round_no, idx] += 1
            plan = (
                driver.plan(config.adversary, round_no, epoch, state)
                if pid in corrupted
                else None
            )
            if plan is None:
                out = state.step_round(round_no, inbox)
            else:
                suppress, mute, emitter = plan
                out = state.step_round(round_no, inbox, suppress_phase=suppress)
                if mute:
                    out = []
                if emitter is not None:
                    extra = emitter(state, round_no, epoch)
                    driver.assert_contained(extra)
                    out.extend(extra)

            if out:
                trace.proc_sends[pid] += len(out)
                for dest, kind, msg in out:
                    k = _KIND_INDEX[kind]
                    trace.counts[round_no, k] += 1
                    trace.bytes_by_kind[round_no, k] += kind_bytes[k]
                    if kind == "propose":
                        bhash = hasher.proposal(msg)[1]
                        proposed.setdefault(bhash, msg.block)
                    at = router.deliver_round(round_no, pid, dest)
                    if at is not None and at <= config.rounds:
                        pending.setdefault(at, {}).setdefault(dest, []).append(msg)

            if pid in corrupted:
                continue

            # per-round invariants at correct processes
            for bhash in state.new_certs_this_round:
                cb = state.certified[bhash]
                phash = state.props_by_block.get(bhash)
                cert = cb.cert
                sound = (
                    phash is not None
                    and len(cert.signers) >= q
                    and cert.sig.signers == cert.signers
                    and keys.validate_multi_digest(crypto.hash_data(phash), cert.sig)
                )
                if not sound:
                    _record_invariant(
                        safety, "certificate-soundness", round_no, pid,
                        f"block {bhash.hex()[:16]} certified without a valid quorum",
                    )
                certified_epochs.add(cb.block.epoch)
                if trace.cert_events is not None:
                    trace.cert_events.append((round_no, pid, bhash))
            trace.certifications[round_no] += len(state.new_certs_this_round)

            votes_out = [m for _, kind, m in out if kind == "vote"]
            if votes_out:
                phashes = {v.proposal_hash for v in votes_out}
                v_epoch = votes_out[0].epoch
                if len(phashes) > 1:
                    _record_invariant(
                        safety, "one-vote-per-epoch", round_no, pid,
                        "voted for two proposals in one epoch",
                    )
                if last_voted[pid] >= v_epoch and last_voted[pid] != 0:
                    _record_invariant(
                        safety, "one-vote-per-epoch", round_no, pid,
                        f"voted twice in epoch {v_epoch}",
                    )
                last_voted[pid] = v_epoch
                p = state.proposals.get(next(iter(phashes)))
                if p is not None:
                    h = p.block.height
                    if state.max_cert_height >= h and state._locked_against(p, h):
                        _record_invariant(
                            safety, "lock-rule", round_no, pid,
                            f"voted at height {h} against a certified block",
                        )

        # ledger safety across correct processes
        if not safety.violated:
            tips: dict[bytes, int] = {}
            for pid in correct_pids:
                state = states[pid]
                tip = state.ledger_tip(kappa)
                prev = prev_tip[pid]
                if tip is None:
                    if prev is not None:
                        _record_invariant(
                            safety, "ledger-monotonicity", round_no, pid,
                            "committable ledger disappeared",
                        )
                    continue
                height = state.certified[tip].block.height
                if prev is not None:
                    pt, ph = prev
                    if height < ph or state.ancestor_at(tip, ph) != pt:
                        _record_invariant(
                            safety, "ledger-monotonicity", round_no, pid,
                            f"tip at height {height} does not extend height {ph}",
                        )
                if prev is None or tip != prev[0]:
                    trace.commits[round_no] += 1
                    if trace.commit_events is not None:
                        trace.commit_events.append((round_no, pid, tip, height))
                    floor_h = prev[1] if prev is not None else 0
                    walk = tip
                    while walk is not None:
                        blk = state.certified[walk].block
                        if blk.height <= floor_h:
                            break
                        if walk not in first_commit:
                            first_commit[walk] = (round_no, epoch)
                        walk = blk.parent_hash if blk.height > 0 else None
                prev_tip[pid] = (tip, height)
                tips.setdefault(tip, pid)
            if len(tips) > 1:
                items = sorted(tips.items(), key=lambda kv: kv[1])
                for i in range(len(items)):
                    for j in range(i + 1, len(items)):
                        (tip_a, pid_a), (tip_b, pid_b) = items[i], items[j]
                        sa, sb = states[pid_a], states[pid_b]
                        ha = sa.certified[tip_a].block.height
                        hb = sb.certified[tip_b].block.height
                        if ha <= hb:
                            ok = sb.ancestor_at(tip_b, ha) == tip_a
                        else:
                            ok = sa.ancestor_at(tip_a, hb) == tip_b
                        if not ok:
                            safety.violated = True
                            safety.witness = (
                                pid_a,
                                pid_b,
                                sa.get_ledger(kappa),
                                sb.get_ledger(kappa),
                            )
                            break
                    if safety.violated:
                        break

    resolved = max(0, (config.rounds - 1) // 3)
    certified_in_window = sum(1 for e in certified_epochs if 1 <= e <= resolved)
    eligible = [
        e
        for e in range(1, resolved + 1)
        if protocol.round_robin_leader(e, n) not in corrupted
        and protocol.round_robin_leader(e + 1, n) not in corrupted
    ]
    certified_eligible = sum(1 for e in eligible if e in certified_epochs)
    blocks = {}
    deltas = []
    for bhash, blk in proposed.items():
        fc = first_commit.get(bhash)
        entry = {
            "epoch": blk.epoch,
            "height": blk.height,
            "commit_round": fc[0] if fc else None,
            "commit_epoch": fc[1] if fc else None,
            "delta": (fc[1] - blk.epoch) if fc else None,
        }
        if fc:
            deltas.append(entry["delta"])
        blocks[bhash] = entry
    liveness = LivenessReport(
        epochs_resolved=resolved,
        epochs_certified=certified_in_window,
        certification_rate=certified_in_window / resolved if resolved else 0.0,
        epochs_eligible=len(eligible),
        certified_eligible=certified_eligible,
        certification_rate_eligible=(
            certified_eligible / len(eligible) if eligible else 0.0
        ),
        blocks=blocks,
        commits=len(deltas),
        mean_commit_delta=float(np.mean(deltas)) if deltas else None,
    )
    return SimResult(trace, safety, liveness)


# batch running and reporting


@dataclass(frozen=True, slots=True)
class RunSummary:
    seed: int
    violated: bool
    invariant_violations: int
    certification_rate: float
    commits: int
    mean_commit_delta: float | None
    messages_per_epoch: float
    bytes_per_epoch: float
    mean_process_sends_per_epoch: float


def summarize(config: SimConfig, result: SimResult) -> RunSummary:
    epochs = config.rounds / 3.0
    trace = result.trace
    return RunSummary(
        seed=config.seed,
        violated=result.safety.violated,
        invariant_violations=len(result.safety.invariant_violations),
        certification_rate=result.liveness.certification_rate,
        commits=result.liveness.commits,
        mean_commit_delta=result.liveness.mean_commit_delta,
        messages_per_epoch=trace.total_messages() / epochs,
        bytes_per_epoch=trace.total_bytes() / epochs,
        mean_process_sends_per_epoch=float(trace.proc_sends[1:].mean()) / epochs,
    )


def run_many(configs, parallelism: int = 1) -> list[SimResult]:
    """Execute independent runs, optionally across worker processes."""
    configs = list(configs)
    if parallelism > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(run, configs))
    return [run(c) for c in configs]


@dataclass(frozen=True, slots=True)
class BatchReport:
    runs: tuple
    aggregate: dict


def run_batch(configs, parallelism: int = 1) -> BatchReport:
    """Independent runs plus mean/variance aggregation across them."""
    configs = list(configs)
    results = run_many(configs, parallelism)
    summaries = [summarize(c, r) for c, r in zip(configs, results)]
    if not summaries:
        return BatchReport((), {"runs": 0})
    rates = np.array([s.certification_rate for s in summaries])
    msgs = np.array([s.messages_per_epoch for s in summaries])
    deltas = [s.mean_commit_delta for s in summaries if s.mean_commit_delta is not None]
    aggregate = {
        "runs": len(summaries),
        "violated_any": any(s.violated for s in summaries),
        "certification_rate_mean": float(rates.mean()),
        "certification_rate_var": float(rates.var()),
        "messages_per_epoch_mean": float(msgs.mean()),
        "messages_per_epoch_var": float(msgs.var()),
        "commit_delta_mean": float(np.mean(deltas)) if deltas else None,
    }
    return BatchReport(tuple(summaries), aggregate)


# export

TRACE_CSV_HEADER = (
    "round,propose_count,disseminate_count,vote_count,propagate_count,"
    "propose_bytes,disseminate_bytes,vote_bytes,propagate_bytes,"
    "delivered_proposals,delivered_votes,certifications,commits"
)


def trace_csv_lines(trace: RoundTrace):
    """One CSV row per round; header first."""
    yield TRACE_CSV_HEADER
    for r in range(1, trace.rounds + 1):
        c = trace.counts[r]
        b = trace.bytes_by_kind[r]
        d = trace.delivered[r]
        yield (
            f"{r},{c[0]},{c[1]},{c[2]},{c[3]},"
            f"{b[0]},{b[1]},{b[2]},{b[3]},"
            f"{d[0]},{d[2]},{trace.certifications[r]},{trace.commits[r]}"
        )


def write_trace_csv(trace: RoundTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in trace_csv_lines(trace):
            fh.write(line + "\n")


def _ledger_digest(ledger) -> list:
    return [
        {
            "epoch": cb.block.epoch,
            "height": cb.block.height,
            "hash": crypto.hash_data(wire.encode_block(cb.block)).hex(),
        }
        for cb in ledger
    ]


def result_to_json(config: SimConfig, result: SimResult) -> dict:
    """Full structured report; stable key order for reproducible files."""
    trace, safety, liveness = result
    witness = None
    if safety.witness is not None:
        pid_a, pid_b, ledger_a, ledger_b = safety.witness
        witness = {
            "pid_a": pid_a,
            "pid_b": pid_b,
            "ledger_a": _ledger_digest(ledger_a),
            "ledger_b": _ledger_digest(ledger_b),
        }
    summary = summarize(config, result)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "params": asdict(config.params),
            "seed": config.seed,
            "rounds": config.rounds,
            "schedule": {
                "model": config.schedule.model,
                "gst_round": config.schedule.gst_round,
                "pre_gst_policy": config.schedule.pre_gst_policy,
            },
            "adversary": strategy_name(config.adversary),
            "corrupted": sorted(config.corrupted),
        },
        "summary": {
            "violated": summary.violated,
            "invariant_violations": summary.invariant_violations,
            "certification_rate": summary.certification_rate,
            "commits": summary.commits,
            "mean_commit_delta": summary.mean_commit_delta,
            "messages_per_epoch": summary.messages_per_epoch,
            "bytes_per_epoch": summary.bytes_per_epoch,
            "mean_process_sends_per_epoch": summary.mean_process_sends_per_epoch,
        },
        "safety": {
            "violated": safety.violated,
            "witness": witness,
            "invariant_violations": safety.invariant_violations,
        },
        "liveness": {
            "epochs_resolved": liveness.epochs_resolved,
            "epochs_certified": liveness.epochs_certified,
            "certification_rate": liveness.certification_rate,
            "epochs_eligible": liveness.epochs_eligible,
            "certified_eligible": liveness.certified_eligible,
            "certification_rate_eligible": liveness.certification_rate_eligible,
            "commits": liveness.commits,
            "mean_commit_delta": liveness.mean_commit_delta,
            "blocks": {
                bhash.hex(): entry for bhash, entry in sorted(liveness.blocks.items())
            },
        },
        "per_process_sends": trace.proc_sends[1:].tolist(),
    }


def write_result_json(config: SimConfig, result: SimResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result_to_json(config, result), fh, indent=2, sort_keys=True)
        fh.write("\n")
