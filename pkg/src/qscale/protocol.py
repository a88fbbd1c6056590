"""Per-process consensus state machine.

Epochs span three rounds: propose (round % 3 == 1), disseminate (== 2),
vote (== 0). The leader of epoch e aggregates votes for the epoch e-1
proposal into a certificate, extends its highest certified block, and
sends the new proposal to a VRF-selected sample plus the next leader.
Sample members relay it to fresh samples of their own; every process
additionally gossips its highest proposal from completed epochs to a
small random set each round (the current epoch's proposal spreads only
through the relay step, so the set of potential voters is exactly the
relays' coverage). A process votes when the vote round delivered it
exactly one valid proposal for the current epoch, its private p_vote
coin fires, nothing certified sits at or above the proposal's height,
and the proposal's whole ancestry is certified. A block is final for a
client once kappa certified descendants from consecutive epochs sit on
top of it and nothing conflicting is certified at its height.

step_round is deterministic in (state, round, inbox) and processes the
inbox as an unordered batch: messages are canonically sorted, proposals
are admitted first (buffering ones whose parent has not arrived yet),
votes second. Inbox processing happens before the round counters advance
because delivery semantically occurs while the previous round is closing;
this is what lets votes cast in the last round of epoch e reach the epoch
e+1 leader in time for its propose step.
"""

from __future__ import annotations

from dataclasses import dataclass
from hashlib import blake2b

from qscale import crypto, kernels, wire
from qscale.crypto import KeyRing, MultiSignature, Signature, VrfOutput
from qscale.params import ProtocolParams

ZERO_HASH = b"\x00" * crypto.HASH_BYTES
TX_BYTES = 250


@dataclass(frozen=True, slots=True)
class Block:
    epoch: int
    height: int
    parent_hash: bytes
    txs: tuple[bytes, ...]


@dataclass(frozen=True, slots=True)
class Certificate:
    signers: tuple[int, ...]
    sig: MultiSignature


@dataclass(frozen=True, slots=True)
class CertifiedBlock:
    block: Block
    cert: Certificate


@dataclass(frozen=True, slots=True)
class Proposal:
    block: Block
    parent_cert: Certificate
    vrf: VrfOutput
    leader: int
    leader_sig: Signature


@dataclass(frozen=True, slots=True)
class Vote:
    epoch: int
    proposal_hash: bytes
    voter: int
    sig: Signature
    vrf: VrfOutput | None


GENESIS_BLOCK = Block(0, 0, ZERO_HASH, ())
GENESIS_BLOCK_HASH = crypto.hash_data(wire.encode_block(GENESIS_BLOCK))
# The genesis certificate is a distinguished constant accepted only for the
# genesis block; it validates by convention, not by signature checking.
GENESIS_CERT = Certificate(
    (), MultiSignature(GENESIS_BLOCK_HASH, (), b"\x00" * 48)
)
GENESIS_CERTIFIED = CertifiedBlock(GENESIS_BLOCK, GENESIS_CERT)


def round_robin_leader(epoch: int, n: int) -> int:
    """Deterministic rotation over process ids 1..n."""
    return ((epoch - 1) % n) + 1


def epoch_of_round(round_no: int) -> int:
    return (round_no + 2) // 3


def make_txs(
    epoch: int, pid: int, count: int, tx_bytes: int = TX_BYTES, salt: bytes = b""
) -> tuple:
    """Synthetic distinct payloads of the declared transaction size."""
    out = []
    for i in range(count):
        seed = wire.u32(epoch) + wire.u32(pid) + wire.u32(i) + salt
        stream = blake2b(seed, digest_size=32).digest()
        out.append((stream * (tx_bytes // 32 + 1))[:tx_bytes])
    return tuple(out)


class Hasher:
    """Shared proposal/block hash memo.

    Hashes are pure functions of the object's canonical encoding; the memo
    keys on object identity and pins a strong reference so ids stay valid.
    Sharing one Hasher across all processes of a simulation makes each
    distinct message get hashed once instead of once per recipient.
    """

    __slots__ = ("_props", "_blocks")

    def __init__(self):
        self._props: dict = {}
        self._blocks: dict = {GENESIS_BLOCK_HASH: None}

    def proposal(self, p: Proposal) -> tuple[bytes, bytes]:
        """(proposal hash, block hash) for a Proposal."""
        ent = self._props.get(id(p))
        if ent is not None and ent[2] is p:
            return ent[0], ent[1]
        phash = crypto.hash_data(wire.encode_proposal(p))
        bhash = crypto.hash_data(wire.encode_block(p.block))
        self._props[id(p)] = (phash, bhash, p)
        return phash, bhash

    def block(self, b: Block) -> bytes:
        if b is GENESIS_BLOCK:
            return GENESIS_BLOCK_HASH
        return crypto.hash_data(wire.encode_block(b))


def build_proposal(state: "ProcessState", epoch: int, txs: tuple | None = None) -> Proposal:
    """Signed proposal extending the state's best certified block."""
    parent_bhash, parent = state.best_certified()
    if txs is None:
        txs = make_txs(epoch, state.pid, state.params.txs_per_block)
    blk = Block(epoch, parent.block.height + 1, parent_bhash, txs)
    vrf = state.keys.vrf_prove(state.pid, wire.seed_propose(epoch))
    body = (
        wire.encode_block(blk)
        + wire.encode_certificate(parent.cert)
        + wire.encode_vrf(vrf)
    )
    return Proposal(blk, parent.cert, vrf, state.pid, state.keys.sign(state.pid, body))


def _is_bytes_tuple(txs) -> bool:
    return isinstance(txs, tuple) and all(isinstance(t, bytes) for t in txs)


def _sane_block(b) -> bool:
    return (
        isinstance(b, Block)
        and isinstance(b.epoch, int)
        and isinstance(b.height, int)
        and b.epoch >= 1
        and b.height >= 1
        and isinstance(b.parent_hash, bytes)
        and len(b.parent_hash) == crypto.HASH_BYTES
        and _is_bytes_tuple(b.txs)
    )


def _sane_proposal(p) -> bool:
    return (
        isinstance(p, Proposal)
        and _sane_block(p.block)
        and isinstance(p.parent_cert, Certificate)
        and isinstance(p.parent_cert.signers, tuple)
        and isinstance(p.parent_cert.sig, MultiSignature)
        and isinstance(p.vrf, VrfOutput)
        and isinstance(p.leader, int)
        and isinstance(p.leader_sig, Signature)
    )


def _sane_vote(v) -> bool:
    return (
        isinstance(v, Vote)
        and isinstance(v.epoch, int)
        and v.epoch >= 1
        and isinstance(v.proposal_hash, bytes)
        and len(v.proposal_hash) == crypto.HASH_BYTES
        and isinstance(v.voter, int)
        and isinstance(v.sig, Signature)
        and (v.vrf is None or isinstance(v.vrf, VrfOutput))
    )


class ProcessState:
    """Single process: all protocol-local variables plus lookup indices.

    The indices (by block hash, by height, consecutive-epoch run lengths)
    are derivable from `proposals` and `certified` and exist to keep the
    per-round work constant-ish; nothing reads them that could not recompute
    from scratch.
    """

    __slots__ = (
        "pid",
        "params",
        "keys",
        "hasher",
        "leader_fn",
        "cur_round",
        "cur_epoch",
        "voted",
        "proposals",
        "props_by_epoch",
        "props_by_block",
        "pending_parent",
        "votes",
        "certified",
        "by_height",
        "downrun",
        "max_cert_height",
        "_best_cert",
        "_epoch_best",
        "_gossip_best",
        "_delivered_props",
        "_certify_queue",
        "cert_version",
        "new_certs_this_round",
        "cert_created_this_round",
        "_ledger_cache",
    )

    def __init__(
        self,
        pid: int,
        params: ProtocolParams,
        keys: KeyRing,
        hasher: Hasher | None = None,
        leader_fn=round_robin_leader,
    ):
        self.pid = pid
        self.params = params
        self.keys = keys
        self.hasher = hasher if hasher is not None else Hasher()
        self.leader_fn = leader_fn
        self.cur_round = 0
        self.cur_epoch = 0
        self.voted = False
        self.proposals: dict[bytes, Proposal] = {}
        self.props_by_epoch: dict[int, list[bytes]] = {}
        self.props_by_block: dict[bytes, bytes] = {}
        self.pending_parent: dict[bytes, list[Proposal]] = {}
        self.votes: dict[bytes, dict[int, Vote]] = {}
        self.certified: dict[bytes, CertifiedBlock] = {
            GENESIS_BLOCK_HASH: GENESIS_CERTIFIED
        }
        self.by_height: dict[int, list[bytes]] = {0: [GENESIS_BLOCK_HASH]}
        self.downrun: dict[bytes, int] = {GENESIS_BLOCK_HASH: 0}
        self.max_cert_height = 0
        self._best_cert = (0, 0, GENESIS_BLOCK_HASH)  # (height, epoch, hash)
        self._epoch_best: dict[int, tuple] = {}  # epoch -> (height, epoch, phash)
        self._gossip_best: tuple | None = None  # best among completed epochs
        self._delivered_props: set[bytes] = set()  # this round's fresh arrivals
        self._certify_queue: list[Proposal] = []
        self.cert_version = 0
        self.new_certs_this_round: list[bytes] = []
        self.cert_created_this_round: tuple | None = None
        self._ledger_cache: dict[int, tuple] = {}

    # helpers

    def leader(self, epoch: int) -> int:
        return self.leader_fn(epoch, self.params.n)

    def best_certified(self) -> tuple[bytes, CertifiedBlock]:
        """Highest certified block (ties to smaller epoch, then hash)."""
        bhash = self._best_cert[2]
        return bhash, self.certified[bhash]

    def get_sample(self, prob: float, seed: bytes):
        """VRF-seeded sample: ids j with coin(S || j, prob), S = own VRF value."""
        out = self.keys.vrf_prove(self.pid, seed)
        h, ln = kernels.fold_prefix(out.value)
        pids = kernels.sample_pids(h, ln, self.params.n, kernels.coin_threshold(prob))
        return pids, out

    # inbox handlers

    def _admit_proposal(self, p: Proposal) -> bytes | None:
        """Validate and store one proposal; returns its block hash when stored.

        Proposals whose parent proposal is unknown are buffered and retried
        when the parent shows up, so delivery order cannot permanently
        reject a valid proposal. All other failures drop the message.
        """
        if not _sane_proposal(p):
            return None
        phash, bhash = self.hasher.proposal(p)
        if phash in self.proposals:
            return None
        blk = p.block
        if p.leader != self.leader(blk.epoch):
            return None
        if not self.keys.verify(wire.encode_proposal_body(p), p.leader_sig, p.leader):
            return None
        cert = p.parent_cert
        if blk.parent_hash == GENESIS_BLOCK_HASH:
            if blk.height != 1 or cert != GENESIS_CERT:
                return None
        else:
            parent_phash = self.props_by_block.get(blk.parent_hash)
            if parent_phash is None:
                self.pending_parent.setdefault(blk.parent_hash, []).append(p)
                return None
            parent = self.proposals[parent_phash]
            if blk.height != parent.block.height + 1:
                return None
            if len(cert.signers) < self.params.q:
                return None
            if cert.sig.signers != cert.signers:
                return None
            if not self.keys.validate_multi_digest(
                crypto.hash_data(parent_phash), cert.sig
            ):
                return None
        self.proposals[phash] = p
        self.props_by_block[bhash] = phash
        self.props_by_epoch.setdefault(blk.epoch, []).append(phash)
        self._certify_queue.append(p)
        cand = (blk.height, blk.epoch, phash)
        if blk.epoch < self.cur_epoch:
            if self._gossip_best is None or self._prop_beats(cand, self._gossip_best):
                self._gossip_best = cand
        else:
            best = self._epoch_best.get(blk.epoch)
            if best is None or self._prop_beats(cand, best):
                self._epoch_best[blk.epoch] = cand
        return bhash

    @staticmethod
    def _prop_beats(cand: tuple, best: tuple) -> bool:
        # greatest height; ties to the smaller epoch, then lexicographic hash
        if cand[0] != best[0]:
            return cand[0] > best[0]
        if cand[1] != best[1]:
            return cand[1] < best[1]
        return cand[2] < best[2]

    def on_propose(self, p: Proposal) -> None:
        """Admit a proposal, waking any buffered children transitively."""
        stack = [p]
        while stack:
            stored = self._admit_proposal(stack.pop())
            if stored is not None:
                woken = self.pending_parent.pop(stored, None)
                if woken:
                    stack.extend(woken)

    def valid_proposal(self, p: Proposal) -> bool:
        """Acceptance check without storing; parent-missing reports False."""
        if not _sane_proposal(p):
            return False
        phash, _ = self.hasher.proposal(p)
        if phash in self.proposals:
            return True
        blk = p.block
        if p.leader != self.leader(blk.epoch):
            return False
        if not self.keys.verify(wire.encode_proposal_body(p), p.leader_sig, p.leader):
            return False
        cert = p.parent_cert
        if blk.parent_hash == GENESIS_BLOCK_HASH:
            return blk.height == 1 and cert == GENESIS_CERT
        parent_phash = self.props_by_block.get(blk.parent_hash)
        if parent_phash is None:
            return False
        parent = self.proposals[parent_phash]
        return (
            blk.height == parent.block.height + 1
            and len(cert.signers) >= self.params.q
            and cert.sig.signers == cert.signers
            and self.keys.validate_multi_digest(
                crypto.hash_data(parent_phash), cert.sig
            )
        )

    def _vote_coin_fires(self, voter: int, vrf_value: bytes) -> bool:
        h, ln = kernels.fold_prefix(vrf_value)
        return kernels.coin_one(
            h, ln, voter, kernels.coin_threshold(self.params.p_vote)
        )

    def on_vote(self, v: Vote) -> None:
        """Store a vote when this process will lead epoch v.epoch + 1.

        Requires the vote's epoch to be current and its proposal known.
        With verify_vote_proofs, the voter's VRF output for the epoch's
        vote coin must verify and actually clear p_vote.
        """
        if not _sane_vote(v):
            return
        if v.epoch != self.cur_epoch:
            return
        if self.leader(v.epoch + 1) != self.pid and not self._voteset_member(v.epoch):
            return
        if v.proposal_hash not in self.proposals:
            return
        if not 1 <= v.voter <= self.params.n:
            return
        if not self.keys.verify(v.proposal_hash, v.sig, v.voter):
            return
        if self.params.verify_vote_proofs:
            if v.vrf is None or v.vrf.prover != v.voter:
                return
            if not self.keys.vrf_verify(wire.seed_vote(v.epoch), v.vrf):
                return
            if not self._vote_coin_fires(v.voter, v.vrf.value):
                return
        bucket = self.votes.setdefault(v.proposal_hash, {})
        if v.voter not in bucket:
            bucket[v.voter] = v

    def _voteset_member(self, epoch: int) -> bool:
        """Membership in the epoch-common vote-forwarding sample."""
        if not self.params.vote_forwarding:
            return False
        s = crypto.hash_data(wire.seed_voteset(epoch))
        h, ln = kernels.fold_prefix(s)
        return kernels.coin_one(
            h, ln, self.pid, kernels.coin_threshold(self.params.p_sample)
        )

    def process_inbox(self, inbox) -> None:
        """Handle one round's deliveries as an unordered batch.

        Proposals first (canonically sorted, buffered-parent aware), votes
        second, so any permutation of the inbox yields the same state.
        Anything malformed is dropped.
        """
        if not inbox:
            return
        props = []
        votes = []
        for msg in inbox:
            if isinstance(msg, Proposal):
                if _sane_proposal(msg):
                    props.append(msg)
            elif isinstance(msg, Vote):
                if _sane_vote(msg):
                    votes.append(msg)
        if props:
            props.sort(key=lambda p: (p.block.epoch, self.hasher.proposal(p)[0]))
            for p in props:
                self.on_propose(p)
                phash = self.hasher.proposal(p)[0]
                if phash in self.proposals:
                    self._delivered_props.add(phash)
        if votes:
            votes.sort(key=lambda v: (v.epoch, v.proposal_hash, v.voter))
            # vote forwarding can aggregate as soon as a quorum is stored
            for v in votes:
                self.on_vote(v)
            if self.params.vote_forwarding:
                self._aggregate_forwarded()

    def _aggregate_forwarded(self) -> None:
        """Vote-forwarding collectors certify once q matching votes arrive."""
        self.try_to_certify()  # parents first, so run lengths chain correctly
        for phash, bucket in list(self.votes.items()):
            if len(bucket) < self.params.q:
                continue
            p = self.proposals.get(phash)
            if p is None:
                continue
            bhash = self.hasher.proposal(p)[1]
            if bhash in self.certified:
                continue
            self._add_certified(CertifiedBlock(p.block, self._build_cert(bucket)))

    def _build_cert(self, bucket: dict[int, Vote]) -> Certificate:
        voters = sorted(bucket)
        multi = self.keys.aggregate([bucket[v].sig for v in voters])
        return Certificate(tuple(voters), multi)

    # certification and ledger

    def _add_certified(self, cb: CertifiedBlock) -> bool:
        bhash = self.hasher.block(cb.block)
        if bhash in self.certified:
            return False
        self.certified[bhash] = cb
        self.by_height.setdefault(cb.block.height, []).append(bhash)
        parent = self.certified.get(cb.block.parent_hash)
        run = 1
        if parent is not None and parent.block.epoch + 1 == cb.block.epoch:
            run = self.downrun[cb.block.parent_hash] + 1
        self.downrun[bhash] = run
        if cb.block.height > self.max_cert_height:
            self.max_cert_height = cb.block.height
        cand = (cb.block.height, cb.block.epoch, bhash)
        if self._cert_beats(cand, self._best_cert):
            self._best_cert = cand
        self.cert_version += 1
        self.new_certs_this_round.append(bhash)
        return True

    @staticmethod
    def _cert_beats(cand: tuple, best: tuple) -> bool:
        if cand[0] != best[0]:
            return cand[0] > best[0]
        if cand[1] != best[1]:
            return cand[1] < best[1]
        return cand[2] < best[2]

    def try_to_certify(self) -> None:
        """Certify parents of stored certificate-bearing proposals, to fixpoint.

        Drains in admission order: a parent proposal always enters the queue
        before its children, so parent blocks certify first and every
        consecutive-epoch run length builds on its parent's.
        """
        while self._certify_queue:
            batch = self._certify_queue
            self._certify_queue = []
            for p in batch:
                parent_bhash = p.block.parent_hash
                if parent_bhash == GENESIS_BLOCK_HASH:
                    continue
                if parent_bhash in self.certified:
                    continue
                parent_phash = self.props_by_block.get(parent_bhash)
                if parent_phash is None:
                    continue
                parent = self.proposals[parent_phash]
                self._add_certified(CertifiedBlock(parent.block, p.parent_cert))

    def create_cert(self, epoch: int) -> None:
        """Aggregate stored votes for an epoch-1 proposal into a certificate.

        Run by the epoch's leader at the top of its propose round. When two
        conflicting proposals both reach q votes, the one with more votes
        (ties to the smaller hash) is certified, and only one is.
        """
        best = None
        for phash in self.props_by_epoch.get(epoch - 1, ()):
            bucket = self.votes.get(phash)
            if bucket is None or len(bucket) < self.params.q:
                continue
            key = (-len(bucket), phash)
            if best is None or key < best[0]:
                best = (key, phash, bucket)
        if best is None:
            return
        _, phash, bucket = best
        p = self.proposals[phash]
        bhash = self.hasher.proposal(p)[1]
        if bhash in self.certified:
            return
        cb = CertifiedBlock(p.block, self._build_cert(bucket))
        if self._add_certified(cb):
            self.cert_created_this_round = (p.block.epoch, phash, bhash)

    def ancestor_at(self, bhash: bytes, height: int) -> bytes | None:
        """Hash of the certified ancestor at `height`, walking parent links."""
        cb = self.certified.get(bhash)
        while cb is not None and cb.block.height > height:
            bhash = cb.block.parent_hash
            cb = self.certified.get(bhash)
        if cb is None or cb.block.height != height:
            return None
        return bhash

    def _conflict_at(self, bhash: bytes) -> bool:
        """A certified block with different payload at the same height."""
        blk = self.certified[bhash].block
        for other in self.by_height.get(blk.height, ()):
            if other != bhash and self.certified[other].block.txs != blk.txs:
                return True
        return False

    def ledger_tip(self, kappa: int) -> bytes | None:
        """Block hash ending the longest committable prefix, or None.

        The tip B_1 must carry kappa-1 certified descendants from
        consecutive epochs (and, by parent links, consecutive heights),
        and no certified block with different payload may exist at B_1's
        height.
        """
        if kappa < 1:
            raise ValueError("kappa must be >= 1")
        cached = self._ledger_cache.get(kappa)
        if cached is not None and cached[0] == self.cert_version:
            return cached[1]
        tip = None
        floor_h = kappa  # a run of kappa real blocks tops out at height >= kappa
        if cached is not None and cached[1] is not None:
            prev_height = self.certified[cached[1]].block.height + kappa - 1
            floor_h = max(floor_h, prev_height)
        for h in range(self.max_cert_height, floor_h - 1, -1):
            row = self.by_height.get(h)
            if not row:
                continue
            for top in sorted(row):
                if self.downrun.get(top, 0) < kappa:
                    continue
                b1 = self.ancestor_at(top, h - kappa + 1)
                if b1 is None or self._conflict_at(b1):
                    continue
                tip = b1
                break
            if tip is not None:
                break
        if tip is None and cached is not None and cached[1] is not None:
            # nothing above the old tip; keep it if it still qualifies
            old = cached[1]
            oh = self.certified[old].block.height
            for h in range(oh + kappa - 1, kappa - 1, -1):
                row = self.by_height.get(h)
                if not row:
                    continue
                for top in sorted(row):
                    if self.downrun.get(top, 0) < kappa:
                        continue
                    b1 = self.ancestor_at(top, h - kappa + 1)
                    if b1 is None or self._conflict_at(b1):
                        continue
                    tip = b1
                    break
                if tip is not None:
                    break
        self._ledger_cache[kappa] = (self.cert_version, tip)
        return tip

    def get_ledger(self, kappa: int) -> list[CertifiedBlock] | None:
        """Materialized committable chain from genesis up, or None."""
        tip = self.ledger_tip(kappa)
        if tip is None:
            return None
        chain = []
        bhash = tip
        while True:
            cb = self.certified[bhash]
            chain.append(cb)
            if cb.block.height == 0:
                break
            bhash = cb.block.parent_hash
        chain.reverse()
        return chain

    # phase predicates

    def can_disseminate(self, p: Proposal) -> bool:
        """Leader VRF verifies and this process is in that sample."""
        seed = wire.seed_propose(p.block.epoch)
        if p.vrf.prover != p.leader or not self.keys.vrf_verify(seed, p.vrf):
            return False
        h, ln = kernels.fold_prefix(p.vrf.value)
        return kernels.coin_one(
            h, ln, self.pid, kernels.coin_threshold(self.params.p_sample)
        )

    def can_vote(self, p: Proposal) -> tuple[bool, VrfOutput | None]:
        """Private coin, lock rule, one vote per epoch, certified ancestry."""
        if self.voted:
            return False, None
        seed = wire.seed_vote(p.block.epoch)
        value = self.keys.vrf_value(self.pid, seed)
        if not self._vote_coin_fires(self.pid, value):
            return False, None
        h = p.block.height
        if self.max_cert_height >= h and self._locked_against(p, h):
            return False, None
        if p.block.parent_hash not in self.certified:
            return False, None
        return True, self.keys.vrf_prove(self.pid, seed)

    def _locked_against(self, p: Proposal, h: int) -> bool:
        """A certified block at height >= h blocks the vote.

        With lock_excludes_ancestors, blocks on the proposal's own ancestor
        chain are skipped (ancestors sit strictly below h under intact
        parent links, so the two readings differ only in corrupted states).
        """
        if not self.params.lock_excludes_ancestors:
            return True  # max_cert_height >= h already checked
        ancestors = None
        for height in range(h, self.max_cert_height + 1):
            for bhash in self.by_height.get(height, ()):
                if ancestors is None:
                    ancestors = self._ancestor_set(p)
                if bhash not in ancestors:
                    return True
        return False

    def _ancestor_set(self, p: Proposal) -> set:
        out = set()
        bhash = p.block.parent_hash
        while True:
            cb = self.certified.get(bhash)
            if cb is None:
                break
            out.add(bhash)
            if cb.block.height == 0:
                break
            bhash = cb.block.parent_hash
        return out

    # phase actions

    def _phase_propose(self, out: list) -> None:
        e = self.cur_epoch
        if self.leader(e) != self.pid:
            return
        self.create_cert(e)
        p = build_proposal(self, e)
        self.on_propose(p)  # leader holds its own proposal immediately
        h, ln = kernels.fold_prefix(p.vrf.value)
        pids = kernels.sample_pids(
            h, ln, self.params.n, kernels.coin_threshold(self.params.p_sample)
        )
        dests = set(map(int, pids))
        dests.add(self.leader(e + 1))
        for d in sorted(dests):
            out.append((d, "propose", p))

    def _phase_disseminate(self, out: list) -> None:
        e = self.cur_epoch
        phashes = self.props_by_epoch.get(e)
        if not phashes:
            return
        next_leader = self.leader(e + 1)
        for phash in sorted(phashes):
            p = self.proposals[phash]
            if not self.can_disseminate(p):
                continue
            value = self.keys.vrf_value(self.pid, wire.seed_propose(e))
            h, ln = kernels.fold_prefix(value)
            pids = kernels.sample_pids(
                h, ln, self.params.n, kernels.coin_threshold(self.params.p_sample)
            )
            dests = set(map(int, pids))
            dests.add(next_leader)
            for d in sorted(dests):
                out.append((d, "disseminate", p))

    def _phase_vote(self, out: list) -> None:
        e = self.cur_epoch
        phashes = self.props_by_epoch.get(e)
        if not phashes or len(phashes) != 1:
            return  # a candidate saw exactly one valid proposal this epoch
        phash = phashes[0]
        if phash not in self._delivered_props:
            return  # candidacy requires delivery in the vote round itself
        p = self.proposals[phash]
        ok, vrf = self.can_vote(p)
        if not ok:
            return
        vote = Vote(e, phash, self.pid, self.keys.sign(self.pid, phash), vrf)
        self.voted = True
        out.append((self.leader(e + 1), "vote", vote))
        if self.params.vote_forwarding:
            s = crypto.hash_data(wire.seed_voteset(e))
            h, ln = kernels.fold_prefix(s)
            pids = kernels.sample_pids(
                h, ln, self.params.n, kernels.coin_threshold(self.params.p_sample)
            )
            next_leader = self.leader(e + 1)
            for d in map(int, pids):
                if d != next_leader:
                    out.append((d, "vote", vote))

    def propagate(self, out: list) -> None:
        """Gossip the max-height completed-epoch proposal to a p_prop sample.

        The current epoch's proposal is deliberately excluded: spreading it
        is the relay step's job, and gossip picks it up from the first round
        of the following epoch on.
        """
        if self._gossip_best is None:
            return
        p = self.proposals[self._gossip_best[2]]
        value = self.keys.vrf_value(self.pid, wire.seed_propagate(self.cur_round))
        h, ln = kernels.fold_prefix(value)
        pids = kernels.sample_pids(
            h, ln, self.params.n, kernels.coin_threshold(self.params.p_prop)
        )
        for d in pids:
            out.append((int(d), "propagate", p))

    # main loop

    def step_round(self, round_no: int, inbox, suppress_phase: bool = False) -> list:
        """One round: absorb deliveries, advance counters, gossip, certify,
        then run the phase action. Returns [(destination, kind, message)].

        suppress_phase skips the phase action only (gossip, certification,
        and inbox handling still run); the harness uses it to substitute
        adversarial behavior for a corrupted process.
        """
        if round_no <= self.cur_round:
            raise ValueError(
                f"rounds must be strictly increasing: got {round_no} after {self.cur_round}"
            )
        self.new_certs_this_round = []
        self.cert_created_this_round = None
        self._delivered_props = set()
        self.process_inbox(inbox)
        self.cur_round = round_no
        prev_epoch = self.cur_epoch
        self.cur_epoch = epoch_of_round(round_no)
        for e in range(prev_epoch, self.cur_epoch):
            cand = self._epoch_best.pop(e, None)
            if cand is not None and (
                self._gossip_best is None or self._prop_beats(cand, self._gossip_best)
            ):
                self._gossip_best = cand
        self.voted = False
        out: list = []
        self.propagate(out)
        self.try_to_certify()
        if suppress_phase:
            return out
        phase = round_no % 3
        if phase == 1:
            self._phase_propose(out)
        elif phase == 2:
            self._phase_disseminate(out)
        else:
            self._phase_vote(out)
        return out
