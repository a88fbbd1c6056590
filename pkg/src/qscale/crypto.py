"""Deterministic mock crypto: hash, multi-signatures, VRF, local coin.

Everything is derived from a 64-bit master seed, so two runs with equal
seeds produce byte-identical outputs. None of this is secure: signatures
and VRF outputs are verified by re-derivation from the same key material,
which only a simulation harness can do. The harness keeps adversary code
from signing or proving on behalf of correct processes; math does not.

Byte-size accounting for metrics lives in SizeModel. Sizes are a declared
model (wire encodings are not part of the protocol's claims): direct
proposals carry certificate, VRF output, and signature; forwarded copies
are accounted as header plus block only, on the theory that repeated
copies of the certificate payload would be deduplicated by any real
transport. Totals are reported together with this declaration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from hashlib import blake2b

from qscale import kernels

LAMBDA_BITS = 256
HASH_BYTES = LAMBDA_BITS // 8


def hash_data(data: bytes) -> bytes:
    """32-byte collision-resistant digest."""
    return blake2b(data, digest_size=HASH_BYTES).digest()


def local_coin(seed: bytes, p: float) -> bool:
    """Deterministic Bernoulli(p) coin on a seed byte string.

    The first 64 bits of a hash of the seed are compared against
    floor(p * 2**64). Sample membership tests concatenate the subject id
    as an 8-byte little-endian suffix; kernels.fold_prefix/coin_one give
    the identical answer without rehashing the shared prefix.
    """
    return kernels.fold_digest(seed) < kernels.coin_threshold(p)


@dataclass(frozen=True, slots=True)
class Signature:
    digest: bytes
    signer: int
    tag: bytes


@dataclass(frozen=True, slots=True)
class MultiSignature:
    digest: bytes
    signers: tuple[int, ...]  # ascending
    tag: bytes


@dataclass(frozen=True, slots=True)
class VrfOutput:
    value: bytes  # lambda/8 = 32 bytes
    proof: bytes  # 80 bytes
    prover: int
    seed: bytes


class KeyRing:
    """Per-process key material derived from one 64-bit master seed."""

    def __init__(self, n: int, master_seed: int):
        if not 0 <= master_seed < (1 << 64):
            raise ValueError("master seed must fit in 64 bits")
        self.n = n
        self.master_seed = master_seed
        base = master_seed.to_bytes(8, "little")
        self._sk = [b""] + [
            blake2b(base + b"sk" + i.to_bytes(4, "little"), digest_size=32).digest()
            for i in range(1, n + 1)
        ]
        self._multi_memo: dict[tuple, bool] = {}
        self._vrf_memo: dict[tuple, bool] = {}

    def _check_pid(self, pid: int) -> None:
        if not 1 <= pid <= self.n:
            raise ValueError(f"process id {pid} out of range 1..{self.n}")

    # signatures

    def sign(self, pid: int, message: bytes) -> Signature:
        self._check_pid(pid)
        digest = hash_data(message)
        tag = blake2b(digest, key=self._sk[pid], digest_size=48).digest()
        return Signature(digest, pid, tag)

    def _expected_tag(self, pid: int, digest: bytes) -> bytes:
        return blake2b(digest, key=self._sk[pid], digest_size=48).digest()

    def verify(self, message: bytes, sig: Signature, signer: int) -> bool:
        if not isinstance(sig, Signature) or sig.signer != signer:
            return False
        if not 1 <= signer <= self.n:
            return False
        digest = hash_data(message)
        return sig.digest == digest and sig.tag == self._expected_tag(signer, digest)

    def aggregate(self, sigs: list[Signature]) -> MultiSignature:
        if not sigs:
            raise ValueError("cannot aggregate zero signatures")
        digest = sigs[0].digest
        if any(s.digest != digest for s in sigs):
            raise ValueError("aggregate over mixed digests")
        ordered = sorted(sigs, key=lambda s: s.signer)
        signers = tuple(s.signer for s in ordered)
        if len(set(signers)) != len(signers):
            raise ValueError("duplicate signer in aggregate")
        tag = blake2b(
            digest + b"".join(s.tag for s in ordered), digest_size=48
        ).digest()
        return MultiSignature(digest, signers, tag)

    def validate(self, message: bytes, sig, signers) -> bool:
        """True iff `sig` is a valid (multi)signature over `message` by exactly `signers`."""
        ids = tuple(sorted(signers))
        if isinstance(sig, Signature):
            return len(ids) == 1 and self.verify(message, sig, ids[0])
        if isinstance(sig, MultiSignature):
            return sig.signers == ids and self.validate_multi_digest(
                hash_data(message), sig
            )
        return False

    def validate_multi_digest(self, digest: bytes, sig: MultiSignature) -> bool:
        """Validate a MultiSignature against a precomputed digest (memoized)."""
        if not isinstance(sig, MultiSignature):
            return False
        key = (digest, sig.signers, sig.tag)
        hit = self._multi_memo.get(key)
        if hit is not None:
            return hit
        ok = bool(sig.signers) and sig.digest == digest
        if ok:
            ok = all(1 <= pid <= self.n for pid in sig.signers) and tuple(
                sorted(sig.signers)
            ) == sig.signers
        if ok:
            tags = b"".join(self._expected_tag(pid, digest) for pid in sig.signers)
            ok = sig.tag == blake2b(digest + tags, digest_size=48).digest()
        self._multi_memo[key] = ok
        return ok

    # VRF

    def vrf_value(self, pid: int, seed: bytes) -> bytes:
        self._check_pid(pid)
        return blake2b(b"vrf" + seed, key=self._sk[pid], digest_size=32).digest()

    def vrf_prove(self, pid: int, seed: bytes) -> VrfOutput:
        value = self.vrf_value(pid, seed)
        proof = (
            blake2b(b"vrfp" + seed, key=self._sk[pid], digest_size=64).digest()
            + blake2b(b"vrfq" + seed, key=self._sk[pid], digest_size=16).digest()
        )
        return VrfOutput(value, proof, pid, seed)

    def vrf_verify(self, seed: bytes, out: VrfOutput) -> bool:
        if not isinstance(out, VrfOutput):
            return False
        if not isinstance(out.prover, int) or not 1 <= out.prover <= self.n:
            return False
        if out.seed != seed:
            return False
        key = (out.prover, seed, out.value, out.proof)
        hit = self._vrf_memo.get(key)
        if hit is not None:
            return hit
        expected = self.vrf_prove(out.prover, seed)
        ok = out.value == expected.value and out.proof == expected.proof
        self._vrf_memo[key] = ok
        return ok


@dataclass(frozen=True)
class SizeModel:
    """Declared byte accounting for message metrics.

    Fixed reference sizes: 32 B hashes, 48 B signatures, multi-signature
    48 B plus a ceil(n/8) signer bitmap, VRF output 32+80 B, 250 B
    transactions, 16 B per-message header, 4 B integer fields.
    """

    hash_bytes: int = HASH_BYTES
    sig_bytes: int = 48
    multisig_base_bytes: int = 48
    vrf_value_bytes: int = 32
    vrf_proof_bytes: int = 80
    tx_bytes: int = 250
    header_bytes: int = 16
    int_bytes: int = 4

    def multisig_bytes(self, n: int) -> int:
        return self.multisig_base_bytes + (n + 7) // 8

    def block_bytes(self, txs_count: int) -> int:
        # epoch + height + parent hash + payload
        return 2 * self.int_bytes + self.hash_bytes + txs_count * self.tx_bytes

    def propose_bytes(self, n: int, txs_count: int) -> int:
        """Leader's direct proposal: header, block, parent cert, VRF, signature."""
        return (
            self.header_bytes
            + self.block_bytes(txs_count)
            + self.multisig_bytes(n)
            + self.vrf_value_bytes
            + self.vrf_proof_bytes
            + self.sig_bytes
        )

    def forward_bytes(self, txs_count: int) -> int:
        """Disseminated or propagated copy: header and block only."""
        return self.header_bytes + self.block_bytes(txs_count)

    def vote_bytes(self) -> int:
        return self.header_bytes + self.int_bytes + self.hash_bytes + self.sig_bytes

    def message_bytes(self, kind: str, n: int, txs_count: int) -> int:
        if kind == "propose":
            return self.propose_bytes(n, txs_count)
        if kind in ("disseminate", "propagate"):
            return self.forward_bytes(txs_count)
        if kind == "vote":
            return self.vote_bytes()
        raise ValueError(f"unknown message kind {kind!r}")
