"""Canonical byte encodings for protocol objects and sampling seeds.

Hashes, signatures, and trace reproducibility all depend on a stable byte
layout, so it is fixed here and nowhere else:

  - integers are little-endian: u32 for epochs/heights/ids, u64 for rounds;
  - variable-length fields are length-prefixed with a u32;
  - sequences are length-prefixed with a u32 element count;
  - fields appear in the struct order given by each encode function.

These encodings feed the hash function and the golden tests. Metric byte
sizes come from crypto.SizeModel, which is a declared accounting model,
not len() of these buffers.
"""

from __future__ import annotations

import struct

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def u32(x: int) -> bytes:
    return _U32.pack(x)


def u64(x: int) -> bytes:
    return _U64.pack(x)


def lp(data: bytes) -> bytes:
    """Length-prefixed bytes."""
    return _U32.pack(len(data)) + data


def encode_block(block) -> bytes:
    """epoch u32 | height u32 | parent_hash lp | tx count u32 | txs lp each."""
    parts = [
        u32(block.epoch),
        u32(block.height),
        lp(block.parent_hash),
        u32(len(block.txs)),
    ]
    parts.extend(lp(tx) for tx in block.txs)
    return b"".join(parts)


def encode_certificate(cert) -> bytes:
    """signer count u32 | signer u32 each (ascending) | digest lp | tag lp."""
    parts = [u32(len(cert.signers))]
    parts.extend(u32(s) for s in cert.signers)
    parts.append(lp(cert.sig.digest))
    parts.append(lp(cert.sig.tag))
    return b"".join(parts)


def encode_vrf(out) -> bytes:
    """prover u32 | seed lp | value lp | proof lp."""
    return u32(out.prover) + lp(out.seed) + lp(out.value) + lp(out.proof)


def encode_proposal_body(proposal) -> bytes:
    """block | parent certificate | vrf output. This is what the leader signs."""
    return (
        encode_block(proposal.block)
        + encode_certificate(proposal.parent_cert)
        + encode_vrf(proposal.vrf)
    )


def encode_proposal(proposal) -> bytes:
    """body | leader u32 | leader signature tag lp. Hashed for votes."""
    return (
        encode_proposal_body(proposal)
        + u32(proposal.leader)
        + lp(proposal.leader_sig.tag)
    )


def encode_vote(vote) -> bytes:
    """epoch u32 | proposal hash lp | voter u32 | sig tag lp | vrf (may be empty)."""
    vrf_part = encode_vrf(vote.vrf) if vote.vrf is not None else b""
    return (
        u32(vote.epoch)
        + lp(vote.proposal_hash)
        + u32(vote.voter)
        + lp(vote.sig.tag)
        + lp(vrf_part)
    )


# sampling seed byte strings (the VRF inputs); epoch-scoped seeds use u32,
# the per-round propagation seed uses u64

def seed_propose(epoch: int) -> bytes:
    return u32(epoch) + b"/propose"


def seed_vote(epoch: int) -> bytes:
    return u32(epoch) + b"/vote"


def seed_propagate(round_no: int) -> bytes:
    return u64(round_no) + b"/prop"


def seed_voteset(epoch: int) -> bytes:
    return u32(epoch) + b"/voteset"
