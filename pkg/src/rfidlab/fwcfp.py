"""The FWCFP mutual-authentication protocol as executable state machines.

Four flows per session:

    reader -> tag   rand1
    tag -> reader   IDTA, H(K || rand1), rand2
    reader -> tag   H(K || rand2), A, B
    tag -> reader   ok

The tag holds a static key K and a rotating encrypted alias IDTA; the
reader decrypts the alias with its private permutation key to recover the
static identifier IDT, then hides the next alias inside A and B under two
hash masks. The tag accepts the new alias only when both maskings agree.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bits import BitString, concat_all
from .crypto import PermKey, expand_mask, h_params, invert, permute, truncated_hash
from .rng import Rng
from .session import ProtocolError, RejectMessage, SessionResult, SessionVerdict
from .transcript import Transcript

PROTOCOL_NAME = "fwcfp"


@dataclass(frozen=True)
class FwcfpParams:
    id_bits: int = 96
    key_bits: int = 96
    nonce_bits: int = 96
    hash_bits: int = 96
    rand0_bits: int = 32

    def __post_init__(self):
        for name in ("id_bits", "key_bits", "nonce_bits", "hash_bits", "rand0_bits"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def alias_bits(self) -> int:
        """Alias block width: the ciphertext encodes IDT and the alias nonce."""
        return self.id_bits + self.rand0_bits

    @property
    def hash(self):
        return h_params(self.hash_bits)

    def to_dict(self) -> dict:
        return {
            "id_bits": self.id_bits,
            "key_bits": self.key_bits,
            "nonce_bits": self.nonce_bits,
            "hash_bits": self.hash_bits,
            "rand0_bits": self.rand0_bits,
        }


@dataclass(frozen=True)
class Flow1:
    rand1: BitString

    def fields(self) -> dict:
        return {"rand1": self.rand1}


@dataclass(frozen=True)
class Flow2:
    idta: BitString
    h1: BitString
    rand2: BitString

    def fields(self) -> dict:
        return {"idta": self.idta, "h1": self.h1, "rand2": self.rand2}


@dataclass(frozen=True)
class Flow3:
    h2: BitString
    a: BitString
    b: BitString

    def fields(self) -> dict:
        return {"h2": self.h2, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Flow4:
    ok: bool = True

    def fields(self) -> dict:
        return {"ok": self.ok}


class FwcfpTag:
    """Tag side: secrets (K, IDTA) plus a pending-session nonce pair.

    ``bookkeeping_idt`` is a test fixture for checking alias consistency
    from the outside; protocol logic never reads it.
    """

    def __init__(
        self,
        params: FwcfpParams,
        k: BitString,
        idta: BitString,
        bookkeeping_idt: BitString,
    ):
        if k.width != params.key_bits or idta.width != params.alias_bits:
            raise ProtocolError("tag secrets have the wrong widths")
        self.params = params
        self.k = k
        self.idta = idta
        self.bookkeeping_idt = bookkeeping_idt
        self._session: tuple[BitString, BitString] | None = None

    def respond(self, flow1: Flow1, rng: Rng) -> Flow2:
        """Answer a fresh challenge; secrets are untouched."""
        p = self.params
        if not isinstance(flow1, Flow1) or flow1.rand1.width != p.nonce_bits:
            raise ProtocolError("flow1 must carry a nonce of the configured width")
        rand2 = rng.bits(p.nonce_bits)
        self._session = (flow1.rand1, rand2)
        h1 = truncated_hash(p.hash, self.k.concat(flow1.rand1))
        return Flow2(idta=self.idta, h1=h1, rand2=rand2)

    def finalize(self, flow3: Flow3) -> tuple[SessionVerdict, Flow4 | RejectMessage]:
        """Check the reader's reply and, if both maskings agree, rotate the alias."""
        p = self.params
        if (
            not isinstance(flow3, Flow3)
            or flow3.h2.width != p.hash_bits
            or flow3.a.width != p.alias_bits
            or flow3.b.width != p.alias_bits
        ):
            raise ProtocolError("flow3 shape or widths invalid")
        if self._session is None:
            raise ProtocolError("no session in progress")
        rand1, rand2 = self._session
        if truncated_hash(p.hash, self.k.concat(rand2)) != flow3.h2:
            return SessionVerdict("tag", False, "bad-h2"), RejectMessage()
        mask1 = expand_mask(p.hash, concat_all(self.k, rand1, rand2), p.alias_bits)
        mask2 = expand_mask(p.hash, concat_all(self.k, rand2, rand1), p.alias_bits)
        alias1 = flow3.a ^ mask1
        alias2 = flow3.b ^ mask2
        if alias1 != alias2:
            return SessionVerdict("tag", False, "alias-mismatch"), RejectMessage()
        self.idta = alias1
        self._session = None
        return SessionVerdict("tag", True), Flow4()


@dataclass
class ReaderSession:
    rand1: BitString
    rand2: BitString | None = None
    pending_alias: BitString | None = None


class FwcfpReaderDb:
    """Reader and backend in one: master permutation key plus IDT registry.

    The reader keeps no per-tag alias state, only per-session caches, so
    losing a final flow never affects later sessions.
    """

    def __init__(self, params: FwcfpParams, ks: PermKey):
        if ks.width != params.alias_bits:
            raise ProtocolError("master key block width must match the alias width")
        self.params = params
        self.ks = ks
        self.registry: dict[BitString, BitString] = {}
        self.sessions: dict[str, ReaderSession] = {}
        self._next_session = 0

    @classmethod
    def create(cls, params: FwcfpParams, rng: Rng) -> FwcfpReaderDb:
        return cls(params, PermKey.generate(rng, params.alias_bits))

    def register(self, idt: BitString, k: BitString):
        p = self.params
        if idt.width != p.id_bits or k.width != p.key_bits:
            raise ProtocolError("registry entry widths invalid")
        if idt in self.registry:
            raise ValueError(f"duplicate IDT {idt.render()}")
        self.registry[idt] = k

    def provision_tag(
        self, rng: Rng, idt: BitString | None = None, k: BitString | None = None
    ) -> FwcfpTag:
        """Register a tag and hand it a freshly encrypted alias."""
        p = self.params
        if idt is None:
            idt = rng.bits(p.id_bits)
        if k is None:
            k = rng.bits(p.key_bits)
        idta = permute(self.ks, idt.concat(rng.bits(p.rand0_bits)))
        self.register(idt, k)
        return FwcfpTag(p, k, idta, bookkeeping_idt=idt)

    def begin(self, rng: Rng) -> tuple[str, Flow1]:
        sid = f"s{self._next_session}"
        self._next_session += 1
        rand1 = rng.bits(self.params.nonce_bits)
        self.sessions[sid] = ReaderSession(rand1)
        return sid, Flow1(rand1)

    def authenticate(
        self, sid: str, flow2: Flow2, rng: Rng
    ) -> tuple[SessionVerdict, Flow3 | RejectMessage]:
        p = self.params
        sess = self.sessions.get(sid)
        if sess is None:
            raise ProtocolError(f"unknown session {sid!r}")
        if (
            not isinstance(flow2, Flow2)
            or flow2.idta.width != p.alias_bits
            or flow2.h1.width != p.hash_bits
            or flow2.rand2.width != p.nonce_bits
        ):
            raise ProtocolError("flow2 shape or widths invalid")
        idt, _ = invert(self.ks, flow2.idta).split(p.id_bits)
        k = self.registry.get(idt)
        if k is None:
            return SessionVerdict("reader", False, "unknown-idt"), RejectMessage()
        if truncated_hash(p.hash, k.concat(sess.rand1)) != flow2.h1:
            return SessionVerdict("reader", False, "bad-h1"), RejectMessage()
        sess.rand2 = flow2.rand2
        alias = permute(self.ks, idt.concat(rng.bits(p.rand0_bits)))
        sess.pending_alias = alias
        mask1 = expand_mask(p.hash, concat_all(k, sess.rand1, flow2.rand2), p.alias_bits)
        mask2 = expand_mask(p.hash, concat_all(k, flow2.rand2, sess.rand1), p.alias_bits)
        h2 = truncated_hash(p.hash, k.concat(flow2.rand2))
        return (
            SessionVerdict("reader", True),
            Flow3(h2=h2, a=alias ^ mask1, b=alias ^ mask2),
        )


def alias_identity(db: FwcfpReaderDb, tag: FwcfpTag) -> BitString:
    """Decrypt the tag's current alias back to its identifier (test oracle)."""
    idt, _ = invert(db.ks, tag.idta).split(db.params.id_bits)
    return idt


def run_honest_session(
    tag: FwcfpTag,
    db: FwcfpReaderDb,
    rng: Rng,
    *,
    interpose=None,
    disclose_secrets: bool = False,
) -> SessionResult:
    """Drive one full session, optionally letting an adversary sit on the channel.

    ``interpose(flow_name, message)`` may pass the message through, return a
    replacement, or return None to block it. Every honest emission and every
    tamper or block event lands in the transcript.
    """
    sid, flow1 = db.begin(rng)
    transcript = Transcript(session=sid, protocol=PROTOCOL_NAME, params=db.params.to_dict())
    if disclose_secrets:
        transcript.secrets = {
            "k": tag.k,
            "idt": tag.bookkeeping_idt,
            "alias_before": tag.idta,
        }

    def deliver(flow, sender, message):
        transcript.add(flow, sender, message.fields())
        if interpose is None:
            return message
        delivered = interpose(flow, message)
        if delivered is None:
            transcript.add(flow, "adversary", {}, note="blocked")
            return None
        if delivered is not message:
            transcript.add(flow, "adversary", delivered.fields(), note="tampered")
        return delivered

    message = deliver("flow1", "reader", flow1)
    if message is None:
        return SessionResult(transcript, sid, None, None)
    flow2 = tag.respond(message, rng)
    message = deliver("flow2", "tag", flow2)
    if message is None:
        return SessionResult(transcript, sid, None, None)
    reader_verdict, reply = db.authenticate(sid, message, rng)
    if not reader_verdict.ok:
        transcript.add("reject", "reader", {})
        transcript.add("verdict", "reader", reader_verdict.fields())
        return SessionResult(transcript, sid, reader_verdict, None)
    message = deliver("flow3", "reader", reply)
    transcript.add("verdict", "reader", reader_verdict.fields())
    if message is None:
        return SessionResult(transcript, sid, reader_verdict, None)
    tag_verdict, flow4 = tag.finalize(message)
    if tag_verdict.ok:
        deliver("flow4", "tag", flow4)
    else:
        transcript.add("reject", "tag", {})
    transcript.add("verdict", "tag", tag_verdict.fields())
    if disclose_secrets:
        transcript.secrets["alias_after"] = tag.idta
    return SessionResult(transcript, sid, reader_verdict, tag_verdict)
