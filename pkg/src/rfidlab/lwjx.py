"""The LWJX hash-chain authentication protocol as executable state machines.

Three flows per session:

    reader -> tag   Rr
    tag -> reader   H(ID), H(K || Rr), Rt
    reader -> tag   H(Kx || Rt)        x = new or old

The tag's identifier walks a G-chain on every successful session and its
key is rebuilt from the identifier and both session nonces. The reader
keeps the current and previous epoch of each tag so a tag that missed the
final flow can still authenticate through the old pair; the per-record
counter M tracks how often that happened since the last current-epoch
authentication and triggers a warning above a configured limit.

The identifier, key and nonces share one width: they are XOR-combined
into the next key, so unequal widths would make the update ill-typed.
The transport hashes H(.) may truncate to a narrower width; G keeps the
value width because the identifier chain feeds back into the key.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bits import BitString
from .crypto import g_params, h_params, truncated_hash
from .rng import Rng
from .session import ProtocolError, RejectMessage, SessionResult, SessionVerdict
from .transcript import Transcript

PROTOCOL_NAME = "lwjx"


@dataclass(frozen=True)
class LwjxParams:
    bits: int = 96  # shared width of identifiers, keys and nonces
    hash_bits: int = 96
    m_limit: int = 5

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError("bits must be positive")
        if self.hash_bits < 1:
            raise ValueError("hash_bits must be positive")
        if self.m_limit < 0:
            raise ValueError("m_limit must be >= 0")

    @property
    def h(self):
        return h_params(self.hash_bits)

    @property
    def g(self):
        return g_params(self.bits)

    def to_dict(self) -> dict:
        return {"bits": self.bits, "hash_bits": self.hash_bits, "m_limit": self.m_limit}


@dataclass(frozen=True)
class Flow1:
    rr: BitString

    def fields(self) -> dict:
        return {"rr": self.rr}


@dataclass(frozen=True)
class Flow2:
    hid: BitString
    hk: BitString
    rt: BitString

    def fields(self) -> dict:
        return {"hid": self.hid, "hk": self.hk, "rt": self.rt}


@dataclass(frozen=True)
class Flow3:
    hkt: BitString

    def fields(self) -> dict:
        return {"hkt": self.hkt}


class LwjxTag:
    """Tag side: identifier and key, both rewritten on a verified reply."""

    def __init__(self, params: LwjxParams, id_: BitString, k: BitString):
        if id_.width != params.bits or k.width != params.bits:
            raise ProtocolError("tag secrets must use the protocol width")
        self.params = params
        self.id = id_
        self.k = k
        self._session: tuple[BitString, BitString] | None = None

    def respond(self, flow1: Flow1, rng: Rng) -> Flow2:
        p = self.params
        if not isinstance(flow1, Flow1) or flow1.rr.width != p.bits:
            raise ProtocolError("flow1 must carry a nonce of the protocol width")
        rt = rng.bits(p.bits)
        self._session = (flow1.rr, rt)
        return Flow2(
            hid=truncated_hash(p.h, self.id),
            hk=truncated_hash(p.h, self.k.concat(flow1.rr)),
            rt=rt,
        )

    def finalize(self, flow3: Flow3) -> SessionVerdict:
        """Verify the reply; on success chain the identifier and rebuild the key."""
        p = self.params
        if not isinstance(flow3, Flow3) or flow3.hkt.width != p.hash_bits:
            raise ProtocolError("flow3 shape or width invalid")
        if self._session is None:
            raise ProtocolError("no session in progress")
        rr, rt = self._session
        if truncated_hash(p.h, self.k.concat(rt)) != flow3.hkt:
            return SessionVerdict("tag", False, "bad-hkt")
        self.id = truncated_hash(p.g, self.id)
        self.k = self.id ^ rr ^ rt
        self._session = None
        return SessionVerdict("tag", True)


@dataclass
class LwjxReaderRecord:
    id: BitString
    h_id_new: BitString
    h_id_old: BitString | None
    k_new: BitString
    k_old: BitString | None
    m: int = 0


@dataclass
class ReaderSession:
    rr: BitString


class LwjxReaderDb:
    def __init__(self, params: LwjxParams):
        self.params = params
        self.records: list[LwjxReaderRecord] = []
        self.sessions: dict[str, ReaderSession] = {}
        self._next_session = 0

    def provision(
        self, rng: Rng, id_: BitString | None = None, k: BitString | None = None
    ) -> LwjxTag:
        p = self.params
        if id_ is None:
            id_ = rng.bits(p.bits)
        if k is None:
            k = rng.bits(p.bits)
        self.records.append(
            LwjxReaderRecord(
                id=id_,
                h_id_new=truncated_hash(p.h, id_),
                h_id_old=None,
                k_new=k,
                k_old=None,
                m=0,
            )
        )
        return LwjxTag(p, id_, k)

    def begin(self, rng: Rng) -> tuple[str, Flow1]:
        sid = f"s{self._next_session}"
        self._next_session += 1
        rr = rng.bits(self.params.bits)
        self.sessions[sid] = ReaderSession(rr)
        return sid, Flow1(rr)

    def authenticate(
        self, sid: str, flow2: Flow2
    ) -> tuple[SessionVerdict, Flow3 | RejectMessage]:
        """Match the identifier hash against the new then the old epoch.

        Records are scanned in provisioning order and the first one whose
        key hash verifies wins, so identifier-hash collisions at small
        widths resolve deterministically.
        """
        p = self.params
        sess = self.sessions.get(sid)
        if sess is None:
            raise ProtocolError(f"unknown session {sid!r}")
        if (
            not isinstance(flow2, Flow2)
            or flow2.hid.width != p.hash_bits
            or flow2.hk.width != p.hash_bits
            or flow2.rt.width != p.bits
        ):
            raise ProtocolError("flow2 shape or widths invalid")
        rr, rt = sess.rr, flow2.rt
        matched = False
        limit_hit = False
        for rec in self.records:
            if rec.h_id_new == flow2.hid:
                matched = True
                if truncated_hash(p.h, rec.k_new.concat(rr)) == flow2.hk:
                    reply = truncated_hash(p.h, rec.k_new.concat(rt))
                    rec.m = 0
                    rec.id = truncated_hash(p.g, rec.id)
                    rec.h_id_old = rec.h_id_new
                    rec.h_id_new = truncated_hash(p.h, rec.id)
                    rec.k_old = rec.k_new
                    rec.k_new = rec.id ^ rr ^ rt
                    return SessionVerdict("reader", True, "new-branch"), Flow3(reply)
        for rec in self.records:
            if rec.h_id_old is not None and rec.h_id_old == flow2.hid:
                matched = True
                if rec.m > p.m_limit:
                    limit_hit = True
                    continue
                rec.m += 1
                if truncated_hash(p.h, rec.k_old.concat(rr)) == flow2.hk:
                    reply = truncated_hash(p.h, rec.k_old.concat(rt))
                    # a tag that verifies this reply rebuilds its key from the
                    # current nonces; the stored new key must follow or the next
                    # new-epoch check could never verify again
                    rec.k_new = rec.id ^ rr ^ rt
                    return SessionVerdict("reader", True, "old-branch"), Flow3(reply)
        if limit_hit:
            return SessionVerdict("reader", False, "warn-limit"), RejectMessage()
        if matched:
            return SessionVerdict("reader", False, "bad-key-hash"), RejectMessage()
        return SessionVerdict("reader", False, "no-match"), RejectMessage()


def is_synchronized(db: LwjxReaderDb, tag: LwjxTag) -> bool:
    """Some record's new or old epoch matches the tag's (H(ID), K)."""
    hid = truncated_hash(db.params.h, tag.id)
    for rec in db.records:
        if rec.h_id_new == hid and rec.k_new == tag.k:
            return True
        if rec.h_id_old == hid and rec.k_old == tag.k:
            return True
    return False


def run_honest_session(
    tag: LwjxTag,
    db: LwjxReaderDb,
    rng: Rng,
    *,
    drop_flow3: bool = False,
    interpose=None,
    disclose_secrets: bool = False,
) -> SessionResult:
    """Drive one session; ``drop_flow3`` loses the reply so the tag never updates."""
    sid, flow1 = db.begin(rng)
    transcript = Transcript(session=sid, protocol=PROTOCOL_NAME, params=db.params.to_dict())
    if disclose_secrets:
        transcript.secrets = {"id": tag.id, "k": tag.k}

    def deliver(flow, sender, message):
        transcript.add(flow, sender, message.fields())
        if flow == "flow3" and drop_flow3:
            transcript.add(flow, "adversary", {}, note="blocked")
            return None
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
    reader_verdict, reply = db.authenticate(sid, message)
    if not reader_verdict.ok:
        transcript.add("reject", "reader", {})
        transcript.add("verdict", "reader", reader_verdict.fields())
        return SessionResult(transcript, sid, reader_verdict, None)
    message = deliver("flow3", "reader", reply)
    transcript.add("verdict", "reader", reader_verdict.fields())
    if message is None:
        return SessionResult(transcript, sid, reader_verdict, None)
    tag_verdict = tag.finalize(message)
    transcript.add("verdict", "tag", tag_verdict.fields())
    if disclose_secrets:
        transcript.secrets["id_after"] = tag.id
        transcript.secrets["k_after"] = tag.k
    return SessionResult(transcript, sid, reader_verdict, tag_verdict)
