"""The untraceability game: adversary queries, phases, advantage estimation.

An adversary interacts with two tags and a reader through four queries.
Execute runs and archives an honest session; Send delivers a chosen
message to a tag or to the reader (and, through the session drivers'
interposers, can block or alter in-flight messages); Corrupt reads and
overwrites a tag's stored secrets; Test draws the hidden bit b and hands
back an opaque handle that routes to one of the two candidate tags.

A game moves through a learning phase, a challenge phase opened by the
single Test query, and a guess phase in which the strategy commits to a
bit. Corrupting a candidate during the challenge phase is normally a
phase violation; the backward-untraceability variant permits it once the
challenge session is in the archive, which reproduces the
corrupt-after-the-fact timeline that attack needs.

Advantage runs execute many independent trials, each with fresh tags,
its own reader and disjoint randomness streams, and compare the measured
advantage |Pr[guess = b] - 1/2| against two closed forms: the commonly
quoted ``nominal`` value 1/2 - 2^-n, which charges every hash collision
as a loss, and the ``exact`` value 1/2 - 2^-(n+1) under a uniform
challenge bit, where a collision only misleads when b = 1.
"""

from __future__ import annotations

import math
import multiprocessing
import time
from dataclasses import dataclass

from . import fwcfp, lwjx
from .bits import BitString
from .crypto import HASH_NAME
from .rng import Rng
from .session import ProtocolError, RejectMessage
from .transcript import Transcript

SCHEMA_VERSION = 1
DEFAULT_BUDGET = 64

LEARNING = "learning"
CHALLENGE = "challenge"
GUESS = "guess"

CORRUPT_NEVER = "never"
CORRUPT_AFTER_ARCHIVE = "after-challenge-archive"


class PhaseViolation(RuntimeError):
    """A query was issued in a phase that does not permit it."""


class BudgetExceeded(RuntimeError):
    """The strategy spent more queries than the configured budget."""


class TrialAbort(RuntimeError):
    """A strategy gave up on this trial; the trial is discarded, not failed."""


@dataclass(frozen=True)
class ChallengeHandle:
    """Opaque routing token for the hidden tag; the token is fresh randomness."""

    token: BitString

    def serialized(self) -> str:
        return self.token.render()


# query log records, for audit and phase-discipline testing
@dataclass(frozen=True)
class ExecuteQuery:
    target: object


@dataclass(frozen=True)
class SendQuery:
    target: object
    flow: str


@dataclass(frozen=True)
class CorruptQuery:
    target: object


@dataclass(frozen=True)
class TestQuery:
    pass


class FwcfpProtocol:
    name = "fwcfp"
    flow_count = 4

    def fresh_trial(self, params, rng):
        db = fwcfp.FwcfpReaderDb.create(params, rng)
        idt0 = rng.bits(params.id_bits)
        idt1 = rng.bits(params.id_bits)
        while idt1 == idt0:
            idt1 = rng.bits(params.id_bits)
        k0 = rng.bits(params.key_bits)
        k1 = rng.bits(params.key_bits)
        while k1 == k0:
            k1 = rng.bits(params.key_bits)
        return db.provision_tag(rng, idt0, k0), db.provision_tag(rng, idt1, k1), db

    def run_session(self, tag, db, rng):
        return fwcfp.run_honest_session(tag, db, rng)

    def deliver_to_tag(self, tag, message, rng):
        if isinstance(message, fwcfp.Flow1):
            return tag.respond(message, rng)
        if isinstance(message, fwcfp.Flow3):
            _, reply = tag.finalize(message)
            return reply
        raise ProtocolError("the tag cannot process this message")

    def deliver_to_reader(self, db, sid, message, rng):
        _, reply = db.authenticate(sid, message, rng)
        return reply

    def corrupt(self, tag, replacement):
        secrets = {"k": tag.k, "idta": tag.idta}
        if replacement is not None:
            k, idta = replacement["k"], replacement["idta"]
            if k.width != tag.params.key_bits or idta.width != tag.params.alias_bits:
                raise ProtocolError("replacement secrets have the wrong widths")
            tag.k = k
            tag.idta = idta
        return secrets


class LwjxProtocol:
    name = "lwjx"
    flow_count = 3

    def fresh_trial(self, params, rng):
        db = lwjx.LwjxReaderDb(params)
        id0 = rng.bits(params.bits)
        id1 = rng.bits(params.bits)
        while id1 == id0:
            id1 = rng.bits(params.bits)
        k0 = rng.bits(params.bits)
        k1 = rng.bits(params.bits)
        while k1 == k0:
            k1 = rng.bits(params.bits)
        return db.provision(rng, id0, k0), db.provision(rng, id1, k1), db

    def run_session(self, tag, db, rng):
        return lwjx.run_honest_session(tag, db, rng)

    def deliver_to_tag(self, tag, message, rng):
        if isinstance(message, lwjx.Flow1):
            return tag.respond(message, rng)
        if isinstance(message, lwjx.Flow3):
            tag.finalize(message)
            return None
        raise ProtocolError("the tag cannot process this message")

    def deliver_to_reader(self, db, sid, message, rng):
        _, reply = db.authenticate(sid, message)
        return reply

    def corrupt(self, tag, replacement):
        secrets = {"id": tag.id, "k": tag.k}
        if replacement is not None:
            id_, k = replacement["id"], replacement["k"]
            if id_.width != tag.params.bits or k.width != tag.params.bits:
                raise ProtocolError("replacement secrets have the wrong widths")
            tag.id = id_
            tag.k = k
        return secrets


PROTOCOLS = {"fwcfp": FwcfpProtocol(), "lwjx": LwjxProtocol()}


class UprivGame:
    """One three-phase game over a fresh pair of tags and a fresh reader."""

    def __init__(
        self,
        protocol,
        params,
        rng: Rng,
        *,
        corrupt_policy: str = CORRUPT_NEVER,
        budget: int = DEFAULT_BUDGET,
    ):
        self.protocol = protocol
        self.params = params
        self.rng = rng
        self.tag0, self.tag1, self.db = protocol.fresh_trial(params, rng)
        self.phase = LEARNING
        self.b: int | None = None
        self.handle: ChallengeHandle | None = None
        self.archive: dict[str, Transcript] = {}
        self.archive_order: list[str] = []
        self.query_log: list = []
        self.queries_used = 0
        self.budget = budget
        self.corrupt_policy = corrupt_policy
        self.delivery_counts = [0, 0]
        self._challenge_archived = False

    def _require_phase(self, *allowed):
        if self.phase not in allowed:
            raise PhaseViolation(
                f"query not allowed in the {self.phase} phase"
            )

    def _charge(self):
        self.queries_used += 1
        if self.queries_used > self.budget:
            raise BudgetExceeded(f"query budget of {self.budget} exhausted")

    def _tag_index(self, ref) -> tuple[int, bool]:
        if isinstance(ref, ChallengeHandle):
            if self.handle is None or ref.token != self.handle.token:
                raise PhaseViolation("no such challenge handle in this game")
            return self.b, True
        if ref in (0, 1):
            return ref, False
        raise ValueError(f"tag reference must be 0, 1 or the challenge handle: {ref!r}")

    def execute(self, ref) -> Transcript:
        """Run a full honest session with the referenced tag and archive it."""
        self._require_phase(LEARNING, CHALLENGE)
        self._charge()
        index, via_handle = self._tag_index(ref)
        self.delivery_counts[index] += 1
        tag = (self.tag0, self.tag1)[index]
        result = self.protocol.run_session(tag, self.db, self.rng)
        self.archive[result.session_id] = result.transcript
        self.archive_order.append(result.session_id)
        if via_handle and self.phase == CHALLENGE:
            self._challenge_archived = True
        self.query_log.append(ExecuteQuery(ref))
        return result.transcript

    def send_to_tag(self, ref, message):
        """Deliver an adversary-chosen message; malformed input draws a plain reject."""
        self._require_phase(LEARNING, CHALLENGE)
        self._charge()
        index, _ = self._tag_index(ref)
        self.delivery_counts[index] += 1
        tag = (self.tag0, self.tag1)[index]
        self.query_log.append(SendQuery(ref, type(message).__name__))
        try:
            return self.protocol.deliver_to_tag(tag, message, self.rng)
        except ProtocolError:
            return RejectMessage()

    def reader_begin(self):
        self._require_phase(LEARNING, CHALLENGE)
        self._charge()
        sid, flow1 = self.db.begin(self.rng)
        self.query_log.append(SendQuery("reader", "begin"))
        return sid, flow1

    def send_to_reader(self, sid, message):
        self._require_phase(LEARNING, CHALLENGE)
        self._charge()
        self.query_log.append(SendQuery("reader", type(message).__name__))
        try:
            return self.protocol.deliver_to_reader(self.db, sid, message, self.rng)
        except ProtocolError:
            return RejectMessage()

    def corrupt(self, ref, replacement=None) -> dict:
        """Read out a candidate tag's secrets, optionally overwriting them."""
        if ref not in (0, 1):
            raise ValueError("corrupt takes a named tag, not the challenge handle")
        self._require_phase(LEARNING, CHALLENGE)
        if self.phase == CHALLENGE:
            # both tags of a trial are the designated candidates
            if self.corrupt_policy != CORRUPT_AFTER_ARCHIVE:
                raise PhaseViolation("candidate tags stay fresh during the challenge")
            if not self._challenge_archived:
                raise PhaseViolation(
                    "corrupt must come after the challenge session is archived"
                )
        self._charge()
        self.query_log.append(CorruptQuery(ref))
        return self.protocol.corrupt((self.tag0, self.tag1)[ref], replacement)

    def run_test(self) -> ChallengeHandle:
        """Draw the hidden bit and open the challenge phase. Once per game."""
        if self.b is not None:
            raise PhaseViolation("test may be invoked exactly once")
        self._require_phase(LEARNING)
        token = self.rng.bits(128)
        self.b = self.rng.bit()
        self.handle = ChallengeHandle(token)
        self.phase = CHALLENGE
        self.query_log.append(TestQuery())
        return self.handle

    def begin_guess(self):
        self._require_phase(CHALLENGE)
        self.phase = GUESS


class GameDriver:
    """The query surface a strategy sees; game internals stay out of reach."""

    def __init__(self, game: UprivGame):
        self._game = game

    def execute(self, ref) -> Transcript:
        return self._game.execute(ref)

    def send_to_tag(self, ref, message):
        return self._game.send_to_tag(ref, message)

    def reader_begin(self):
        return self._game.reader_begin()

    def send_to_reader(self, sid, message):
        return self._game.send_to_reader(sid, message)

    def corrupt(self, ref, replacement=None):
        return self._game.corrupt(ref, replacement)


class AdversaryStrategy:
    """Base class; subclasses fill in the three phases."""

    corrupt_policy = CORRUPT_NEVER

    def learning(self, driver: GameDriver):
        pass

    def challenge(self, driver: GameDriver, handle: ChallengeHandle):
        pass

    def guess(self) -> int:
        raise NotImplementedError


class CoinFlipStrategy(AdversaryStrategy):
    """Ignores the protocol entirely; calibrates the harness at advantage 0."""

    def __init__(self, rng: Rng):
        self.rng = rng

    def guess(self) -> int:
        return self.rng.bit()


STRATEGY_FACTORIES = {
    "coin-flip": lambda rng, params: CoinFlipStrategy(rng),
}


def register_strategy(name: str, factory):
    STRATEGY_FACTORIES[name] = factory


def _strategy_factory(name: str):
    if name not in STRATEGY_FACTORIES:
        from . import attacks  # noqa: F401  (registers the attack strategies)
    return STRATEGY_FACTORIES[name]


def run_upriv_game(
    protocol, params, strategy: AdversaryStrategy, world_rng: Rng, *, budget: int = DEFAULT_BUDGET
):
    """Learning, test, challenge, guess. Returns ("ok", b, guess) or a discard."""
    game = UprivGame(
        protocol,
        params,
        world_rng,
        corrupt_policy=strategy.corrupt_policy,
        budget=budget,
    )
    driver = GameDriver(game)
    try:
        strategy.learning(driver)
        handle = game.run_test()
        strategy.challenge(driver, handle)
        game.begin_guess()
        guess = strategy.guess()
    except BudgetExceeded:
        return ("discarded", "budget-exceeded")
    except TrialAbort as exc:
        return ("discarded", str(exc) or "aborted")
    if guess not in (0, 1):
        return ("discarded", "guess-not-a-bit")
    return ("ok", game.b, guess)


def run_single_trial(protocol_name, strategy_name, params, seed, index, budget=DEFAULT_BUDGET):
    """One trial on its own pair of randomness streams; order-independent."""
    world = Rng(seed, stream=2 * index)
    adversary = Rng(seed, stream=2 * index + 1)
    strategy = _strategy_factory(strategy_name)(adversary, params)
    return run_upriv_game(PROTOCOLS[protocol_name], params, strategy, world, budget=budget)


def _trial_range(args):
    protocol_name, strategy_name, params, seed, lo, hi, budget = args
    return [
        run_single_trial(protocol_name, strategy_name, params, seed, i, budget)
        for i in range(lo, hi)
    ]


def nominal_advantage(hash_bits: int) -> float:
    """The quoted closed form 1/2 - 2^-n (every collision counted as a loss)."""
    return 0.5 - 2.0 ** (-hash_bits)


def exact_advantage(hash_bits: int) -> float:
    """1/2 - 2^-(n+1): with a uniform bit, a collision misleads only when b = 1."""
    return 0.5 - 2.0 ** (-(hash_bits + 1))


@dataclass
class AdvantageReport:
    protocol: str
    strategy: str
    params: dict
    seed: int
    trials_requested: int
    trials_completed: int
    discarded: int
    discard_reasons: dict
    correct: int
    empirical_p: float
    empirical_adv: float
    ci95: float
    ci_method: str
    nominal_adv: float
    exact_adv: float
    nominal_within_ci: bool
    exact_within_ci: bool
    hash_name: str = HASH_NAME
    schema: int = SCHEMA_VERSION
    generated_at: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "schema": self.schema,
            "kind": "advantage-report",
            "protocol": self.protocol,
            "strategy": self.strategy,
            "params": self.params,
            "seed": self.seed,
            "hash_name": self.hash_name,
            "trials_requested": self.trials_requested,
            "trials_completed": self.trials_completed,
            "discarded": self.discarded,
            "discard_reasons": self.discard_reasons,
            "correct": self.correct,
            "empirical_p": self.empirical_p,
            "empirical_adv": self.empirical_adv,
            "ci95": self.ci95,
            "ci_method": self.ci_method,
            "nominal_adv": self.nominal_adv,
            "exact_adv": self.exact_adv,
            "nominal_within_ci": self.nominal_within_ci,
            "exact_within_ci": self.exact_within_ci,
        }
        if self.generated_at is not None:
            doc["generated_at"] = self.generated_at
        return doc

    def summary_line(self) -> str:
        return (
            f"{self.protocol}/{self.strategy}: trials={self.trials_completed}"
            f" (discarded {self.discarded})"
            f" empirical_adv={self.empirical_adv:.6f} +-{self.ci95:.6f} ({self.ci_method})"
            f" nominal_adv={self.nominal_adv:.6f}"
            f"[{'in' if self.nominal_within_ci else 'OUTSIDE'} CI]"
            f" exact_adv={self.exact_adv:.6f}"
            f"[{'in' if self.exact_within_ci else 'OUTSIDE'} CI]"
        )


def _confidence(p: float, n: int) -> tuple[float, str]:
    if n == 0:
        return 0.0, "normal"
    if p >= 1 - 10 / n or p <= 10 / n:
        # too close to the boundary for the normal approximation
        return 3.0 / n, "rule-of-three"
    return 1.96 * math.sqrt(p * (1 - p) / n), "normal"


def estimate_advantage(
    protocol_name: str,
    strategy_name: str,
    params,
    trials: int,
    seed: int,
    *,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
    timestamp: bool = True,
) -> AdvantageReport:
    """Monte Carlo advantage over independent trials with fresh tags each."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hash_bits = params.hash_bits
    if workers <= 1:
        outcomes = _trial_range(
            (protocol_name, strategy_name, params, seed, 0, trials, budget)
        )
    else:
        step = max(1, trials // (workers * 8))
        ranges = [
            (protocol_name, strategy_name, params, seed, lo, min(lo + step, trials), budget)
            for lo in range(0, trials, step)
        ]
        with multiprocessing.Pool(workers) as pool:
            outcomes = [item for chunk in pool.map(_trial_range, ranges) for item in chunk]

    correct = 0
    completed = 0
    discard_reasons: dict[str, int] = {}
    for outcome in outcomes:
        if outcome[0] == "ok":
            completed += 1
            correct += int(outcome[1] == outcome[2])
        else:
            reason = outcome[1]
            discard_reasons[reason] = discard_reasons.get(reason, 0) + 1

    empirical_p = correct / completed if completed else 0.0
    empirical_adv = abs(empirical_p - 0.5)
    ci95, ci_method = _confidence(empirical_p, completed)
    nominal = nominal_advantage(hash_bits)
    exact = exact_advantage(hash_bits)
    return AdvantageReport(
        protocol=protocol_name,
        strategy=strategy_name,
        params=params.to_dict(),
        seed=seed,
        trials_requested=trials,
        trials_completed=completed,
        discarded=trials - completed,
        discard_reasons=discard_reasons,
        correct=correct,
        empirical_p=empirical_p,
        empirical_adv=empirical_adv,
        ci95=ci95,
        ci_method=ci_method,
        nominal_adv=nominal,
        exact_adv=exact,
        nominal_within_ci=abs(nominal - empirical_adv) <= ci95,
        exact_within_ci=abs(exact - empirical_adv) <= ci95,
        generated_at=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        if timestamp
        else None,
    )
