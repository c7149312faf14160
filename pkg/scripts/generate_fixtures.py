#!/usr/bin/env python3
"""Regenerate the golden transcript fixtures under tests/fixtures/.

The fixtures are honest sessions recorded with disclosed secrets so the
replay verifier can re-derive every field. Generation is fully seeded;
rerunning this script must reproduce the committed files byte for byte.
"""

from pathlib import Path

from rfidlab import fwcfp, lwjx
from rfidlab.rng import Rng
from rfidlab.transcript import write_jsonl

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
SEED = 1789


def fwcfp_fixture():
    rng = Rng(SEED)
    db = fwcfp.FwcfpReaderDb.create(fwcfp.FwcfpParams(), rng)
    tag = db.provision_tag(rng)
    return [
        fwcfp.run_honest_session(tag, db, rng, disclose_secrets=True).transcript
        for _ in range(2)
    ]


def lwjx_fixture():
    rng = Rng(SEED)
    db = lwjx.LwjxReaderDb(lwjx.LwjxParams())
    tag = db.provision(rng)
    first = lwjx.run_honest_session(tag, db, rng, disclose_secrets=True)
    second = lwjx.run_honest_session(
        tag, db, rng, drop_flow3=True, disclose_secrets=True
    )
    third = lwjx.run_honest_session(tag, db, rng, disclose_secrets=True)
    return [first.transcript, second.transcript, third.transcript]


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_jsonl(FIXTURES / "fwcfp_honest.jsonl", fwcfp_fixture())
    write_jsonl(FIXTURES / "lwjx_honest.jsonl", lwjx_fixture())
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
