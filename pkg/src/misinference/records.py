"""CSV and JSON persistence for :class:`TrialRecord`.

One record is one CSV row. The Uncertain block needs a second candidate
deck, which travels in the trailing ``d1_alt``/``d2_alt`` columns (empty
for every other block). Empty cells stand for absent values.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable
from pathlib import Path

from .core import Block, DeckSpec, Observation, TrialRecord

SCHEMA_VERSION = 1

COLUMNS = (
    "subject_id", "round", "block", "n_total", "d1", "d2",
    "n_diamonds", "n_spades", "report_pct", "purchased", "d1_alt", "d2_alt",
)


def record_to_dict(rec: TrialRecord) -> dict:
    obs = rec.observation
    return {
        "subject_id": rec.subject_id,
        "round": rec.round,
        "block": rec.block.value,
        "n_total": rec.deck.n_total,
        "d1": rec.deck.diamonds_green,
        "d2": rec.deck.diamonds_violet,
        "n_diamonds": None if obs is None else obs.n_diamonds,
        "n_spades": None if obs is None else obs.n_spades,
        "report_pct": rec.report_pct,
        "purchased": rec.purchased,
        "d1_alt": None if rec.deck_alt is None else rec.deck_alt.diamonds_green,
        "d2_alt": None if rec.deck_alt is None else rec.deck_alt.diamonds_violet,
    }


def record_from_dict(row: dict) -> TrialRecord:
    def opt_int(key):
        v = row.get(key)
        if v is None or v == "":
            return None
        return int(v)

    n = int(row["n_total"])
    deck = DeckSpec(n, int(row["d1"]), int(row["d2"]))
    nd, ns = opt_int("n_diamonds"), opt_int("n_spades")
    obs = None if nd is None and ns is None else Observation(nd or 0, ns or 0)
    d1a, d2a = opt_int("d1_alt"), opt_int("d2_alt")
    alt = None if d1a is None else DeckSpec(n, d1a, d2a)
    return TrialRecord(
        subject_id=str(row["subject_id"]),
        round=int(row["round"]),
        block=Block(row["block"]),
        deck=deck,
        observation=obs,
        report_pct=opt_int("report_pct"),
        purchased=opt_int("purchased"),
        deck_alt=alt,
    )


def dumps_csv(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: ("" if v is None else v) for k, v in record_to_dict(rec).items()})
    return buf.getvalue()


def loads_csv(text: str) -> list[TrialRecord]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(COLUMNS[:10]) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"records CSV is missing columns: {sorted(missing)}")
    return [record_from_dict(row) for row in reader]


def dumps_json(records: Iterable[TrialRecord]) -> str:
    return json.dumps([record_to_dict(r) for r in records], indent=1) + "\n"


def loads_json(text: str) -> list[TrialRecord]:
    return [record_from_dict(row) for row in json.loads(text)]


def write_records(path: str | Path, records: Iterable[TrialRecord]) -> None:
    path = Path(path)
    text = dumps_json(records) if path.suffix == ".json" else dumps_csv(records)
    path.write_text(text, encoding="utf-8", newline="")


def read_records(path: str | Path) -> list[TrialRecord]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return loads_json(text) if path.suffix == ".json" else loads_csv(text)
