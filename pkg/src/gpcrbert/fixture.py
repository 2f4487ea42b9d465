"""Recorded counts for the GPCRdb class A corpus, and lookup of a local copy.

The corpus itself is not bundled.  ``scripts/fetch_fixture.py`` normalises a
copy obtained by the user into ``data/gpcrdb_fixture.csv`` and records its
SHA-256 beside it; the environment variable ``GPCRBERT_FIXTURE`` overrides
the location.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import MotifKind, ProteinRecord, build_motif_dataset, filter_corpus

ENV_VAR = "GPCRBERT_FIXTURE"
DEFAULT_PATH = Path(__file__).resolve().parents[2] / "data" / "gpcrdb_fixture.csv"


@dataclass(frozen=True)
class FixtureCounts:
    raw: int = 293
    filtered: int = 254
    npxxy: int = 238
    cwxp: int = 168
    edry: int = 212
    n_classes: int = 62
    max_len: int = 370


EXPECTED = FixtureCounts()

# Most populated receptor classes after filtering; the remaining classes hold 83 records.
CLASS_COUNTS = {
    "aa2ar": 24, "adrb1": 23, "adrb2": 21, "opsd": 20, "ox1r": 14,
    "drd1": 9, "ox2r": 8, "5ht2b": 8, "nk1r": 6, "cxcr4": 5,
    "cnr1": 5, "cnr2": 4, "ntr1": 4, "cltr2": 4, "gpr52": 4,
    "5ht2a": 4, "mtr1a": 4, "ebnrb": 4,
}
OTHER_CLASSES = 83


def fixture_path() -> Path | None:
    """The fixture CSV if present, else None."""
    path = Path(os.environ.get(ENV_VAR, DEFAULT_PATH))
    return path if path.is_file() else None


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def checksum_path(path: Path) -> Path:
    return Path(path).with_suffix(".sha256")


def observed_counts(records: Sequence[ProteinRecord], max_len: int = 370) -> dict[str, int]:
    kept = filter_corpus(records, max_len)
    return {
        "raw": len(records),
        "filtered": len(kept),
        "npxxy": len(build_motif_dataset(kept, MotifKind.NPXXY)),
        "cwxp": len(build_motif_dataset(kept, MotifKind.CWXP)),
        "edry": len(build_motif_dataset(kept, MotifKind.EDRY)),
        "n_classes": len({r.receptor_class for r in kept}),
    }


def count_mismatches(records: Sequence[ProteinRecord]) -> list[str]:
    """Human-readable differences from the recorded counts; empty when all agree."""
    seen = observed_counts(records, EXPECTED.max_len)
    out = [f"{k}: expected {getattr(EXPECTED, k)}, got {v}" for k, v in seen.items() if v != getattr(EXPECTED, k)]
    kept = filter_corpus(records, EXPECTED.max_len)
    per_class: dict[str, int] = {}
    for r in kept:
        per_class[r.receptor_class] = per_class.get(r.receptor_class, 0) + 1
    for name, n in CLASS_COUNTS.items():
        if per_class.get(name, 0) != n:
            out.append(f"class {name}: expected {n}, got {per_class.get(name, 0)}")
    return out
