"""Receptor-sequence ingestion and motif/span masking.

A corpus is read from CSV (``id,receptor_class,sequence``) or FASTA
(``>id|receptor_class``), length-filtered, and turned into
:class:`RawMaskedPair` objects in which the residues to predict are replaced by
``'J'`` -- a letter no amino-acid vocabulary uses.
"""

from __future__ import annotations

import csv
import enum
import math
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MASK_CHAR = "J"
ALPHABET = frozenset(string.ascii_uppercase) - {MASK_CHAR}


class CorpusError(ValueError):
    """Malformed or illegal corpus input."""


@dataclass(frozen=True)
class ProteinRecord:
    id: str
    receptor_class: str
    sequence: str
    bw_annotations: dict[int, str] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.sequence:
            raise CorpusError(f"{self.id}: empty sequence")
        for offset, ch in enumerate(self.sequence):
            if ch not in ALPHABET:
                raise CorpusError(f"{self.id}: illegal character {ch!r} at offset {offset}")
        if self.bw_annotations:
            bad = [i for i in self.bw_annotations if not 0 <= i < len(self.sequence)]
            if bad:
                raise CorpusError(f"{self.id}: BW annotation index {bad[0]} outside sequence")

    def __len__(self) -> int:
        return len(self.sequence)


class MotifKind(enum.Enum):
    """Conserved class-A motifs.

    Each pattern element is a set of allowed residues (``None`` = wildcard);
    ``mask_offsets`` are the positions hidden for prediction.
    """

    NPXXY = ("NPxxY", ("N", "P", None, None, "Y"), (2, 3))
    CWXP = ("CWxP", ("C", "W", None, "P"), (2,))
    EDRY = ("E/DRY", ("ED", "R", "Y"), (0,))

    def __init__(self, label, pattern, mask_offsets):
        self.label = label
        self.pattern = pattern
        self.mask_offsets = mask_offsets

    @classmethod
    def parse(cls, name: str) -> "MotifKind":
        key = name.replace("/", "").replace("-", "").upper()
        for kind in cls:
            if kind.name == key:
                return kind
        raise ValueError(f"unknown motif {name!r}; expected one of npxxy, cwxp, edry")

    def matches_at(self, sequence: str, start: int) -> bool:
        if start < 0 or start + len(self.pattern) > len(sequence):
            return False
        return all(allowed is None or sequence[start + i] in allowed for i, allowed in enumerate(self.pattern))


# Sequence-fraction windows standing in for TM3 / TM6 / TM7.
DEFAULT_WINDOWS: dict[MotifKind, tuple[float, float]] = {
    MotifKind.EDRY: (0.25, 0.60),
    MotifKind.CWXP: (0.50, 0.90),
    MotifKind.NPXXY: (0.70, 1.00),
}


@dataclass(frozen=True)
class MotifHit:
    kind: MotifKind
    start: int
    mask_positions: tuple[int, ...]
    position_fraction: float


@dataclass(frozen=True)
class RawMaskedPair:
    input_seq: str
    label_seq: str
    mask_positions: tuple[int, ...]
    source_id: str
    receptor_class: str = ""

    def __post_init__(self):
        if len(self.input_seq) != len(self.label_seq):
            raise CorpusError(f"{self.source_id}: input and label lengths differ")
        masked = {i for i, ch in enumerate(self.input_seq) if ch == MASK_CHAR}
        labelled = {i for i, ch in enumerate(self.label_seq) if ch != MASK_CHAR}
        if masked != set(self.mask_positions) or labelled != masked:
            raise CorpusError(f"{self.source_id}: mask positions disagree between input and label")

    def full_sequence(self) -> str:
        return "".join(l if l != MASK_CHAR else c for c, l in zip(self.input_seq, self.label_seq))


# ---------------------------------------------------------------- parsing


def _record(rid: str, rclass: str, seq: str, where: str) -> ProteinRecord:
    seq = "".join(seq.split()).upper()
    try:
        return ProteinRecord(rid, rclass, seq)
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from None


def _parse_csv(path: Path) -> list[ProteinRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["id", "receptor_class", "sequence"]:
            raise CorpusError(f"{path}: line 1: expected header id,receptor_class,sequence")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise CorpusError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
            rid, rclass, seq = (cell.strip() for cell in row)
            if not rid or not seq:
                raise CorpusError(f"{path}: line {line}: missing id or sequence")
            records.append(_record(rid, rclass, seq, f"{path}: line {line}"))
    return records


def _parse_fasta(path: Path) -> list[ProteinRecord]:
    records = []
    header = None
    header_line = 0
    chunks: list[str] = []

    def flush():
        if header is None:
            return
        rid, _, rclass = header.partition("|")
        if not rid.strip():
            raise CorpusError(f"{path}: line {header_line}: empty FASTA id")
        if not chunks:
            raise CorpusError(f"{path}: line {header_line}: entry {rid.strip()} has no sequence")
        records.append(_record(rid.strip(), rclass.strip(), "".join(chunks), f"{path}: line {header_line}"))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith(";"):
                continue
            if line.startswith(">"):
                flush()
                header, header_line, chunks = line[1:], lineno, []
            elif header is None:
                raise CorpusError(f"{path}: line {lineno}: sequence data before first '>' header")
            else:
                chunks.append(line)
    flush()
    return records


def parse_corpus(path, format: str | None = None) -> list[ProteinRecord]:
    """Read records in file order; ``format`` is inferred from the suffix when omitted."""
    path = Path(path)
    if format is None:
        format = "fasta" if path.suffix.lower() in {".fa", ".fasta", ".faa", ".fas"} else "csv"
    format = format.lower()
    if format == "csv":
        return _parse_csv(path)
    if format == "fasta":
        return _parse_fasta(path)
    raise ValueError(f"unknown corpus format {format!r}")


def write_corpus_csv(records: Iterable[ProteinRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "receptor_class", "sequence"])
        for rec in records:
            writer.writerow([rec.id, rec.receptor_class, rec.sequence])


# ---------------------------------------------------------------- transforms


def filter_corpus(records: Sequence[ProteinRecord], max_len: int = 370) -> list[ProteinRecord]:
    return [r for r in records if len(r.sequence) <= max_len]


def motif_matches(sequence: str, kind: MotifKind) -> list[int]:
    return [i for i in range(len(sequence) - len(kind.pattern) + 1) if kind.matches_at(sequence, i)]


def locate_motif(record: ProteinRecord, kind: MotifKind, window: tuple[float, float] | None = None) -> MotifHit | None:
    """Last occurrence of ``kind`` whose start/length fraction lies in ``window`` (inclusive)."""
    lo, hi = window if window is not None else DEFAULT_WINDOWS[kind]
    if not 0 <= lo < hi <= 1:
        raise ValueError(f"invalid window ({lo}, {hi})")
    n = len(record.sequence)
    for start in reversed(motif_matches(record.sequence, kind)):
        frac = start / n
        if lo <= frac <= hi:
            return MotifHit(kind, start, tuple(start + o for o in kind.mask_offsets), frac)
    return None


def mask_record(record: ProteinRecord, positions: Sequence[int]) -> RawMaskedPair:
    seq = record.sequence
    hidden = set(positions)
    input_seq = "".join(MASK_CHAR if i in hidden else ch for i, ch in enumerate(seq))
    label_seq = "".join(ch if i in hidden else MASK_CHAR for i, ch in enumerate(seq))
    return RawMaskedPair(input_seq, label_seq, tuple(sorted(hidden)), record.id, record.receptor_class)


def build_motif_dataset(records: Sequence[ProteinRecord], kind: MotifKind, window=None) -> list[RawMaskedPair]:
    pairs = []
    for rec in records:
        hit = locate_motif(rec, kind, window)
        if hit is not None:
            pairs.append(mask_record(rec, hit.mask_positions))
    return pairs


def build_span_dataset(records: Sequence[ProteinRecord], start: int = 100, count: int = 5) -> list[RawMaskedPair]:
    if count < 1:
        raise ValueError("count must be >= 1")
    if start < 0:
        raise ValueError("start must be >= 0")
    span = range(start, start + count)
    return [mask_record(r, span) for r in records if len(r.sequence) >= start + count]


def split_dataset(pairs: Sequence, ratio: float = 0.75, seed: int = 0) -> tuple[list, list]:
    """Seeded shuffle, then the first ``floor(n * ratio)`` items train."""
    if not 0 < ratio < 1:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    n = len(pairs)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(n * ratio)
    return [pairs[i] for i in order[:n_train]], [pairs[i] for i in order[n_train:]]


# ---------------------------------------------------------------- stats


@dataclass
class CorpusStats:
    histogram: list[tuple[int, int, int]]
    class_counts: list[tuple[str, int]]

    @property
    def n_records(self) -> int:
        return sum(c for _, c in self.class_counts)

    def histogram_csv(self) -> str:
        return "bin_lo,bin_hi,count\n" + "".join(f"{lo},{hi},{c}\n" for lo, hi, c in self.histogram)

    def classes_csv(self) -> str:
        return "class,count\n" + "".join(f"{k},{c}\n" for k, c in self.class_counts)


def corpus_stats(records: Sequence[ProteinRecord], bin_width: int = 10) -> CorpusStats:
    if not records:
        return CorpusStats([], [])
    lengths = [len(r.sequence) for r in records]
    lo = (min(lengths) // bin_width) * bin_width
    top = (max(lengths) // bin_width) * bin_width
    counts = Counter((n // bin_width) * bin_width for n in lengths)
    hist = [(b, b + bin_width, counts.get(b, 0)) for b in range(lo, top + 1, bin_width)]
    classes = Counter(r.receptor_class for r in records)
    ordered = sorted(classes.items(), key=lambda kv: (-kv[1], kv[0]))
    return CorpusStats(hist, ordered)


# ---------------------------------------------------------------- masked-pair files


PAIR_FIELDS = ["source_id", "receptor_class", "input_seq", "label_seq", "mask_positions"]


def write_pairs(pairs: Iterable[RawMaskedPair], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PAIR_FIELDS)
        for p in pairs:
            writer.writerow([p.source_id, p.receptor_class, p.input_seq, p.label_seq, " ".join(map(str, p.mask_positions))])


def read_pairs(path) -> list[RawMaskedPair]:
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PAIR_FIELDS:
            raise CorpusError(f"{path}: expected header {','.join(PAIR_FIELDS)}")
        for row in reader:
            try:
                positions = tuple(int(x) for x in row["mask_positions"].split())
                pairs.append(RawMaskedPair(row["input_seq"], row["label_seq"], positions, row["source_id"], row["receptor_class"]))
            except (CorpusError, ValueError, TypeError) as exc:
                raise CorpusError(f"{path}: line {reader.line_num}: {exc}") from None
    return pairs
