"""Attention and embedding analyses of a trained model.

Top-k attention per head, heatmap matrices, [CLS] embeddings, windowed
repetition counts per receptor class, and cross-referencing of attended
residues against mutagenesis records through Ballesteros-Weinstein labels.
"""

from __future__ import annotations

import csv
import logging
import re
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import tensorcore as tc
from .corpus import ProteinRecord, mask_record
from .model import Model, collate, encoder_forward
from .tokenizer import MaskedExample, TokenizerError, encode, residue_sequence

log = logging.getLogger(__name__)

UNKNOWN_BW = "unknown"
NO_MATCH = "no match"
BW_PATTERN = re.compile(r"^(\d+\.\d+|H8|[IE]CL\d)(x\d+)?$")


# ---------------------------------------------------------------- embeddings


@dataclass
class ClsEmbedding:
    matrix: np.ndarray  # [n, d_model]
    ids: list[str]
    classes: list[str]
    skipped: list[str]


def extract_cls(model: Model, records: Sequence[ProteinRecord], batch_size: int = 16) -> ClsEmbedding:
    """Final-layer hidden state at [CLS] for every record that fits ``max_len``, in eval mode."""
    examples, skipped = [], []
    for rec in records:
        try:
            examples.append(encode(mask_record(rec, []), model.config.max_len))
        except TokenizerError as exc:
            log.warning("skipping %s: %s", rec.id, exc)
            skipped.append(rec.id)
    rows = []
    with tc.no_grad():
        for i in range(0, len(examples), batch_size):
            enc = encoder_forward(model, collate(examples[i : i + batch_size]))
            rows.append(enc.final.data[:, 0, :].astype(np.float64))
    matrix = np.concatenate(rows) if rows else np.zeros((0, model.config.d_model))
    return ClsEmbedding(matrix, [e.source_id for e in examples], [e.receptor_class for e in examples], skipped)


# ---------------------------------------------------------------- top-k attention


@dataclass(frozen=True)
class AttentionRow:
    id: str
    head: int  # 1-based
    mask_pos: int  # sequence index of the query
    rank: int  # 1-based
    seq_index: int  # -1 for [CLS]
    residue: str
    weight: float
    bw: str = ""


REPORT_FIELDS = [f.name for f in fields(AttentionRow)]


def top_k_indices(row: np.ndarray, eligible: np.ndarray, k: int) -> np.ndarray:
    """Token indices of the ``k`` largest eligible weights, descending; ties go to the lower index."""
    candidates = np.flatnonzero(eligible)
    if candidates.size < k:
        raise ValueError(f"only {candidates.size} eligible columns, need k={k}")
    order = np.argsort(-row[candidates], kind="stable")
    return candidates[order[:k]]


def attention_matrices(model: Model, example: MaskedExample, layer: int = -1) -> np.ndarray:
    """Per-head ``[H, S, S]`` attention of one example at its full encoded width."""
    with tc.no_grad():
        enc = encoder_forward(model, example, capture_attention=True)
    return enc.stack(0).layer(layer)


def top_k_attention(model: Model, example: MaskedExample, k: int = 5, layer: int = -1, include_cls: bool = False,
                    annotations: Mapping[int, str] | None = None) -> list[AttentionRow]:
    """For each head and masked query, the ``k`` most-attended residues.

    [PAD] columns and the query's own column are never eligible; [CLS] only
    with ``include_cls``.
    """
    if not example.mask_positions:
        raise ValueError(f"{example.source_id}: no masked positions to query")
    weights = attention_matrices(model, example, layer)
    return top_k_from_attention(weights, example, k, include_cls, annotations)


def top_k_from_attention(weights: np.ndarray, example: MaskedExample, k: int = 5, include_cls: bool = False,
                         annotations: Mapping[int, str] | None = None) -> list[AttentionRow]:
    residues = residue_sequence(example)
    width = weights.shape[-1]
    real = np.asarray(example.attention_mask[:width]) == 1
    rows = []
    for head in range(weights.shape[0]):
        for q in example.mask_positions:
            eligible = real.copy()
            eligible[q] = False
            if not include_cls:
                eligible[0] = False
            for rank, col in enumerate(top_k_indices(weights[head, q], eligible, k), 1):
                col = int(col)
                seq_index = col - 1
                bw = "" if annotations is None else annotations.get(seq_index, UNKNOWN_BW)
                residue = "[CLS]" if col == 0 else residues[seq_index]
                rows.append(AttentionRow(example.source_id, head + 1, q - 1, rank, seq_index, residue,
                                         float(weights[head, q, col]), bw))
    return rows


# ---------------------------------------------------------------- repetition


@dataclass(frozen=True)
class RepetitionRow:
    receptor_class: str
    head: int
    residue: str
    window: str
    repetition: int

    @property
    def label(self) -> str:
        return f"{self.residue} in {self.window}"


def residue_window(sequence: str, index: int, width: int = 6) -> str:
    return sequence[index : index + width]


def repetition_table(rows: Iterable[AttentionRow], sequences: Mapping[str, str], classes: Mapping[str, str],
                     width: int = 6) -> list[RepetitionRow]:
    """Per class and head, how many sequences have the same ``width``-residue window in their top-k.

    The window starts at the attended residue, so ``K`` at the start of
    ``KEHKAL`` reads "K in KEHKAL".  Sorted by class, head, then count descending.
    """
    seen: dict[tuple[str, int, str], set[str]] = defaultdict(set)
    for row in rows:
        if row.seq_index < 0:
            continue
        window = residue_window(sequences[row.id], row.seq_index, width)
        seen[(classes.get(row.id, ""), row.head, window)].add(row.id)
    table = [RepetitionRow(c, h, w[0], w, len(ids)) for (c, h, w), ids in seen.items()]
    table.sort(key=lambda r: (r.receptor_class, r.head, -r.repetition, r.window))
    return table


# ---------------------------------------------------------------- mutagenesis


@dataclass(frozen=True)
class MutagenesisRecord:
    receptor_class: str
    bw: str
    effect: str
    note: str = ""

    def __post_init__(self):
        if not BW_PATTERN.match(self.bw):
            raise ValueError(f"{self.bw!r} is not a BW position (e.g. 6.27, H8, ICL2)")


@dataclass(frozen=True)
class MatchRow:
    id: str
    head: int
    mask_pos: int
    rank: int
    seq_index: int
    residue: str
    bw: str
    match: str


MATCH_FIELDS = [f.name for f in fields(MatchRow)]


def mutagenesis_match(rows: Iterable[AttentionRow], annotations: Mapping[str, Mapping[int, str]],
                      mutagenesis: Sequence[MutagenesisRecord], window: int = 5,
                      classes: Mapping[str, str] | None = None,
                      sequences: Mapping[str, str] | None = None) -> list[MatchRow]:
    """Label each reported residue with the nearest mutagenesis record along its sequence.

    Records are placed on a sequence through its BW annotation.  The result is
    "C 6.27 (effect)" for an exact hit, "2 after C 6.27 (effect)" for a record
    within ``window`` residues, and "no match" otherwise.  With ``classes``,
    only records of the sequence's receptor class are considered.  Residues
    without an annotation keep BW "unknown".
    """
    out = []
    for row in rows:
        ann = annotations.get(row.id, {})
        bw = ann.get(row.seq_index, UNKNOWN_BW)
        position = {label: idx for idx, label in ann.items()}
        seq = sequences.get(row.id, "") if sequences else ""
        best = None
        for rec in mutagenesis:
            if classes is not None and rec.receptor_class != classes.get(row.id):
                continue
            idx = position.get(rec.bw)
            if idx is None or row.seq_index < 0:
                continue
            offset = row.seq_index - idx
            if abs(offset) > window:
                continue
            key = (abs(offset), idx)
            if best is None or key < best[0]:
                best = (key, offset, idx, rec)
        if best is None:
            match = NO_MATCH
        else:
            _, offset, idx, rec = best
            letter = seq[idx] if 0 <= idx < len(seq) else (row.residue if offset == 0 else "")
            target = f"{letter} {rec.bw}".strip() + f" ({rec.effect})"
            if offset == 0:
                match = target
            else:
                match = f"{abs(offset)} {'after' if offset > 0 else 'before'} {target}"
        out.append(MatchRow(row.id, row.head, row.mask_pos, row.rank, row.seq_index, row.residue, bw, match))
    return out


# ---------------------------------------------------------------- file formats


def _write_rows(path, header: list[str], rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_dicts(path, required: Sequence[str]) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        return list(reader)


def write_report(rows: Iterable[AttentionRow], path) -> None:
    _write_rows(path, REPORT_FIELDS, (
        (r.id, r.head, r.mask_pos, r.rank, r.seq_index, r.residue, repr(r.weight), r.bw) for r in rows))


def read_report(path) -> list[AttentionRow]:
    out = []
    for i, d in enumerate(_read_dicts(path, REPORT_FIELDS), 2):
        try:
            out.append(AttentionRow(d["id"], int(d["head"]), int(d["mask_pos"]), int(d["rank"]),
                                    int(d["seq_index"]), d["residue"], float(d["weight"]), d["bw"]))
        except ValueError as exc:
            raise ValueError(f"{path}:{i}: {exc}") from None
    return out


def write_matches(rows: Iterable[MatchRow], path) -> None:
    _write_rows(path, MATCH_FIELDS, (astuple(r) for r in rows))


def write_repetitions(rows: Iterable[RepetitionRow], path) -> None:
    _write_rows(path, ["class", "head", "residue", "window", "repetition"],
                ((r.receptor_class, r.head, r.residue, r.window, r.repetition) for r in rows))


def write_coords(ids: Sequence[str], classes: Sequence[str], coords: np.ndarray, path) -> None:
    _write_rows(path, ["id", "class", "x", "y"],
                ((i, c, repr(float(x)), repr(float(y))) for i, c, (x, y) in zip(ids, classes, coords)))


def read_annotations(path) -> dict[str, dict[int, str]]:
    """``id,seq_index,bw_label`` rows into ``{id: {seq_index: label}}``."""
    out: dict[str, dict[int, str]] = defaultdict(dict)
    for i, d in enumerate(_read_dicts(path, ["id", "seq_index", "bw_label"]), 2):
        try:
            out[d["id"]][int(d["seq_index"])] = d["bw_label"].strip()
        except ValueError:
            raise ValueError(f"{path}:{i}: seq_index {d['seq_index']!r} is not an integer") from None
    return dict(out)


def read_mutagenesis(path) -> list[MutagenesisRecord]:
    """``class,bw,effect`` rows, with an optional ``note`` column."""
    out = []
    for i, d in enumerate(_read_dicts(path, ["class", "bw", "effect"]), 2):
        try:
            out.append(MutagenesisRecord(d["class"].strip(), d["bw"].strip(), d["effect"].strip(),
                                         (d.get("note") or "").strip()))
        except ValueError as exc:
            raise ValueError(f"{path}:{i}: {exc}") from None
    return out

