"""Fixed 30-token vocabulary and [CLS]/[MASK]/[PAD] encoding."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import MASK_CHAR, RawMaskedPair
from .tensorcore import IGNORE_INDEX

SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
RESIDUES = "LAGVESIKRDTPNQFYMHCWXUBZO"
TOKENS: tuple[str, ...] = SPECIAL_TOKENS + tuple(RESIDUES)
TOKEN_TO_ID = {tok: i for i, tok in enumerate(TOKENS)}

PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
VOCAB_SIZE = len(TOKENS)
IGNORE = IGNORE_INDEX

assert VOCAB_SIZE == 30 and MASK_CHAR not in TOKEN_TO_ID


class TokenizerError(ValueError):
    pass


def vocab_hash() -> str:
    return hashlib.sha256("\n".join(TOKENS).encode()).hexdigest()


def vocab_csv() -> str:
    return "index,token\n" + "".join(f"{i},{t}\n" for i, t in enumerate(TOKENS))


@dataclass
class MaskedExample:
    input_ids: np.ndarray
    label_ids: np.ndarray
    attention_mask: np.ndarray
    mask_positions: tuple[int, ...]
    source_id: str = ""
    receptor_class: str = ""

    @property
    def length(self) -> int:
        """Number of real tokens including [CLS]."""
        return int(self.attention_mask.sum())


def _residue_id(ch: str, source_id: str, offset: int) -> int:
    try:
        return TOKEN_TO_ID[ch]
    except KeyError:
        raise TokenizerError(f"{source_id}: character {ch!r} at offset {offset} is not in the vocabulary") from None


def encode(pair: RawMaskedPair, max_len: int, add_sep: bool = False) -> MaskedExample:
    n = len(pair.input_seq)
    needed = n + 1 + int(add_sep)
    if needed > max_len:
        raise TokenizerError(f"{pair.source_id}: sequence of length {n} does not fit max_len={max_len}")
    input_ids = np.full(max_len, PAD_ID, dtype=np.int64)
    label_ids = np.full(max_len, IGNORE, dtype=np.int64)
    attention = np.zeros(max_len, dtype=np.int8)
    input_ids[0] = CLS_ID
    masked = []
    for i, (ch, lab) in enumerate(zip(pair.input_seq, pair.label_seq)):
        if ch == MASK_CHAR:
            input_ids[i + 1] = MASK_ID
            label_ids[i + 1] = _residue_id(lab, pair.source_id, i)
            masked.append(i + 1)
        else:
            input_ids[i + 1] = _residue_id(ch, pair.source_id, i)
    if add_sep:
        input_ids[n + 1] = SEP_ID
    attention[:needed] = 1
    return MaskedExample(input_ids, label_ids, attention, tuple(masked), pair.source_id, pair.receptor_class)


def encode_query(sequence: str, max_len: int, source_id: str = "query") -> MaskedExample:
    """Encode a sequence whose 'J' letters are to be predicted; all labels are IGNORE."""
    sequence = "".join(sequence.split()).upper()
    if len(sequence) + 1 > max_len:
        raise TokenizerError(f"{source_id}: sequence of length {len(sequence)} does not fit max_len={max_len}")
    input_ids = np.full(max_len, PAD_ID, dtype=np.int64)
    input_ids[0] = CLS_ID
    masked = []
    for i, ch in enumerate(sequence):
        if ch == MASK_CHAR:
            input_ids[i + 1] = MASK_ID
            masked.append(i + 1)
        else:
            input_ids[i + 1] = _residue_id(ch, source_id, i)
    attention = np.zeros(max_len, dtype=np.int8)
    attention[: len(sequence) + 1] = 1
    return MaskedExample(input_ids, np.full(max_len, IGNORE, dtype=np.int64), attention, tuple(masked), source_id)


def encode_all(pairs: Sequence[RawMaskedPair], max_len: int, add_sep: bool = False) -> list[MaskedExample]:
    return [encode(p, max_len, add_sep) for p in pairs]


def decode(ids) -> str:
    out = []
    for i in np.asarray(ids).reshape(-1):
        if not 0 <= i < VOCAB_SIZE:
            raise TokenizerError(f"token id {i} outside [0, {VOCAB_SIZE})")
        if i in (PAD_ID, CLS_ID, SEP_ID):
            continue
        out.append(MASK_CHAR if i == MASK_ID else TOKENS[i])
    return "".join(out)


def residue_sequence(example: MaskedExample) -> str:
    """The full residue string, with masked positions filled in from the labels where known."""
    ids = example.input_ids.copy()
    known = example.label_ids != IGNORE
    ids[known] = example.label_ids[known]
    return decode(ids[: example.length])
