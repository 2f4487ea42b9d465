import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpcrbert.corpus import RawMaskedPair, mask_record, ProteinRecord
from gpcrbert.tokenizer import (
    CLS_ID,
    IGNORE,
    MASK_ID,
    PAD_ID,
    TOKENS,
    TOKEN_TO_ID,
    TokenizerError,
    VOCAB_SIZE,
    decode,
    encode,
    encode_query,
    residue_sequence,
    vocab_csv,
)

RESIDUES = "LAGVESIKRDTPNQFYMHCWXUBZO"


def test_vocab_layout():
    assert VOCAB_SIZE == 30
    assert TOKENS[:5] == ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
    assert "".join(TOKENS[5:]) == RESIDUES
    assert "J" not in TOKENS
    assert PAD_ID == 0
    assert len(set(TOKENS)) == 30 and all(TOKEN_TO_ID[t] == i for i, t in enumerate(TOKENS))
    assert not 0 <= IGNORE < VOCAB_SIZE


def test_vocab_csv():
    lines = vocab_csv().splitlines()
    assert lines[0] == "index,token"
    assert lines[1] == "0,[PAD]"
    assert lines[-1] == "29,O"


def test_encode_worked_example():
    ex = encode(RawMaskedPair("NPJJY", "JJKLJ", (2, 3), "s"), 8)
    assert ex.input_ids.tolist() == [2, 17, 16, 4, 4, 20, 0, 0]
    assert ex.mask_positions == (3, 4)
    supervised = np.flatnonzero(ex.label_ids != IGNORE)
    assert supervised.tolist() == [3, 4]
    assert ex.label_ids[supervised].tolist() == [12, 5]
    assert ex.attention_mask.tolist() == [1, 1, 1, 1, 1, 1, 0, 0]


def test_encode_without_masks():
    ex = encode(mask_record(ProteinRecord("a", "b", "ACD"), []), 6)
    assert (ex.input_ids == MASK_ID).sum() == 0
    assert (ex.label_ids == IGNORE).all()


def test_encode_too_long_names_id():
    with pytest.raises(TokenizerError, match="seqX"):
        encode(mask_record(ProteinRecord("seqX", "b", "ACDE"), []), 4)


def test_decode_examples():
    assert decode([2, 17, 16, 0]) == "NP"
    assert decode([4]) == "J"
    with pytest.raises(TokenizerError):
        decode([30])


@given(st.text(alphabet=RESIDUES, min_size=1, max_size=40), st.data())
def test_round_trip_and_invariants(seq, data):
    positions = sorted(data.draw(st.sets(st.integers(0, len(seq) - 1))))
    pair = mask_record(ProteinRecord("p", "c", seq), positions)
    max_len = len(seq) + 1 + data.draw(st.integers(0, 5))
    ex = encode(pair, max_len)
    assert ex.input_ids[0] == CLS_ID
    assert ex.attention_mask.sum() == len(seq) + 1
    assert (ex.input_ids == MASK_ID).sum() == (ex.label_ids != IGNORE).sum() == len(positions)
    assert ((ex.label_ids != IGNORE) <= (ex.input_ids == MASK_ID)).all()
    pad = ex.attention_mask == 0
    assert (ex.input_ids[pad] == PAD_ID).all() and (ex.label_ids[pad] == IGNORE).all()
    assert decode(ex.input_ids) == pair.input_seq
    assert residue_sequence(ex) == seq
    if not positions:
        assert decode(ex.input_ids) == seq


def test_encode_query_marks_j():
    ex = encode_query("ANPJJYA", 10)
    assert ex.mask_positions == (4, 5)
    assert (ex.label_ids == IGNORE).all()
