import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gpcrbert import interpret as it
from gpcrbert.corpus import ProteinRecord, mask_record
from gpcrbert.model import Model, ModelConfig, encoder_forward
from gpcrbert.plotting import attention_heatmap_svg
from gpcrbert.tokenizer import encode

SVG = "{http://www.w3.org/2000/svg}"


def _example(seq="ACDEFGHIKLMNPQ", positions=(6, 7), max_len=20, sid="s1"):
    return encode(mask_record(ProteinRecord(sid, "cls", seq), list(positions)), max_len)


@pytest.fixture(scope="module")
def model():
    return Model.create(ModelConfig.tiny(max_len=20), 4)


# ---------------------------------------------------------------- top-k


def test_uniform_attention_picks_first_eligible(model):
    uniform = model.copy()
    for name in ("wq", "bq"):
        uniform.params[f"layers.1.attn.{name}"].data[...] = 0
    ex = _example(positions=(2, 3))
    rows = it.top_k_attention(uniform, ex, k=5)
    assert len(rows) == 2 * 2 * 5
    for head in (1, 2):
        # query at token 3 (seq index 2): tokens 1, 2, 4, 5, 6 remain first
        picked = [r.seq_index for r in rows if r.head == head and r.mask_pos == 2]
        assert picked == [0, 1, 3, 4, 5]
    assert {round(r.weight, 6) for r in rows} == {round(1 / 15, 6)}


def test_hand_built_row():
    ex = _example("ACDEFGHIKL", positions=(0,), max_len=14)
    w = np.zeros((1, 14, 14))
    w[0, 1, 1:11] = [0.0, 0.4, 0.3, 0.2, 0.05, 0.03, 0.02, 0.0, 0.0, 0.0]
    rows = it.top_k_from_attention(w, ex, k=5)
    assert [r.seq_index for r in rows] == [1, 2, 3, 4, 5]
    assert [r.weight for r in rows] == pytest.approx([0.4, 0.3, 0.2, 0.05, 0.03])
    assert [r.residue for r in rows] == list("CDEFG")
    assert [r.rank for r in rows] == [1, 2, 3, 4, 5]


def test_exclusions_and_cls_flag():
    ex = _example("ACDEFG", positions=(2,), max_len=10)
    w = np.zeros((1, 10, 10))
    w[0, 3] = [0.5, 0.01, 0.02, 0.3, 0.03, 0.04, 0.1, 0, 0, 0]  # column 3 is the query itself
    assert [r.seq_index for r in it.top_k_from_attention(w, ex, k=4)] == [5, 4, 3, 1]
    with_cls = it.top_k_from_attention(w, ex, k=4, include_cls=True)
    assert with_cls[0].seq_index == -1 and with_cls[0].residue == "[CLS]"
    with pytest.raises(ValueError, match="eligible"):
        it.top_k_from_attention(w, ex, k=6)


@given(st.integers(0, 2**32 - 1))
def test_top_k_matches_sort_oracle(seed):
    rng = np.random.default_rng(seed)
    length = int(rng.integers(8, 15))
    seq = "".join(rng.choice(list("ACDEFGHIKLMNPQRSTVWY"), length))
    q = int(rng.integers(0, length))
    ex = _example(seq, positions=(q,), max_len=16)
    w = rng.random((2, 16, 16)).round(2)  # rounding forces ties
    w[:, :, length + 1 :] = 0
    rows = it.top_k_from_attention(w, ex, k=5)
    for head in range(2):
        cols = [c for c in range(1, length + 1) if c != q + 1]
        oracle = sorted(cols, key=lambda c: (-w[head, q + 1, c], c))[:5]
        got = [r.seq_index + 1 for r in rows if r.head == head + 1]
        assert got == oracle
        weights = [r.weight for r in rows if r.head == head + 1]
        assert weights == sorted(weights, reverse=True)


def test_no_masked_positions_rejected(model):
    with pytest.raises(ValueError, match="no masked"):
        it.top_k_attention(model, _example(positions=()))


def test_annotations_fill_bw():
    ex = _example("ACDEFG", positions=(0,), max_len=10)
    w = np.zeros((1, 10, 10))
    w[0, 1, 2:7] = [0.5, 0.4, 0.3, 0.2, 0.1]
    rows = it.top_k_from_attention(w, ex, k=5, annotations={1: "3.50", 2: "3.51"})
    assert [r.bw for r in rows] == ["3.50", "3.51", "unknown", "unknown", "unknown"]


# ---------------------------------------------------------------- heatmap


def test_heatmap_equals_captured_attention(model):
    ex = _example()
    enc = encoder_forward(model, ex, capture_attention=True)
    expected = enc.stack(0).layer(-1)
    np.testing.assert_array_equal(it.attention_matrices(model, ex), expected)


def test_heatmap_svg_cells_and_padding(model, tmp_path):
    ex = _example()
    mats = it.attention_matrices(model, ex)
    path = tmp_path / "h.svg"
    attention_heatmap_svg(mats, path)
    root = ET.parse(path).getroot()
    groups = [g for g in root.iter(f"{SVG}g") if g.get("id", "").startswith("head")]
    assert [g.get("id") for g in groups] == ["head1", "head2"]
    seq = mats.shape[-1]
    cells = [list(g.iter(f"{SVG}path")) for g in groups]
    assert sum(len(c) for c in cells) == 2 * seq**2
    length = ex.length
    for head_cells in cells:
        for i, cell in enumerate(head_cells):
            if i % seq >= length:
                assert "fill: #ffffff" in cell.get("style")


# ---------------------------------------------------------------- [CLS] embeddings


def test_cls_embeddings(model):
    base = "ACDEFGHIKLMNPQ"
    mutated = base[:7] + "W" + base[8:]
    records = [ProteinRecord("a", "x", base), ProteinRecord("b", "x", base), ProteinRecord("c", "y", mutated),
               ProteinRecord("long", "y", "A" * 40)]
    emb = it.extract_cls(model, records, batch_size=2)
    assert emb.matrix.shape == (3, model.config.d_model)
    assert emb.ids == ["a", "b", "c"] and emb.skipped == ["long"]
    assert emb.classes == ["x", "x", "y"]
    np.testing.assert_array_equal(emb.matrix[0], emb.matrix[1])
    assert np.linalg.norm(emb.matrix[0] - emb.matrix[2]) > 1e-6


# ---------------------------------------------------------------- repetition


def test_repetition_table():
    rows = [
        it.AttentionRow("a", 1, 5, 1, 2, "K", 0.5),
        it.AttentionRow("b", 1, 5, 1, 2, "K", 0.4),
        it.AttentionRow("b", 1, 5, 2, 2, "K", 0.4),  # same sequence twice counts once
        it.AttentionRow("c", 2, 5, 1, 0, "M", 0.4),
        it.AttentionRow("a", 1, 5, 3, -1, "[CLS]", 0.1),
    ]
    seqs = {"a": "MCKEHKALQ", "b": "ACKEHKALW", "c": "MKEHKA"}
    table = it.repetition_table(rows, seqs, {"a": "adrb2", "b": "adrb2", "c": "opsd"})
    assert [(r.receptor_class, r.head, r.label, r.repetition) for r in table] == [
        ("adrb2", 1, "K in KEHKAL", 2),
        ("opsd", 2, "M in MKEHKA", 1),
    ]


# ---------------------------------------------------------------- mutagenesis


def _row(seq_index, sid="adrb2_human"):
    return it.AttentionRow(sid, 1, 10, 1, seq_index, "?", 0.3)


ANN = {"adrb2_human": {20: "6.27", 22: "6.29", 30: "6.37"}}
SEQS = {"adrb2_human": "A" * 20 + "CLKEHKALKTLGIIMG"}
MUT = [it.MutagenesisRecord("adrb2", "6.27", "thermostabilization")]


def test_mutagenesis_exact_match():
    (row,) = it.mutagenesis_match([_row(20)], ANN, MUT, sequences=SEQS)
    assert row.bw == "6.27"
    assert row.match == "C 6.27 (thermostabilization)"


def test_mutagenesis_two_after():
    (row,) = it.mutagenesis_match([_row(22)], ANN, MUT, sequences=SEQS)
    assert row.match == "2 after C 6.27 (thermostabilization)"
    (row,) = it.mutagenesis_match([_row(18)], ANN, MUT, sequences=SEQS)
    assert row.match == "2 before C 6.27 (thermostabilization)" and row.bw == "unknown"


def test_mutagenesis_window_and_empty():
    rows = [_row(20), _row(26), _row(30)]
    assert [m.match for m in it.mutagenesis_match(rows, ANN, [])] == ["no match"] * 3
    out = it.mutagenesis_match(rows, ANN, MUT, window=5, sequences=SEQS)
    assert [m.match for m in out][1:] == ["no match", "no match"]
    assert len(out) == 3


def test_mutagenesis_class_filter():
    classes = {"adrb2_human": "opsd"}
    (row,) = it.mutagenesis_match([_row(20)], ANN, MUT, classes=classes)
    assert row.match == "no match"


@pytest.mark.parametrize("bw", ["6.27", "3.50x50", "H8", "ICL2", "ECL3"])
def test_bw_pattern_accepts(bw):
    it.MutagenesisRecord("c", bw, "e")


@pytest.mark.parametrize("bw", ["6", "TM6", "6.27a", ""])
def test_bw_pattern_rejects(bw):
    with pytest.raises(ValueError):
        it.MutagenesisRecord("c", bw, "e")


# ---------------------------------------------------------------- files


def test_report_round_trip(tmp_path):
    rows = [it.AttentionRow("a", 1, 5, 1, 2, "K", 0.5, "6.27"), it.AttentionRow("a", 1, 5, 2, -1, "[CLS]", 0.25)]
    it.write_report(rows, tmp_path / "r.csv")
    text = (tmp_path / "r.csv").read_text().splitlines()
    assert text[0] == "id,head,mask_pos,rank,seq_index,residue,weight,bw"
    assert it.read_report(tmp_path / "r.csv") == rows


def test_annotation_and_mutagenesis_readers(tmp_path):
    (tmp_path / "a.csv").write_text("id,seq_index,bw_label\nx,3,6.27\nx,4,6.28\n")
    (tmp_path / "m.csv").write_text("class,bw,effect\nadrb2,6.27,thermostabilization\n")
    assert it.read_annotations(tmp_path / "a.csv") == {"x": {3: "6.27", 4: "6.28"}}
    assert it.read_mutagenesis(tmp_path / "m.csv") == [it.MutagenesisRecord("adrb2", "6.27", "thermostabilization")]
