import struct

import numpy as np
import pytest

from gpcrbert import checkpoint as ck
from gpcrbert.model import Model, ModelConfig


@pytest.fixture(scope="module")
def desk_bytes():
    model = Model.create(ModelConfig.desk(), 11)
    return model, ck.to_bytes(ck.Checkpoint("model", model.config.to_dict(), {k: p.data for k, p in model.params.items()}))


def test_layout_prefix(desk_bytes):
    _, raw = desk_bytes
    magic, version, header_len = struct.unpack_from("<4sIQ", raw)
    assert magic == b"GBRT" and version == 1
    header = raw[16 : 16 + header_len].decode()
    lines = header.splitlines()
    assert lines[0] == "@kind model"
    assert lines[1].startswith("@config {")
    assert lines[2].startswith("@vocab ")
    assert lines[3] == "embeddings.token f32 30,128 0"


def test_round_trip_byte_identical(tmp_path, desk_bytes):
    model, _ = desk_bytes
    ck.save_model(model, tmp_path / "a.gbrt")
    again = ck.load_model(tmp_path / "a.gbrt")
    ck.save_model(again, tmp_path / "b.gbrt")
    assert (tmp_path / "a.gbrt").read_bytes() == (tmp_path / "b.gbrt").read_bytes()
    assert again.config == model.config
    for k, p in model.params.items():
        np.testing.assert_array_equal(again.params[k].data, p.data)


def test_payload_length(desk_bytes):
    model, raw = desk_bytes
    header_len = struct.unpack_from("<Q", raw, 8)[0]
    assert len(raw) - 16 - header_len == 4 * model.n_parameters()


def test_bad_magic(desk_bytes):
    _, raw = desk_bytes
    with pytest.raises(ck.BadMagic) as err:
        ck.from_bytes(b"NOPE" + raw[4:])
    assert err.value.code == 11


def test_unsupported_version(desk_bytes):
    _, raw = desk_bytes
    with pytest.raises(ck.UnsupportedVersion):
        ck.from_bytes(raw[:4] + struct.pack("<I", 9) + raw[8:])


def small(tensors):
    return ck.to_bytes(ck.Checkpoint("model", {}, tensors))


def test_truncated_payload():
    raw = small({"w": np.ones((2, 3), dtype=np.float32)})
    with pytest.raises(ck.TruncatedPayload) as err:
        ck.from_bytes(raw[:-4])
    assert err.value.code == 13


def test_overlapping_offsets():
    raw = small({"a": np.ones(2, dtype=np.float32), "b": np.ones(2, dtype=np.float32)})
    header_len = struct.unpack_from("<Q", raw, 8)[0]
    header = raw[16 : 16 + header_len].replace(b"b f32 2 8", b"b f32 2 4")
    forged = raw[:8] + struct.pack("<Q", len(header)) + header + raw[16 + header_len :]
    with pytest.raises(ck.OverlappingOffsets) as err:
        ck.from_bytes(forged)
    assert err.value.code == 14


def test_error_codes_distinct():
    codes = [c.code for c in (ck.BadMagic, ck.UnsupportedVersion, ck.TruncatedPayload, ck.OverlappingOffsets,
                              ck.MalformedHeader, ck.VocabMismatch)]
    assert len(set(codes)) == len(codes)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        small({"w": np.array([np.nan], dtype=np.float32)})


def test_vocab_mismatch(tmp_path):
    model = Model.create(ModelConfig.tiny(), 0)
    raw = ck.to_bytes(ck.Checkpoint("model", model.config.to_dict(), {k: p.data for k, p in model.params.items()},
                                    vocab="0" * 64))
    (tmp_path / "x.gbrt").write_bytes(raw)
    with pytest.raises(ck.VocabMismatch):
        ck.load_model(tmp_path / "x.gbrt")


def test_scalar_and_values_bit_exact():
    values = np.array([1e-38, -0.0, 3.4e38, 0.1], dtype=np.float32)
    back = ck.from_bytes(small({"v": values, "s": np.float32(2.5)}))
    assert back.tensors["v"].tobytes() == values.tobytes()
    assert back.tensors["s"].shape == ()
