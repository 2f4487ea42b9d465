import importlib.util
from pathlib import Path

import pytest

from gpcrbert.corpus import parse_corpus, write_corpus_csv
from gpcrbert.fixture import (
    CLASS_COUNTS,
    EXPECTED,
    OTHER_CLASSES,
    checksum_path,
    count_mismatches,
    fixture_path,
    sha256_file,
)
from gpcrbert.synthetic import synthetic_motif_corpus

SCRIPT = Path(__file__).resolve().parents[1] / "scripts" / "fetch_fixture.py"


def _load_script():
    spec = importlib.util.spec_from_file_location("fetch_fixture", SCRIPT)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def test_recorded_counts_match_published_values():
    assert (EXPECTED.raw, EXPECTED.filtered) == (293, 254)
    assert (EXPECTED.npxxy, EXPECTED.cwxp, EXPECTED.edry) == (238, 168, 212)
    assert EXPECTED.max_len == 370
    # the class table lists every class with more than 3 records; 44 of the 62 have fewer
    assert sum(CLASS_COUNTS.values()) + OTHER_CLASSES == EXPECTED.filtered
    assert len(CLASS_COUNTS) + 44 == EXPECTED.n_classes
    assert min(CLASS_COUNTS.values()) == 4


def test_env_var_overrides_location(tmp_path, monkeypatch):
    monkeypatch.setenv("GPCRBERT_FIXTURE", str(tmp_path / "absent.csv"))
    assert fixture_path() is None
    (tmp_path / "absent.csv").write_text("id,receptor_class,sequence\n")
    assert fixture_path() == tmp_path / "absent.csv"


def test_fetch_rejects_wrong_counts(tmp_path):
    src, out = tmp_path / "src.csv", tmp_path / "fixture.csv"
    write_corpus_csv(synthetic_motif_corpus(16, 48), src)
    assert _load_script().main(["--source", str(src), "--out", str(out)]) == 1
    assert not out.exists() and not checksum_path(out).exists()


def test_fetch_force_writes_checksum(tmp_path):
    src, out = tmp_path / "src.csv", tmp_path / "fixture.csv"
    write_corpus_csv(synthetic_motif_corpus(16, 48), src)
    assert _load_script().main(["--source", str(src), "--out", str(out), "--force"]) == 0
    assert checksum_path(out).read_text() == f"{sha256_file(out)}  fixture.csv\n"
    assert len(parse_corpus(out)) == 16


def test_fetch_renames_columns(tmp_path):
    src, out = tmp_path / "src.csv", tmp_path / "fixture.csv"
    src.write_text("Entry,Family,Seq\nx1,adrb2,ac de\n")
    assert _load_script().main(["--source", str(src), "--out", str(out), "--id-col", "Entry", "--class-col",
                                "Family", "--seq-col", "Seq", "--force"]) == 0
    (rec,) = parse_corpus(out)
    assert (rec.id, rec.receptor_class, rec.sequence) == ("x1", "adrb2", "ACDE")


def test_fetch_checks_digest(tmp_path):
    src, out = tmp_path / "src.csv", tmp_path / "fixture.csv"
    write_corpus_csv(synthetic_motif_corpus(4, 48), src)
    assert _load_script().main(["--source", str(src), "--out", str(out), "--force", "--expect-sha256", "0" * 64]) == 1
    assert not out.exists()
    assert _load_script().main(["--source", str(src), "--out", str(out), "--force"]) == 0
    digest = sha256_file(out)
    assert _load_script().main(["--source", str(src), "--out", str(out), "--force", "--expect-sha256", digest]) == 0


@pytest.mark.skipif(fixture_path() is None, reason="GPCRdb fixture not present; see scripts/fetch_fixture.py")
def test_fixture_counts():
    path = fixture_path()
    digest_file = checksum_path(path)
    if digest_file.exists():
        assert digest_file.read_text().split()[0] == sha256_file(path)
    assert count_mismatches(parse_corpus(path)) == []
