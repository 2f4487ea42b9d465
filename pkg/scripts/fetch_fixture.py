#!/usr/bin/env python3
"""Normalise a copy of the GPCRdb class A corpus into the test fixture.

    python scripts/fetch_fixture.py --source URL_OR_PATH [--id-col ID --class-col C --seq-col S]

The source is a CSV or FASTA (``>id|class``) file, local or over HTTP(S).
It is rewritten as ``id,class,sequence`` to ``data/gpcrdb_fixture.csv``, and its
record and motif counts are checked against the recorded ones.  On success the
SHA-256 of the normalised file is written next to it; with ``--expect-sha256``
a mismatching download is rejected.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import tempfile
import urllib.request
from pathlib import Path

from gpcrbert.corpus import ProteinRecord, parse_corpus, write_corpus_csv
from gpcrbert.fixture import DEFAULT_PATH, checksum_path, count_mismatches, observed_counts, sha256_file


def read_source(source: str) -> bytes:
    if source.startswith(("http://", "https://")):
        with urllib.request.urlopen(source, timeout=60) as resp:
            return resp.read()
    return Path(source).read_bytes()


def records_from_columns(text: str, id_col: str, class_col: str, seq_col: str) -> list[ProteinRecord]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in (id_col, class_col, seq_col) if c not in (reader.fieldnames or [])]
    if missing:
        raise SystemExit(f"source lacks column(s) {', '.join(missing)}; has {reader.fieldnames}")
    return [ProteinRecord(row[id_col].strip(), row[class_col].strip(), "".join(row[seq_col].split()).upper())
            for row in reader]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--source", required=True, help="URL or path of a CSV or FASTA corpus")
    p.add_argument("--out", default=str(DEFAULT_PATH))
    p.add_argument("--id-col", help="source column names, when they differ from id,class,sequence")
    p.add_argument("--class-col")
    p.add_argument("--seq-col")
    p.add_argument("--expect-sha256", help="reject the result unless it has this digest")
    p.add_argument("--force", action="store_true", help="keep the file even if counts disagree (a given digest is still enforced)")
    args = p.parse_args(argv)

    raw = read_source(args.source)
    if args.id_col or args.class_col or args.seq_col:
        records = records_from_columns(raw.decode("utf-8-sig"), args.id_col or "id", args.class_col or "class",
                                       args.seq_col or "sequence")
    else:
        suffix = ".fasta" if raw.lstrip().startswith(b">") else ".csv"
        with tempfile.NamedTemporaryFile(suffix=suffix) as tmp:
            tmp.write(raw)
            tmp.flush()
            records = parse_corpus(tmp.name)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_corpus_csv(records, out)
    digest = sha256_file(out)
    for key, value in observed_counts(records).items():
        print(f"{key:>10} {value}")
    problems = [] if args.force else count_mismatches(records)
    if args.expect_sha256 and digest != args.expect_sha256:
        problems.append(f"sha256 {digest} != expected {args.expect_sha256}")
    if problems:
        out.unlink()
        print("rejected:\n  " + "\n  ".join(problems), file=sys.stderr)
        return 1
    checksum_path(out).write_text(f"{digest}  {out.name}\n")
    print(f"fixture -> {out} (sha256 {digest})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
