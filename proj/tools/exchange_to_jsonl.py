#!/usr/bin/env python3
"""Convert the raw exchange_rate.txt(.gz) file (one row per day, one column per
currency, comma separated, no header) into the JSON-lines layout read by vqar.

    python3 tools/exchange_to_jsonl.py exchange_rate.txt.gz out_dir
    VQAR_EXCHANGE_DIR=out_dir ctest --test-dir build -R acceptance_6

Each series keeps its first 6101 observations: 6071 for training plus the
final 30-day horizon that the back-test scores.
"""

import argparse
import gzip
import json
import pathlib

LENGTH = 6071 + 30
START = "1990-01-01"


def read_columns(path):
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt") as f:
        rows = [[float(v) for v in line.strip().split(",")] for line in f if line.strip()]
    if not rows:
        raise SystemExit(f"{path}: no data")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise SystemExit(f"{path}: ragged rows")
    return [[r[c] for r in rows] for c in range(width)]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", type=pathlib.Path)
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--length", type=int, default=LENGTH)
    args = ap.parse_args()

    columns = read_columns(args.source)
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "data.jsonl", "w") as f:
        for i, col in enumerate(columns):
            if len(col) < args.length:
                raise SystemExit(f"series {i} has only {len(col)} points")
            rec = {"item_id": f"exchange_{i}", "start": START, "target": col[: args.length], "feat_static_cat": [i]}
            f.write(json.dumps(rec) + "\n")
    meta = {"freq": "D", "prediction_length": 30}
    (args.out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {len(columns)} series of length {args.length} to {args.out}")


if __name__ == "__main__":
    main()
