#!/usr/bin/env python3
"""Recompute grid summaries from records.jsonl and compare with summary.json.

Usage: check_summary.py OUT_DIR [--tol 1e-12]
Exits 1 on any mismatch.
"""
import argparse
import json
import math
import statistics
import sys
from collections import defaultdict
from pathlib import Path


def recompute(records):
    cells = defaultdict(lambda: {"z": [], "failed": 0, "wv": []})
    for r in records:
        c = cells[(r["dataset"], r["scheme"], r["iteration"])]
        z = r.get("logZ")
        if z is not None and math.isfinite(z):
            c["z"].append(z)
            wv = r.get("weight_variance")
            if wv is not None and math.isfinite(wv):
                c["wv"].append(wv)
        else:
            c["failed"] += 1

    def sd(c):
        if c["failed"]:
            return "failed", None
        if len(c["z"]) < 2:
            return "insufficient-replicates", None
        return "ok", statistics.stdev(c["z"])

    rows = {}
    for key, c in cells.items():
        bpf = cells.get((key[0], "bootstrap", 0))
        bpf_sd = sd(bpf)[1] if bpf else None
        status, s = sd(c)
        ratio = s / bpf_sd if s is not None and bpf_sd else None
        rows[key] = {"status": status, "sd_log_z": s, "bpf_sd_log_z": bpf_sd, "ratio": ratio,
                     "runs": len(c["z"]) + c["failed"], "failed_runs": c["failed"]}

    groups = defaultdict(list)
    for (ds, scheme, it), row in rows.items():
        if scheme == "bootstrap" or not row["bpf_sd_log_z"]:
            continue
        if row["status"] == "ok":
            groups[(scheme, it)].append(row["ratio"])
        elif row["status"] == "failed":
            groups[(scheme, it)].append(math.inf)
    props = {}
    for key, ratios in groups.items():
        n = len(ratios)
        props[key] = {
            "datasets": n,
            "le_bpf": sum(r <= 1.0 for r in ratios) / n,
            "le_tenth_bpf": sum(r <= 0.1 for r in ratios) / n,
            "le_ten_bpf": sum(r <= 10.0 for r in ratios) / n,
            "above_ten_bpf": sum(r > 10.0 for r in ratios),
        }
    return rows, props


def close(a, b, tol):
    if a is None or b is None:
        return a is None and b is None
    if isinstance(a, str) or isinstance(b, str):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--tol", type=float, default=1e-12)
    args = ap.parse_args()
    with open(args.out_dir / "records.jsonl") as f:
        records = [json.loads(line) for line in f if line.strip()]
    with open(args.out_dir / "summary.json") as f:
        emitted = json.load(f)
    rows, props = recompute(records)

    bad = []
    seen = set()
    for d in emitted["datasets"]:
        key = (d["dataset"], d["scheme"], d["iteration"])
        seen.add(key)
        mine = rows.get(key)
        if mine is None:
            bad.append(f"unexpected dataset row {key}")
            continue
        for field, value in mine.items():
            if not close(value, d[field], args.tol):
                bad.append(f"{key} {field}: emitted {d[field]!r}, recomputed {value!r}")
    bad += [f"missing dataset row {k}" for k in rows.keys() - seen]
    seen = set()
    for p in emitted["proportions"]:
        key = (p["scheme"], p["iteration"])
        seen.add(key)
        mine = props.get(key)
        if mine is None:
            bad.append(f"unexpected proportion row {key}")
            continue
        for field, value in mine.items():
            if not close(value, p[field], args.tol):
                bad.append(f"{key} {field}: emitted {p[field]!r}, recomputed {value!r}")
    bad += [f"missing proportion row {k}" for k in props.keys() - seen]

    for line in bad:
        print(line, file=sys.stderr)
    print(f"{len(rows)} dataset rows, {len(props)} proportion rows, {len(bad)} mismatches")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
