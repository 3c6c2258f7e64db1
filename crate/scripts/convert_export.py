#!/usr/bin/env python3
"""Convert an exported PPG cohort (.npz) into a pulsebench store.

Expected arrays in the .npz:
  segments     float, shape (n_segments, segment_len)
  subject_ids  str,   shape (n_segments,)
  sbp, dbp     float, shape (n_segments,)   for BP cohorts
  af           bool/int, shape (n_segments,) for AF cohorts
  split        str,   shape (n_segments,)   optional: train / validation / test
  segment_ids  str,   shape (n_segments,)   optional, defaults to <subject>-<k>

Writes <out>/<name>.f32 and <out>/<name>.manifest.json.
"""

import argparse
import hashlib
import json
from collections import defaultdict
from pathlib import Path

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("export", type=Path)
    ap.add_argument("--fs", type=float, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--name", required=True)
    args = ap.parse_args()

    data = np.load(args.export, allow_pickle=False)
    x = np.asarray(data["segments"], dtype="<f4")
    if x.ndim != 2 or not np.isfinite(x).all():
        raise SystemExit("segments must be a finite 2-d array")
    subjects = [str(s) for s in data["subject_ids"]]
    if "segment_ids" in data:
        ids = [str(s) for s in data["segment_ids"]]
    else:
        seen = defaultdict(int)
        ids = []
        for s in subjects:
            ids.append(f"{s}-{seen[s]:04d}")
            seen[s] += 1

    entries = []
    seg_bytes = x.shape[1] * 4
    for i, (sid, subj) in enumerate(zip(ids, subjects)):
        if "af" in data:
            labels = {"af": bool(data["af"][i])}
        else:
            labels = {"sbp": float(data["sbp"][i]), "dbp": float(data["dbp"][i])}
        entries.append({
            "segment_id": sid,
            "subject_id": subj,
            "offset": i * seg_bytes,
            "labels": labels,
            "sha256": hashlib.sha256(x[i].tobytes()).hexdigest(),
        })

    manifest = {
        "version": 1,
        "name": args.name,
        "fs": args.fs,
        "duration_s": x.shape[1] / args.fs,
        "segment_len": x.shape[1],
        "entries": entries,
    }
    if "split" in data:
        manifest["splits"] = {sid: str(t) for sid, t in zip(ids, data["split"])}

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"{args.name}.f32").write_bytes(x.tobytes())
    (args.out / f"{args.name}.manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {len(entries)} segments to {args.out / args.name}")


if __name__ == "__main__":
    main()
