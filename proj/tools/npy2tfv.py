#!/usr/bin/env python3
"""Convert .npy snippet features into the TFV1 container read by tcape.

Accepts [T, D] arrays or [crops, T, D] stacks. With --crops-from, a directory of
per-crop files named <video>__<n>.npy is stacked into one [crops, T, D] file.
"""

import argparse
import re
import struct
import sys
from pathlib import Path

import numpy as np

DTYPES = {"f32": (0, "<f4"), "f64": (1, "<f8")}


def write_tfv(path: Path, array: np.ndarray, dtype: str) -> None:
    if array.ndim not in (2, 3):
        raise ValueError(f"{path.name}: expected rank 2 or 3, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{path.name}: non-finite values")
    code, np_dtype = DTYPES[dtype]
    header = b"TFV1" + struct.pack("<II", code, array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    path.write_bytes(header + np.ascontiguousarray(array, dtype=np_dtype).tobytes())


def grouped_crops(directory: Path):
    groups = {}
    for f in sorted(directory.glob("*.npy")):
        m = re.fullmatch(r"(.+)__(\d+)", f.stem)
        if m:
            groups.setdefault(m.group(1), []).append((int(m.group(2)), f))
    for video, files in sorted(groups.items()):
        yield video, np.stack([np.load(f) for _, f in sorted(files)])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("inputs", nargs="*", type=Path, help=".npy files")
    ap.add_argument("--crops-from", type=Path, help="directory of <video>__<n>.npy crop files")
    ap.add_argument("--out", type=Path, required=True, help="output directory")
    ap.add_argument("--dtype", choices=sorted(DTYPES), default="f32")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    jobs = [(p.stem, np.load(p)) for p in args.inputs]
    if args.crops_from:
        jobs.extend(grouped_crops(args.crops_from))
    if not jobs:
        ap.error("nothing to convert")
    for name, array in jobs:
        try:
            write_tfv(args.out / f"{name}.tfv", array, args.dtype)
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
