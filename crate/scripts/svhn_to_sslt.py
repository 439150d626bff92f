#!/usr/bin/env python3
"""Convert SVHN cropped-digit .mat files to the SSLT raw-tensor format.

    python3 scripts/svhn_to_sslt.py train_32x32.mat svhn/train.sslt
    python3 scripts/svhn_to_sslt.py test_32x32.mat svhn/test.sslt

Samples are written as u8 [N, 3, 32, 32]; labels as i64 with digit 0
stored as 0 (SVHN stores it as 10).
"""

import argparse
import struct

import numpy as np
import scipy.io

MAGIC = b"SSLT"
U8, I64 = 1, 2


def write_tensor(f, code, array):
    f.write(MAGIC)
    f.write(struct.pack("<BB", code, array.ndim))
    f.write(struct.pack("<%dQ" % array.ndim, *array.shape))
    f.write(np.ascontiguousarray(array).astype(array.dtype.newbyteorder("<")).tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("mat")
    ap.add_argument("out")
    args = ap.parse_args()

    m = scipy.io.loadmat(args.mat)
    x = m["X"]  # (32, 32, 3, N)
    y = m["y"].reshape(-1).astype(np.int64) % 10
    if x.ndim != 4 or x.shape[:3] != (32, 32, 3) or x.shape[3] != y.shape[0]:
        raise SystemExit(f"unexpected SVHN layout: X {x.shape}, y {m['y'].shape}")
    x = np.transpose(x, (3, 2, 0, 1)).astype(np.uint8)
    with open(args.out, "wb") as f:
        write_tensor(f, U8, x)
        write_tensor(f, I64, y)
    print(f"{args.out}: {x.shape[0]} samples, {len(np.unique(y))} classes")


if __name__ == "__main__":
    main()
