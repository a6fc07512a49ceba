#!/usr/bin/env python3
"""Write the 5000-image MNIST subset bundled with mlxtend as IDX files.

Usage: make_digits_idx.py OUT_DIR [WHEEL]

Without WHEEL the script uses an installed mlxtend package; otherwise it reads
the data file straight out of the wheel archive (pip download mlxtend).
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv(wheel):
    if wheel:
        raw = zipfile.ZipFile(wheel).read(MEMBER)
    else:
        import mlxtend
        raw = (Path(mlxtend.__file__).parent / "data" / "data" / "mnist_5k.csv.gz").read_bytes()
    return np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")


def main():
    out = Path(sys.argv[1])
    table = read_csv(sys.argv[2] if len(sys.argv) > 2 else None)
    images = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    n = images.shape[0]
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "digits5k-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(images.tobytes())
    with open(out / "digits5k-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main()
