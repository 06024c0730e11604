#!/usr/bin/env python3
"""Convert the 5000-sample MNIST CSV shipped in the mlxtend wheel into IDX files.

Usage:
    python3 scripts/mnist5k_to_idx.py SOURCE [OUT_DIR]

SOURCE is either an mlxtend wheel (.whl) or the extracted mnist_5k.csv.gz.
Each CSV row holds 784 pixel values followed by the label. OUT_DIR defaults
to data/mnist5k and receives images-idx3-ubyte and labels-idx1-ubyte.
"""

import gzip
import os
import struct
import sys
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv(source):
    if source.endswith(".whl"):
        with zipfile.ZipFile(source) as z:
            raw = z.read(MEMBER)
    else:
        with open(source, "rb") as f:
            raw = f.read()
    return gzip.decompress(raw).decode("ascii").splitlines()


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    out = sys.argv[2] if len(sys.argv) > 2 else os.path.join("data", "mnist5k")
    rows = [line.split(",") for line in read_csv(sys.argv[1]) if line]
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        if len(row) != 785:
            sys.exit(f"expected 785 columns, got {len(row)}")
        pixels.extend(int(float(v)) for v in row[:784])
        labels.append(int(float(row[784])))
    os.makedirs(out, exist_ok=True)
    n = len(rows)
    with open(os.path.join(out, "images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(pixels)
    with open(os.path.join(out, "labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels)
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
