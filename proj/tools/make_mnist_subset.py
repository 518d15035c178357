#!/usr/bin/env python3
"""Assemble an MNIST subset in IDX format from redistributable package mirrors.

Full MNIST is not always reachable from build machines. Two small packages on
the public registries ship real MNIST digits:

  * npm ``mnist`` (cazala/mnist): 10,000 digits as JSON, pixels in [0,1]
    rounded to three decimals.
  * PyPI ``mlxtend``: 5,000 digits as CSV with integer pixels.

The script merges both, drops exact duplicates (after quantizing to bytes),
shuffles with a fixed seed and writes gzip-compressed IDX files:

  data/mnist/train-images-idx3-ubyte.gz  (first --train rows)
  data/mnist/train-labels-idx1-ubyte.gz
  data/mnist/t10k-images-idx3-ubyte.gz   (the remainder)
  data/mnist/t10k-labels-idx1-ubyte.gz

Usage:
  npm pack mnist && tar xzf mnist-*.tgz           # -> ./package
  pip download --no-deps mlxtend                  # -> mlxtend-*.whl
  tools/make_mnist_subset.py --npm-dir package --mlxtend-wheel mlxtend-*.whl
"""

import argparse
import gzip
import json
import os
import random
import struct
import zipfile


def load_npm(npm_dir):
    rows = []
    for digit in range(10):
        path = os.path.join(npm_dir, "src", "digits", f"{digit}.json")
        with open(path) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for i in range(0, len(flat), 784):
            pix = bytes(min(255, max(0, round(v * 255))) for v in flat[i:i + 784])
            rows.append((pix, digit))
    return rows


def load_mlxtend(wheel):
    rows = []
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    for line in text.splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((bytes(vals[:784]), vals[784]))
    return rows


def write_idx(prefix, rows):
    with gzip.GzipFile(prefix + "-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
        for pix, _ in rows:
            f.write(pix)
    with gzip.GzipFile(prefix + "-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--npm-dir", required=True)
    ap.add_argument("--mlxtend-wheel", required=True)
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=20170)
    args = ap.parse_args()

    seen = set()
    rows = []
    for pix, label in load_npm(args.npm_dir) + load_mlxtend(args.mlxtend_wheel):
        if pix in seen:
            continue
        seen.add(pix)
        rows.append((pix, label))
    random.Random(args.seed).shuffle(rows)

    os.makedirs(args.out, exist_ok=True)
    write_idx(os.path.join(args.out, "train"), rows[:args.train])
    write_idx(os.path.join(args.out, "t10k"), rows[args.train:])
    print(f"unique={len(rows)} train={args.train} test={len(rows) - args.train}")


if __name__ == "__main__":
    main()
