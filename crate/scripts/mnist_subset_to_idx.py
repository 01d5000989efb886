#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits shipped in the npm `mnist` package
(src/digits/<d>.json, flat 784-float arrays in [0,1]) into standard
gzipped IDX files: 9,000 training and 1,000 test samples.

usage: mnist_subset_to_idx.py <package/src/digits> <out_dir>
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

TRAIN = 9000


def write_idx_images(path, images):
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x0803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x0801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for i in range(0, len(flat), 784):
            px = [max(0, min(255, round(v * 255))) for v in flat[i : i + 784]]
            samples.append((px, digit))
    random.Random(20200731).shuffle(samples)
    train, test = samples[:TRAIN], samples[TRAIN:]
    out.mkdir(parents=True, exist_ok=True)
    write_idx_images(out / "train-images-idx3-ubyte.gz", [s[0] for s in train])
    write_idx_labels(out / "train-labels-idx1-ubyte.gz", [s[1] for s in train])
    write_idx_images(out / "t10k-images-idx3-ubyte.gz", [s[0] for s in test])
    write_idx_labels(out / "t10k-labels-idx1-ubyte.gz", [s[1] for s in test])
    print(f"{len(train)} train / {len(test)} test samples written to {out}")


if __name__ == "__main__":
    main()
