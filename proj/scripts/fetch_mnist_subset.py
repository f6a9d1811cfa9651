#!/usr/bin/env python3
"""Build a 10,000-digit MNIST subset in IDX format from the `mnist` npm package.

The npm package (cazala/mnist, v1.1.0) ships 10,000 MNIST digits as JSON arrays
of 784 intensities in [0, 1] rounded to three decimals. Multiplying by 255 and
rounding recovers the original bytes exactly.

The digits are shuffled with a fixed seed and split 8,000 / 2,000 into
train / test IDX files:

    <out>/train-images-idx3-ubyte  <out>/train-labels-idx1-ubyte
    <out>/t10k-images-idx3-ubyte   <out>/t10k-labels-idx1-ubyte

Usage: fetch_mnist_subset.py [--out data/mnist-subset] [--tarball mnist-1.1.0.tgz]
"""

import argparse
import hashlib
import io
import json
import random
import struct
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

PACKAGE = "mnist@1.1.0"
TARBALL_SHA256 = "3fb5bb119c556ae7d1aa647653ca603a1b3abf001aae410732cc55d923c5a390"
TRAIN_COUNT = 8000
SPLIT_SEED = 20240101


def fetch_tarball(workdir: Path) -> Path:
    subprocess.run(["npm", "pack", PACKAGE, "--silent"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    return next(workdir.glob("mnist-*.tgz"))


def load_digits(tarball: Path):
    samples = []
    with tarfile.open(tarball, "r:gz") as tar:
        for digit in range(10):
            member = tar.extractfile(f"package/src/digits/{digit}.json")
            values = json.load(io.TextIOWrapper(member))["data"]
            if len(values) % 784 != 0:
                sys.exit(f"digit {digit}: {len(values)} values is not a multiple of 784")
            for start in range(0, len(values), 784):
                pixels = bytes(int(round(v * 255.0)) for v in values[start:start + 784])
                samples.append((pixels, digit))
    return samples


def write_idx(out: Path, prefix: str, samples) -> None:
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/mnist-subset")
    parser.add_argument("--tarball", help="use an already downloaded npm tarball")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tarball = Path(args.tarball) if args.tarball else fetch_tarball(Path(tmp))
        digest = hashlib.sha256(tarball.read_bytes()).hexdigest()
        if digest != TARBALL_SHA256:
            sys.exit(f"{tarball.name}: sha256 {digest} does not match {TARBALL_SHA256}")
        samples = load_digits(tarball)

    random.Random(SPLIT_SEED).shuffle(samples)
    write_idx(out, "train", samples[:TRAIN_COUNT])
    write_idx(out, "t10k", samples[TRAIN_COUNT:])
    print(f"wrote {TRAIN_COUNT} train / {len(samples) - TRAIN_COUNT} test digits to {out}")


if __name__ == "__main__":
    main()
