#!/usr/bin/env python3
"""Build a small MNIST corpus in IDX format from the 5000-digit subset that
ships inside the mlxtend wheel (500 images per class).

    python3 tools/make_mnist_subset.py [--out data/mnist] [--wheel path.whl]

Without --wheel the wheel is fetched with `pip download`. Images are shuffled
with a fixed seed and split 4000 train / 1000 test.
"""
import argparse
import glob
import gzip
import random
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(tmp: Path) -> Path:
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                    "-d", str(tmp), "mlxtend"], check=True)
    return Path(glob.glob(str(tmp / "mlxtend-*.whl"))[0])


def write_idx(path: Path, rows, labels):
    with open(path.with_name(path.name + "-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r))
    with open(path.with_name(path.name + "-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--wheel")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = Path(args.wheel) if args.wheel else fetch_wheel(Path(tmp))
        text = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER)).decode()

    samples = []
    for line in text.splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        samples.append((vals[:784], vals[784]))
    random.Random(20240607).shuffle(samples)

    train, test = samples[:4000], samples[4000:]
    write_idx(out / "train", [s[0] for s in train], [s[1] for s in train])
    write_idx(out / "t10k", [s[0] for s in test], [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
