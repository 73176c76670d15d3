"""Build a desk-scale MNIST pool (10,000 digits) as gzipped IDX files.

The npm package ``mnist`` ships 10k real MNIST digits as JSON arrays of
pixel intensities rounded to three decimals; multiplying by 255 and rounding
recovers the original bytes.  Usage::

    python scripts/fetch_mnist_desk.py [--tarball mnist-1.1.0.tgz] [--out data/mnist-desk]

Without ``--tarball`` the script runs ``npm pack mnist@1.1.0`` in a temp dir.
"""

import argparse
import gzip
import json
import subprocess
import tarfile
import tempfile
from pathlib import Path

import numpy as np

from hvtm.data_io import write_idx


def read_digits(tarball: Path) -> tuple[np.ndarray, np.ndarray]:
    images, labels = [], []
    with tarfile.open(tarball) as tf:
        for digit in range(10):
            member = tf.extractfile(f"package/src/digits/{digit}.json")
            raw = np.asarray(json.load(member)["data"], dtype=np.float64)
            imgs = np.rint(raw * 255).clip(0, 255).astype(np.uint8).reshape(-1, 28, 28)
            images.append(imgs)
            labels.append(np.full(len(imgs), digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tarball", type=Path)
    ap.add_argument("--out", type=Path, default=Path("data/mnist-desk"))
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tarball = args.tarball
        if tarball is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp, check=True,
                           stdout=subprocess.DEVNULL)
            tarball = Path(tmp) / "mnist-1.1.0.tgz"
        images, labels = read_digits(tarball)

    args.out.mkdir(parents=True, exist_ok=True)
    for name, arr in (("images-idx3-ubyte.gz", images), ("labels-idx1-ubyte.gz", labels)):
        with gzip.GzipFile(args.out / name, "wb", mtime=0) as fh:
            fh.write(write_idx(arr))
    counts = np.bincount(labels, minlength=10)
    print(f"wrote {len(labels)} digits to {args.out} (per class: {counts.tolist()})")


if __name__ == "__main__":
    main()
