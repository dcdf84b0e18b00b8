"""Convert the MNIST digits shipped in the ``mnist`` npm package to IDX files.

The npm package (MIT licensed, https://github.com/cazala/mnist) bundles
10,000 MNIST digits as ``src/digits/<digit>.json`` with pixels scaled to
[0, 1]. This script shuffles them with a fixed seed and writes
``train-*`` (first 8,000) and ``t10k-*`` (last 2,000) IDX files, gzipped.

    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import argparse
import json
from pathlib import Path

import numpy as np

from newton_admm.data import write_idx


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("digits_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--n-train", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    images, labels = [], []
    for digit in range(10):
        flat = np.asarray(json.loads((args.digits_dir / f"{digit}.json").read_text())["data"])
        block = flat.reshape(-1, 28, 28)
        images.append(np.rint(block * 255.0).astype(np.uint8))
        labels.append(np.full(block.shape[0], digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(labels.shape[0])
    images, labels = images[order], labels[order]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    k = args.n_train
    write_idx(images[:k], labels[:k], args.out_dir / "train-images-idx3-ubyte.gz",
              args.out_dir / "train-labels-idx1-ubyte.gz")
    write_idx(images[k:], labels[k:], args.out_dir / "t10k-images-idx3-ubyte.gz",
              args.out_dir / "t10k-labels-idx1-ubyte.gz")
    print(f"wrote {k} train and {labels.shape[0] - k} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
