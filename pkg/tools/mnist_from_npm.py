"""Convert the digit JSON files of the npm ``mnist`` package into IDX files.

The package ships 10,000 MNIST digits as grey levels in [0, 1] grouped by
class.  They are shuffled with a fixed seed and split into train / test
sets written in the standard gzipped IDX layout that ``spnn_fpv`` reads.

    python3 tools/mnist_from_npm.py path/to/mnist/src/digits data/mnist
"""

import argparse
import json
from pathlib import Path

import numpy as np

from spnn_fpv.spnn import write_idx


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--test", type=int, default=2000, help="number of test images")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = [], []
    for d in range(10):
        data = json.loads((args.digits_dir / f"{d}.json").read_text())["data"]
        a = np.asarray(data, float).reshape(-1, 28, 28)
        images.append(np.rint(a * 255).astype(np.uint8))
        labels.append(np.full(len(a), d, np.uint8))
    X = np.concatenate(images)
    y = np.concatenate(labels)
    perm = np.random.default_rng(args.seed).permutation(len(y))
    X, y = X[perm], y[perm]
    n_train = len(y) - args.test
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train-images-idx3-ubyte.gz", X[:n_train])
    write_idx(args.out_dir / "train-labels-idx1-ubyte.gz", y[:n_train])
    write_idx(args.out_dir / "t10k-images-idx3-ubyte.gz", X[n_train:])
    write_idx(args.out_dir / "t10k-labels-idx1-ubyte.gz", y[n_train:])
    print(f"wrote {n_train} training and {args.test} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
