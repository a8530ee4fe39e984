"""Write an MNIST subset in IDX layout from the 5 000-image sample bundled with mlxtend.

The sample is class-balanced (500 per digit) and sorted by label, so it is
shuffled with a fixed seed and split into train / test IDX files that
``pcflow --dataset mnist --data-dir DIR`` reads directly.

    python scripts/fetch_mnist_subset.py data/mnist --test 1000
"""

import argparse
import gzip
import os
from pathlib import Path

import numpy as np

from pcflow.dataio import SPLIT_FILES, write_idx


def bundled_sample() -> tuple[np.ndarray, np.ndarray]:
    import mlxtend

    path = Path(mlxtend.__file__).parent / "data" / "data" / "mnist_5k.csv.gz"
    with gzip.open(path, "rt") as fh:
        table = np.loadtxt(fh, delimiter=",", dtype=np.int64)
    return table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--test", type=int, default=1000, help="images held out for the test split")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    images, labels = bundled_sample()
    order = np.random.default_rng(args.seed).permutation(len(labels))
    images, labels = images[order].reshape(-1, 28, 28), labels[order]
    n_test = args.test
    args.out_dir.mkdir(parents=True, exist_ok=True)
    splits = {"train": slice(n_test, None), "test": slice(0, n_test)}
    for split, sl in splits.items():
        img_name, lab_name = SPLIT_FILES[split]
        write_idx(args.out_dir / img_name, images[sl])
        write_idx(args.out_dir / lab_name, labels[sl])
        print(f"{split}: {len(labels[sl])} images -> {args.out_dir}")


if __name__ == "__main__":
    main()
