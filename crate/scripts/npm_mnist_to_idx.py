#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package (v1.1.0)
into gzipped IDX files.

Usage: npm_mnist_to_idx.py <package/src/digits> <out_dir>

Pixels in the JSON are byte/255 rounded to three decimals; round(v*255)
recovers the original byte. Images are written in a fixed shuffled order
(numpy seed 20150602) so that any prefix mixes all ten classes.
"""
import gzip
import json
import struct
import sys

import numpy as np


def main(src, out):
    images, labels = [], []
    for digit in range(10):
        with open(f"{src}/{digit}.json") as fh:
            data = np.asarray(json.load(fh)["data"], dtype=np.float64)
        data = data.reshape(-1, 784)
        images.append(np.rint(data * 255.0).astype(np.uint8))
        labels.extend([digit] * data.shape[0])
    images = np.concatenate(images)
    labels = np.asarray(labels, dtype=np.uint8)
    order = np.random.RandomState(20150602).permutation(len(labels))
    images, labels = images[order], labels[order]

    with gzip.GzipFile(f"{out}/digits10k-images-idx3-ubyte.gz", "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(labels), 28, 28))
        fh.write(images.tobytes())
    with gzip.GzipFile(f"{out}/digits10k-labels-idx1-ubyte.gz", "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(labels.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
