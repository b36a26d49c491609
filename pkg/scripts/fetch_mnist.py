#!/usr/bin/env python3
"""Download and unpack the four MNIST IDX files.

The library itself never downloads anything: training commands read the
IDX files from --mnist-dir (or the MNIST_DIR environment variable).
Run this script once, explicitly, to populate a data directory:

    python scripts/fetch_mnist.py data/mnist

The canonical files (also available from many mirrors) are

    train-images-idx3-ubyte.gz
    train-labels-idx1-ubyte.gz
    t10k-images-idx3-ubyte.gz
    t10k-labels-idx1-ubyte.gz

If downloading is impossible in your environment, fetch those four
files by any other means, gunzip them, and point MNIST_DIR at the
directory holding the uncompressed files.
"""

import gzip
import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]
FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]


def fetch(out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        target = out_dir / name[: -len(".gz")]
        if target.exists():
            print(f"{target} already present")
            continue
        data = None
        for mirror in MIRRORS:
            url = mirror + name
            try:
                print(f"downloading {url}")
                with urllib.request.urlopen(url, timeout=60) as resp:
                    data = resp.read()
                break
            except OSError as exc:
                print(f"  failed: {exc}")
        if data is None:
            print(f"could not download {name} from any mirror", file=sys.stderr)
            return 1
        target.write_bytes(gzip.decompress(data))
        print(f"wrote {target} ({target.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/mnist")
    sys.exit(fetch(out))
