#!/usr/bin/env python3
"""Download the MNIST and Fashion-MNIST IDX files.

Needs network access; the library itself never downloads anything.  Files
land in --dest (default ./data) and --dest/fashion, the locations the
training CLI and the acceptance suite look in (override with
MORPHNN_DATA_DIR / MORPHNN_FASHION_DIR).  Each file is parsed as IDX after
download and discarded if malformed.
"""

import argparse
import sys
import urllib.request
from pathlib import Path

# the original yann.lecun.com host often refuses plain downloads
MNIST_BASE = "https://storage.googleapis.com/cvdf-datasets/mnist/"
FASHION_BASE = ("http://fashion-mnist.s3-website.eu-central-1"
                ".amazonaws.com/")

FILES = ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
         "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz")


def fetch(base: str, dest: Path) -> bool:
    sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
    from morphnn.data import load_idx

    dest.mkdir(parents=True, exist_ok=True)
    ok = True
    for name in FILES:
        target = dest / name
        if target.is_file():
            print(f"  {target} already present")
            continue
        url = base + name
        print(f"  {url} -> {target}")
        try:
            with urllib.request.urlopen(url, timeout=60) as resp:
                target.write_bytes(resp.read())
            arr = load_idx(target)
            print(f"    ok: shape {arr.shape}")
        except Exception as e:
            print(f"    FAILED: {e}")
            target.unlink(missing_ok=True)
            ok = False
    return ok


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dest", default="data",
                    help="directory for MNIST (fashion goes in a "
                         "subdirectory)")
    ap.add_argument("--dataset", default="both",
                    choices=("mnist", "fashion", "both"))
    args = ap.parse_args()
    dest = Path(args.dest)
    ok = True
    if args.dataset in ("mnist", "both"):
        print("MNIST:")
        ok &= fetch(MNIST_BASE, dest)
    if args.dataset in ("fashion", "both"):
        print("Fashion-MNIST:")
        ok &= fetch(FASHION_BASE, dest / "fashion")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
