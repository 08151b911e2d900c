"""Sweep every figure config and write OBJ/CSV meshes to one directory."""
import argparse
import hashlib
import sys
import time
from pathlib import Path

from srminimal.cli import execute
from srminimal.config import packaged_configs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="figures", help="output directory (default: ./figures)")
    ap.add_argument("names", nargs="*", help="configs to run (default: all fig*)")
    args = ap.parse_args()
    names = args.names or [n for n in packaged_configs() if n.startswith("fig")]
    for name in names:
        t0 = time.perf_counter()
        out = Path(args.out) / name
        code = execute(["sweep", "--config", name, "--out", str(out)])
        if code:
            sys.exit(code)
        digest = hashlib.sha256((out / f"{name}.csv").read_bytes()).hexdigest()[:16]
        print(f"{name}: {out / (name + '.obj')}  csv sha256 {digest}  {time.perf_counter() - t0:.2f}s")


if __name__ == "__main__":
    main()
