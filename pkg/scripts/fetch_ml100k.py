#!/usr/bin/env python3
"""Download the MovieLens 100k ratings into data/ml-100k/.

Usage: python3 scripts/fetch_ml100k.py [DEST_DIR]

Needs outbound network access.  The benchmark tests look for
data/ml-100k/u.data relative to the repository root (override with the
MCCF_ML100K environment variable).
"""

import io
import sys
import urllib.request
import zipfile
from pathlib import Path

URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "data"
    target = dest / "ml-100k" / "u.data"
    if target.is_file():
        print(f"already present: {target}")
        return 0
    print(f"downloading {URL} ...")
    with urllib.request.urlopen(URL, timeout=60) as resp:
        payload = resp.read()
    dest.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        for name in zf.namelist():
            # only the files we use; the archive has no absolute paths
            if name.endswith(("u.data", "u.info", "README")):
                zf.extract(name, dest)
    if not target.is_file():
        print("archive did not contain ml-100k/u.data", file=sys.stderr)
        return 1
    print(f"wrote {target}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
