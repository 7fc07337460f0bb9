"""Fetch MovieLens-100K and write it as ``::`` ratings/items files.

The grouplens host is often unreachable from build machines, so the data is
taken from the copy bundled inside the ``pytorch-widedeep`` wheel (fetched
with ``pip download``, nothing is installed).  Needs pandas + pyarrow.

    python scripts/fetch_ml100k.py DEST_DIR
"""

from __future__ import annotations

import argparse
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

WHEEL = "pytorch-widedeep==1.7.0"
RATINGS = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"
ITEMS = "pytorch_widedeep/datasets/data/MovieLens100k_items.parquet.brotli"
NOT_GENRES = {"movie_id", "movie_title", "release_date", "video_release_date", "IMDb_URL", "unknown"}


def fetch(dest: Path) -> tuple[Path, Path]:
    import pandas as pd

    dest.mkdir(parents=True, exist_ok=True)
    ratings_out, items_out = dest / "ratings.dat", dest / "movies.dat"
    if ratings_out.exists() and items_out.exists():
        return ratings_out, items_out
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", WHEEL, "-d", tmp],
            check=True,
        )
        (wheel,) = glob.glob(f"{tmp}/*.whl")
        with zipfile.ZipFile(wheel) as zf:
            ratings = pd.read_parquet(io.BytesIO(zf.read(RATINGS)))
            items = pd.read_parquet(io.BytesIO(zf.read(ITEMS)))
    genres = [c for c in items.columns if c not in NOT_GENRES]
    lines = []
    for rec in items.to_dict("records"):
        tags = "|".join(g for g in genres if int(rec[g]) == 1)
        title = str(rec["movie_title"]).replace("::", ":")
        lines.append(f"{int(rec['movie_id'])}::{title}::{tags}")
    items_out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    r = ratings[["user_id", "movie_id", "rating", "timestamp"]].astype("int64")
    ratings_out.write_text(
        "".join(f"{u}::{i}::{v}::{t}\n" for u, i, v, t in r.itertuples(index=False)),
        encoding="utf-8",
    )
    return ratings_out, items_out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dest", type=Path)
    args = ap.parse_args(argv)
    for p in fetch(args.dest):
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
