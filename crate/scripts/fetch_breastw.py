#!/usr/bin/env python3
"""Builds data/breastw.csv from the MASS `biopsy` table.

`biopsy` is the Wisconsin breast cancer (original) data: 699 biopsies, nine
cytology scores, benign/malignant class. Dropping the 16 rows with a missing
bare-nuclei score leaves 683 rows with 239 malignant cases, the layout of the
ODDS `breastw` set. The table is taken from the `pydataset` package on PyPI.

Usage: scripts/fetch_breastw.py [OUT_DIR]   (default: data/)
"""
import csv
import hashlib
import io
import pathlib
import subprocess
import sys
import tarfile
import tempfile


def biopsy_rows(workdir: pathlib.Path):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--no-binary", ":all:",
         "pydataset==0.2.0", "-d", str(workdir)],
        check=True,
    )
    sdist = next(workdir.glob("pydataset-*.tar.gz"))
    with tarfile.open(sdist) as outer:
        member = next(m for m in outer.getmembers() if m.name.endswith("resources.tar.gz"))
        inner_bytes = outer.extractfile(member).read()
    with tarfile.open(fileobj=io.BytesIO(inner_bytes)) as inner:
        member = next(m for m in inner.getmembers()
                      if m.name.endswith("csv/MASS/biopsy.csv") and "/._" not in m.name)
        text = inner.extractfile(member).read().decode()
    return list(csv.DictReader(io.StringIO(text)))


def main():
    out_dir = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        rows = biopsy_rows(pathlib.Path(tmp))

    features = [f"V{i}" for i in range(1, 10)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(features + ["label"])
    kept = anomalies = 0
    for row in rows:
        if any(row[f] == "NA" for f in features):
            continue
        label = 1 if row["class"] == "malignant" else 0
        writer.writerow([row[f] for f in features] + [label])
        kept += 1
        anomalies += label

    data = buf.getvalue().encode()
    path = out_dir / "breastw.csv"
    path.write_bytes(data)
    print(f"{path}: {kept} rows, {len(features)} features, {anomalies} anomalies")
    print(f"sha256 {hashlib.sha256(data).hexdigest()}")


if __name__ == "__main__":
    main()
