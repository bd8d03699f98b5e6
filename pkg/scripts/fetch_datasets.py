#!/usr/bin/env python3
"""Downloads the four study datasets and converts them to the package's CSV
layout (header row, numeric cells, binary label in the last column).

The files are not vendored with the package to avoid licensing ambiguity;
this script is the documented way to obtain them, and it also documents the
conversion choices this project makes where the studies' own preprocessing
is not fully specified:

  pima  Pima Indians Diabetes (768 records). The raw file already has the
        outcome in the last column; columns are kept verbatim (including
        the zero-coded missing values some columns are known to contain).
  lbw   Low Birth Weight study (189 records). Drops the row-name column
        and the raw birth-weight column (it determines the label), keeps
        age, lwt, race, smoke, ptl, ht, ui, ftv with race as its 1/2/3
        code, and moves the LOW indicator to the last column.
  pcs   Prostate Cancer study (379 complete records of 380). Drops the id
        column, keeps age, race, dpros, dcaps, psa, vol, gleason, label
        CAPSULE last; rows with missing cells are dropped.
  uis   Umaru Impact Study (575 complete records). Drops the id column,
        keeps age, beck, hercoc, ivhx, ndrugtx, race, treat, site, label
        DFREE last; rows with missing cells are dropped.

Categorical cells that arrive as text are mapped through a small documented
table (yes/no, race names) and labeled factor levels such as "1 = Yes" are
read as their leading integer. Converted files are re-read through the
package loader before being kept; a record count that differs from the
study's published size is reported but still written, since preprocessing
of the originals is not fully standardized.

Offline use: pass --from-dir with already-downloaded raw files (names as in
RAW_FILENAMES below) and no network is needed.
"""

import argparse
import csv
import io
import re
import sys
import urllib.error
import urllib.request
from pathlib import Path

try:
    from mpclogreg.data import DATASETS, load_csv
except ImportError:  # running from a checkout without the package installed
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    from mpclogreg.data import DATASETS, load_csv

# candidate public mirrors, tried in order; all carry the same studies
SOURCES = {
    "pima": [
        "https://raw.githubusercontent.com/jbrownlee/Datasets/master/pima-indians-diabetes.data.csv",
    ],
    "lbw": [
        "https://vincentarelbundock.github.io/Rdatasets/csv/MASS/birthwt.csv",
        "https://vincentarelbundock.github.io/Rdatasets/csv/COUNT/lbw.csv",
    ],
    "pcs": [
        "https://vincentarelbundock.github.io/Rdatasets/csv/aplore3/pros.csv",
    ],
    "uis": [
        "https://vincentarelbundock.github.io/Rdatasets/csv/aplore3/uis.csv",
        "https://vincentarelbundock.github.io/Rdatasets/csv/quantreg/uis.csv",
    ],
}

# local raw-file names accepted by --from-dir, tried in order
RAW_FILENAMES = {
    "pima": ["pima-indians-diabetes.data.csv", "pima-indians-diabetes.csv", "pima.raw.csv"],
    "lbw": ["birthwt.csv", "lowbwt.csv", "lowbwt.dat"],
    "pcs": ["pros.csv", "pros.dat"],
    "uis": ["uis.csv", "uis.dat"],
}

# column names assigned when a raw file has no header row
HEADERLESS_NAMES = {
    "pima": ["preg", "glucose", "pressure", "triceps", "insulin", "bmi", "pedigree", "age", "outcome"],
    "lbw": ["id", "low", "age", "lwt", "race", "smoke", "ptl", "ht", "ui", "ftv", "bwt"],
    "pcs": ["id", "capsule", "age", "race", "dpros", "dcaps", "psa", "vol", "gleason"],
    "uis": ["id", "age", "beck", "hercoc", "ivhx", "ndrugtx", "race", "treat", "site", "dfree"],
}

# feature columns, in output order; the registry label goes last
FEATURES = {
    "pima": ["preg", "glucose", "pressure", "triceps", "insulin", "bmi", "pedigree", "age"],
    "lbw": ["age", "lwt", "race", "smoke", "ptl", "ht", "ui", "ftv"],
    "pcs": ["age", "race", "dpros", "dcaps", "psa", "vol", "gleason"],
    "uis": ["age", "beck", "hercoc", "ivhx", "ndrugtx", "race", "treat", "site"],
}

# alternate raw column spellings mapped to the names used above
ALIASES = {
    "pregnancies": "preg", "glucose": "glucose", "bloodpressure": "pressure",
    "skinthickness": "triceps", "skin": "triceps", "diabetespedigreefunction": "pedigree",
    "ped": "pedigree", "bp": "pressure", "insu": "insulin", "mass": "bmi", "plas": "glucose",
    "pres": "pressure", "class": "outcome", "diabetes": "outcome", "rownames": "id",
    "unnamed0": "id", "bwt": "bwt", "ivhr": "ivhx", "ndrgtx": "ndrugtx", "ndtx": "ndrugtx",
}

FACTOR_LEVELS = {
    "no": 0, "yes": 1, "white": 1, "black": 2, "other": 3,
    "male": 1, "female": 0, "neg": 0, "pos": 1,
}

MISSING = {"", ".", "na", "nan", "null", "?"}


def normalize_name(raw: str) -> str:
    name = re.sub(r"[^a-z0-9]", "", raw.strip().lower())
    return ALIASES.get(name, name)


def parse_cell(cell: str):
    """Turns one raw cell into a float, or None when missing."""
    text = cell.strip().strip('"').lower()
    if text in MISSING:
        return None
    try:
        return float(text)
    except ValueError:
        pass
    if text in FACTOR_LEVELS:
        return float(FACTOR_LEVELS[text])
    lead = re.match(r"^(\d+)", text)  # labeled factor levels like "1 = Yes"
    if lead:
        return float(lead.group(1))
    return None


def parse_table(text: str, name: str):
    """Splits raw text into (column names, rows of strings).

    Comma-separated files go through the csv module, anything else is
    whitespace-delimited. A first row with alphabetic tokens is a header;
    otherwise the documented column names for this dataset apply.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty file")
    if "," in lines[0]:
        rows = list(csv.reader(io.StringIO("\n".join(lines))))
    else:
        rows = [ln.split() for ln in lines]
    first = rows[0]
    if any(re.search(r"[a-zA-Z]{2,}", cell) for cell in first):
        header = [normalize_name(c) for c in first]
        return header, rows[1:]
    names = HEADERLESS_NAMES[name]
    if len(first) != len(names):
        raise ValueError(f"expected {len(names)} headerless columns, found {len(first)}")
    return list(names), rows


def convert(name: str, text: str):
    """Applies this project's documented conversion for one dataset and
    returns (output header, numeric rows); raises ValueError if the raw
    table does not carry the needed columns."""
    info = DATASETS[name]
    header, rows = parse_table(text, name)
    wanted = FEATURES[name] + [info.label_name]
    missing_cols = [c for c in wanted if c not in header]
    if missing_cols:
        raise ValueError(f"raw table lacks columns {missing_cols}; found {header}")
    idx = [header.index(c) for c in wanted]
    out_rows = []
    for row in rows:
        if len(row) != len(header):
            continue
        values = [parse_cell(row[i]) for i in idx]
        if any(v is None for v in values):
            continue  # incomplete record; complete-case analysis is documented above
        out_rows.append(values)
    if not out_rows:
        raise ValueError("no complete records after conversion")
    return wanted, out_rows


def download(url: str, timeout: float = 30.0):
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read().decode("utf-8", errors="replace")
    except (urllib.error.URLError, OSError, ValueError) as exc:
        print(f"  {url}: {exc}")
        return None


def obtain_raw(name: str, from_dir):
    if from_dir is not None:
        for filename in RAW_FILENAMES[name]:
            path = Path(from_dir) / filename
            if path.exists():
                print(f"  using local {path}")
                return path.read_text()
        print(f"  none of {RAW_FILENAMES[name]} found in {from_dir}")
        return None
    for url in SOURCES[name]:
        text = download(url)
        if text is not None:
            print(f"  downloaded {url}")
            return text
    return None


def write_converted(name: str, header, rows, data_dir: Path) -> Path:
    data_dir.mkdir(parents=True, exist_ok=True)
    out_path = data_dir / DATASETS[name].filename
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(v, "g") for v in row])
    return out_path


def fetch_one(name: str, data_dir: Path, from_dir, force: bool) -> bool:
    info = DATASETS[name]
    out_path = data_dir / info.filename
    print(f"{name}:")
    if out_path.exists() and not force:
        print(f"  {out_path} already exists (use --force to redo)")
        return True
    raw = obtain_raw(name, from_dir)
    if raw is None:
        print("  could not obtain the raw file (offline?); download one of the")
        print(f"  URLs above manually and rerun with --from-dir DIR")
        return False
    try:
        header, rows = convert(name, raw)
    except ValueError as exc:
        print(f"  conversion failed: {exc}")
        return False
    path = write_converted(name, header, rows, data_dir)
    ds = load_csv(path)  # round-trip through the package loader as a check
    print(f"  wrote {path}: {ds.n_records} records, {ds.n_coeffs - 1} features")
    if ds.n_records != info.n_records:
        print(f"  note: the study reports {info.n_records} records; kept the file anyway")
    return True


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-dir", default="datasets", type=Path,
                        help="where converted CSV files go (default: datasets/)")
    parser.add_argument("--from-dir", default=None,
                        help="convert already-downloaded raw files from this directory instead of downloading")
    parser.add_argument("--only", choices=sorted(DATASETS), action="append",
                        help="restrict to one dataset (repeatable)")
    parser.add_argument("--force", action="store_true", help="overwrite existing converted files")
    args = parser.parse_args(argv)
    names = args.only if args.only else sorted(DATASETS)
    results = {name: fetch_one(name, args.data_dir, args.from_dir, args.force) for name in names}
    failed = [name for name, ok in results.items() if not ok]
    if failed:
        print(f"missing: {', '.join(failed)}")
        return 1
    print("all requested datasets are in place")
    return 0


if __name__ == "__main__":
    sys.exit(main())
