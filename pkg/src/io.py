"""
Data ingestion: read CSV/Excel data and a group map, validate, and build a
standardized GroupedDesign.

The response is centered and the shrinkage covariates are standardized at
load; the applied location/scale constants are returned for the manifest.
Adjustment covariates are used as given.
"""

import logging
import os
import re

import numpy as np
import pandas as pd

from .errors import InputValidationError, SchemaMismatchError
from .model import GroupedDesign

log = logging.getLogger(__name__)

EXCEL_EXTENSIONS = (".xlsx", ".xls", ".xlsm", ".xlsb")
GROUP_MAP_COLUMNS = ("column_name", "group_label")
HEADER_LINES = 1


def _normalise_col_name(name: str) -> str:
    """Lowercase, strip, collapse whitespace/newlines to single underscore."""
    s = str(name).strip().lower().replace("\n", " ").replace("\r", " ")
    s = s.replace(" ", "_")
    return re.sub(r"_+", "_", s)


def read_file(path: str, sheet_name: int | str = 0) -> pd.DataFrame:
    """Read a CSV or Excel file with every cell as a string.

    The index holds each row's line number in the source (the header is
    line 1); blank lines are dropped after numbering.
    """
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext in EXCEL_EXTENSIONS:
            raw = pd.read_excel(path, sheet_name=sheet_name, dtype=str, keep_default_na=False)
        else:
            raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                              skip_blank_lines=False)
    except pd.errors.ParserError as exc:
        raise InputValidationError(f"{path}: malformed CSV ({exc})") from exc
    except pd.errors.EmptyDataError as exc:
        raise InputValidationError(f"{path}: file is empty") from exc
    raw = raw.fillna("")
    raw.index = pd.RangeIndex(HEADER_LINES + 1, HEADER_LINES + 1 + len(raw))
    blank = raw.apply(lambda s: s.astype(str).str.strip() == "").all(axis=1)
    if blank.any():
        log.debug("%s: skipping %d blank line(s)", path, int(blank.sum()))
    return raw[~blank]


# ---------------------------------------------------------------------------
# Numeric validation
# ---------------------------------------------------------------------------

def to_numeric_frame(raw: pd.DataFrame, label: str) -> pd.DataFrame:
    """Convert every column to float; the first bad cell is reported by line and column.

    Line numbers are read from the index, as set by `read_file`.
    """
    if raw.empty:
        raise InputValidationError(f"{label}: no data rows")
    if any(str(c).startswith("Unnamed:") or not str(c).strip() for c in raw.columns):
        raise InputValidationError(f"{label}: header row has an empty column name")
    if raw.columns.duplicated().any():
        dupes = raw.columns[raw.columns.duplicated()].tolist()
        raise InputValidationError(f"{label}: duplicate column names {dupes}")

    out = {}
    for col in raw.columns:
        text = raw[col].astype(str).str.strip()
        values = pd.to_numeric(text, errors="coerce")
        bad = ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            cell = text.iloc[row]
            what = "missing value" if cell == "" or cell.lower() in ("na", "nan") else f"non-numeric value {cell!r}"
            raise InputValidationError(
                f"{label}: {what} at line {raw.index[row]}, column {col!r}"
            )
        out[col] = values.astype(float)
    return pd.DataFrame(out, index=raw.index)


def read_group_map(path: str) -> pd.DataFrame:
    """Read the two-column (column_name, group_label) group map."""
    raw = read_file(path)
    cols = [_normalise_col_name(c) for c in raw.columns]
    if cols != list(GROUP_MAP_COLUMNS):
        raise InputValidationError(
            f"{path}: group map header must be {','.join(GROUP_MAP_COLUMNS)}, got {list(raw.columns)}"
        )
    raw.columns = list(GROUP_MAP_COLUMNS)
    raw = raw.apply(lambda s: s.astype(str).str.strip())
    empty = (raw == "").any(axis=1)
    if empty.any():
        row = int(np.flatnonzero(empty.to_numpy())[0])
        raise InputValidationError(f"{path}: empty entry at line {raw.index[row]}")
    if raw.empty:
        raise InputValidationError(f"{path}: group map has no rows")
    dupes = raw["column_name"][raw["column_name"].duplicated()].tolist()
    if dupes:
        raise SchemaMismatchError(f"{path}: columns assigned twice in group map: {dupes}")
    return raw.reset_index(drop=True)


# ---------------------------------------------------------------------------
# Design construction
# ---------------------------------------------------------------------------

def build_design(
    data: pd.DataFrame,
    response: str,
    group_map: pd.DataFrame,
    adjust: list[str] | None = None,
) -> tuple[GroupedDesign, dict]:
    """Assemble a GroupedDesign from numeric data and a group map.

    Groups are ordered by first appearance in the map, columns within a group
    keep their map order. Columns of the data not named anywhere are ignored.

    Returns:
        (design, preprocessing) where preprocessing records the response
        center and each covariate's center and scale.

    Raises:
        SchemaMismatchError: the map or the response/adjustment names refer
            to absent columns, or a column is used twice.
        InputValidationError: a shrinkage covariate is constant.
    """
    adjust = list(adjust or [])
    columns = set(data.columns)
    mapped = group_map["column_name"].tolist()

    if response not in columns:
        raise SchemaMismatchError(f"response column {response!r} not found in data")
    missing = [c for c in mapped + adjust if c not in columns]
    if missing:
        raise SchemaMismatchError(f"columns not found in data: {missing}")
    overlap = (set(mapped) & set(adjust)) | ({response} & (set(mapped) | set(adjust)))
    if overlap:
        raise SchemaMismatchError(f"columns used in more than one role: {sorted(overlap)}")

    labels = list(dict.fromkeys(group_map["group_label"]))
    ordered = [
        c for label in labels
        for c in group_map.loc[group_map["group_label"] == label, "column_name"]
    ]
    sizes = np.array([(group_map["group_label"] == label).sum() for label in labels])

    y_raw = data[response].to_numpy(dtype=float)
    y_center = float(y_raw.mean())
    X_raw = data[ordered].to_numpy(dtype=float)
    centers = X_raw.mean(axis=0)
    scales = X_raw.std(axis=0, ddof=1) if len(data) > 1 else np.zeros(len(ordered))
    constant = [c for c, s in zip(ordered, scales) if not s > 0]
    if constant:
        raise InputValidationError(f"shrinkage covariates are constant and cannot be standardized: {constant}")
    X = (X_raw - centers) / scales
    C = data[adjust].to_numpy(dtype=float) if adjust else np.empty((len(data), 0))

    design = GroupedDesign(
        y=y_raw - y_center, C=C, X=X, group_sizes=sizes,
        x_names=ordered, c_names=adjust, group_labels=[str(g) for g in labels],
    )
    preprocessing = {
        "response": {"column": response, "center": y_center},
        "covariates": {
            name: {"center": float(m), "scale": float(s)}
            for name, m, s in zip(ordered, centers, scales)
        },
        "adjustment": adjust,
    }
    log.info("Design: n=%d, p=%d in %d groups, q=%d", design.n, design.p, design.G, design.q)
    return design, preprocessing


def load_dataset(
    path: str,
    response: str,
    group_map_path: str,
    adjust: list[str] | None = None,
    sheet_name: int | str = 0,
) -> tuple[GroupedDesign, dict]:
    """Read data and group map files and return (design, preprocessing)."""
    for p in (path, group_map_path):
        if not os.path.isfile(p):
            raise InputValidationError(f"File not found: {p}")
    raw = read_file(path, sheet_name=sheet_name)
    log.info("Read %d rows x %d columns from %s", len(raw), raw.shape[1], path)
    group_map = read_group_map(group_map_path)

    needed = [response] + group_map["column_name"].tolist() + list(adjust or [])
    absent = [c for c in needed if c not in raw.columns]
    if absent:
        raise SchemaMismatchError(f"columns not found in {path}: {absent}")
    numeric = to_numeric_frame(raw[list(dict.fromkeys(needed))], path)
    return build_design(numeric, response, group_map, adjust)
