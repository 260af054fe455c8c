"""
Output generation: summary/draw/MSE tables, binary draw files and the run
manifest.

Floats are written with %.17g (round-trip exact, '.' decimal separator) and
no file contains wall-clock values, so identical runs give identical bytes.
"""

import hashlib
import json
import logging
import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .diagnostics import ChainSummary
from .errors import InputValidationError
from .sampler import PosteriorDraws

log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
DRAWS_MAGIC = b"GIGGDRW1"
DRAWS_VERSION = 1
DRAWS_HEADER_SIZE = 64
# magic, version, rows, columns, chains; padded to DRAWS_HEADER_SIZE
_HEADER = struct.Struct("<8sIQQI")


def _serialise(obj):
    """JSON serialiser for numpy/pandas types."""
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return None if np.isnan(obj) else float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Not serialisable: {type(obj)}")


def to_json(obj) -> str:
    """Deterministic JSON text (sorted keys) with NaN/Infinity as null."""
    text = json.dumps(obj, indent=2, sort_keys=True, default=_serialise)
    text = re.sub(r"-Infinity\b", "null", text)
    text = re.sub(r"\bNaN\b", "null", text)
    return re.sub(r"\bInfinity\b", "null", text)


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(obj, path: Path) -> None:
    _atomic_write(path, to_json(obj).encode("utf-8"))
    log.info("Wrote %s", path)


def write_csv(df: pd.DataFrame, path: Path) -> None:
    """Write a table with round-trip float formatting."""
    text = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    _atomic_write(path, text.encode("utf-8"))
    log.info("Wrote %d rows to %s", len(df), path)


# ---------------------------------------------------------------------------
# Fit outputs
# ---------------------------------------------------------------------------

def write_summary_csv(summary: ChainSummary, path: Path) -> None:
    write_csv(summary.to_frame(), path)


def draws_frame(chains: list[PosteriorDraws]) -> pd.DataFrame:
    """All chains stacked, with a leading chain column."""
    frames = []
    for m, draws in enumerate(chains):
        df = draws.to_frame()
        df.insert(0, "chain", m)
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


def write_draws_csv(chains: list[PosteriorDraws], path: Path) -> None:
    write_csv(draws_frame(chains), path)


def write_draws_binary(chains: list[PosteriorDraws], path: Path) -> None:
    """64-byte header then little-endian float64, row-major, chains stacked.

    Column order matches PosteriorDraws.column_names(); the names are
    recorded in the manifest.
    """
    matrix = np.vstack([c.matrix() for c in chains]).astype("<f8")
    header = _HEADER.pack(DRAWS_MAGIC, DRAWS_VERSION, matrix.shape[0], matrix.shape[1], len(chains))
    header = header.ljust(DRAWS_HEADER_SIZE, b"\0")
    _atomic_write(path, header + np.ascontiguousarray(matrix).tobytes())
    log.info("Wrote %d x %d draws to %s", matrix.shape[0], matrix.shape[1], path)


def read_draws_binary(path: Path) -> tuple[np.ndarray, int]:
    """Read a binary draws file; returns (matrix, number of chains)."""
    blob = Path(path).read_bytes()
    if len(blob) < DRAWS_HEADER_SIZE:
        raise InputValidationError(f"{path}: truncated draws header")
    magic, version, rows, cols, chains = _HEADER.unpack_from(blob)
    if magic != DRAWS_MAGIC or version != DRAWS_VERSION:
        raise InputValidationError(f"{path}: not a version {DRAWS_VERSION} draws file")
    data = np.frombuffer(blob, dtype="<f8", offset=DRAWS_HEADER_SIZE)
    if data.size != rows * cols:
        raise InputValidationError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols), int(chains)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def config_digest(config: dict) -> str:
    return hashlib.sha256(to_json(config).encode("utf-8")).hexdigest()


def build_manifest(
    command: str,
    inputs: dict,
    output_dir: Path,
    config: dict,
    seed: int,
    outputs: list[str],
    extra: dict | None = None,
) -> dict:
    manifest = {
        "command": command,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "output_dir": str(output_dir),
        "config": config,
        "config_digest": config_digest(config),
        "seed": int(seed),
        "version": __version__,
        "outputs": sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_manifest(manifest: dict, path: Path) -> None:
    write_json(manifest, path)


# ---------------------------------------------------------------------------
# Simulation and prior tables
# ---------------------------------------------------------------------------

def estimates_frame(truths: np.ndarray, estimates: dict[str, np.ndarray], names: list[str]) -> pd.DataFrame:
    """Long table: one row per method x replicate with truth and estimate columns."""
    rows = []
    for r in range(truths.shape[0]):
        rows.append({"method": "truth", "replicate": r, **dict(zip(names, truths[r]))})
    for method, est in estimates.items():
        for r in range(est.shape[0]):
            rows.append({"method": method, "replicate": r, **dict(zip(names, est[r]))})
    return pd.DataFrame(rows)


def write_all_outputs(
    chains: list[PosteriorDraws],
    summary: ChainSummary,
    output_dir: Path,
    draws_format: str,
    manifest: dict,
) -> list[str]:
    """Write draws, summary and manifest of a fit to output_dir.

    Files created:
        draws.csv or draws.bin  – retained draws of every chain
        summary.csv             – per-coefficient posterior summary
        manifest.json           – command, inputs, config digest, seed, version
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if draws_format == "binary":
        draws_name = "draws.bin"
        write_draws_binary(chains, output_dir / draws_name)
    else:
        draws_name = "draws.csv"
        write_draws_csv(chains, output_dir / draws_name)
    write_summary_csv(summary, output_dir / "summary.csv")

    outputs = [draws_name, "summary.csv", "manifest.json"]
    manifest = {
        **manifest,
        "outputs": sorted(outputs),
        "draw_columns": ["chain"] + chains[0].column_names() if draws_format != "binary"
        else chains[0].column_names(),
        "hyperparameters": [
            {"a": c.hyper.a.tolist(), "b": c.hyper.b.tolist()} for c in chains
        ],
    }
    write_manifest(manifest, output_dir / "manifest.json")
    return outputs
