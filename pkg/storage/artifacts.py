"""
Artifact Store - transaction safety and exchange formats for run outputs

Provides a commit/rollback context manager for artifact directories, the
array exchange format (JSON header line + little-endian flat buffer) and
deterministic JSON/CSV writers.
"""

import csv
import json
import logging
import math
import shutil
import uuid
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Generator, Iterable, Optional, Sequence, Tuple

import numpy as np

from calculus.errors import MalformedInputError
from calculus.kernel_zoom import SymbolFamily, SymbolSlice
from calculus.lattice import TGrid, TorusGrid

logger = logging.getLogger(__name__)


@contextmanager
def artifact_transaction(out_dir: Path) -> Generator[Path, None, None]:
    """
    Context manager for artifact writes.

    Files go into a staging directory next to `out_dir`; on success the staged
    files replace the previous contents of `out_dir`, on exception the staging
    directory is removed and `out_dir` is left untouched.

    Example:
        with artifact_transaction(Path("artifacts/zoom-test")) as stage:
            write_json(stage / "summary.json", summary)
    """
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = out_dir.parent / f".{out_dir.name}.staging-{uuid.uuid4().hex[:8]}"
    stage.mkdir()
    try:
        yield stage
    except Exception:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    stage.rename(out_dir)
    logger.debug("committed artifacts to %s", out_dir)


def _sanitize(value: Any) -> Any:
    """Non-finite floats become null; numpy scalars and arrays become plain Python."""
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return _sanitize(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, complex):
        return {"re": _sanitize(value.real), "im": _sanitize(value.imag)}
    return value


def dumps(payload: Dict[str, Any]) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip floats."""
    return json.dumps(_sanitize(payload), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(float(v)) if isinstance(v, float) else v) for v in row])
    return path


def _grid_header(grid: TorusGrid, tgrid: Optional[TGrid]) -> Dict[str, Any]:
    header = {"d": grid.d, "n_x": grid.n_x, "n_eta": grid.n_eta, "period": grid.period}
    if tgrid is not None:
        header.update({"t_levels": tgrid.levels, "t_up": tgrid.t_up})
    return header


def write_array(path: Path, data, name: str = "") -> Path:
    """
    Write a symbol family or slice in the exchange format.

    Line 1 is a JSON header {shape, dtype, axes, weight, weights, grid, name};
    the rest is the little-endian complex128 buffer in C order.
    """
    if isinstance(data, SymbolFamily):
        axes = ["x"] * data.grid.d + ["eta"] * data.grid.d + ["t"]
        grid = _grid_header(data.grid, data.tgrid)
    elif isinstance(data, SymbolSlice):
        axes = ["x"] * data.grid.d + ["eta"] * data.grid.d
        grid = _grid_header(data.grid, None)
    else:
        raise MalformedInputError(f"cannot serialize {type(data).__name__}")
    values = np.ascontiguousarray(data.values, dtype="<c16")
    header = {
        "shape": list(values.shape), "dtype": "complex128", "axes": axes, "weight": float(data.weight),
        "weights": list(data.weights), "grid": grid, "name": name or data.name,
    }
    path = Path(path)
    with path.open("wb") as handle:
        handle.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        handle.write(values.tobytes(order="C"))
    return path


def read_array(path: Path):
    """
    Inverse of `write_array`.

    Raises:
        MalformedInputError: header missing or inconsistent with the buffer
    """
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise MalformedInputError("array file has no header line", location=str(path))
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedInputError(f"unreadable array header: {exc}", location=str(path)) from exc
    shape: Tuple[int, ...] = tuple(header["shape"])
    buffer = raw[newline + 1:]
    if len(buffer) != 16 * int(np.prod(shape)):
        raise MalformedInputError("buffer size does not match the header shape", location=str(path))
    values = np.frombuffer(buffer, dtype="<c16").reshape(shape).astype(complex)
    g = header["grid"]
    grid = TorusGrid(g["d"], g["n_x"], g["n_eta"], g["period"])
    weights = tuple(header["weights"])
    if "t" in header["axes"]:
        tgrid = TGrid(g["t_levels"], g["t_up"])
        return SymbolFamily(grid, tgrid, values, header["weight"], weights, None, header.get("name", ""))
    return SymbolSlice(grid, values, header["weight"], weights, header.get("name", ""))
