"""
Plain-file persistence of laboratory results.

CSV files carry '#'-prefixed metadata lines, a single header row and comma separated values. Floats are written with
17 significant digits so identical runs produce identical files. Dense operators are stored in the PTRK binary layout:
magic, version, rows, cols, dt, number of boundary nodes, the dS weights and the row-major matrix, all little endian.
"""

import threading
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .exceptions import LaboratoryError
from .logging_helper import get_logger
from .medium import DomainGrid

logger = get_logger(__name__)

OPERATOR_MAGIC = b"PTRK"
OPERATOR_VERSION = 1


def format_cell(value: Any) -> str:
    """Render one CSV cell deterministically."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv_table(
    path: Path | str,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    metadata: dict[str, Any] | None = None,
) -> Path:
    """
    Write a table with metadata lines, one header row and the data rows.

    :param path: output file
    :param header: column names
    :param rows: data rows, each with one cell per column
    :param metadata: key/value pairs written as '# key: value' lines
    :returns: the written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cells = np.array([[format_cell(value) for value in row] for row in rows], dtype=object).reshape(-1, len(header))
    lines = [f"# {key}: {format_cell(value)}" for key, value in (metadata or {}).items()]
    lines.append(",".join(header))
    np.savetxt(path, cells, fmt="%s", delimiter=",", header="\n".join(lines), comments="")
    return path


def read_csv_table(path: Path | str) -> tuple[dict[str, str], list[str], np.ndarray]:
    """
    Read a table written by `write_csv_table`.

    :param path: input file
    :returns: metadata, column names and the data as strings
    """
    metadata: dict[str, str] = {}
    header: list[str] = []
    rows: list[list[str]] = []
    with open(path, "r") as file:
        for line in file:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                metadata[key.strip()] = value.strip()
            elif not header:
                header = line.split(",")
            elif line:
                rows.append(line.split(","))
    return metadata, header, np.array(rows, dtype=object).reshape(-1, len(header))


def grid_metadata(grid: DomainGrid) -> dict[str, Any]:
    return {
        "dimension": grid.dimension,
        "shape": "x".join(str(n) for n in grid.shape),
        "h": grid.h,
        "dt": grid.dt,
        "T": grid.horizon_T,
    }


def write_field_csv(path: Path | str, grid: DomainGrid, values: np.ndarray, time: float | None = None, **extra) -> Path:
    """Write a node field as a row-major matrix (a single row in 1D)."""
    matrix = np.asarray(values, dtype=float).reshape(grid.shape if grid.dimension == 2 else (1, grid.n_nodes))
    metadata = grid_metadata(grid)
    if time is not None:
        metadata["time"] = time
    metadata.update(extra)
    return write_csv_table(path, [f"c{j}" for j in range(matrix.shape[1])], matrix.tolist(), metadata)


def write_signal_csv(path: Path | str, grid: DomainGrid, signal: np.ndarray, **extra) -> Path:
    """Write a boundary signal, one row per boundary position."""
    metadata = grid_metadata(grid)
    metadata.update(extra)
    header = ["position"] + [f"k{k}" for k in range(grid.n_samples)]
    rows = [[b] + list(row) for b, row in enumerate(np.asarray(signal, dtype=float))]
    return write_csv_table(path, header, rows, metadata)


def save_operator(path: Path | str, matrix: np.ndarray, grid: DomainGrid) -> Path:
    """Persist a dense lattice operator in the PTRK layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    header = np.array([OPERATOR_VERSION, matrix.shape[0], matrix.shape[1]], dtype="<u4").tobytes()
    header += np.array([grid.dt], dtype="<f8").tobytes()
    header += np.array([grid.n_boundary], dtype="<u4").tobytes()
    header += np.asarray(grid.surface_weights, dtype="<f8").tobytes()
    with open(path, "wb") as file:
        file.write(OPERATOR_MAGIC + header + matrix.tobytes())
    logger.info(f"Stored {matrix.shape[0]}x{matrix.shape[1]} operator in {path}")
    return path


def load_operator(path: Path | str) -> tuple[np.ndarray, float, np.ndarray]:
    """
    Load a PTRK operator file.

    :param path: input file
    :returns: matrix, dt and the boundary dS weights
    """
    payload = Path(path).read_bytes()
    if payload[:4] != OPERATOR_MAGIC:
        raise LaboratoryError(f"{path} is not an operator file.")
    offset = 4
    version, rows, cols = np.frombuffer(payload, dtype="<u4", count=3, offset=offset)
    if version != OPERATOR_VERSION:
        raise LaboratoryError(f"Unsupported operator file version {version}.")
    offset += 12
    dt = float(np.frombuffer(payload, dtype="<f8", count=1, offset=offset)[0])
    offset += 8
    n_boundary = int(np.frombuffer(payload, dtype="<u4", count=1, offset=offset)[0])
    offset += 4
    weights = np.frombuffer(payload, dtype="<f8", count=n_boundary, offset=offset).copy()
    offset += 8 * n_boundary
    matrix = np.frombuffer(payload, dtype="<f8", count=int(rows) * int(cols), offset=offset)
    return matrix.reshape(int(rows), int(cols)).copy(), dt, weights


class QueryLog:
    """Thread-safe record of oracle queries (index, input norm, output norm)."""

    entries: list[tuple[int, float, float]]

    def __init__(self):
        self.entries = list()
        self._lock = threading.Lock()

    def record(self, index: int, input_norm: float, output_norm: float):
        with self._lock:
            self.entries.append((int(index), float(input_norm), float(output_norm)))

    def write_csv(self, path: Path | str, metadata: dict[str, Any] | None = None) -> Path:
        """Append-only export of the recorded queries."""
        return write_csv_table(path, ["query", "input_norm", "output_norm"], sorted(self.entries), metadata)
