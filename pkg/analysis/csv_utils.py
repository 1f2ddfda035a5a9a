"""
CSV helpers shared by the reports and the diagnostics. Matrices are written with 17 significant digits so
they parse back losslessly.
"""
import csv
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

PathLike = Union[str, Path]


def write_matrix(path: PathLike, matrix: np.ndarray) -> Path:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.ndim != 2:
        raise ValueError(f'Matrix shape {matrix.shape} is invalid. Should be 2-D.')
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, matrix, fmt='%.17g', delimiter=',')
    return path


def read_matrix(path: PathLike) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(Path(path), delimiter=',', dtype=np.float64))


def write_rows(path: PathLike, rows: Sequence[Dict[str, Any]], columns: Sequence[str] = ()) -> Path:
    """
    Writes dict rows with a header; columns default to the keys of the first row.
    """
    columns = list(columns) or (list(rows[0]) if rows else [])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as file:
        writer = csv.DictWriter(file, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _format(value) for key, value in row.items()})
    return path


def read_rows(path: PathLike) -> List[Dict[str, str]]:
    with open(Path(path), newline='') as file:
        return list(csv.DictReader(file))


def _format(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value
