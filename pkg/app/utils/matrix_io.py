"""
Matrix Loader - Read and write whitespace matrix text files and system definitions
Supports: .txt, .dat, .mtx (plain whitespace text), .json (system definition)
"""

from typing import Any, Dict, Optional
import json
import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.core.exceptions import ConfigError, InvalidInputError
from app.core.kernels import OrthoBasis
from app.models.schemas import SystemDefinition

logger = logging.getLogger(__name__)


class MatrixLoader:
    """
    Utility class for whitespace-separated matrix text files.

    The first data line is the header "rows cols"; the rows * cols entries follow in
    row-major order, separated by blanks or newlines. Text after '#' is a comment.
    Numbers are written with 17 significant digits so a save/load cycle is exact.
    """

    SUPPORTED_EXTENSIONS = ['.txt', '.dat', '.mtx']
    MAX_FILE_SIZE_MB = 200

    @staticmethod
    def is_supported(filename: str) -> bool:
        ext = Path(filename).suffix.lower()
        return ext in MatrixLoader.SUPPORTED_EXTENSIONS

    @staticmethod
    def validate_file_size(file_size: int) -> bool:
        max_bytes = MatrixLoader.MAX_FILE_SIZE_MB * 1024 * 1024
        return file_size <= max_bytes

    @staticmethod
    def load_from_file(file_path: str) -> np.ndarray:
        """
        Load a matrix from a text file.

        Args:
            file_path (str): Path to the file

        Returns:
            np.ndarray: two-dimensional float array
        """
        path = Path(file_path)

        if not path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")

        if not MatrixLoader.is_supported(path.name):
            raise InvalidInputError(f"Unsupported matrix file type: {path.suffix}")

        if not MatrixLoader.validate_file_size(path.stat().st_size):
            raise InvalidInputError(f"File too large. Maximum size: {MatrixLoader.MAX_FILE_SIZE_MB}MB")

        try:
            return MatrixLoader._parse(path.read_text(encoding='utf-8'))
        except ValueError as e:
            logger.error(f"Error loading matrix {file_path}: {str(e)}")
            raise InvalidInputError(f"Failed to load matrix: {str(e)}")

    @staticmethod
    def _parse(text: str) -> np.ndarray:
        lines = [line.split('#', 1)[0].strip() for line in text.splitlines()]
        lines = [line for line in lines if line]
        if not lines:
            raise ValueError("empty matrix file")

        header = lines[0].split()
        if len(header) != 2 or not all(tok.isdigit() for tok in header):
            raise ValueError(f"first line must be 'rows cols', got {lines[0]!r}")
        rows, cols = int(header[0]), int(header[1])

        data = np.array(" ".join(lines[1:]).split(), dtype=float)
        if data.size != rows * cols:
            raise ValueError(f"header announces {rows}x{cols} = {rows * cols} entries, found {data.size}")
        if not np.all(np.isfinite(data)):
            raise ValueError("matrix contains NaN or Inf entries")
        return data.reshape(rows, cols)

    @staticmethod
    def save(file_path: str, A: np.ndarray, header: str = "") -> Path:
        """Write a matrix as whitespace text: optional comment, "rows cols", then one row per line."""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        with path.open('w', encoding='utf-8') as fh:
            if header:
                fh.write(f"# {header}\n")
            fh.write(f"{A.shape[0]} {A.shape[1]}\n")
            np.savetxt(fh, A, fmt='%.17g')
        return path


# ==================== SYSTEM DEFINITIONS ====================

def _resolve_matrix(value: Any, base: Path, name: str) -> np.ndarray:
    if isinstance(value, str):
        path = Path(value)
        if not path.is_absolute():
            path = base / path
        return MatrixLoader.load_from_file(str(path))
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a matrix or a path to a matrix file")
    return arr


def load_system_definition(file_path: str) -> Dict[str, Any]:
    """
    Read a JSON system definition and resolve its matrices.

    Returns:
        dict with keys M, K, B, C (arrays), alpha, damper_count, gain_bounds, label
    """
    path = Path(file_path)
    if not path.exists():
        raise ConfigError(f"System definition not found: {file_path}")
    try:
        definition = SystemDefinition.model_validate_json(path.read_text(encoding='utf-8'))
    except ValidationError as e:
        raise ConfigError(f"Invalid system definition {file_path}: {e}") from e

    base = path.parent
    return {
        "M": _resolve_matrix(definition.M, base, "M"),
        "K": _resolve_matrix(definition.K, base, "K"),
        "B": _resolve_matrix(definition.B, base, "B"),
        "C": _resolve_matrix(definition.C, base, "C"),
        "alpha": definition.alpha,
        "damper_count": definition.damper_count,
        "gain_bounds": tuple(definition.gain_bounds),
        "label": definition.label,
    }


# ==================== BASIS FILES ====================

def save_basis(file_path: str, basis: OrthoBasis) -> Path:
    """Store a reduced basis; the header records its provenance."""
    kinds = " ".join(e.kind for e in basis.events) or "none"
    return MatrixLoader.save(file_path, basis.V, header=f"basis n={basis.n} r={basis.rank} events={kinds}")


def load_basis(file_path: str, n: Optional[int] = None) -> np.ndarray:
    """Read a stored basis column block; the caller re-orthonormalizes it."""
    V = MatrixLoader.load_from_file(file_path)
    if n is not None and V.shape[0] != n:
        raise InvalidInputError(f"basis file has {V.shape[0]} rows, system has n={n}")
    return V


def save_json(file_path: str, payload: Dict[str, Any]) -> Path:
    path = Path(file_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding='utf-8')
    return path
