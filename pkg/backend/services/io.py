"""
Result File Service
Readers and writers for roots tables, spacing series, the GOE table and run summaries
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from models.errors import StorageError
from models.schemas import GOETable, GOETableMetadata, RunSummary, Spectrum

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create directory {target.parent}: {exc}", {"path": str(target)}) from exc
    return target


def _header(comments: Optional[Dict[str, object]], columns: Sequence[str]) -> str:
    lines = [f"{key}: {value}" for key, value in (comments or {}).items()]
    lines.append(" ".join(columns))
    return "\n".join(lines)


def write_series(
    path: PathLike,
    columns: Dict[str, np.ndarray],
    comments: Optional[Dict[str, object]] = None,
    fmt: str = "%.15g",
) -> Path:
    """Write equal-length columns as whitespace-delimited text with '#' header lines"""
    target = _prepare(path)
    data = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()]) if columns else np.empty((0, 0))
    try:
        np.savetxt(target, data, fmt=fmt, header=_header(comments, list(columns)))
    except OSError as exc:
        raise StorageError(f"cannot write {target}: {exc}", {"path": str(target)}) from exc
    logger.debug(f"Wrote {data.shape[0]} rows to {target}")
    return target


def read_series(path: PathLike) -> Dict[str, np.ndarray]:
    """Read a file written by write_series back into named columns"""
    source = Path(path)
    try:
        with source.open() as handle:
            header = [line[1:].strip() for line in handle if line.startswith("#")]
        data = np.loadtxt(source, ndmin=2)
    except (OSError, ValueError) as exc:
        raise StorageError(f"cannot read {source}: {exc}", {"path": str(source)}) from exc
    names = header[-1].split() if header else [f"col{i}" for i in range(data.shape[1])]
    if data.size == 0:
        return {name: np.empty(0) for name in names}
    return {name: data[:, i] for i, name in enumerate(names)}


def write_roots(path: PathLike, spectrum: Spectrum) -> Path:
    """One row per root, repeated for each unit of multiplicity"""
    repeat = spectrum.multiplicities
    columns = {
        "index": np.arange(1, spectrum.count + 1),
        "k": spectrum.roots,
        "e": 2.0 * spectrum.roots,
        "multiplicity": np.repeat(repeat, repeat),
        "residual": np.repeat(spectrum.residuals, repeat),
    }
    config = spectrum.config
    comments = {
        "topology": config.topology.value,
        "alpha": config.alpha,
        "n": config.n,
        "ground_state": spectrum.diagnostics.ground_state,
    }
    return write_series(path, columns, comments)


def read_roots(path: PathLike) -> np.ndarray:
    """Ascending roots k (multiplicity-expanded) from a roots table"""
    columns = read_series(path)
    if "k" not in columns:
        raise StorageError(f"{path} is not a roots table (no 'k' column)", {"path": str(path)})
    return np.sort(columns["k"])


def write_goe_table(path: PathLike, table: GOETable) -> Path:
    comments = table.metadata.model_dump()
    return write_series(path, {"s": table.s, "F_GOE": table.cdf}, comments, fmt="%.17g")


def read_goe_table(path: PathLike) -> GOETable:
    """Parse the two-column GOE table and its '# key: value' metadata header"""
    source = Path(path)
    try:
        with source.open() as handle:
            header = [line[1:].strip() for line in handle if line.startswith("#")]
    except OSError as exc:
        raise StorageError(f"cannot read {source}: {exc}", {"path": str(source)}) from exc
    fields = dict(line.split(": ", 1) for line in header if ": " in line)
    try:
        metadata = GOETableMetadata.model_validate(fields)
    except ValidationError as exc:
        raise StorageError(f"invalid GOE table header in {source}", {"errors": str(exc)}) from exc
    columns = read_series(source)
    return GOETable(s=columns["s"], cdf=columns["F_GOE"], metadata=metadata)


def write_summary(path: PathLike, summary: RunSummary) -> Path:
    target = _prepare(path)
    try:
        target.write_text(summary.model_dump_json(indent=2))
    except OSError as exc:
        raise StorageError(f"cannot write {target}: {exc}", {"path": str(target)}) from exc
    logger.info(f"Summary written to {target}")
    return target


def read_summary(path: PathLike) -> RunSummary:
    source = Path(path)
    try:
        return RunSummary.model_validate_json(source.read_text())
    except OSError as exc:
        raise StorageError(f"cannot read {source}: {exc}", {"path": str(source)}) from exc
