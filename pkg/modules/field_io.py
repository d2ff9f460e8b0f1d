"""
Field I/O Module
Reads and writes the text field format and the canonical CSV outputs.

Field file layout:
    wallscale-field v1 L=<L> n1=<n1> n3=<n3> t=<t>
    # optional comment lines
    n1*n3 lines "m1 m2 m3", x3 outer, x1 inner
"""

import csv
import logging
import math
import re
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import Config
from modules import __version__
from modules.error_handler import FieldFormatError, FieldValidationError
from modules.fields import MagnetizationField, StripGrid
from modules.minimize import TRACE_COLUMNS, RelaxReport
from modules.sweep import SWEEP_COLUMNS, SweepTable


logger = logging.getLogger(__name__)

MAGIC = 'wallscale-field v1'
HEADER_RE = re.compile(
    r'^wallscale-field v1 L=(?P<L>\S+) n1=(?P<n1>\S+) n3=(?P<n3>\S+) t=(?P<t>\S+)\s*$'
)


def header_comments(config_yaml: Optional[str] = None, extra: Optional[Dict] = None) -> List[str]:
    """
    Comment lines embedded in every output file.

    Args:
        config_yaml: Canonical YAML dump of the run configuration
        extra: Additional key/value lines

    Returns:
        Lines without the leading '# '
    """
    lines = [f'wallscale {__version__}']
    for key, value in sorted((extra or {}).items()):
        lines.append(f'{key}: {value}')
    if config_yaml:
        lines.append('config:')
        lines.extend(f'  {line}' for line in config_yaml.rstrip('\n').split('\n'))
    return lines


def _float(value: float) -> str:
    return repr(float(value))


def write_field(field: MagnetizationField, path, comments: Iterable[str] = ()) -> Path:
    """
    Write a field file.

    Args:
        field: Field to write
        path: Destination path
        comments: Comment lines (without '# ')

    Returns:
        Path written
    """
    path = Path(path)
    grid = field.grid
    lines = [f'{MAGIC} L={_float(grid.L)} n1={grid.n1} n3={grid.n3} t={_float(grid.t)}']
    lines.extend(f'# {line}' for line in comments)
    flat = field.values.reshape(-1, 3)
    lines.extend(f'{_float(a)} {_float(b)} {_float(c)}' for a, b, c in flat)
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    logger.info(f"Wrote field {grid.n1}x{grid.n3} to {path}")
    return path


def read_field(path) -> MagnetizationField:
    """
    Read a field file.

    Args:
        path: Source path

    Returns:
        MagnetizationField (admissibility is checked by the caller)
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except UnicodeDecodeError as e:
        raise FieldFormatError(f"{path} is not a text field file", "PARSE_ERROR",
                               {'line': 1, 'offset': e.start})

    lines = text.split('\n')
    match = HEADER_RE.match(lines[0])
    if not match:
        raise FieldFormatError(f"{path}: line 1 is not a '{MAGIC}' header", "PARSE_ERROR",
                               {'line': 1, 'offset': 0})
    try:
        grid = StripGrid(L=float(match['L']), t=float(match['t']), n1=int(match['n1']), n3=int(match['n3']))
    except (ValueError, FieldValidationError) as e:
        raise FieldFormatError(f"{path}: invalid header values ({e})", "PARSE_ERROR",
                               {'line': 1, 'offset': match.start('L')})

    expected = grid.n1 * grid.n3
    values = np.empty((expected, 3))
    count = 0
    offset = len(lines[0]) + 1
    for number, line in enumerate(lines[1:], start=2):
        line_offset = offset
        offset += len(line) + 1
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        if count >= expected:
            raise FieldFormatError(f"{path}: more than {expected} data lines", "PARSE_ERROR",
                                   {'line': number, 'offset': line_offset})
        parts = stripped.split()
        if len(parts) != 3:
            raise FieldFormatError(f"{path}: line {number} has {len(parts)} values, expected 3",
                                   "PARSE_ERROR", {'line': number, 'offset': line_offset})
        try:
            values[count] = [float(p) for p in parts]
        except ValueError:
            raise FieldFormatError(f"{path}: line {number} contains a non-numeric value",
                                   "PARSE_ERROR", {'line': number, 'offset': line_offset})
        count += 1

    if count != expected:
        raise FieldFormatError(f"{path}: found {count} data lines, expected {expected}", "TRUNCATED",
                               {'line': len(lines), 'offset': len(text)})
    return MagnetizationField(grid, values.reshape(grid.n3, grid.n1, 3))


def _csv_value(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        return format(value, Config.CSV_FLOAT_FORMAT)
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], comments: Iterable[str] = ()) -> Path:
    """
    Write a CSV file preceded by '# ' comment lines.

    Args:
        path: Destination path
        columns: Header row
        rows: Data rows
        comments: Comment lines (without '# ')

    Returns:
        Path written
    """
    path = Path(path)
    with path.open('w', encoding='utf-8', newline='') as handle:
        for line in comments:
            handle.write(f'# {line}\n')
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(v) for v in row])
    return path


def write_sweep_csv(table: SweepTable, path, comments: Iterable[str] = ()) -> Path:
    return write_csv(path, SWEEP_COLUMNS, (p.row() for p in table.points), comments)


def write_trace_csv(report: RelaxReport, path, comments: Iterable[str] = ()) -> Path:
    return write_csv(path, TRACE_COLUMNS, report.trace, comments)


def write_energy_csv(row: Dict, path, comments: Iterable[str] = ()) -> Path:
    """Single-row CSV of an energy evaluation (keys in insertion order)."""
    return write_csv(path, list(row), [list(row.values())], comments)
