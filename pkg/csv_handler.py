"""
CSV Handler for the ISE laboratory
Writes deterministic, diffable result tables and JSON documents.

Tables go through pandas with a header row, rows sorted by their key
columns, LF line endings and 17 significant digits. Exact rationals are
written as "p/q" strings and complex columns are split into <name>_re and
<name>_im. Every write returns the SHA-256 digest of the bytes written.
"""

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

FLOAT_FORMAT = '%.17g'


@dataclass(frozen=True)
class WrittenFile:
    path: Path
    digest: str
    rows: int = 0


def format_rational(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def _plain(value: Any) -> Any:
    """Map one cell to something pandas writes losslessly."""
    if isinstance(value, bool):
        return value
    if isinstance(value, Fraction):
        return format_rational(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, (tuple, list, np.ndarray)):
        return ' '.join(str(_plain(v)) for v in np.asarray(value, dtype=object).ravel())
    return value


def _json_default(value: Any) -> Any:
    if isinstance(value, Fraction):
        return format_rational(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def to_frame(rows: Union[pd.DataFrame, Sequence[Dict[str, Any]]], sort_by: Optional[List[str]] = None) -> pd.DataFrame:
    """
    Normalise result rows into a sorted frame.

    Args:
        rows: Row dictionaries or a DataFrame
        sort_by: Key columns; defaults to every non-float column in order

    Returns:
        DataFrame ready for writing
    """
    df = rows.copy() if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    for col in list(df.columns):
        if df[col].map(lambda v: isinstance(v, complex)).any():
            position = df.columns.get_loc(col)
            values = df.pop(col).map(complex)
            df.insert(position, f"{col}_re", values.map(lambda v: v.real))
            df.insert(position + 1, f"{col}_im", values.map(lambda v: v.imag))
        else:
            df[col] = df[col].map(_plain)

    if sort_by is None:
        sort_by = [c for c in df.columns if not pd.api.types.is_float_dtype(df[c])]
    if sort_by and len(df):
        df = df.sort_values(sort_by, kind='mergesort').reset_index(drop=True)
    return df


class ResultWriter:
    """Writes result tables and JSON documents into one output directory."""

    def __init__(self, output_dir: Union[str, Path]):
        """
        Initialize result writer.

        Args:
            output_dir: Directory receiving every output file
        """
        self.output_dir = Path(output_dir)
        self.written: List[WrittenFile] = []

    def _write_bytes(self, name: str, payload: bytes, rows: int = 0) -> WrittenFile:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        with open(path, 'wb') as f:
            f.write(payload)
        written = WrittenFile(path, hashlib.sha256(payload).hexdigest(), rows)
        self.written.append(written)
        return written

    def write_table(self, stem: str, rows: Union[pd.DataFrame, Sequence[Dict[str, Any]]],
                    sort_by: Optional[List[str]] = None) -> WrittenFile:
        """
        Write rows as <stem>.csv.

        Args:
            stem: File name without extension
            rows: Row dictionaries or a DataFrame
            sort_by: Key columns to sort by

        Returns:
            The written file with its digest
        """
        df = to_frame(rows, sort_by)
        text = df.to_csv(index=False, lineterminator='\n', float_format=FLOAT_FORMAT)
        return self._write_bytes(f"{stem}.csv", text.encode('utf-8'), len(df))

    def write_json(self, stem: str, document: Any) -> WrittenFile:
        """Write a JSON document as <stem>.json with sorted keys."""
        text = json.dumps(document, sort_keys=True, indent=2, default=_json_default) + '\n'
        return self._write_bytes(f"{stem}.json", text.encode('utf-8'))

    @staticmethod
    def load_table(path: Union[str, Path]) -> pd.DataFrame:
        """
        Read a table written by write_table.

        Raises:
            FileNotFoundError: If the file doesn't exist
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"CSV file not found: {path}")
        return pd.read_csv(path, dtype=str)
