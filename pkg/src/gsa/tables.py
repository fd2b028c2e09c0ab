"""TSV output shared by the pipeline, the studies and the command line."""

from __future__ import annotations

import io
import math
from typing import Iterable, Sequence


def fmt(value) -> str:
    """Cell text: reals to 12 significant digits, None/NaN as 'NA'."""
    if value is None:
        return "NA"
    if isinstance(value, float) or hasattr(value, "dtype") and value.dtype.kind == "f":
        v = float(value)
        if math.isnan(v):
            return "NA"
        return f"{v:.12g}"
    return str(value)


def tsv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write("\t".join(header) + "\n")
    for row in rows:
        buf.write("\t".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_tsv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(tsv_text(header, rows))
