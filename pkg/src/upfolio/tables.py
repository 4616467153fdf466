"""CSV emission with a fixed, reproducible float format.

Every delimited artifact in the package goes through `write_csv` so that a
given sequence of values always produces byte-identical files: floats are
rendered with %.17g (shortest exact round-trip for doubles is not guaranteed
by %g alone, but 17 significant digits always round-trip), newlines are '\\n'.
"""

from __future__ import annotations

import os
from typing import Iterable, Sequence


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, str)):
        return str(value)
    return format(float(value), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
