"""Writing experiment results to disk.

Layout inside the output directory:

``result.json``
    canonical JSON (sorted keys, schema_version "1"), the whole ExperimentResult.
``ser_<method>.csv``
    one file per SER curve: ``iteration|snr_db, ser, stderr, method``.
``cdf_<name>.csv``
    ``value, probability, matrix``.
``heatmap.csv``
    ``row, col, db``.

CSV files are UTF-8 with LF line endings; floats are written with Python's
shortest round-trip repr so they parse back to the identical double.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

from .errors import OutputError
from .studies import ExperimentResult

FORMATS = ("json", "csv")


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").lower()


def result_to_json(result: ExperimentResult) -> str:
    return json.dumps(result.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def result_from_json(text: str) -> ExperimentResult:
    return ExperimentResult.from_dict(json.loads(text))


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit(result: ExperimentResult, out_dir, formats=FORMATS) -> list[Path]:
    """Write ``result`` in the requested formats; returns the paths written."""
    formats = tuple(formats)
    bad = set(formats) - set(FORMATS)
    if bad:
        raise ValueError(f"unknown output format(s): {', '.join(sorted(bad))}")
    out = Path(out_dir)
    written = []
    current = out
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            current = out / "result.json"
            current.write_text(result_to_json(result), encoding="utf-8", newline="\n")
            written.append(current)
        if "csv" in formats:
            for c in result.curves:
                current = out / f"ser_{_slug(c.method)}.csv"
                rows = [(x, s, e, c.method) for x, s, e in zip(c.x, c.ser, c.stderr)]
                _write_csv(current, (c.axis, "ser", "stderr", "method"), rows)
                written.append(current)
            for name, cdf in result.cdfs.items():
                current = out / f"cdf_{_slug(name)}.csv"
                rows = [(v, p, name) for v, p in zip(cdf.values, cdf.probabilities)]
                _write_csv(current, ("value", "probability", "matrix"), rows)
                written.append(current)
            if result.heatmap is not None:
                current = out / "heatmap.csv"
                rows = [(i, j, v) for i, row in enumerate(result.heatmap) for j, v in enumerate(row)]
                _write_csv(current, ("row", "col", "db"), rows)
                written.append(current)
    except OSError as exc:
        raise OutputError(f"cannot write {current}: {exc.strerror or exc}") from exc
    return written
