"""CSV and manifest writers shared by the command-line tools.

Floats are written with ``repr`` so identical runs produce identical bytes.
The manifest is the only output carrying wall-clock information.
"""
from __future__ import annotations

import csv
import json
import math
import platform
import sys
from pathlib import Path
from typing import Iterable, Mapping, Sequence

MANIFEST_NAME = "manifest.json"


def _cell(v):
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return v


def write_csv(path, rows: Iterable[Sequence], header: Sequence[str] | None = None) -> Path:
    """Write ``rows`` (tuples), with ``header`` first when given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_dict_rows(path, rows: Sequence[Mapping]) -> Path:
    """CSV from a list of dicts sharing their keys (order of the first row)."""
    header = list(rows[0]) if rows else []
    return write_csv(path, ([r[k] for k in header] for r in rows), header)


def versions() -> dict:
    import joblib
    import numba
    import numpy
    import scipy

    from . import __version__

    return {"python": sys.version.split()[0], "platform": platform.platform(),
            "lattice_epidemics": __version__, "numpy": numpy.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "joblib": joblib.__version__}


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_manifest(out_dir, subcommand: str, config: Mapping, outputs: Sequence[str],
                   wall_clock: float, status: str = "ok", extra: Mapping | None = None) -> Path:
    """Manifest schema (all keys always present):

    ``subcommand``, ``status``, ``master_seed``, ``config`` (effective
    configuration after merging file and flags), ``outputs`` (file names),
    ``versions``, ``wall_clock_seconds`` and ``extra`` (subcommand details).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"subcommand": subcommand, "status": status, "master_seed": config.get("seed"),
           "config": _jsonable(dict(config)), "outputs": list(outputs), "versions": versions(),
           "wall_clock_seconds": wall_clock, "extra": _jsonable(dict(extra or {}))}
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
