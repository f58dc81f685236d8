"""Reading data files and writing path, solution and table outputs."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput
from .multidim import AggregatedClustering
from .path import FittedSolution, RegularizationPath


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """n x p matrix from a CSV file; a non-numeric first row is taken as a header."""
    text = Path(path).read_text(encoding="utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise InvalidInput(f"{path}: no data")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InvalidInput(f"{path}: ragged rows")
    try:
        Y = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from exc
    if not np.all(np.isfinite(Y)):
        raise InvalidInput(f"{path}: non-finite values")
    return Y


def read_vector(path) -> np.ndarray:
    """Data vector from one value per line, or a single CSV row or column."""
    Y = read_matrix(path)
    if Y.shape[1] == 1:
        return Y[:, 0]
    if Y.shape[0] == 1:
        return Y[0]
    raise InvalidInput(f"{path}: expected a vector, got a {Y.shape[0]}x{Y.shape[1]} matrix")


def _num(v) -> float | str:
    v = float(v)
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def path_to_dict(path: RegularizationPath) -> dict:
    return {
        "breakpoints": [float(b) for b in path.breakpoints],
        "merges": [{"step": e.step, "lambda": float(e.lam),
                    "left_cluster": int(e.left_cluster), "right_cluster": int(e.right_cluster)}
                   for e in path.merge_events],
        "n_clusters": [int(k) for k in path.n_clusters],
        "sigma": [int(s) for s in path.sigma],
    }


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def solution_rows(x, sol: FittedSolution):
    labels = sol.clustering.labels()
    return [(i, float(x[i]), float(sol.B_hat[i]), int(labels[i])) for i in range(len(x))]


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def aggregated_rows(agg: AggregatedClustering):
    return [(i, int(l)) for i, l in enumerate(agg.labels)]


def write_text(text: str, output) -> None:
    if output is None or str(output) == "-":
        import sys
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def read_config(path) -> dict:
    """Flat ``key=value`` file or JSON object."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    if stripped.startswith("{"):
        d = json.loads(stripped)
        if not isinstance(d, dict):
            raise InvalidInput(f"{path}: expected a JSON object")
        return d
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInput(f"{path}:{ln}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
