"""CSV and JSON serialization with atomic writes.

CSV files are comma separated with a header row, LF line endings and floats
printed with 17 significant digits, so values round-trip through decimal.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .pathgen import PathPair
from .solvers import TrajectoryEnsemble

FLOAT_FMT = "%.17g"


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def _atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, obj):
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"
    return _atomic_write(path, text)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_csv(path, header, rows):
    """Write rows atomically; returns the number of data rows."""
    lines = [",".join(header)]
    count = 0
    for row in rows:
        lines.append(",".join(_cell(x) for x in row))
        count += 1
    _atomic_write(path, "\n".join(lines) + "\n")
    return count


def read_csv(path):
    """Return ``(header, float array)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(x) for x in row] for row in reader]
    return header, np.array(data).reshape(len(data), len(header))


def path_header(e):
    return (["t"] + [f"W_{i + 1}" for i in range(e)]
            + [f"WW_{i + 1}{j + 1}" for i in range(e) for j in range(e)])


def path_rows(path: PathPair):
    e = path.e
    for t, w, ww in zip(path.times, path.W, path.WW):
        yield [float(t)] + [float(x) for x in w] + [float(x) for x in ww.reshape(e * e)]


def write_path(stem, path: PathPair):
    """Write ``<stem>.csv`` and ``<stem>.json``; returns the written files and row counts."""
    rows = write_csv(f"{stem}.csv", path_header(path.e), path_rows(path))
    write_json(f"{stem}.json", {"n": path.n, "T": path.T, "grid_dt": path.grid_dt,
                                "steps": path.steps, "meta": dict(path.meta)})
    return {f"{stem}.csv": rows, f"{stem}.json": None}


def read_path(stem):
    header, data = read_csv(f"{stem}.csv")
    doc = read_json(f"{stem}.json")
    e = sum(1 for h in header if h.startswith("W_"))
    return PathPair(doc["n"], doc["T"], doc["grid_dt"], np.asarray(doc["steps"], dtype=np.int64),
                    data[:, 1:1 + e], data[:, 1 + e:].reshape(-1, e, e), doc["meta"])


def write_paths(stem, paths):
    """Several paths in one CSV with a leading ``path`` index column."""
    e = paths[0].e
    header = ["path"] + path_header(e)

    def rows():
        for i, p in enumerate(paths):
            for r in path_rows(p):
                yield [i] + r

    return write_csv(f"{stem}.csv", header, rows())


def trajectory_header(d, indexed=True):
    return (["path"] if indexed else []) + ["t"] + [f"X_{i + 1}" for i in range(d)]


def write_trajectories(stem, ens: TrajectoryEnsemble, fingerprint=None):
    """Write ``<stem>.csv`` with rows ordered by trajectory index, then time."""
    d = ens.X.shape[2]

    def rows():
        for r in range(ens.n_paths):
            for t, x in zip(ens.times, ens.X[:, r, :]):
                yield [r, float(t)] + [float(v) for v in x]

    n = write_csv(f"{stem}.csv", trajectory_header(d), rows())
    write_json(f"{stem}.json", {"scheme": ens.scheme, "n_paths": ens.n_paths,
                                "times": ens.times, "meta": dict(ens.meta),
                                "stats_fingerprint": fingerprint})
    return {f"{stem}.csv": n, f"{stem}.json": None}


def read_trajectories(stem):
    header, data = read_csv(f"{stem}.csv")
    doc = read_json(f"{stem}.json")
    K = len(doc["times"])
    R = doc["n_paths"]
    X = data[:, 2:].reshape(R, K, -1).transpose(1, 0, 2)
    return TrajectoryEnsemble(np.asarray(doc["times"]), X, doc["scheme"], doc["meta"])


def count_rows(path):
    path = Path(path)
    if path.suffix != ".csv":
        return None
    with open(path, encoding="utf-8") as fh:
        return max(0, sum(1 for _ in fh) - 1)
