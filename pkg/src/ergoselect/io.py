"""CSV grids and tables, and the run directory writer with its manifest."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .grid import GridField, PeriodicGrid

FLOAT_FMT = "{:.17g}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def grid_csv_text(u: GridField, name: str) -> str:
    """Header ``# dim=<d> N=<n> field=<name>`` then one value per line, row-major."""
    lines = [f"# dim={u.grid.dim} N={u.grid.n} field={name}"]
    lines += [FLOAT_FMT.format(v) for v in u.flat()]
    return "\n".join(lines) + "\n"


def read_grid_csv(path) -> GridField:
    text = Path(path).read_text().splitlines()
    header = dict(tok.split("=", 1) for tok in text[0].lstrip("# ").split())
    grid = PeriodicGrid(int(header["dim"]), int(header["N"]))
    vals = np.array([float(v) for v in text[1:] if v.strip()])
    return GridField(grid, vals.reshape(grid.shape), header.get("field"))


def table_csv_text(rows: list[dict], columns: list[str] | None = None) -> str:
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(r.get(c, "")) for c in columns))
    return "\n".join(lines) + "\n"


def read_table_csv(path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    cols = lines[0].split(",")
    out = []
    for line in lines[1:]:
        row = {}
        for c, v in zip(cols, line.split(",")):
            try:
                row[c] = float(v)
            except ValueError:
                row[c] = v
        out.append(row)
    return out


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    return obj


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunWriter:
    """Single funnel for every file of a run; the manifest lists each with its hash."""

    def __init__(self, out_dir, config: dict, version: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.version = version
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.files: dict[str, str] = {}
        self.certificates: dict = {}
        self.results: dict = {}
        self.status = "running"
        self.failure: str | None = None

    def write_text(self, name: str, text: str):
        data = text.encode()
        _atomic_write(self.dir / name, data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def write_grid(self, name: str, u: GridField, field_name: str | None = None):
        self.write_text(name, grid_csv_text(u, field_name or Path(name).stem))

    def write_table(self, name: str, rows: list[dict], columns: list[str] | None = None):
        self.write_text(name, table_csv_text(rows, columns))

    def write_json(self, name: str, obj):
        self.write_text(name, json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def certify(self, key: str, passed: bool, **details):
        self.certificates[key] = {"passed": bool(passed), **to_jsonable(details)}

    def finish(self, status: str, failure: str | None = None) -> Path:
        self.status = status
        self.failure = failure
        manifest = {
            "tool": "ergoselect",
            "version": self.version,
            "config": self.config,
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "status": status,
            "failure": failure,
            "certificates": self.certificates,
            "results": self.results,
            "files": [{"name": k, "sha256": v} for k, v in sorted(self.files.items())],
        }
        path = self.dir / "manifest.json"
        _atomic_write(path, (json.dumps(to_jsonable(manifest), indent=2, sort_keys=True) + "\n").encode())
        return path
