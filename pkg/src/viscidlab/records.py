"""CSV tables, JSON configs and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_columns(path: str | Path, cols: dict) -> Path:
    """RFC-4180 CSV (CRLF, header row) from equal-length columns.

    Floats are written with ``repr`` so they round-trip exactly.
    """
    path = Path(path)
    keys = list(cols)
    lengths = {len(cols[k]) for k in keys}
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(keys)
        for row in zip(*[list(cols[k]) for k in keys]):
            w.writerow([_fmt(v) for v in row])
    return path


def write_rows(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_columns(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    out = {}
    for j, k in enumerate(head):
        col = [r[j] for r in body]
        try:
            out[k] = np.array([float(v) for v in col])
        except ValueError:
            out[k] = np.array(col)
    return out


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path: str | Path) -> tuple[dict, str | None]:
    """Read a JSON config, or the config echoed inside a run manifest.

    Returns (config, command) where command is set only for manifests.
    """
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError("config must be a JSON object")
    if "config" in doc and "command" in doc:
        return dict(doc["config"]), doc["command"]
    return doc, None


def resolve_config(defaults: dict, given: dict, where: str = "") -> dict:
    """Overlay ``given`` on ``defaults``.

    Nested option groups are merged key by key; ``*params`` dicts are passed
    through whole since they hold keyword arguments for a chosen builder.
    """
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ValueError(f"unknown config keys {unknown}{where}; allowed {sorted(defaults)}")
    cfg = json.loads(json.dumps(defaults))
    for k, v in given.items():
        d = defaults[k]
        if isinstance(d, dict) and not k.endswith("params") and isinstance(v, dict):
            cfg[k] = resolve_config(d, v, f" in {k!r}")
        else:
            cfg[k] = v
    return cfg


def inventory(out_dir: Path, skip=("manifest.json",)) -> list[dict]:
    files = []
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name not in skip:
            files.append({"path": p.relative_to(out_dir).as_posix(), "sha256": sha256(p), "bytes": p.stat().st_size})
    return files


def write_manifest(out_dir: Path, command: str, config: dict, workers: int, timings: dict, verdicts: list) -> Path:
    doc = {
        "command": command,
        "version": __version__,
        "config": config,
        "workers": workers,
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "verdicts": [v.to_json() for v in verdicts],
        "all_passed": all(v.passed for v in verdicts),
        "files": inventory(out_dir),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
