"""Field files, CSV/gnuplot export and run manifests.

A field file is one ASCII header line followed by raw little-endian float64
``(re, im)`` pairs, component-major and row-major over the lattice::

    MLFRAC-FIELD v1; n=1; m=2; points=128; extent=6.283185307179586; space=physical; t=0.5

Frequency-space fields are stored in FFT index order.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from mlfrac.errors import ConfigError
from mlfrac.grid import Space, SpectralGrid, StateField

__all__ = [
    "MAGIC",
    "write_field",
    "read_field",
    "write_csv",
    "write_columns",
    "sha256_file",
    "write_json",
    "read_json",
]

MAGIC = "MLFRAC-FIELD v1"
_DTYPE = np.dtype("<f8")


def _fmt_tuple(vals) -> str:
    return "x".join(repr(v) if isinstance(v, float) else str(v) for v in vals)


def write_field(path: str | Path, field: StateField, t: float | None = None) -> Path:
    path = Path(path)
    g = field.grid
    parts = [
        MAGIC,
        f"n={g.n}",
        f"m={field.m}",
        f"points={_fmt_tuple(g.points)}",
        f"extent={_fmt_tuple(g.extent)}",
        f"space={field.space.value}",
    ]
    if t is not None:
        parts.append(f"t={float(t)!r}")
    header = "; ".join(parts) + "\n"
    data = np.ascontiguousarray(field.data).view(np.float64).astype(_DTYPE, copy=False)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(data.tobytes(order="C"))
    return path


def read_field(path: str | Path) -> tuple[StateField, dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ConfigError(f"{path}: missing header line")
    header = raw[:nl].decode("ascii", errors="replace")
    fields = [p.strip() for p in header.split(";")]
    if fields[0] != MAGIC:
        raise ConfigError(f"{path}: not a field file (header {fields[0]!r})")
    meta: dict = {}
    for item in fields[1:]:
        key, _, value = item.partition("=")
        meta[key] = value
    try:
        n, m = int(meta["n"]), int(meta["m"])
        points = tuple(int(v) for v in meta["points"].split("x"))
        extent = tuple(float(v) for v in meta["extent"].split("x"))
        space = Space(meta["space"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad header: {exc}") from exc
    if len(points) != n:
        raise ConfigError(f"{path}: header dimension mismatch")
    body = raw[nl + 1 :]
    expected = 2 * m * int(np.prod(points)) * 8
    if len(body) != expected:
        raise ConfigError(f"{path}: expected {expected} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype=_DTYPE).astype(np.float64).view(complex)
    grid = SpectralGrid(extent, points)
    out = {"n": n, "m": m, "space": space.value}
    if "t" in meta:
        out["t"] = float(meta["t"])
    return StateField(grid, data.reshape((m,) + points), space), out


def write_csv(path: str | Path, field: StateField) -> Path:
    """One row per lattice point: coordinates then ``re, im`` per component."""
    path = Path(path)
    f = field.to_physical()
    g = f.grid
    coords = g.x.reshape(g.n, -1)
    vals = f.data.reshape(f.m, -1)
    cols = [coords[d] for d in range(g.n)]
    names = [f"x{d + 1}" for d in range(g.n)]
    for j in range(f.m):
        cols += [vals[j].real, vals[j].imag]
        names += [f"re_u{j + 1}", f"im_u{j + 1}"]
    np.savetxt(path, np.column_stack(cols), delimiter=",", fmt="%.17g", header=",".join(names), comments="")
    return path


def write_columns(path: str | Path, field: StateField) -> Path:
    """Gnuplot columns: the full line in 1D, the full plane in 2D (blank line
    between rows), the middle ``x3`` plane in 3D."""
    path = Path(path)
    f = field.to_physical()
    g = f.grid
    data = f.data
    axes = g.axes()
    if g.n == 3:
        mid = g.points[2] // 2
        data = data[..., mid]
        axes = axes[:2]
    lines = []
    if len(axes) == 1:
        for i, x in enumerate(axes[0]):
            vals = " ".join(f"{v.real:.17g} {v.imag:.17g}" for v in data[:, i])
            lines.append(f"{x:.17g} {vals}")
    else:
        for i, x in enumerate(axes[0]):
            for k, y in enumerate(axes[1]):
                vals = " ".join(f"{v.real:.17g} {v.imag:.17g}" for v in data[:, i, k])
                lines.append(f"{x:.17g} {y:.17g} {vals}")
            lines.append("")
    path.write_text("\n".join(lines) + "\n")
    return path


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
