"""TOML run configuration.

The schema below is enforced with ``jsonschema``; unknown keys are errors so
typos do not silently fall back to defaults. Paths inside a config are
resolved relative to the config file.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from mlfrac.errors import ConfigError, DomainError
from mlfrac.grid import Space, SpectralGrid, StateField, fft_inverse
from mlfrac.linear import Propagator, SourceSpec
from mlfrac.nonlinear import NonlinearRHS, SolveConfig, builtin_rhs, manufactured_problem
from mlfrac.symbol import MatrixSymbol, example_symbol, laplacian_symbol

__all__ = ["SCHEMA", "RunConfig", "load_config", "parse_config"]

_num = {"type": "number"}
_nums = {"type": "array", "items": _num, "minItems": 1}
_profile = {
    "amplitude": _nums,
    "center": {"type": "array", "items": _nums},
    "width": _nums,
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["problem", "grid", "symbol", "time", "initial"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {"name": {"type": "string"}, "description": {"type": "string"}},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["extent", "points"],
            "properties": {
                "extent": {"type": "array", "items": _num, "minItems": 1, "maxItems": 3},
                "points": {"type": "array", "items": {"type": "integer"}, "minItems": 1, "maxItems": 3},
            },
        },
        "symbol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "builtin": {"enum": ["example", "laplacian"]},
                "a": _nums,
                "m": {"type": "integer", "minimum": 1},
                "powers": {"type": "array", "items": {"type": "integer"}},
                "file": {"type": "string"},
                "terms": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["row", "col", "alpha"],
                        # coefficient as `coeff` (number or [re, im]) or as `re` / `im`
                        "oneOf": [{"required": ["coeff"]}, {"anyOf": [{"required": ["re"]}, {"required": ["im"]}]}],
                        "properties": {
                            "row": {"type": "integer", "minimum": 0},
                            "col": {"type": "integer", "minimum": 0},
                            "alpha": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                            "coeff": {
                                "oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]
                            },
                            "re": _num,
                            "im": _num,
                        },
                    },
                },
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "required": ["beta", "T", "t_out"],
            "properties": {
                "beta": _num,
                "T": _num,
                "t_out": _nums,
                "steps": {"type": "integer", "minimum": 2},
                "quad_nodes": {"type": "integer", "minimum": 1},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["gaussian", "plane-wave", "file"]},
                **_profile,
                "wavenumber": {"type": "array", "items": _nums},
                "file": {"type": "string"},
            },
        },
        "source": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["zero", "ramp", "constant", "steady", "manufactured", "file"]},
                **_profile,
                "files": {"type": "array", "items": {"type": "string"}},
                "times": _nums,
            },
        },
        "nonlinear": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["zero", "sine", "cubic", "logistic-coupling", "linear"]},
                "coefficients": {
                    "oneOf": [_num, _nums, {"type": "array", "items": _nums}]
                },
                "L0": {"type": "number", "minimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "picard_tol": {"type": "number", "exclusiveMinimum": 0},
                "target_delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_picard_iters": {"type": "integer", "minimum": 1},
                "lipschitz_samples": {"type": "integer", "minimum": 0},
                "dealias": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "seed": {"type": "integer"}},
        },
    },
}

TAIL_MASS_WARN = 1e-8


@dataclass
class RunConfig:
    name: str
    grid: SpectralGrid
    symbol: MatrixSymbol
    beta: float
    T: float
    t_out: tuple[float, ...]
    initial: dict
    source: dict
    nonlinear: dict | None
    solver: dict
    steps: int = 256
    quad_nodes: int = 128
    out_dir: str | None = None
    seed: int = 0
    base: Path = field(default_factory=Path.cwd)
    text: str = ""

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    @property
    def m(self) -> int:
        return self.symbol.m

    def solve_config(self) -> SolveConfig:
        return SolveConfig(
            beta=self.beta,
            T=self.T,
            t_out=self.t_out,
            time_steps=self.steps,
            quad_nodes=self.quad_nodes,
            seed=self.seed,
            **self.solver,
        )

    # {{{ builders

    def _profiles(self, spec: dict, what: str) -> np.ndarray:
        m, g = self.m, self.grid
        try:
            amp = np.broadcast_to(np.asarray(spec.get("amplitude", [1.0]), float), (m,))
            width = np.broadcast_to(np.asarray(spec.get("width", [0.5]), float), (m,))
            center = np.broadcast_to(
                np.asarray(spec.get("center", [[0.0] * g.n]), float), (m, g.n)
            )
        except ValueError as exc:
            raise ConfigError(f"{what}: profile arrays do not fit m={m}, n={g.n}") from exc
        if np.any(width <= 0):
            raise ConfigError(f"{what}: widths must be positive")
        out = np.empty((m,) + g.shape)
        for j in range(m):
            r2 = sum((g.x[d] - center[j, d]) ** 2 for d in range(g.n))
            out[j] = amp[j] * np.exp(-r2 / width[j] ** 2)
        return out

    def initial_field(self) -> StateField:
        spec, g, m = self.initial, self.grid, self.m
        kind = spec["kind"]
        if kind == "gaussian":
            return StateField(g, self._profiles(spec, "initial"))
        if kind == "plane-wave":
            amp = np.broadcast_to(np.asarray(spec.get("amplitude", [1.0]), float), (m,))
            k = np.broadcast_to(np.asarray(spec.get("wavenumber", [[1.0] * g.n]), float), (m, g.n))
            data = np.stack(
                [amp[j] * np.cos(sum(k[j, d] * g.x[d] for d in range(g.n))) for j in range(m)]
            )
            return StateField(g, data)
        from mlfrac.io import read_field

        f, _ = read_field(self._path(spec["file"]))
        self.grid.check_compatible(f.grid)
        if f.m != m:
            raise ConfigError(f"initial file has {f.m} components, symbol has {m}")
        return f.to_physical()

    def source_spec(self, prop: Propagator, Phi: StateField) -> SourceSpec:
        spec, g = self.source, self.grid
        kind = spec["kind"]
        if kind in ("zero", "manufactured"):
            return SourceSpec.zero()
        if kind == "ramp":
            prof = self._profiles(spec, "source")
            return SourceSpec("callback", evaluator=lambda t: t * prof)
        if kind == "constant":
            return SourceSpec.constant(self._profiles(spec, "source"))
        if kind == "steady":
            AF = prop.apply_symbol(Phi.to_frequency().data)
            H = fft_inverse(StateField(g, AF, Space.FREQUENCY)).data
            return SourceSpec.constant(H)
        from mlfrac.io import read_field

        files, times = spec.get("files", []), spec.get("times", [])
        if len(files) != len(times) or len(files) < 2:
            raise ConfigError("file source needs matching 'files' and 'times' (at least 2)")
        samples = []
        for p in files:
            f, _ = read_field(self._path(p))
            self.grid.check_compatible(f.grid)
            samples.append(f.to_physical().data)
        return SourceSpec("sampled", times=np.asarray(times), samples=np.stack(samples))

    def rhs(self, prop: Propagator, Phi: StateField) -> tuple[StateField, NonlinearRHS]:
        """Nonlinearity (plus forcing) and possibly replaced initial data."""
        nl = self.nonlinear or {"name": "zero"}
        if self.source["kind"] == "manufactured":
            if nl["name"] != "sine" or np.ndim(nl.get("coefficients", 0.1)) != 0:
                raise ConfigError("manufactured source needs a scalar-coefficient 'sine' nonlinearity")
            Phi, rhs, _ = manufactured_problem(prop, Phi.data, float(nl.get("coefficients", 0.1)))
            return Phi, rhs
        forcing = self.source_spec(prop, Phi)
        rhs = builtin_rhs(nl["name"], nl.get("coefficients", 0.0), self.m, nl.get("L0"), forcing)
        return Phi, rhs

    def manufactured_exact(self, prop: Propagator, Phi: StateField):
        nl = self.nonlinear or {}
        _, _, exact = manufactured_problem(prop, Phi.data, float(nl.get("coefficients", 0.1)))
        return exact

    # }}}

    def _path(self, p: str) -> Path:
        path = Path(p)
        path = path if path.is_absolute() else self.base / path
        if not path.exists():
            raise ConfigError(f"referenced file does not exist: {path}")
        return path


def tail_mass(f: StateField) -> float:
    """Largest magnitude on the lattice boundary faces."""
    data = np.abs(f.to_physical().data)
    out = 0.0
    for d in range(1, data.ndim):
        out = max(out, float(np.max(np.take(data, 0, axis=d))))
    return out


def _symbol(spec: dict, n: int, base: Path) -> MatrixSymbol:
    if "file" in spec:
        path = Path(spec["file"])
        path = path if path.is_absolute() else base / path
        try:
            sub = tomllib.loads(path.read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read symbol file {path}: {exc}") from exc
        sub = sub.get("symbol", sub)
        if "file" in sub:
            raise ConfigError("symbol files cannot reference further files")
        try:
            jsonschema.validate(sub, SCHEMA["properties"]["symbol"])
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"{path}: {exc.message}") from exc
        return _symbol(sub, n, path.parent)
    builtin = spec.get("builtin")
    if builtin == "example":
        a = spec.get("a")
        if a is None or len(a) != n:
            raise ConfigError(f"example symbol needs 'a' with {n} entries")
        return example_symbol(a)
    if builtin == "laplacian":
        m = int(spec.get("m", 1))
        return laplacian_symbol(n, m, spec.get("powers"))
    if "terms" not in spec or "m" not in spec:
        raise ConfigError("symbol needs 'builtin', 'file' or 'm' plus 'terms'")
    m = int(spec["m"])
    entries = [[{} for _ in range(m)] for _ in range(m)]
    for term in spec["terms"]:
        j, k, alpha = term["row"], term["col"], tuple(term["alpha"])
        if j >= m or k >= m or len(alpha) != n:
            raise ConfigError(f"symbol term out of range: {term}")
        if "coeff" in term:
            c = term["coeff"]
            c = complex(*c) if isinstance(c, list) else complex(c)
        else:
            c = complex(term.get("re", 0.0), term.get("im", 0.0))
        entries[j][k][alpha] = entries[j][k].get(alpha, 0) + c
    return MatrixSymbol.from_terms(n, entries)


def parse_config(text: str, base: Path | str = ".") -> RunConfig:
    base = Path(base)
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc

    try:
        grid = SpectralGrid(tuple(raw["grid"]["extent"]), tuple(raw["grid"]["points"]))
        sym = _symbol(raw["symbol"], grid.n, base)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc

    tm = raw["time"]
    beta, T = float(tm["beta"]), float(tm["T"])
    if not (0.0 < beta <= 1.0):
        raise ConfigError(f"time/beta must lie in (0, 1]: {beta}")
    if not T > 0:
        raise ConfigError(f"time/T must be positive: {T}")
    t_out = tuple(float(t) for t in tm["t_out"])
    if any(t < 0 or t > T for t in t_out) or any(b < a for a, b in zip(t_out, t_out[1:])):
        raise ConfigError(f"time/t_out must be sorted inside [0, {T}]")
    steps = int(tm.get("steps", 256))

    nonlinear = raw.get("nonlinear")
    source = raw.get("source", {"kind": "zero"})
    if source["kind"] == "manufactured" and nonlinear is None:
        raise ConfigError("source kind 'manufactured' needs a [nonlinear] table")
    if nonlinear is not None:
        h = T / steps
        bad = [t for t in t_out if abs(round(t / h) * h - t) > 1e-9 * max(h, 1.0)]
        if bad:
            raise ConfigError(f"t_out values {bad} are not multiples of T/steps = {h}")

    cfg = RunConfig(
        name=raw["problem"]["name"],
        grid=grid,
        symbol=sym,
        beta=beta,
        T=T,
        t_out=t_out,
        initial=raw["initial"],
        source=source,
        nonlinear=nonlinear,
        solver=dict(raw.get("solver", {})),
        steps=steps,
        quad_nodes=int(tm.get("quad_nodes", 128)),
        out_dir=raw.get("output", {}).get("dir"),
        seed=int(raw.get("output", {}).get("seed", 0)),
        base=base,
        text=text,
    )
    # referenced files must exist at validation time
    if cfg.initial["kind"] == "file":
        if "file" not in cfg.initial:
            raise ConfigError("initial kind 'file' needs 'file'")
        cfg._path(cfg.initial["file"])
    for p in source.get("files", []):
        cfg._path(p)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent)
