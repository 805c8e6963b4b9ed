"""Strict JSON run configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .grid import Disk, Grid, Polygon, SourceSpec, load_field, shape_from_json
from .shapeopt import DescentParams, GSpec

TOP_KEYS = {"grid", "f", "g", "init", "descent", "outputs"}
DEFAULT_OUT = "quadsurf_out"
DEFAULT_SNAPSHOT_EVERY = 10


class ConfigError(ValueError):
    pass


def _strict(obj, allowed: set, where: str, required: set = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    return obj


@dataclass
class RunConfig:
    grid: Grid
    f: SourceSpec
    g: GSpec
    init: Union[str, Disk, Polygon] = "hull+margin"
    descent: DescentParams = field(default_factory=DescentParams)
    out_dir: str = DEFAULT_OUT
    snapshot_every: int = DEFAULT_SNAPSHOT_EVERY

    def to_json(self) -> dict:
        return {
            "grid": {"box": list(self.grid.box), "n": [self.grid.nx, self.grid.ny]},
            "f": self.f.to_json(),
            "g": self.g.to_json(),
            "init": self.init if isinstance(self.init, str) else {"shape": self.init.to_json()},
            "descent": self.descent.to_json(),
            "outputs": {"dir": self.out_dir, "snapshot_every": self.snapshot_every},
        }


def _grid(obj) -> Grid:
    _strict(obj, {"box", "n"}, "grid", {"box", "n"})
    box = tuple(float(v) for v in obj["box"])
    if len(box) != 4:
        raise ConfigError("grid.box needs [x0, y0, x1, y1]")
    n = obj["n"]
    nx, ny = (n, n) if isinstance(n, int) else tuple(n)
    try:
        return Grid(box, int(nx), int(ny))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _g(obj, base: Path) -> GSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError("g: expected an object with 'kind'")
    kind = obj["kind"]
    if kind == "constant":
        _strict(obj, {"kind", "k"}, "g", {"k"})
        return GSpec.constant(float(obj["k"]))
    if kind == "radial_power":
        _strict(obj, {"kind", "k", "alpha"}, "g", {"k", "alpha"})
        return GSpec.radial_power(float(obj["k"]), float(obj["alpha"]))
    if kind == "tabulated":
        _strict(obj, {"kind", "path"}, "g", {"path"})
        path = Path(obj["path"])
        if not path.is_absolute():
            path = base / path
        return GSpec("tabulated", table=load_field(path), path=str(obj["path"]))
    raise ConfigError(f"g: unknown kind {kind!r}")


def _init(obj):
    if obj == "hull+margin":
        return obj
    _strict(obj, {"shape"}, "init", {"shape"})
    return shape_from_json(obj["shape"])


def parse_config(obj: dict, base: Path = Path(".")) -> RunConfig:
    _strict(obj, TOP_KEYS, "config", {"grid", "f", "g"})
    try:
        grid = _grid(obj["grid"])
        f = SourceSpec.from_json(_strict(obj["f"], {"pieces"}, "f", {"pieces"}))
        g = _g(obj["g"], base)
        init = _init(obj.get("init", "hull+margin"))
        d = _strict(obj.get("descent", {}), set(DescentParams.__dataclass_fields__), "descent")
        descent = DescentParams(**{k: (int(v) if k in ("max_iters", "reinit_every", "backtrack_max")
                                        else float(v)) for k, v in d.items()})
        out = _strict(obj.get("outputs", {}), {"dir", "snapshot_every"}, "outputs")
        snap = int(out.get("snapshot_every", DEFAULT_SNAPSHOT_EVERY))
        if snap < 1:
            raise ConfigError("outputs.snapshot_every must be >= 1")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(grid, f, g, init, descent, str(out.get("dir", DEFAULT_OUT)), snap)


def load_config(path, out_dir: Optional[str] = None) -> RunConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = parse_config(obj, path.parent)
    if out_dir is not None:
        cfg.out_dir = out_dir
    return cfg
