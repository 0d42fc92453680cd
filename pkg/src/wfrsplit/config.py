"""Flat ``key = value`` run configuration.

One assignment per line; ``#`` starts a comment; dotted keys group related
settings (``grid.n``, ``wstep.tol``, ``diffusion.m``, ...). Unknown keys are
rejected so that typos fail loudly.

Field specifications (``init``, ``potential``) may be summed with ``+``::

    init = uniform:0.2 + bump:(0.3,0.3),0.1,0.5
    init = disk:(0,0),2,0.8
    potential = quadratic-well
    potential = constant:2 + linear:(1,0)

A 2D centre is written ``(x,y)`` or ``x;y``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Grid, read_snapshot_csv
from .models import ModelConfig
from .wstep import ALG2Config

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "field_from_spec"]


class ConfigError(ValueError):
    pass


_FLOAT = {"h", "T", "A", "B", "C", "m", "c1", "c2", "diffusion.m", "reaction.m", "reaction.scale",
          "wstep.tol", "wstep.r_admm", "wstep.relaxation", "frstep.tol", "output.vmax"}
_INT = {"wstep.max_iter", "wstep.n_t", "frstep.max_newton", "output.every", "seed",
        "wstep.check_every"}
_BOOL = {"wstep.warm_start", "output.pgm", "output.half"}
_STR = {"family", "grid.n", "grid.box", "grid.origin", "diffusion.nonlinearity",
        "diffusion.potential", "reaction.nonlinearity", "reaction.potential", "init", "init2",
        "init_c", "kernel.signs", "wstep.linear_solver"}
KNOWN_KEYS = _FLOAT | _INT | _BOOL | _STR

FAMILY_ALIASES = {"scalar": "scalar", "prey-predator": "prey_predator", "prey_predator": "prey_predator",
                  "system": "prey_predator", "heleshaw": "heleshaw", "hele-shaw": "heleshaw",
                  "nutrient": "nutrient"}
REQUIRED_INIT = {"scalar": ("init",), "prey_predator": ("init", "init2"),
                 "heleshaw": ("init",), "nutrient": ("init", "init_c")}


@dataclass
class RunConfig:
    """A parsed configuration: the model description plus output settings."""

    model: ModelConfig
    initial: dict
    raw: dict
    every: int = 1
    pgm: bool = True
    half: bool = True
    vmax: float | None = None
    warnings: list = field(default_factory=list)


def _parse_bool(key, value):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` text into a typed dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        try:
            if key in _FLOAT:
                out[key] = float(value)
            elif key in _INT:
                out[key] = int(value)
            elif key in _BOOL:
                out[key] = _parse_bool(key, value)
            else:
                out[key] = value
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def _tuple(text, conv=float, sep="x"):
    return tuple(conv(v) for v in text.lower().split(sep))


def _center(text, dim):
    t = text.strip().strip("()")
    parts = re.split(r"[;,]", t)
    vals = tuple(float(p) for p in parts if p.strip())
    if len(vals) != dim:
        raise ConfigError(f"centre {text!r} needs {dim} coordinates")
    return np.array(vals)


def _split_args(body):
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, ""
    for ch in body:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    return [p.strip() for p in parts]


def _load_file_field(path, grid: Grid, base: Path | None):
    p = Path(path)
    if base is not None and not p.is_absolute():
        p = base / p
    try:
        snap = read_snapshot_csv(p)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read field file {p}: {exc}") from None
    if snap.grid.shape != grid.shape:
        raise ConfigError(f"{p}: grid {snap.grid.shape} does not match {grid.shape}")
    return snap.values


def field_from_spec(spec: str, grid: Grid, kind: str = "init", base: Path | None = None) -> np.ndarray:
    """Evaluate an ``init`` or ``potential`` specification on ``grid`` cell centres."""
    total = np.zeros(grid.shape)
    X = grid.centers()
    for term in spec.split("+"):
        term = term.strip()
        name, _, body = term.partition(":")
        name = name.strip().lower()
        args = _split_args(body) if body else []
        try:
            if kind == "init" and name == "uniform":
                total += float(args[0])
            elif kind == "init" and name == "bump":
                c = _center(args[0], grid.dim)
                w, height = float(args[1]), float(args[2])
                r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
                total += height * np.exp(-0.5 * r2 / w ** 2)
            elif kind == "init" and name == "disk":
                c = _center(args[0], grid.dim)
                radius, height = float(args[1]), float(args[2])
                r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
                total += np.where(r2 < radius ** 2, height, 0.0)
            elif kind == "potential" and name == "zero":
                pass
            elif kind == "potential" and name == "constant":
                total += float(args[0])
            elif kind == "potential" and name == "linear":
                if "(" in args[0] or ";" in args[0]:
                    g = _center(args[0], grid.dim)
                else:  # a scalar slope acts along the first axis
                    g = [float(args[0])] + [0.0] * (grid.dim - 1)
                total += sum(gi * x for gi, x in zip(g, X))
            elif kind == "potential" and name == "quadratic-well":
                c = [o + 0.5 * L for o, L in zip(grid.origin, grid.lengths)]
                total += 0.5 * sum((x - ci) ** 2 for x, ci in zip(X, c))
            elif name == "file":
                total += _load_file_field(body.strip(), grid, base)
            else:
                raise ConfigError(f"unknown {kind} term {term!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed {kind} term {term!r}: {exc}") from None
    if not np.all(np.isfinite(total)):
        raise ConfigError(f"{kind} {spec!r} is not finite on the grid")
    if kind == "init" and np.any(total < 0):
        raise ConfigError(f"initial datum {spec!r} takes negative values")
    return total


def build_run_config(values: dict, family: str | None = None, base: Path | None = None) -> RunConfig:
    """Turn parsed key/values into a validated :class:`RunConfig`."""
    fam_key = values.get("family")
    fam = FAMILY_ALIASES.get((family or fam_key or "").lower())
    if fam is None:
        raise ConfigError(f"unknown or missing family {family or fam_key!r}")
    if family and fam_key and FAMILY_ALIASES.get(fam_key.lower()) != fam:
        raise ConfigError(f"config declares family {fam_key!r} but the command runs {family!r}")
    for key in ("grid.n", "h", "T") + REQUIRED_INIT[fam]:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    try:
        n = _tuple(values["grid.n"], int)
        lengths = _tuple(values["grid.box"]) if "grid.box" in values else ()
        origin = _tuple(values["grid.origin"]) if "grid.origin" in values else ()
        grid = Grid(n, lengths, origin)
        wkw = {k.split(".", 1)[1]: v for k, v in values.items()
               if k.startswith("wstep.") and k != "wstep.warm_start"}
        wcfg = ALG2Config(**wkw)
        kw = dict(family=fam, n=n, lengths=lengths, origin=origin, h=values["h"], T=values["T"],
                  wstep=wcfg, warm_start=values.get("wstep.warm_start", True),
                  seed=values.get("seed", 42))
        if "frstep.tol" in values:
            kw["fr_tol"] = values["frstep.tol"]
        if "frstep.max_newton" in values:
            kw["fr_max_newton"] = values["frstep.max_newton"]
        if fam == "scalar":
            kw["diffusion"] = values.get("diffusion.nonlinearity", "entropy")
            kw["m1"] = values.get("diffusion.m")
            kw["reaction"] = values.get("reaction.nonlinearity", "zero")
            kw["m2"] = values.get("reaction.m")
            kw["scale2"] = values.get("reaction.scale", 1.0)
            kw["V1"] = field_from_spec(values.get("diffusion.potential", "zero"), grid, "potential", base)
            kw["V2"] = field_from_spec(values.get("reaction.potential", "zero"), grid, "potential", base)
            if kw["diffusion"] == "power" and kw["m1"] is None:
                raise ConfigError("diffusion.m is required for power diffusion")
            if kw["reaction"] == "power" and kw["m2"] is None:
                raise ConfigError("reaction.m is required for a power reaction")
        for key in ("A", "B", "C", "m", "c1", "c2"):
            if key in values:
                kw[key] = values[key]
        if "kernel.signs" in values:
            kw["kernel_signs"] = _tuple(values["kernel.signs"], float, ",")
        model = ModelConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    names = {"init": "rho", "init2": "rho2", "init_c": "c"}
    initial = {names[k]: field_from_spec(values[k], grid, "init", base) for k in REQUIRED_INIT[fam]}
    if fam in ("heleshaw", "nutrient") and initial["rho"].max() > 1:
        raise ConfigError("tumour models need an initial density <= 1")
    rc = RunConfig(model, initial, dict(values), every=values.get("output.every", 1),
                   pgm=values.get("output.pgm", True), half=values.get("output.half", True),
                   vmax=values.get("output.vmax"))
    if rc.every < 1:
        raise ConfigError("output.every must be >= 1")
    if fam in ("heleshaw", "nutrient") and model.m * model.h > 0.5:
        rc.warnings.append(f"m*h = {model.m * model.h:g} > 0.5; the scheme is designed for m*h -> 0")
    return rc


def load_config(path, family: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_run_config(parse_config(text, str(path)), family, base=path.parent)
