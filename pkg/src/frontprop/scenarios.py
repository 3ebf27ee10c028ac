"""Scenario files: YAML description of a datum, a velocity law and the checks to run.

Schema (all sections required unless marked optional)::

    name: S2
    T: 0.5
    grid: {lo: -2.2, hi: 2.2, h: 0.02, dim: 2}
    datum: {shape: disk, radius: 1.0, floor: -1.0, profile: linear}
    model: {kind: dislocation, kernel: "disk(1, 0.25)", c1: 1.0}
    record: 0.05                   # optional, spacing of recorded slices
    picard: {tol_chi: 1.0e-3, max_iter: 20, seed: zero}   # optional
    checks:                        # names, or one-key mappings name -> params
      - finite_speed
      - band_estimate: {a: -0.1, b: 0.1, tau: 0.5}

``datum.shape`` is ``disk`` (an interval in 1D) or ``square``; ``profile`` is
``linear`` for clip(radius - |x|, floor, -floor) or ``sdf`` for the truncated
signed distance of the rasterised shape.  ``model.kind`` is ``constant``
(``value``), ``dislocation`` (``kernel``, ``c1``) or ``fn`` (``alpha``,
``gplus``, ``gminus``, ``v0``, optional ``method``).
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .checks import CHECKS
from .errors import ScenarioError
from .grid import Grid, InitialDatum, build_truncated_sdf, datum_from_profile
from .velocity import DislocationModel, FnModel, disk_kernel, parse_call, scalar_function
from .weak import ConstantModel

BUILTIN = ("S1", "S2", "S3")
MODEL_KINDS = ("constant", "dislocation", "fn")


@dataclass(frozen=True)
class Scenario:
    name: str
    T: float
    grid: dict
    datum: dict
    model: dict
    checks: list
    record: float = 0.05
    picard: dict = field(default_factory=dict)
    out: str | None = None
    source: str | None = None

    # -- construction -------------------------------------------------------

    def build_grid(self) -> Grid:
        g = self.grid
        return Grid.box(float(g["lo"]), float(g["hi"]), float(g["h"]), int(g.get("dim", 2)))

    def build_datum(self, grid: Grid | None = None) -> InitialDatum:
        grid = grid or self.build_grid()
        d = self.datum
        floor = float(d.get("floor", -1.0))
        radius = float(d.get("radius", 1.0))
        center = np.asarray(d.get("center", [0.0] * grid.dim), dtype=float)
        X = grid.mesh()
        rel = [x - c for x, c in zip(X, center)]
        shape = d.get("shape", "disk")
        if shape == "disk":
            dist = np.sqrt(sum(r * r for r in rel))
        elif shape == "square":
            dist = np.max(np.abs(np.stack(rel)), axis=0)
        else:
            raise ScenarioError(f"unknown datum shape {shape!r}")
        profile = d.get("profile", "linear")
        if profile == "linear":
            return datum_from_profile(np.clip(radius - dist, floor, -floor), grid, floor)
        if profile == "sdf":
            return build_truncated_sdf(dist <= radius, floor, grid)
        raise ScenarioError(f"unknown datum profile {profile!r}")

    def build_model(self, grid: Grid | None = None, seed: int = 0):
        grid = grid or self.build_grid()
        m = self.model
        kind = m.get("kind")
        try:
            if kind == "constant":
                return ConstantModel(float(m.get("value", 1.0)))
            if kind == "dislocation":
                name, args = parse_call(m.get("kernel", "disk(1, 0.25)"))
                if name != "disk" or len(args) != 2:
                    raise ScenarioError(f"unknown kernel {m.get('kernel')!r}; expected disk(radius, scale)")
                kernel = disk_kernel(args[0], args[1], grid.h, grid.dim)
                return DislocationModel(grid, kernel, float(m.get("c1", 1.0)), T=self.T)
            if kind == "fn":
                return FnModel(grid, scalar_function(m["alpha"]), scalar_function(m.get("gplus", 1.0)),
                               scalar_function(m.get("gminus", 0.0)), m.get("v0", 0.0), T=self.T,
                               method=m.get("method", "exponential"), seed=seed)
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"bad model section: {exc}") from exc
        except ValueError as exc:
            if type(exc) is ValueError:
                raise ScenarioError(str(exc)) from exc
            raise
        raise ScenarioError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")

    def record_times(self) -> np.ndarray:
        n = max(1, int(round(self.T / self.record)))
        return np.linspace(0.0, self.T, n + 1)

    def check_list(self) -> list:
        """Normalised ``[(name, params), ...]``."""
        out = []
        for item in self.checks:
            if isinstance(item, str):
                out.append((item, {}))
            elif isinstance(item, dict) and len(item) == 1:
                (name, params), = item.items()
                out.append((name, dict(params or {})))
            else:
                raise ScenarioError(f"bad check entry {item!r}")
        return out

    # -- variants -----------------------------------------------------------

    def with_resolution(self, h: float) -> "Scenario":
        return replace(self, grid={**self.grid, "h": float(h)})

    def with_checks(self, checks) -> "Scenario":
        return replace(self, checks=list(checks))

    def with_model(self, **changes) -> "Scenario":
        return replace(self, model={**self.model, **changes})


def _require(mapping, key, where):
    if key not in mapping:
        raise ScenarioError(f"missing {key!r} in {where}")
    return mapping[key]


def scenario_from_mapping(data, source: str | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    data = copy.deepcopy(data)
    grid = _require(data, "grid", "scenario")
    for key in ("lo", "hi", "h"):
        _require(grid, key, "grid")
    try:
        T = float(_require(data, "T", "scenario"))
        h = float(grid["h"])
        record = float(data.get("record", 0.05))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"non-numeric field: {exc}") from exc
    if not (T > 0 and math.isfinite(T)) or not h > 0 or not record > 0:
        raise ScenarioError("T, grid.h and record must be positive")
    model = _require(data, "model", "scenario")
    if not isinstance(model, dict) or model.get("kind") not in MODEL_KINDS:
        raise ScenarioError(f"model.kind must be one of {MODEL_KINDS}")
    checks = data.get("checks", []) or []
    if not isinstance(checks, list):
        raise ScenarioError("checks must be a list")
    sc = Scenario(name=str(data.get("name", "scenario")), T=T, grid=dict(grid),
                  datum=dict(data.get("datum", {}) or {}), model=dict(model), checks=checks,
                  record=record, picard=dict(data.get("picard", {}) or {}), out=data.get("out"),
                  source=source)
    for name, _ in sc.check_list():
        if name not in CHECKS:
            raise ScenarioError(f"unknown check {name!r}")
    return sc


def load_scenario(path) -> Scenario:
    """Parse a YAML scenario file (or ``builtin:S1`` etc.)."""
    text_path = str(path)
    if text_path.startswith("builtin:"):
        return builtin_scenario(text_path.split(":", 1)[1])
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_mapping(data, str(path))


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN:
        raise ScenarioError(f"unknown built-in scenario {name!r}; have {BUILTIN}")
    text = resources.files("frontprop").joinpath("scenarios", f"{name.lower()}.yaml").read_text("utf-8")
    return scenario_from_mapping(yaml.safe_load(text), f"builtin:{name}")


def load_suite(path) -> list:
    """A suite file lists scenario files (relative to the suite) or ``builtin:`` names."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot read suite {path}: {exc}") from exc
    entries = data.get("scenarios", []) if isinstance(data, dict) else data
    if entries is None:
        entries = []
    if not isinstance(entries, list):
        raise ScenarioError("suite must list scenarios")
    base = Path(path).parent
    out = []
    for e in entries:
        e = str(e)
        out.append(e if e.startswith("builtin:") else str(base / e))
    return out
