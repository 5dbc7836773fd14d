"""Scenario configuration files.

One YAML document with four sections::

    model:                       # required
      phi: [[1, 1], [0, 1]]      # constant matrix
      h:   [[1, 0]]
      q:   {csv: q.csv}          # or a CSV file next to the config
      r:   [[[1.0]], [[2.0]]]    # or one matrix per time step
    init:
      x0_mean: [0, 0]
      p0: [[1, 0], [0, 1]]
    run:
      horizon: 50                # K; trajectories hold K+1 samples
      master_seed: 1
      monte_carlo_runs: 500
      filter_variant: both       # projection | bayes | both
      covariance_form: standard  # standard | joseph
      confidence: 0.99
      r_scale: 1.0               # filter-side multiplier on R
      verify_instances: 100
    output:
      path: out

Every validation error names the offending field and, where known, its line.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .core_linalg import LinAlgError, as_vector, spd_check
from .simulator import ScheduleError, StateSpaceModel

VARIANTS = ("projection", "bayes", "both")
COVARIANCE_FORMS = ("standard", "joseph")
RUN_DEFAULTS = {
    "horizon": 50,
    "master_seed": 0,
    "monte_carlo_runs": 100,
    "filter_variant": "both",
    "covariance_form": "standard",
    "confidence": 0.99,
    "r_scale": 1.0,
    "verify_instances": 100,
}


class ConfigError(ValueError):
    def __init__(self, field: str, message: str, line: int | None = None, source: str | None = None):
        self.field = field
        self.line = line
        where = f"{source}:{line}: " if source and line else (f"{source}: " if source else "")
        super().__init__(f"{where}{field}: {message}")


@dataclass(frozen=True)
class ScenarioConfig:
    model: StateSpaceModel
    x0_mean: np.ndarray
    P0: np.ndarray
    horizon: int
    master_seed: int
    monte_carlo_runs: int
    filter_variant: str
    covariance_form: str
    output_path: Path
    confidence: float = 0.99
    r_scale: float = 1.0
    verify_instances: int = 100
    digest: str = ""

    @property
    def joseph(self) -> bool:
        return self.covariance_form == "joseph"

    def filter_model(self) -> StateSpaceModel:
        """Model the filter believes in: ``R`` multiplied by ``r_scale``."""
        if self.r_scale == 1.0:
            return self.model
        r = self.model.r
        scaled = tuple(self.r_scale * M.matrix for M in r) if isinstance(r, tuple) else self.r_scale * r.matrix
        return StateSpaceModel(phi=self.model.phi, h=self.model.h, q=self.model.q, r=scaled)


def _line_index(node, prefix="") -> dict[str, int]:
    out = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            out.update(_line_index(value, path))
    return out


def read_yaml(path: Path) -> tuple[dict, dict[str, int]]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read: {exc.strerror}", source=str(path)) from None
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError("<syntax>", str(exc.problem), line, str(path)) from None
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping at top level", source=str(path))
    return data, _line_index(root)


def load_matrix(value, base: Path, field: str, err) -> np.ndarray:
    """Inline nested list (2-D or per-step 3-D) or ``{csv: path}``."""
    if isinstance(value, dict):
        if set(value) != {"csv"}:
            raise err(field, "matrix reference must be {csv: <path>}")
        p = base / value["csv"]
        try:
            return np.loadtxt(p, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            raise err(field, f"cannot read CSV {p}: {exc}") from None
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise err(field, "expected a numeric matrix") from None
    if arr.ndim not in (2, 3):
        raise err(field, f"expected a matrix (nested list), got {arr.ndim}-D data")
    return arr


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    data, lines = read_yaml(path)

    def err(field, message):
        return ConfigError(field, message, lines.get(field), str(path))

    for section in data:
        if section not in ("model", "init", "run", "output"):
            raise err(section, "unknown section")
    model_sec = data.get("model")
    if not isinstance(model_sec, dict):
        raise err("model", "missing or not a mapping")
    arrays = {}
    for key in ("phi", "h", "q", "r"):
        if key not in model_sec:
            raise err(f"model.{key}", "missing")
        arrays[key] = load_matrix(model_sec[key], path.parent, f"model.{key}", err)
    for key in model_sec:
        if key not in arrays:
            raise err(f"model.{key}", "unknown field")
    try:
        model = StateSpaceModel(**arrays)
    except (LinAlgError, ScheduleError) as exc:
        msg = str(exc)
        field = next((f"model.{k}" for k in ("phi", "h", "q", "r") if msg.startswith(k)), "model")
        raise err(field, msg) from None

    init = data.get("init") or {}
    try:
        x0 = as_vector(init.get("x0_mean", [0.0] * model.n), "x0_mean")
    except (LinAlgError, TypeError, ValueError) as exc:
        raise err("init.x0_mean", str(exc)) from None
    if x0.shape[0] != model.n:
        raise err("init.x0_mean", f"length {x0.shape[0]} does not match state dimension {model.n}")
    p0_raw = init.get("p0", np.eye(model.n).tolist())
    P0 = load_matrix(p0_raw, path.parent, "init.p0", err)
    if P0.shape != (model.n, model.n):
        raise err("init.p0", f"shape {P0.shape} does not match state dimension {model.n}")
    try:
        spd_check(P0, psd=True)
    except LinAlgError as exc:
        raise err("init.p0", str(exc)) from None

    run = dict(RUN_DEFAULTS)
    for key, value in (data.get("run") or {}).items():
        if key not in RUN_DEFAULTS:
            raise err(f"run.{key}", "unknown field")
        run[key] = value
    for key in ("horizon", "master_seed", "monte_carlo_runs", "verify_instances"):
        if not isinstance(run[key], int) or isinstance(run[key], bool):
            raise err(f"run.{key}", "expected an integer")
    if run["horizon"] < 1:
        raise err("run.horizon", "must be >= 1")
    if run["monte_carlo_runs"] < 1:
        raise err("run.monte_carlo_runs", "must be >= 1")
    if not 0 <= run["master_seed"] < 2 ** 64:
        raise err("run.master_seed", "must be an unsigned 64-bit integer")
    if run["filter_variant"] not in VARIANTS:
        raise err("run.filter_variant", f"must be one of {', '.join(VARIANTS)}")
    if run["covariance_form"] not in COVARIANCE_FORMS:
        raise err("run.covariance_form", f"must be one of {', '.join(COVARIANCE_FORMS)}")
    for key in ("confidence", "r_scale"):
        if not isinstance(run[key], (int, float)) or isinstance(run[key], bool):
            raise err(f"run.{key}", "expected a number")
    if not 0.0 < run["confidence"] < 1.0:
        raise err("run.confidence", "must lie strictly between 0 and 1")
    if run["r_scale"] <= 0:
        raise err("run.r_scale", "must be positive")
    try:
        model.check_horizon(run["horizon"], filtering=True)
    except ScheduleError as exc:
        raise err("model", str(exc)) from None

    out = (data.get("output") or {}).get("path", "out")
    return ScenarioConfig(
        model=model, x0_mean=x0, P0=P0, horizon=run["horizon"], master_seed=run["master_seed"],
        monte_carlo_runs=run["monte_carlo_runs"], filter_variant=run["filter_variant"],
        covariance_form=run["covariance_form"], output_path=Path(out),
        confidence=float(run["confidence"]), r_scale=float(run["r_scale"]),
        verify_instances=run["verify_instances"], digest=hashlib.sha256(path.read_bytes()).hexdigest(),
    )

