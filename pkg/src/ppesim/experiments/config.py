"""Experiment configuration: flat key = value text with section headers.

Unknown sections or keys are hard errors; every geometry combination must
respect the chain-length cap; realization counts must be positive.
"""
from __future__ import annotations

import configparser
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..states import MAX_SITES, ProductStateSpec

FAMILIES = ("ergodic_ki", "mbl_ki", "sdki", "lbit_z", "lbit_x")
INITIAL_STATES = ("plus", "haar", "polarized", "explicit")

_SCHEMA = {
    "model": {"family", "gamma", "xi", "max_order"},
    "geometry": {"l_r", "l_e", "l_s"},
    "time": {"grid", "t_min", "t_max", "step", "per_decade"},
    "run": {"realizations", "initial_state", "amplitudes", "basis", "seed", "out", "ghs"},
    "pop": {"bins", "z_r"},
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    family: str
    l_r: int
    l_e_list: list
    l_s_list: list
    time_grid: np.ndarray
    realizations: int
    initial_state: str = "haar"
    explicit_amplitudes: ProductStateSpec | None = None
    basis: str = "z"
    seed: int = 0
    out_dir: str = "."
    ghs: bool = False
    gamma: float = 0.15
    xi: float = 0.5
    max_order: int | None = None
    pop_bins: int = 64
    pop_z_r: list = field(default_factory=list)  # empty means all
    grid_spec: str = "linear:0:0:1"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if self.l_r < 1 or not self.l_e_list or not self.l_s_list:
            raise ConfigError("geometry lists must be non-empty and l_r >= 1")
        for l_e in self.l_e_list:
            for l_s in self.l_s_list:
                total = self.l_r + l_e + l_s
                if l_e < 0 or l_s < 1 or total > MAX_SITES:
                    raise ConfigError(f"geometry ({self.l_r},{l_e},{l_s}) invalid or over cap")
        if self.basis not in ("z", "x"):
            raise ConfigError(f"basis must be z or x, got {self.basis!r}")
        if self.initial_state not in INITIAL_STATES:
            raise ConfigError(f"unknown initial_state {self.initial_state!r}")
        if self.initial_state == "explicit" and self.explicit_amplitudes is None:
            raise ConfigError("explicit initial state needs an amplitudes key")
        if self.family in ("ergodic_ki", "mbl_ki", "sdki"):
            if not np.allclose(self.time_grid, np.round(self.time_grid)):
                raise ConfigError("Floquet families need integer time grids")

    @property
    def grid_id(self) -> int:
        """Stable identifier of the time grid, mixed into child seeds."""
        return zlib.crc32(self.grid_spec.encode("ascii"))


def _parse_int_list(text: str) -> list:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _parse_amplitudes(text: str) -> ProductStateSpec:
    sites = []
    for chunk in text.split(";"):
        pair = chunk.replace(" ", "").split(",")
        if len(pair) != 2:
            raise ConfigError(f"bad amplitude pair {chunk!r}")
        sites.append([complex(pair[0]), complex(pair[1])])
    try:
        return ProductStateSpec(sites)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _time_grid(sec) -> tuple:
    kind = sec.get("grid", "linear")
    t_min = float(sec.get("t_min", 1))
    t_max = float(sec.get("t_max", 10))
    if t_max < t_min:
        raise ConfigError("t_max must be >= t_min")
    if kind == "linear":
        step = float(sec.get("step", 1))
        if step <= 0:
            raise ConfigError("step must be positive")
        grid = np.arange(t_min, t_max + 0.5 * step, step)
        spec = f"linear:{t_min!r}:{t_max!r}:{step!r}"
    elif kind == "log":
        per_decade = int(sec.get("per_decade", 16))
        if per_decade < 1 or t_min <= 0:
            raise ConfigError("log grids need per_decade >= 1 and t_min > 0")
        decades = np.log10(t_max / t_min)
        n = int(round(decades * per_decade)) + 1
        grid = np.logspace(np.log10(t_min), np.log10(t_max), n)
        spec = f"log:{t_min!r}:{t_max!r}:{per_decade}"
    else:
        raise ConfigError(f"unknown grid kind {kind!r}")
    return grid, spec


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc

    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    if "model" not in cp or "family" not in cp["model"]:
        raise ConfigError("missing [model] family")
    model = cp["model"]
    geo = cp["geometry"] if "geometry" in cp else {}
    run = cp["run"] if "run" in cp else {}
    pop = cp["pop"] if "pop" in cp else {}
    grid, grid_spec = _time_grid(cp["time"] if "time" in cp else {})

    amplitudes = None
    if run.get("initial_state", "haar") == "explicit":
        if "amplitudes" not in run:
            raise ConfigError("explicit initial state needs an amplitudes key")
        amplitudes = _parse_amplitudes(run["amplitudes"])

    max_order = model.get("max_order")
    try:
        return ExperimentConfig(
            family=model["family"].strip(),
            l_r=int(geo.get("l_r", 1)),
            l_e_list=_parse_int_list(geo.get("l_e", "1")),
            l_s_list=_parse_int_list(geo.get("l_s", "1")),
            time_grid=grid,
            grid_spec=grid_spec,
            realizations=int(run.get("realizations", 1)),
            initial_state=run.get("initial_state", "haar").strip(),
            explicit_amplitudes=amplitudes,
            basis=run.get("basis", "z").strip(),
            seed=int(run.get("seed", 0)),
            out_dir=run.get("out", "."),
            ghs=run.get("ghs", "false").strip().lower() in ("1", "true", "yes"),
            gamma=float(model.get("gamma", 0.15)),
            xi=float(model.get("xi", 0.5)),
            max_order=None if max_order in (None, "", "full") else int(max_order),
            pop_bins=int(pop.get("bins", 64)),
            pop_z_r=_parse_int_list(pop.get("z_r", "")) if pop.get("z_r", "") not in ("", "all") else [],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
