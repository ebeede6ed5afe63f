"""Experiment files: TOML parsing, defaults, sweep expansion and the generated template."""

from __future__ import annotations

import itertools
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ensemble import BACKENDS, EnsembleConfig, default_realizations
from .errors import ConfigError, InvalidArgument
from .model import ChainConfig

OUTPUT_DIR_ENV = "THERMFRONT_OUTPUT_DIR"

TEMPLATE = """\
# thermfront experiment file (TOML).  Every key is optional; the values shown
# are the defaults.  Keys under [chain] marked "sweep" accept a number or a
# list, and the run covers their Cartesian product.

[chain]
L = [8]                   # sweep: even number of sites
W = [5.0]                 # sweep: fields drawn uniformly from [-W, W]
Delta = [1.0]             # sweep: anisotropy (0 = free fermions)
gamma = [1.0]             # sweep: boundary dephasing strength
gamma1 = [0.0]            # sweep: nonconserving boundary noise strength (0 = off)
J = 1.0                   # hopping, sets the energy unit
nonconserving = "pair"    # "pair" (S1+S2+ + h.c.) or "x" (S1^x)

[ensemble]
backend = "ed"            # ed | gaussian | bdg | oracle
N_r = 0                   # realizations per sweep point; 0 = backend/L default
master_seed = 0           # unsigned 64-bit
tau = 0.05                # Trotter step
t_final = 100.0
points_per_decade = 60    # log-spaced record grid (at most 60)
refine = 0                # run at tau / 2**refine on the refined noise path
ed_mode = "auto"          # auto | dense | chebyshev | krylov

[analysis]
r_th = 0.17               # relative-imbalance threshold
n_sigma = 1.0             # crossing rule: Ir - n_sigma * err >= r_th
fit_window = [10.0, 0.0]  # [t_lo, t_hi] for the h vs ln t fit; t_hi = 0 means t_final
resample_per_decade = 20  # log-uniform resampling before the fit; 0 disables

[output]
dir = "results"           # overridden by $THERMFRONT_OUTPUT_DIR, then by --output-dir
"""

_SWEEP_KEYS = ("L", "W", "Delta", "gamma", "gamma1")
_CHAIN_SCALARS = {"J": 1.0, "nonconserving": "pair"}
_ENSEMBLE_DEFAULTS = {"backend": "ed", "N_r": 0, "master_seed": 0, "tau": 0.05,
                      "t_final": 100.0, "points_per_decade": 60, "refine": 0, "ed_mode": "auto"}
_ANALYSIS_DEFAULTS = {"r_th": 0.17, "n_sigma": 1.0, "fit_window": [10.0, 0.0],
                      "resample_per_decade": 20}
_SWEEP_DEFAULTS = {"L": [8], "W": [5.0], "Delta": [1.0], "gamma": [1.0], "gamma1": [0.0]}


@dataclass(frozen=True)
class SweepPoint:
    chain: ChainConfig
    ensemble: EnsembleConfig

    @property
    def label(self) -> str:
        c = self.chain
        return f"L{c.L}_W{c.W:g}_D{c.Delta:g}_g{c.gamma:g}_g1{c.gamma1:g}"


@dataclass
class ExperimentSpec:
    sweep: dict
    chain: dict
    ensemble: dict
    analysis: dict
    output_dir: str
    source: str | None = None
    points: list = field(default_factory=list)

    def expand(self) -> list:
        """Every sweep point as validated configs, in a fixed order."""
        pts = []
        keys = _SWEEP_KEYS
        for combo in itertools.product(*(self.sweep[k] for k in keys)):
            vals = dict(zip(keys, combo))
            try:
                chain = ChainConfig(L=int(vals["L"]), J=float(self.chain["J"]),
                                    Delta=float(vals["Delta"]), W=float(vals["W"]),
                                    gamma=float(vals["gamma"]), gamma1=float(vals["gamma1"]),
                                    nonconserving=self.chain["nonconserving"])
                ens = dict(self.ensemble)
                if not ens["N_r"]:
                    ens["N_r"] = default_realizations(ens["backend"], chain.L)
                ensemble = EnsembleConfig(
                    N_r=int(ens["N_r"]), master_seed=int(ens["master_seed"]),
                    backend=ens["backend"], tau=float(ens["tau"]), t_final=float(ens["t_final"]),
                    points_per_decade=int(ens["points_per_decade"]), refine=int(ens["refine"]),
                    ed_mode=ens["ed_mode"])
            except InvalidArgument as exc:
                raise ConfigError(f"sweep point {vals}: {exc}") from exc
            pts.append(SweepPoint(chain, ensemble))
        return pts

    def fit_window(self, t_final: float):
        lo, hi = self.analysis["fit_window"]
        return float(lo), float(hi) if hi else float(t_final)


def _as_list(name, v):
    vals = v if isinstance(v, list) else [v]
    if not vals:
        raise ConfigError(f"sweep axis {name} is empty")
    for x in vals:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"sweep axis {name} must hold numbers, got {x!r}")
    return vals


def _section(data, name, defaults):
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(sec) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    out = dict(defaults)
    out.update(sec)
    return out


def parse_spec(data: dict, source: str | None = None) -> ExperimentSpec:
    unknown = set(data) - {"chain", "ensemble", "analysis", "output"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    chain = _section(data, "chain", {**_SWEEP_DEFAULTS, **_CHAIN_SCALARS})
    sweep = {k: _as_list(k, chain.pop(k)) for k in _SWEEP_KEYS}
    ensemble = _section(data, "ensemble", _ENSEMBLE_DEFAULTS)
    if ensemble["backend"] not in BACKENDS:
        raise ConfigError(f"backend must be one of {BACKENDS}")
    analysis = _section(data, "analysis", _ANALYSIS_DEFAULTS)
    win = analysis["fit_window"]
    if not (isinstance(win, list) and len(win) == 2):
        raise ConfigError("fit_window must be [t_lo, t_hi]")
    output = _section(data, "output", {"dir": "results"})
    spec = ExperimentSpec(sweep, chain, ensemble, analysis, str(output["dir"]), source)
    spec.points = spec.expand()
    return spec


def load_spec(path) -> ExperimentSpec:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_spec(data, str(path))


def default_spec() -> ExperimentSpec:
    return parse_spec(tomllib.loads(TEMPLATE))


def resolve_output_dir(spec: ExperimentSpec, flag: str | None = None) -> str:
    if flag:
        return flag
    return os.environ.get(OUTPUT_DIR_ENV) or spec.output_dir
