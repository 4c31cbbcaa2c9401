"""Run configuration (TOML) and scenario construction.

Two scenarios: "kahler" (the standard flat integrable structure) and
"perturbed" (J from the pointwise polar decomposition against a random
band-limited metric delta + eps*B, which makes the Nijenhuis tensor
O(eps)).  F is a sum of sine products given as (multi-index, amplitude)
entries, normalized so that int e^F w^2 = int w^2.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ScenarioInvalid
from .fields import Metric, ScalarField, TwoForm, standard_omega
from .grid import Grid4, random_bandlimited
from .solver import SolverConfig, normalize_f
from .structures import AKTriple, compatible_j_from_metric, standard_triple


@dataclass
class FMode:
    mode: tuple[int, int, int, int]
    amplitude: float
    phase: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


@dataclass
class OutputConfig:
    directory: str = "akcy-out"
    dump_fields: bool = False
    log_level: str = "info"


@dataclass
class RunConfig:
    n: tuple[int, int, int, int] = (16, 16, 16, 16)
    periods: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    scenario: str = "kahler"
    epsilon: float = 0.0
    perturbation_modes: int = 1
    f_modes: list = dc_field(default_factory=list)
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    outputs: OutputConfig = dc_field(default_factory=OutputConfig)
    seed: int = 0
    uniqueness_seeds: tuple[int, int] | None = None

    def grid(self) -> Grid4:
        return Grid4(self.n, self.periods)

    def validate(self):
        if self.scenario not in ("kahler", "perturbed"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        for fm in self.f_modes:
            for mk, nk in zip(fm.mode, self.n):
                if abs(mk) >= nk // 2:
                    raise ConfigError(
                        f"F mode {fm.mode} not band-limited below Nyquist for n={self.n}")
        return self


def _mode_entry(d: dict) -> FMode:
    try:
        mode = tuple(int(v) for v in d["mode"])
        amp = float(d["amplitude"])
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad F mode entry {d!r}: {err}") from err
    phase = tuple(float(v) for v in d.get("phase", (0.0, 0.0, 0.0, 0.0)))
    if len(mode) != 4 or len(phase) != 4:
        raise ConfigError(f"F mode entry {d!r} needs 4 indices and 4 phases")
    return FMode(mode=mode, amplitude=amp, phase=phase)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err

    cfg = RunConfig()
    try:
        grid = doc.get("grid", {})
        cfg.n = tuple(int(v) for v in grid.get("n", cfg.n))
        cfg.periods = tuple(float(v) for v in grid.get("periods", cfg.periods))
        scen = doc.get("scenario", {})
        cfg.scenario = scen.get("kind", cfg.scenario)
        cfg.epsilon = float(scen.get("epsilon", cfg.epsilon))
        cfg.perturbation_modes = int(scen.get("perturbation_modes",
                                              cfg.perturbation_modes))
        cfg.seed = int(scen.get("seed", cfg.seed))
        cfg.f_modes = [_mode_entry(d) for d in scen.get("f_modes", [])]
        sol = doc.get("solver", {})
        kwargs = {}
        for key in ("newton_tol", "newton_max_iter", "max_backtracks", "dt_init",
                    "dt_min", "dt_max", "p", "claim_threshold", "class_mode",
                    "inner_tol_floor", "inner_max_iter", "basis_rq_tol"):
            if key in sol:
                kwargs[key] = sol[key]
        cfg.solver = SolverConfig(**kwargs)
        out = doc.get("outputs", {})
        cfg.outputs = OutputConfig(
            directory=out.get("directory", "akcy-out"),
            dump_fields=bool(out.get("dump_fields", False)),
            log_level=out.get("log_level", "info"))
        uniq = doc.get("uniqueness", {})
        if uniq.get("enabled", False):
            seeds = uniq.get("seeds", [1, 2])
            cfg.uniqueness_seeds = (int(seeds[0]), int(seeds[1]))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad config value: {err}") from err
    return cfg.validate()


def f_from_modes(grid: Grid4, modes: list) -> np.ndarray:
    """Sum of amplitude * prod_k sin(2 pi m_k x^k / L_k + phase_k) terms."""
    x = grid.coords()
    out = np.zeros(grid.n)
    for fm in modes:
        term = np.full(grid.n, fm.amplitude)
        for k in range(4):
            if fm.mode[k] != 0:
                term = term * np.sin(2.0 * np.pi * fm.mode[k] * x[k]
                                     / grid.periods[k] + fm.phase[k])
        out += term
    return out


def perturbed_metric(grid: Grid4, epsilon: float, seed: int,
                     max_mode: int = 1) -> Metric:
    rng = np.random.default_rng(seed)
    b = random_bandlimited(grid, rng, max_mode=max_mode, shape=(4, 4))
    b = 0.5 * (b + np.swapaxes(b, -1, -2))
    b /= max(np.max(np.abs(b)), 1e-300)
    h = np.eye(4) + epsilon * b
    lo = float(np.min(np.linalg.eigvalsh(h.reshape(-1, 4, 4))))
    if lo <= 0:
        raise ScenarioInvalid(f"epsilon={epsilon} too large: h eigenvalue {lo:.3e}")
    return Metric(grid, h, check_spd=False)


def build_scenario(config: RunConfig) -> tuple[AKTriple, ScalarField]:
    """Instantiate (triple, normalized F); all invariants verified."""
    grid = config.grid()
    if config.scenario == "kahler":
        triple = standard_triple(grid)
    else:
        omega = standard_omega(grid)
        h = perturbed_metric(grid, config.epsilon, config.seed,
                             config.perturbation_modes)
        try:
            j = compatible_j_from_metric(omega, h)
            triple = AKTriple.from_pair(omega, j)
        except Exception as err:
            raise ScenarioInvalid(f"perturbed structure invalid: {err}") from err
    try:
        triple.validate()
    except Exception as err:
        raise ScenarioInvalid(f"triple invariant violated: {err}") from err
    f_raw = f_from_modes(grid, config.f_modes)
    f = normalize_f(grid, f_raw, triple.omega)
    rho = triple.vol_density
    from . import calculus as ca
    drift = abs(ca.integrate_density(grid, np.exp(f) * rho)
                - ca.integrate_density(grid, rho))
    if drift > 1e-12 * abs(ca.integrate_density(grid, rho)):
        raise ScenarioInvalid(f"F normalization drift {drift:.3e}")
    return triple, ScalarField(grid, f)
