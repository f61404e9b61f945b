"""Experiment orchestration: drive a reservoir with a task series, train, score, sweep, report.

Readout simulation is separated from scoring. A :class:`ReadoutRun` depends
only on the dynamics (reservoir, integrator, input sequence), so runs that
differ only in prediction horizon, regression mode or hidden-atom count share
one simulation through an optional cache.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    DynamicsError,
    EvolutionConfig,
    LindbladModel,
    ReservoirParams,
    check_density_matrix,
    evolve_interval,
    ground_state,
    liouvillian_gap,
    top_fock_population,
)
from .esn import DEFAULT_SPECTRAL_CAP, WEIGHT_DISTRIBUTION, ensemble_nrmse, init_esn, network_seeds, run_esn
from .features import build_features, feature_names
from .operators import observable_names
from .regression import DEFAULT_RIDGE, nrmse, predict, train_ridge
from .tasks import (
    MackeyGlassConfig,
    SineSquareConfig,
    TaskSeries,
    mackey_glass_series,
    save_series,
    sine_square_input,
    zone_slices,
)

__all__ = [
    "OMEGA_LADDER",
    "G_LADDER",
    "HIDDEN_OMEGA_POOL",
    "SWEEP_AXES",
    "ConfigError",
    "ExperimentConfig",
    "ReadoutRun",
    "ExperimentResult",
    "SweepResult",
    "build_series",
    "simulate_readouts",
    "run_quantum_experiment",
    "run_esn_experiment",
    "run_experiment",
    "sweep",
    "emit_report",
]

# per-atom detunings / couplings for 1..5 atoms (the other parameter is held fixed)
OMEGA_LADDER = {1: (20.0,), 2: (0.0, 40.0), 3: (0.0, 20.0, 40.0), 4: (0.0, 10.0, 30.0, 40.0),
                5: (0.0, 10.0, 20.0, 30.0, 40.0)}
G_LADDER = {1: (30.0,), 2: (10.0, 50.0), 3: (10.0, 30.0, 50.0), 4: (10.0, 20.0, 40.0, 50.0),
            5: (10.0, 20.0, 30.0, 40.0, 50.0)}
FIXED_G = 30.0
FIXED_OMEGA = 20.0
# Hidden atoms next to a measured (omega=20, g=30) atom take detunings from this
# pool in order, so 2 and 4 hidden atoms reproduce the 3- and 5-atom ladders.
HIDDEN_OMEGA_POOL = (0.0, 40.0, 10.0, 30.0)

SWEEP_AXES = ("n_atom", "delay", "kappa", "n_ss", "neurons", "hidden_atoms")
TASKS = ("mackey_glass", "sine_square")
RESERVOIRS = ("quantum", "esn")
LADDERS = ("omega", "g")


class ConfigError(ValueError):
    pass


def ladder_params(n_atom: int, ladder: str = "omega") -> tuple[tuple[float, ...], tuple[float, ...]]:
    """(omega_atoms, g) for ``n_atom`` atoms on the detuning or coupling ladder."""
    if ladder == "omega":
        if n_atom not in OMEGA_LADDER:
            raise ConfigError(f"no detuning ladder for {n_atom} atoms")
        return OMEGA_LADDER[n_atom], (FIXED_G,) * n_atom
    if ladder == "g":
        if n_atom not in G_LADDER:
            raise ConfigError(f"no coupling ladder for {n_atom} atoms")
        return (FIXED_OMEGA,) * n_atom, G_LADDER[n_atom]
    raise ConfigError(f"unknown ladder {ladder!r}; expected one of {LADDERS}")


def hidden_atom_params(n_hidden: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """One measured atom (omega=20, g=30) followed by ``n_hidden`` hidden atoms."""
    if not 0 <= n_hidden <= len(HIDDEN_OMEGA_POOL):
        raise ConfigError(f"hidden atom count must be in [0, {len(HIDDEN_OMEGA_POOL)}]")
    omegas = (FIXED_OMEGA,) + HIDDEN_OMEGA_POOL[:n_hidden]
    return omegas, (FIXED_G,) * (n_hidden + 1)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one experiment (plain values only)."""

    task: str = "mackey_glass"
    reservoir: str = "quantum"
    # reservoir physics
    omega_c: float = 40.0
    omega_atoms: tuple[float, ...] = (20.0,)
    g: tuple[float, ...] = (30.0,)
    epsilon: float = 20.0
    kappa: float = 10.0
    # numerics
    n_fock: int = 8
    substep: float | None = None
    max_substep: float = 0.01
    method: str = "auto"
    fock_tail_threshold: float = 0.05
    check_states: bool = True
    # readout
    regression: str = "linear"
    ridge: float = DEFAULT_RIDGE
    hidden_atoms: int = 0
    # tasks
    delay: int = 20
    zones: tuple[int, int, int] = (200, 2000, 1000)
    n_ss: int = 8
    omega_ss: float = 10.0
    waveforms: tuple[int, int, int] = (10, 50, 50)
    seed: int = 0
    # classical baseline
    esn_neurons: int | None = None
    esn_members: int = 1000
    spectral_cap: float = DEFAULT_SPECTRAL_CAP

    def __post_init__(self):
        for name in ("omega_atoms", "g"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        for name in ("zones", "waveforms"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.reservoir not in RESERVOIRS:
            raise ConfigError(f"unknown reservoir {self.reservoir!r}; expected one of {RESERVOIRS}")
        if self.regression not in ("linear", "polynomial"):
            raise ConfigError(f"unknown regression {self.regression!r}")
        if len(self.omega_atoms) != len(self.g) or not self.omega_atoms:
            raise ConfigError("omega_atoms and g must be non-empty and of equal length")
        if not 0 <= self.hidden_atoms < len(self.omega_atoms):
            raise ConfigError("need 0 <= hidden_atoms < number of atoms")
        if self.method not in ("auto", "chebyshev", "rk4", "steady"):
            raise ConfigError(f"unknown method {self.method!r}")
        fade, train, test = self.zones if self.task == "mackey_glass" else self.waveforms
        if train <= 0 or test <= 0:
            raise ConfigError("training and testing zones must be non-empty")
        if fade < 0:
            raise ConfigError("fading zone length must be non-negative")
        if self.delay < 0:
            raise ConfigError("delay must be non-negative")

    @property
    def n_atom(self) -> int:
        return len(self.omega_atoms)

    @property
    def measured_atoms(self) -> int:
        return self.n_atom - self.hidden_atoms

    @property
    def n_neurons(self) -> int:
        """Measured readouts: 2 cavity quadratures plus 2 per measured atom."""
        if self.reservoir == "esn":
            return self.esn_neurons if self.esn_neurons is not None else 2 * self.n_atom + 2
        return 2 * self.measured_atoms + 2

    @property
    def dt_sample(self) -> float:
        return 1.0 if self.task == "mackey_glass" else 2 * math.pi / (self.n_ss * self.omega_ss)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def reservoir_params(self) -> ReservoirParams:
        return ReservoirParams(self.omega_c, self.omega_atoms, self.g, self.epsilon, self.kappa)

    def evolution_config(self, method: str | None = None) -> EvolutionConfig:
        return EvolutionConfig(
            dt_sample=self.dt_sample,
            substep=self.substep,
            max_substep=self.max_substep,
            fock_tail_threshold=self.fock_tail_threshold,
            method=method or self.resolved_default_method(),
        )

    def resolved_default_method(self) -> str:
        """Propagator used when the steady-state shortcut does not apply."""
        if self.method != "auto":
            return self.method
        return "rk4" if self.substep is not None else "chebyshev"

    def dynamics_key(self) -> str:
        """Hash of everything that influences the density-matrix trajectory."""
        d = self.to_dict()
        for k in ("regression", "ridge", "hidden_atoms", "esn_neurons", "esn_members", "spectral_cap",
                  "reservoir", "check_states"):
            d.pop(k)
        if self.task == "mackey_glass":
            for k in ("delay", "n_ss", "omega_ss", "waveforms", "seed"):
                d.pop(k)
            d["n_steps"] = sum(self.zones)
        else:
            for k in ("delay", "zones"):
                d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def build_series(config: ExperimentConfig) -> TaskSeries:
    if config.task == "mackey_glass":
        return mackey_glass_series(MackeyGlassConfig(delay=config.delay, zones=config.zones))
    return sine_square_input(SineSquareConfig(config.waveforms, config.n_ss, config.omega_ss, config.seed))


# --- quantum readouts ---------------------------------------------------------


@dataclass
class ReadoutRun:
    """All 2N+2 observables sampled after each held-input interval."""

    readouts: np.ndarray
    names: tuple[str, ...]
    method: str
    substeps: tuple[int, int]  # min/max RK4 substeps per interval (0 for steady)
    diagnostics: dict
    state_digest: str
    seconds: float


def choose_method(model: LindbladModel, config: ExperimentConfig, f: np.ndarray) -> str:
    """Steady-state propagation only when every transient dies within one interval."""
    if config.method != "auto":
        return config.method
    fallback = config.resolved_default_method()
    evo = config.evolution_config("steady")
    rates = [model.params.kappa_c, *model.params.kappa_atoms]
    if min(rates) * evo.dt_sample < evo.steady_min_decay:
        return fallback
    gap = min(liouvillian_gap(model, float(v)) for v in (f.min(), f.max(), 0.0))
    return "steady" if gap * evo.dt_sample >= evo.steady_min_decay else fallback


def simulate_readouts(config: ExperimentConfig, f: np.ndarray, rho0: np.ndarray | None = None,
                      n_steps: int | None = None) -> ReadoutRun:
    """Evolve from ``rho0`` (default vacuum x ground) and sample every observable."""
    t0 = time.perf_counter()
    model = LindbladModel.build(config.reservoir_params(), n_fock=config.n_fock)
    f = np.asarray(f, dtype=float)[: n_steps if n_steps is not None else None]
    method = choose_method(model, config, f)
    evo = config.evolution_config(method)
    obs = model.ops.observables
    obs_T = np.stack([O.T for O in obs])
    rho = ground_state(model.space) if rho0 is None else np.array(rho0, dtype=complex)
    out = np.empty((len(f), len(obs)))
    digest = hashlib.sha256()
    diag = {"max_trace_error": 0.0, "max_hermiticity": 0.0, "min_eigenvalue": math.inf,
            "max_top_fock_population": 0.0}
    subs = []
    for k, fk in enumerate(f):
        if method == "rk4":
            subs.append(evo.n_substeps(None if evo.substep is not None else model.stable_substep(fk)))
        rho = evolve_interval(rho, fk, evo, model)
        vals = np.einsum("ij,cij->c", rho, obs_T)
        out[k] = vals.real
        digest.update(rho.tobytes())
        if config.check_states:
            d = check_density_matrix(rho)
            diag["max_trace_error"] = max(diag["max_trace_error"], d["trace_error"])
            diag["max_hermiticity"] = max(diag["max_hermiticity"], d["hermiticity"])
            diag["min_eigenvalue"] = min(diag["min_eigenvalue"], d["min_eig"])
        diag["max_top_fock_population"] = max(diag["max_top_fock_population"],
                                              top_fock_population(rho, model.space))
    if not config.check_states:
        diag = {"max_top_fock_population": diag["max_top_fock_population"]}
    return ReadoutRun(
        readouts=out,
        names=observable_names(model.space.n_atom),
        method=method,
        substeps=(min(subs), max(subs)) if subs else (0, 0),
        diagnostics=diag,
        state_digest=digest.hexdigest(),
        seconds=time.perf_counter() - t0,
    )


# --- scoring ------------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    train_nrmse: float
    test_nrmse: float
    y_actual: np.ndarray  # full-length prediction (fading zone included)
    series: TaskSeries
    weights: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def y_target(self) -> np.ndarray:
        return self.series.y_target

    @property
    def y_test(self) -> np.ndarray:
        return self.y_actual[zone_slices(self.series)[2]]


def _score(design: np.ndarray, series: TaskSeries, ridge: float):
    _, tr, te = zone_slices(series)
    W = train_ridge(design[tr], series.y_target[tr], ridge)
    y = predict(design, W)
    return W, y, nrmse(y[tr], series.y_target[tr]), nrmse(y[te], series.y_target[te])


def measured_columns(config: ExperimentConfig) -> list[int]:
    """Cavity quadratures plus both quadratures of each non-hidden atom."""
    return list(range(2 * config.measured_atoms + 2))


def _base_metadata(config: ExperimentConfig, series: TaskSeries) -> dict:
    return {
        "code_version": __version__,
        "config": config.to_dict(),
        "ridge_delta": config.ridge,
        "zones": list(series.zones),
        "dt_sample": series.dt_sample,
        "series_sha256": series.digest(),
        "series_meta": series.meta,
        "seed": config.seed,
    }


def run_quantum_experiment(config: ExperimentConfig, series: TaskSeries | None = None,
                           cache: dict | None = None) -> ExperimentResult:
    """Simulate (or reuse) the readouts, restrict to measured observables, train and score."""
    if config.reservoir != "quantum":
        raise ConfigError("run_quantum_experiment needs reservoir='quantum'")
    series = series or build_series(config)
    key = config.dynamics_key()
    run = cache.get(key) if cache is not None else None
    if run is None or len(run.readouts) < len(series):
        run = simulate_readouts(config, series.f)
        if cache is not None:
            cache[key] = run
    cols = measured_columns(config)
    sample = run.readouts[: len(series), cols]
    X = build_features(sample, config.regression)
    W, y, tr, te = _score(X, series, config.ridge)
    meta = _base_metadata(config, series)
    meta.update({
        "n_fock": config.n_fock,
        "propagation": run.method,
        "substep": (config.substep if config.substep is not None else "auto")
        if run.method == "rk4" else None,
        "rk4_substeps_per_interval": list(run.substeps) if run.method == "rk4" else None,
        "measured_observables": [run.names[c] for c in cols],
        "n_neurons": len(cols),
        "n_features": X.shape[1] - 1,
        "state_digest": run.state_digest,
        "diagnostics": run.diagnostics,
    })
    names = feature_names([run.names[c] for c in cols], config.regression)
    return ExperimentResult(config, tr, te, y, series, W, names, meta)


def run_esn_experiment(config: ExperimentConfig, series: TaskSeries | None = None,
                       workers: int = 1) -> ExperimentResult:
    """Mean NRMSE over ``esn_members`` random networks; predictions shown are network 0's."""
    series = series or build_series(config)
    n = config.n_neurons
    ens = ensemble_nrmse(n, series, config.esn_members, config.seed, config.spectral_cap,
                         config.ridge, workers=workers)
    first = init_esn(n, network_seeds(config.seed, 1)[0], config.spectral_cap)
    W, y, _, _ = _score(run_esn(first, series), series, config.ridge)
    meta = _base_metadata(config, series)
    meta.update({
        "n_neurons": n,
        "esn_members": config.esn_members,
        "esn_weight_distribution": WEIGHT_DISTRIBUTION,
        "esn_spectral_cap": config.spectral_cap,
        "esn_initial_state": "zeros",
        "test_nrmse_stderr": ens.stderr_test_nrmse,
    })
    names = ["bias"] + [f"x{i}" for i in range(1, n + 1)]
    return ExperimentResult(config, ens.mean_train_nrmse, ens.mean_test_nrmse, y, series, W, names, meta)


def run_experiment(config: ExperimentConfig, cache: dict | None = None, workers: int = 1) -> ExperimentResult:
    if config.reservoir == "esn":
        return run_esn_experiment(config, workers=workers)
    return run_quantum_experiment(config, cache=cache)


# --- sweeps -------------------------------------------------------------------


def apply_axis(template: ExperimentConfig, axis: str, value, ladder: str = "omega") -> ExperimentConfig:
    """Config for one sweep point."""
    if axis == "n_atom":
        om, g = ladder_params(int(value), ladder)
        return template.replace(omega_atoms=om, g=g, hidden_atoms=0)
    if axis == "delay":
        return template.replace(delay=int(value))
    if axis == "kappa":
        return template.replace(kappa=float(value))
    if axis == "n_ss":
        return template.replace(n_ss=int(value))
    if axis == "neurons":
        n = int(value)
        if template.reservoir == "esn":
            return template.replace(esn_neurons=n)
        if n % 2 or n < 4:
            raise ConfigError("quantum neuron counts are even and at least 4")
        om, g = ladder_params(n // 2 - 1, ladder)
        return template.replace(omega_atoms=om, g=g, hidden_atoms=0)
    if axis == "hidden_atoms":
        om, g = hidden_atom_params(int(value))
        return template.replace(omega_atoms=om, g=g, hidden_atoms=int(value))
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass
class SweepResult:
    axis: str
    values: list
    results: dict  # value -> ExperimentResult
    errors: dict  # value -> message

    def table(self) -> list[tuple]:
        rows = []
        for v in self.values:
            if v in self.results:
                r = self.results[v]
                rows.append((v, r.train_nrmse, r.test_nrmse, "ok"))
            else:
                rows.append((v, math.nan, math.nan, self.errors.get(v, "missing")))
        return rows


def _simulate_group(args):
    config, f = args
    try:
        return simulate_readouts(config, f), None
    except (DynamicsError, ValueError, FloatingPointError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def sweep(template: ExperimentConfig, axis: str, values, ladder: str = "omega", workers: int = 1,
          cache: dict | None = None) -> SweepResult:
    """One result per value; failures are recorded and the sweep continues."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = list(values)
    cache = {} if cache is None else cache
    configs, errors = {}, {}
    for v in values:
        try:
            configs[v] = apply_axis(template, axis, v, ladder)
        except ConfigError as exc:
            errors[v] = f"ConfigError: {exc}"
    series = {v: build_series(c) for v, c in configs.items()}
    if template.reservoir == "quantum":
        # simulate each distinct dynamics once, in parallel across groups
        todo = {}
        for v, c in configs.items():
            k = c.dynamics_key()
            if k not in cache and k not in todo:
                todo[k] = (c, series[v].f)
        keys = list(todo)
        if workers > 1 and len(keys) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                outs = list(ex.map(_simulate_group, [todo[k] for k in keys]))
        else:
            outs = [_simulate_group(todo[k]) for k in keys]
        failed = {}
        for k, (run, err) in zip(keys, outs):
            if run is not None:
                cache[k] = run
            else:
                failed[k] = err
        for v, c in configs.items():
            if c.dynamics_key() in failed:
                errors[v] = failed[c.dynamics_key()]
    results = {}
    for v, c in configs.items():
        if v in errors:
            continue
        try:
            if c.reservoir == "quantum":
                results[v] = run_quantum_experiment(c, series[v], cache)
            else:
                results[v] = run_esn_experiment(c, series[v], workers=workers)
        except Exception as exc:  # keep sweeping
            errors[v] = f"{type(exc).__name__}: {exc}"
    return SweepResult(axis, values, results, errors)


# --- reporting ----------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def emit_report(results, path, name: str = "run", sweep_result: SweepResult | None = None) -> dict:
    """Write series CSVs, per-run metadata, an optional sweep table and ``<name>_summary.json``.

    ``results`` is a single result, a list of results or a :class:`SweepResult`.
    Returns a dict of written paths.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if isinstance(results, SweepResult):
        sweep_result, items = results, [(f"{name}_{results.axis}_{v}", results.results[v])
                                        for v in results.values if v in results.results]
    elif isinstance(results, ExperimentResult):
        items = [(name, results)]
    else:
        items = [(f"{name}_{i}", r) for i, r in enumerate(results)]
    if not items and sweep_result is None:
        raise ValueError("nothing to report")
    written = {"series": [], "metadata": []}
    summary = {"name": name, "code_version": __version__, "runs": []}
    try:
        for label, r in items:
            sp = save_series(r.series, out / f"{label}_series.csv", extra={"y_k": r.y_actual})
            meta = dict(r.metadata, train_nrmse=r.train_nrmse, test_nrmse=r.test_nrmse,
                        feature_names=r.feature_names,
                        weights=None if r.weights is None else [float(w) for w in r.weights])
            mp = out / f"{label}_meta.json"
            _write_json(mp, meta)
            written["series"].append(sp)
            written["metadata"].append(mp)
            summary["runs"].append({"label": label, "train_nrmse": r.train_nrmse,
                                    "test_nrmse": r.test_nrmse, "config": r.config.to_dict(),
                                    "series_sha256": r.metadata.get("series_sha256")})
        if sweep_result is not None:
            tp = out / f"{name}_sweep.csv"
            with open(tp, "w") as fh:
                fh.write(f"{sweep_result.axis},train_nrmse,test_nrmse,status\n")
                for v, a, b, s in sweep_result.table():
                    fh.write(f"{v},{a!r},{b!r},{s}\n")
            written["sweep"] = tp
            summary["sweep"] = {"axis": sweep_result.axis, "rows": sweep_result.table()}
        sp = out / f"{name}_summary.json"
        _write_json(sp, summary)
        written["summary"] = sp
    except OSError as exc:
        raise OSError(f"failed writing report under {out}: {exc}") from exc
    return written
