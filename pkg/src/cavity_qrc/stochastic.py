"""Homodyne-unravelled stochastic master equation (single trajectories and ensembles).

Every decay channel is continuously measured. The channel operators are
``sqrt(k_c) c`` (Q), ``i sqrt(k_c) c`` (P), ``sqrt(k_i) s_i`` (x_i) and
``i sqrt(k_i) s_i`` (y_i); the Euler-Maruyama update is

    rho <- rho + L(rho) dt + sum_ch dW_ch H[a_ch] rho,
    H[a] rho = a rho + rho a^dag - <a + a^dag> rho,

followed by re-symmetrization and trace renormalization. Records are
``<O_ch> + dW_ch / dt`` with the expectation taken before the step (Ito).

Each trajectory owns a child of the master ``SeedSequence`` and draws its
increments in one block, so ensembles are independent of batch size, worker
count and execution order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import DynamicsError, LindbladModel, expectation, ground_state
from .operators import dag

__all__ = [
    "DEFAULT_SME_DT",
    "WienerIncrements",
    "TrajectoryState",
    "EnsembleAverage",
    "channel_names",
    "channel_operators",
    "stochastic_superop_H",
    "sme_step",
    "measurement_record",
    "run_trajectory",
    "ensemble_average",
    "trajectory_seeds",
]

DEFAULT_SME_DT = 1e-3


def channel_names(n_atom: int) -> tuple[str, ...]:
    names = ["Q", "P"]
    for i in range(1, n_atom + 1):
        names += [f"x{i}", f"y{i}"]
    return tuple(names)


def channel_operators(model: LindbladModel) -> list[np.ndarray]:
    """Stochastic collapse operators in channel order (Q, P, x1, y1, ...)."""
    p, ops = model.params, model.ops
    out = [math.sqrt(p.kappa_c) * ops.c, 1j * math.sqrt(p.kappa_c) * ops.c]
    for k, s in zip(p.kappa_atoms, ops.sigma):
        out += [math.sqrt(k) * s, 1j * math.sqrt(k) * s]
    return out


def stochastic_superop_H(rho: np.ndarray, a: np.ndarray) -> np.ndarray:
    """a rho + rho a^dag - <a + a^dag> rho (traceless for unit-trace rho)."""
    out = a @ rho + rho @ dag(a)
    return out - np.trace(out).real * rho


@dataclass
class WienerIncrements:
    dW_Q: float
    dW_P: float
    dW_x: np.ndarray
    dW_y: np.ndarray

    @classmethod
    def from_vector(cls, v) -> "WienerIncrements":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), v[2::2].copy(), v[3::2].copy())

    @classmethod
    def draw(cls, rng: np.random.Generator, n_atom: int, dt: float) -> "WienerIncrements":
        return cls.from_vector(rng.standard_normal(2 * n_atom + 2) * math.sqrt(dt))

    @classmethod
    def zeros(cls, n_atom: int) -> "WienerIncrements":
        return cls.from_vector(np.zeros(2 * n_atom + 2))

    def as_vector(self) -> np.ndarray:
        v = np.empty(2 + 2 * len(self.dW_x))
        v[0], v[1] = self.dW_Q, self.dW_P
        v[2::2], v[3::2] = self.dW_x, self.dW_y
        return v


@dataclass
class TrajectoryState:
    rho: np.ndarray
    rng_seed: object = None
    t: float = 0.0
    records: list = field(default_factory=list)  # one array of channel records per step


def _observable(model: LindbladModel, channel: str) -> np.ndarray:
    names = channel_names(model.space.n_atom)
    if channel not in names:
        raise ValueError(f"unknown channel {channel!r}; expected one of {names}")
    return model.ops.observables[names.index(channel)]


def measurement_record(state: TrajectoryState | np.ndarray, channel: str, dW: float, dt: float,
                       model: LindbladModel) -> float:
    """<O_channel>_J + dW / dt."""
    rho = state.rho if isinstance(state, TrajectoryState) else state
    return expectation(rho, _observable(model, channel)) + dW / dt


def sme_step(state: TrajectoryState, f_k: float, dt: float, model: LindbladModel,
             increments: WienerIncrements) -> TrajectoryState:
    """One Euler-Maruyama step; returns a new state with this step's records appended."""
    rho = state.rho
    dW = increments.as_vector()
    obs = model.ops.observables
    means = np.array([expectation(rho, O, imag_tol=1e-6) for O in obs])
    new = rho + dt * model.rhs(rho, f_k)
    for w, a in zip(dW, channel_operators(model)):
        new = new + w * stochastic_superop_H(rho, a)
    new = 0.5 * (new + dag(new))
    tr = np.trace(new).real
    if not np.all(np.isfinite(new)) or tr <= 0:
        raise DynamicsError("stochastic step produced an invalid state")
    new = new / tr
    return TrajectoryState(new, state.rng_seed, state.t + dt, state.records + [means + dW / dt])


# --- batched trajectories ----------------------------------------------------


class _BatchStepper:
    """Vectorized EM stepping for a stack of conditional states (B, d, d)."""

    def __init__(self, model: LindbladModel):
        self.model = model
        self.a = np.stack(channel_operators(model))  # (C, d, d)
        self.obs_T = np.stack([O.T for O in model.ops.observables])  # (C, d, d)
        self.jump = [(math.sqrt(2 * k) * a) for k, a in model.collapse if k]

    def means(self, rho):
        return np.einsum("bij,cij->bc", rho, self.obs_T).real

    def step(self, rho, f, dt, dW):
        X = self.model.heff(f) @ rho
        drift = -1j * (X - _hc(X))
        for a in self.jump:
            drift += a @ rho @ dag(a)
        # sum_ch dW_ch H[a_ch] rho with Y = sum_ch dW_ch a_ch rho
        Y = np.tensordot(dW, self.a, axes=(1, 0)) @ rho
        trY = np.einsum("bii->b", Y).real
        new = rho + dt * drift + Y + _hc(Y) - (2 * trY)[:, None, None] * rho
        new = 0.5 * (new + _hc(new))
        tr = np.einsum("bii->b", new).real
        return new / tr[:, None, None], tr


def _hc(x):
    return np.conj(np.swapaxes(x, -1, -2))


def trajectory_seeds(seed: int, M: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(M)


def _n_sub(dt_sample: float, dt: float) -> int:
    ratio = dt_sample / dt
    n = round(ratio)
    return int(n) if abs(ratio - n) < 1e-9 * max(1.0, ratio) else math.ceil(ratio)


def _run_chunk(args):
    model, f, dt_sample, dt, seeds, offset, rho0, dump_dir = args
    n_sub = _n_sub(dt_sample, dt)
    h = dt_sample / n_sub
    stepper = _BatchStepper(model)
    C = len(model.ops.observables)
    B = len(seeds)
    # each trajectory draws its whole noise block from its own generator
    noise = np.stack([np.random.default_rng(s).standard_normal((len(f) * n_sub, C)) for s in seeds])
    noise *= math.sqrt(h)
    rho = np.broadcast_to(rho0, (B,) + rho0.shape).copy()
    readouts = np.empty((B, len(f), C))
    rec_avg = np.empty((B, len(f), C))
    dumps = [[] for _ in range(B)] if dump_dir else None
    for k, fk in enumerate(f):
        acc = np.zeros((B, C))
        for s in range(n_sub):
            dW = noise[:, k * n_sub + s]
            means = stepper.means(rho)
            rec = means + dW / h
            acc += rec
            if dumps is not None:
                t = (k * n_sub + s) * h
                for b in range(B):
                    dumps[b].append(np.concatenate([[t], rec[b]]))
            rho, tr = stepper.step(rho, fk, h, dW)
            bad = ~(np.isfinite(tr) & (tr > 0))
            if bad.any():
                raise DynamicsError(f"trajectory {offset + int(np.argmax(bad))} diverged at step {k}")
        readouts[:, k] = stepper.means(rho)
        rec_avg[:, k] = acc / n_sub
    if dump_dir:
        names = ",".join(["t", *channel_names(model.space.n_atom)])
        for b in range(B):
            np.savetxt(Path(dump_dir) / f"trajectory_{offset + b:06d}.csv", np.array(dumps[b]),
                       delimiter=",", header=names, comments="")
    return readouts, rec_avg, rho


def run_trajectory(model: LindbladModel, f, dt_sample: float, seed, dt: float = DEFAULT_SME_DT,
                   rho0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One trajectory: conditional readouts at the end of each interval and interval-averaged records."""
    rho0 = ground_state(model.space) if rho0 is None else rho0
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    r, a, _ = _run_chunk((model, np.asarray(f, float), dt_sample, dt, [seq], 0, rho0, None))
    return r[0], a[0]


@dataclass
class EnsembleAverage:
    times: np.ndarray
    mean: np.ndarray  # (L, C) mean conditional readouts at t_k
    stderr: np.ndarray  # (L, C)
    mean_records: np.ndarray  # (L, C) interval-averaged measurement records
    M: int
    seed: int
    names: tuple[str, ...]
    readouts: np.ndarray | None = None  # (M, L, C) per-trajectory readouts when kept


def ensemble_average(
    model: LindbladModel,
    f,
    dt_sample: float,
    M: int,
    seed: int = 0,
    dt: float = DEFAULT_SME_DT,
    rho0: np.ndarray | None = None,
    batch: int = 2000,
    workers: int = 1,
    dump_dir=None,
    keep_trajectories: bool = False,
) -> EnsembleAverage:
    """Mean and standard error of conditional readouts over M trajectories."""
    if M < 1:
        raise ValueError("M must be >= 1")
    f = np.asarray(f, dtype=float)
    rho0 = ground_state(model.space) if rho0 is None else np.asarray(rho0, dtype=complex)
    if dump_dir:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)
    seeds = trajectory_seeds(seed, M)
    jobs = [(model, f, dt_sample, dt, seeds[i : i + batch], i, rho0, dump_dir) for i in range(0, M, batch)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    readouts = np.concatenate([p[0] for p in parts])
    records = np.concatenate([p[1] for p in parts])
    mean = readouts.mean(axis=0)
    stderr = readouts.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.full_like(mean, np.nan)
    times = (np.arange(len(f)) + 1) * dt_sample
    return EnsembleAverage(times, mean, stderr, records.mean(axis=0), M, seed,
                           channel_names(model.space.n_atom),
                           readouts if keep_trajectories else None)
