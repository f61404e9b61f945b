"""Benchmark input/target series: Mackey-Glass forecasting and sine/square classification."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TaskSeries",
    "MackeyGlassConfig",
    "SineSquareConfig",
    "ZONE_NAMES",
    "integrate_mackey_glass",
    "mackey_glass_series",
    "sine_square_input",
    "zone_slices",
    "save_series",
    "load_series",
]

ZONE_NAMES = ("fading", "training", "testing")


@dataclass
class TaskSeries:
    """Input ``f`` and target ``y_target`` with (fading, training, testing) zone lengths."""

    f: np.ndarray
    y_target: np.ndarray
    zones: tuple[int, int, int]
    dt_sample: float
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.y_target = np.asarray(self.y_target, dtype=float)
        self.zones = tuple(int(z) for z in self.zones)
        if len(self.zones) != 3 or min(self.zones) < 0:
            raise ValueError(f"zones must be three non-negative lengths, got {self.zones}")
        if not (len(self.f) == len(self.y_target) == sum(self.zones)):
            raise ValueError(
                f"len(f)={len(self.f)}, len(y_target)={len(self.y_target)} and "
                f"sum(zones)={sum(self.zones)} must agree"
            )

    def __len__(self) -> int:
        return len(self.f)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.f)) * self.dt_sample

    def zone_labels(self) -> list[str]:
        return [name for name, n in zip(ZONE_NAMES, self.zones) for _ in range(n)]

    def digest(self) -> str:
        """SHA-256 over the exact input/target bytes, zones and sampling interval."""
        h = hashlib.sha256()
        h.update(self.f.tobytes())
        h.update(self.y_target.tobytes())
        h.update(np.asarray(self.zones, dtype=np.int64).tobytes())
        h.update(np.float64(self.dt_sample).tobytes())
        return h.hexdigest()


def zone_slices(series: TaskSeries) -> tuple[slice, slice, slice]:
    a, b, _ = series.zones
    n = len(series)
    return slice(0, a), slice(a, a + b), slice(a + b, n)


# --- Mackey-Glass -----------------------------------------------------------


@dataclass(frozen=True)
class MackeyGlassConfig:
    beta: float = 0.2
    gamma: float = 0.1
    tau: float = 17.0
    exponent: float = 10.0
    buffer: float = 1000.0
    dt_sample: float = 1.0
    integration_step: float = 0.1
    history_init: float = 1.2
    delay: int = 20
    zones: tuple[int, int, int] = (200, 2000, 1000)

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(int(z) for z in self.zones))
        if self.buffer < self.tau:
            raise ValueError("buffer must be at least tau")
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        for name, val in (("tau", self.tau), ("dt_sample", self.dt_sample), ("buffer", self.buffer)):
            ratio = val / self.integration_step
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(f"{name} must be an integer multiple of integration_step")


def integrate_mackey_glass(cfg: MackeyGlassConfig, t_end: float, history=None) -> np.ndarray:
    """RK4 solution on the grid ``t = 0, h, ..., t_end`` (history on ``[-tau, 0]``).

    Delayed values at half steps come from cubic Hermite interpolation of the
    stored grid and its derivatives, which keeps the scheme fourth order. The
    derivative kink at ``t = 0`` (history meets the solution) is handled by
    using the one-sided history derivative on the last history interval.
    ``history`` is a constant or a vectorized callable of ``t <= 0``.
    """
    h = cfg.integration_step
    lag = round(cfg.tau / h)
    n = round(t_end / h)
    hist = cfg.history_init if history is None else history
    grid = np.empty(lag + n + 1)
    deriv = np.zeros(lag + n + 1)
    if callable(hist):
        t_hist = (np.arange(lag + 1) - lag) * h
        grid[: lag + 1] = hist(t_hist)
        deriv[: lag + 1] = np.gradient(grid[: lag + 1], h)
    else:
        grid[: lag + 1] = float(hist)
    hist_end_deriv = deriv[lag]
    b, g, p = cfg.beta, cfg.gamma, cfg.exponent

    def rhs(x, xd):
        return b * xd / (1.0 + xd**p) - g * x

    for k in range(n):
        i = lag + k  # grid index of current time
        x = grid[i]
        j = i - lag
        d0, d1 = grid[j], grid[j + 1]
        dd1 = hist_end_deriv if j + 1 == lag else deriv[j + 1]
        dm = 0.5 * (d0 + d1) + 0.125 * h * (deriv[j] - dd1)
        k1 = rhs(x, d0)
        deriv[i] = k1
        k2 = rhs(x + 0.5 * h * k1, dm)
        k3 = rhs(x + 0.5 * h * k2, dm)
        k4 = rhs(x + h * k3, d1)
        grid[i + 1] = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    out = grid[lag:]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("Mackey-Glass integration produced non-finite values")
    return out


def mackey_glass_series(cfg: MackeyGlassConfig | None = None, total_steps: int | None = None,
                        history=None) -> TaskSeries:
    """Sampled input ``f_k = f(buffer + k dt)`` with target ``f_{k+delay}``.

    ``total_steps`` defaults to the sum of the zone lengths and must match it
    when given. The input does not depend on ``delay``: series with different
    horizons share ``f`` exactly and differ only in the target.
    """
    cfg = cfg or MackeyGlassConfig()
    zones = cfg.zones
    if total_steps is None:
        total_steps = sum(zones)
    elif total_steps != sum(zones):
        raise ValueError(f"total_steps={total_steps} does not match zones {zones}")
    if total_steps < 1:
        raise ValueError("total_steps must be positive")
    n_samples = total_steps + cfg.delay
    stride = round(cfg.dt_sample / cfg.integration_step)
    start = round(cfg.buffer / cfg.integration_step)
    t_end = cfg.buffer + (n_samples - 1) * cfg.dt_sample
    traj = integrate_mackey_glass(cfg, t_end, history)
    samples = traj[start :: stride][:n_samples]
    f = samples[:total_steps]
    y = samples[cfg.delay : cfg.delay + total_steps]
    meta = {
        "task": "mackey_glass",
        "beta": cfg.beta, "gamma": cfg.gamma, "tau": cfg.tau, "exponent": cfg.exponent,
        "buffer": cfg.buffer, "integration_step": cfg.integration_step,
        "history_init": cfg.history_init, "delay": cfg.delay,
    }
    return TaskSeries(f, y, zones, cfg.dt_sample, name="mackey_glass", meta=meta)


# --- sine / square ------------------------------------------------------------


@dataclass(frozen=True)
class SineSquareConfig:
    n_waveforms: tuple[int, int, int] = (10, 50, 50)
    n_ss: int = 8
    omega_ss: float = 10.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_waveforms", tuple(int(n) for n in self.n_waveforms))
        if self.n_ss < 2:
            raise ValueError("n_ss must be at least 2")
        if self.omega_ss <= 0:
            raise ValueError("omega_ss must be positive")

    @property
    def dt_sample(self) -> float:
        return 2 * math.pi / (self.n_ss * self.omega_ss)


def sine_wave(n_ss: int) -> np.ndarray:
    return np.sin(2 * np.pi * np.arange(n_ss) / n_ss)


def square_wave(n_ss: int) -> np.ndarray:
    # high on the first half period
    return np.where(np.arange(n_ss) < n_ss / 2, 1.0, -1.0)


def sine_square_input(cfg: SineSquareConfig | None = None) -> TaskSeries:
    """Random sequence of one-period waveforms; target 1 for sine samples, 0 for square."""
    cfg = cfg or SineSquareConfig()
    n_total = sum(cfg.n_waveforms)
    labels = np.random.default_rng(cfg.seed).integers(0, 2, size=n_total)
    shapes = {1: sine_wave(cfg.n_ss), 0: square_wave(cfg.n_ss)}
    f = np.concatenate([shapes[int(lab)] for lab in labels]) if n_total else np.empty(0)
    y = np.repeat(labels.astype(float), cfg.n_ss)
    zones = tuple(n * cfg.n_ss for n in cfg.n_waveforms)
    meta = {"task": "sine_square", "n_ss": cfg.n_ss, "omega_ss": cfg.omega_ss,
            "seed": cfg.seed, "labels": labels.tolist()}
    return TaskSeries(f, y, zones, cfg.dt_sample, name="sine_square", meta=meta)


# --- serialization ------------------------------------------------------------


def save_series(series: TaskSeries, path, extra: dict[str, np.ndarray] | None = None) -> Path:
    """Write ``k, t_k, f_k, y_target_k, zone`` (plus ``extra`` columns) as CSV."""
    path = Path(path)
    extra = extra or {}
    cols = ["k", "t_k", "f_k", "y_target_k"] + list(extra) + ["zone"]
    t = series.times
    zl = series.zone_labels()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(len(series)):
            row = [k, repr(float(t[k])), repr(float(series.f[k])), repr(float(series.y_target[k]))]
            row += [repr(float(v[k])) for v in extra.values()]
            w.writerow(row + [zl[k]])
    return path


def load_series(path) -> tuple[TaskSeries, dict[str, np.ndarray]]:
    """Inverse of :func:`save_series`; returns the series and any extra columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    extra_names = header[4:-1]
    f = np.array([float(r[2]) for r in body])
    y = np.array([float(r[3]) for r in body])
    zl = [r[-1] for r in body]
    zones = tuple(zl.count(z) for z in ZONE_NAMES)
    dt = float(body[1][1]) if len(body) > 1 else 1.0
    extra = {name: np.array([float(r[4 + i]) for r in body]) for i, name in enumerate(extra_names)}
    return TaskSeries(f, y, zones, dt), extra
