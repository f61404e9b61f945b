"""Classical echo state network baseline: x_{k+1} = ReLU(A x_k + B f_k).

Ensembles run as one batched array over networks. Every network draws its
(A, B) from its own child of a master ``SeedSequence``, so results do not
depend on batching or on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .regression import DEFAULT_RIDGE, nrmse, predict, train_ridge
from .tasks import TaskSeries, zone_slices

__all__ = ["DEFAULT_SPECTRAL_CAP", "EsnParams", "EnsembleResult", "init_esn", "esn_step",
           "run_esn", "ensemble_nrmse", "network_seeds"]

DEFAULT_SPECTRAL_CAP = 0.95
WEIGHT_DISTRIBUTION = "standard normal (A, B), A rescaled to the spectral cap"


@dataclass(frozen=True)
class EsnParams:
    A: np.ndarray
    B: np.ndarray
    spectral_cap: float

    @property
    def n_neurons(self) -> int:
        return self.B.shape[0]


def init_esn(n_neurons: int, seed=0, spectral_cap: float = DEFAULT_SPECTRAL_CAP) -> EsnParams:
    """Gaussian A, B; A scaled so its largest singular value is ``spectral_cap``."""
    if n_neurons < 1:
        raise ValueError("n_neurons must be >= 1")
    if not 0 < spectral_cap < 1:
        raise ValueError("spectral_cap must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_neurons, n_neurons))
    B = rng.standard_normal(n_neurons)
    A *= spectral_cap / np.linalg.norm(A, 2)
    return EsnParams(A, B, spectral_cap)


def esn_step(x, f_k: float, params: EsnParams) -> np.ndarray:
    return np.maximum(params.A @ x + params.B * f_k, 0.0)


def _run_batch(A: np.ndarray, B: np.ndarray, f: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
    """States for a stack of networks: A (M,n,n), B (M,n) -> (M, L, n)."""
    M, n = B.shape
    x = np.zeros((M, n)) if x0 is None else np.array(x0, dtype=float).reshape(M, n)
    out = np.empty((M, len(f), n))
    for k, fk in enumerate(f):
        x = np.maximum(np.einsum("mij,mj->mi", A, x) + B * fk, 0.0)
        out[:, k] = x
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite ESN state")
    return out


def run_esn(params: EsnParams, series: TaskSeries | np.ndarray, x0=None) -> np.ndarray:
    """Feature rows ``[1, x_k]`` for every step, starting from ``x0`` (default 0).

    Row k holds the state after the input ``f_k`` has been applied.
    """
    f = series.f if isinstance(series, TaskSeries) else np.asarray(series, dtype=float)
    states = _run_batch(params.A[None], params.B[None], f, None if x0 is None else np.asarray(x0)[None])[0]
    return np.hstack([np.ones((len(f), 1)), states])


def network_seeds(seed: int, M: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(M)


@dataclass
class EnsembleResult:
    mean_test_nrmse: float
    stderr_test_nrmse: float
    mean_train_nrmse: float
    test_nrmse: np.ndarray
    train_nrmse: np.ndarray
    n_neurons: int
    spectral_cap: float
    seed: int


def _score_chunk(args):
    seeds, n_neurons, spectral_cap, series, delta = args
    nets = [init_esn(n_neurons, s, spectral_cap) for s in seeds]
    A = np.stack([p.A for p in nets])
    B = np.stack([p.B for p in nets])
    states = _run_batch(A, B, series.f)
    _, tr, te = zone_slices(series)
    out = np.empty((len(nets), 2))
    for m in range(len(nets)):
        X = np.hstack([np.ones((len(series), 1)), states[m]])
        try:
            W = train_ridge(X[tr], series.y_target[tr], delta)
            out[m, 0] = nrmse(predict(X[tr], W), series.y_target[tr])
            out[m, 1] = nrmse(predict(X[te], W), series.y_target[te])
        except Exception as exc:
            raise RuntimeError(f"ESN network {seeds[m].spawn_key} failed: {exc}") from exc
    return out


def ensemble_nrmse(
    n_neurons: int,
    series: TaskSeries,
    M: int = 1000,
    seed: int = 0,
    spectral_cap: float = DEFAULT_SPECTRAL_CAP,
    delta: float = DEFAULT_RIDGE,
    workers: int = 1,
    chunk: int = 250,
) -> EnsembleResult:
    """Train and test M independent random networks on one series."""
    if M < 1:
        raise ValueError("M must be >= 1")
    seeds = network_seeds(seed, M)
    jobs = [(seeds[i : i + chunk], n_neurons, spectral_cap, series, delta) for i in range(0, M, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_score_chunk, jobs))
    else:
        parts = [_score_chunk(j) for j in jobs]
    scores = np.vstack(parts)
    test = scores[:, 1]
    stderr = float(test.std(ddof=1) / np.sqrt(M)) if M > 1 else float("nan")
    return EnsembleResult(
        mean_test_nrmse=float(test.mean()),
        stderr_test_nrmse=stderr,
        mean_train_nrmse=float(scores[:, 0].mean()),
        test_nrmse=test,
        train_nrmse=scores[:, 0],
        n_neurons=n_neurons,
        spectral_cap=spectral_cap,
        seed=seed,
    )
