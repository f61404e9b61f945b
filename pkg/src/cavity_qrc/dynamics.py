"""Deterministic master-equation dynamics of the driven, damped reservoir.

The generator over one held-input interval is

    drho/dt = -i[H0 + eps*f*D, rho] + 2 D[sqrt(k_c) c] rho + 2 sum_i D[sqrt(k_i) s_i] rho

rewritten with the non-Hermitian ``Heff = H - i K`` (``K = sum_j k_j a_j^dag a_j``) as

    drho/dt = -i(Heff rho - rho Heff^dag) + 2 sum_j k_j a_j rho a_j^dag

Three propagators are available per interval (the input is constant on it,
so each computes ``exp(dt L(f_k)) rho``):

* ``"chebyshev"`` (default): Bessel-Chebyshev series of the exponential. The
  spectrum is boxed by the spread of H and the largest decay rate, which
  gives machine-precision accuracy at fewer generator applications than a
  stable RK4 step.
* ``"rk4"``: classical fixed-step RK4. The step is the configured
  ``substep`` or, when that is ``None``, the largest step inside the RK4
  stability region for this generator (capped at ``max_substep``). Near the
  stability limit the fastest modes are strongly damped, so use an explicit
  small ``substep`` when RK4 accuracy matters.
* ``"steady"``: for strongly damped reservoirs whose transients die within a
  fraction of one interval; returns the steady state of the interval's
  generator. :func:`validate_steady` checks the Liouvillian gap first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import special

from . import _kernels
from .operators import (
    HilbertSpace,
    OperatorSet,
    build_drive_op,
    build_H0,
    build_space,
    dag,
    observable_set,
)

__all__ = [
    "ReservoirParams",
    "EvolutionConfig",
    "DynamicsError",
    "LindbladModel",
    "lindblad_rhs",
    "rk4_step",
    "evolve_interval",
    "expectation",
    "ground_state",
    "maximally_mixed",
    "check_density_matrix",
    "top_fock_population",
    "steady_state",
    "validate_steady",
    "liouvillian_gap",
]

METHODS = ("chebyshev", "rk4", "steady")


class DynamicsError(RuntimeError):
    """Integration blow-up, truncation overflow or an invalid state."""


@dataclass(frozen=True)
class ReservoirParams:
    """Physical parameters. Decay is shared equally over 2*N_atom + 2 channels."""

    omega_c: float = 40.0
    omega_atoms: tuple[float, ...] = (20.0,)
    g: tuple[float, ...] = (30.0,)
    epsilon: float = 20.0
    kappa: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "omega_atoms", tuple(float(w) for w in self.omega_atoms))
        object.__setattr__(self, "g", tuple(float(x) for x in self.g))
        if len(self.omega_atoms) != len(self.g):
            raise ValueError(
                f"omega_atoms ({len(self.omega_atoms)}) and g ({len(self.g)}) lengths differ"
            )
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    @property
    def n_atom(self) -> int:
        return len(self.omega_atoms)

    @property
    def kappa_c(self) -> float:
        return self.kappa / (2 * self.n_atom + 2)

    @property
    def kappa_atoms(self) -> tuple[float, ...]:
        return (self.kappa / (2 * self.n_atom + 2),) * self.n_atom


@dataclass(frozen=True)
class EvolutionConfig:
    """Sampling interval and propagator settings.

    ``substep`` and ``max_substep`` only affect ``method="rk4"``. With
    ``substep=None`` the RK4 step is chosen per model from the generator's
    spectral radius and capped at ``max_substep``. An explicit ``substep`` that
    does not divide ``dt_sample`` is rounded down to the next step that does.
    """

    dt_sample: float = 1.0
    substep: float | None = None
    max_substep: float = 0.01
    fock_tail_threshold: float = 0.05
    method: str = "chebyshev"
    steady_min_decay: float = 40.0  # required Liouvillian gap * dt_sample for "steady"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.dt_sample <= 0:
            raise ValueError("dt_sample must be positive")
        if self.substep is not None and not (0 < self.substep <= self.dt_sample):
            raise ValueError("need 0 < substep <= dt_sample")

    def n_substeps(self, h_max: float | None = None) -> int:
        h = self.substep if self.substep is not None else min(h_max or math.inf, self.max_substep)
        ratio = self.dt_sample / h
        n = round(ratio)
        if abs(ratio - n) < 1e-9 * max(1.0, ratio):
            return max(int(n), 1)
        return math.ceil(ratio)


def ground_state(space: HilbertSpace) -> np.ndarray:
    """Vacuum times all-ground: basis state index 0."""
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def maximally_mixed(space: HilbertSpace) -> np.ndarray:
    return np.eye(space.dim, dtype=complex) / space.dim


def top_fock_population(rho: np.ndarray, space: HilbertSpace) -> float:
    block = space.dim // space.n_fock
    return float(np.real(np.trace(rho[-block:, -block:])))


def expectation(rho: np.ndarray, observable: np.ndarray, imag_tol: float = 1e-9) -> float:
    """Re tr(rho O) for a Hermitian observable."""
    if rho.shape != observable.shape:
        raise ValueError(f"shape mismatch: rho {rho.shape} vs observable {observable.shape}")
    # tr(rho O) = sum_ab rho_ab O_ba
    val = np.sum(rho * observable.T)
    if abs(val.imag) > imag_tol:
        raise DynamicsError(f"expectation has imaginary residue {val.imag:.3e}")
    return float(val.real)


def check_density_matrix(
    rho: np.ndarray,
    trace_tol: float = 1e-8,
    herm_tol: float = 1e-10,
    pos_tol: float = 1e-8,
) -> dict:
    """Return trace/Hermiticity/positivity diagnostics; raise if any is violated."""
    herm = float(np.abs(rho - dag(rho)).max())
    tr = complex(np.trace(rho))
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min())
    diag = {"trace_error": abs(tr - 1.0), "hermiticity": herm, "min_eig": min_eig}
    if abs(tr - 1.0) > trace_tol:
        raise DynamicsError(f"trace drifted to {tr}")
    if herm > herm_tol:
        raise DynamicsError(f"Hermiticity deviation {herm:.3e}")
    if min_eig < -pos_tol:
        raise DynamicsError(f"negative eigenvalue {min_eig:.3e}")
    return diag


def lindblad_rhs(rho: np.ndarray, H_total: np.ndarray, params: ReservoirParams, ops: OperatorSet) -> np.ndarray:
    """Right-hand side of the master equation, written term by term."""

    def dissipator(a):
        ad = dag(a)
        ada = ad @ a
        return a @ rho @ ad - 0.5 * (ada @ rho + rho @ ada)

    out = -1j * (H_total @ rho - rho @ H_total)
    out += 2 * dissipator(math.sqrt(params.kappa_c) * ops.c)
    for k_i, s in zip(params.kappa_atoms, ops.sigma):
        out += 2 * dissipator(math.sqrt(k_i) * s)
    return out


@dataclass
class LindbladModel:
    """Precomputed operators for one reservoir.

    Operator arrays are never mutated after construction, so a model can be
    shared between runs; the only mutable state is a memo of stable steps.
    """

    space: HilbertSpace
    params: ReservoirParams
    ops: OperatorSet = field(init=False)
    H0: np.ndarray = field(init=False)
    D: np.ndarray = field(init=False)
    K: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.space.n_atom != self.params.n_atom:
            raise ValueError(
                f"space has {self.space.n_atom} atoms but params describe {self.params.n_atom}"
            )
        self.ops = observable_set(self.space)
        self.H0 = build_H0(self.space, self.params)
        self.D = build_drive_op(self.space)
        self.collapse = [(self.params.kappa_c, self.ops.c)] + list(
            zip(self.params.kappa_atoms, self.ops.sigma)
        )
        self.K = sum(k * (dag(a) @ a) for k, a in self.collapse)
        self._heff0 = self.H0 - 1j * self.K
        # shared CSR pattern for Heff(f) = Heff0 + eps*f*D
        pattern = sp.csr_matrix((np.abs(self._heff0) + np.abs(self.D)) > 0)
        pattern.sort_indices()
        r, c = pattern.nonzero()
        self._csr_indptr = pattern.indptr.astype(np.int64)
        self._csr_indices = pattern.indices.astype(np.int64)
        order = np.lexsort((c, r))
        r, c = r[order], c[order]
        self._csr_data0 = self._heff0[r, c].copy()
        self._csr_dataD = self.D[r, c].copy()
        self._jumps = _kernels.jump_maps(self.collapse, self.space.dim)
        self._step_memo: dict = {}

    @classmethod
    def build(cls, params: ReservoirParams, n_fock: int = 8, **kw) -> "LindbladModel":
        return cls(build_space(n_fock, params.n_atom, **kw), params)

    def heff(self, f: float) -> np.ndarray:
        return self._heff0 + (self.params.epsilon * f) * self.D

    def hamiltonian(self, f: float) -> np.ndarray:
        return self.H0 + (self.params.epsilon * f) * self.D

    def jumps(self, rho: np.ndarray) -> np.ndarray:
        """2 sum_j k_j a_j rho a_j^dag."""
        return sum(2 * k * (a @ rho @ dag(a)) for k, a in self.collapse if k)

    def rhs(self, rho: np.ndarray, f: float) -> np.ndarray:
        """Generator applied to a Hermitian ``rho`` (numpy path)."""
        X = self.heff(f) @ rho
        # rho Heff^dag = (Heff rho)^dag for Hermitian rho
        return -1j * (X - dag(X)) + self.jumps(rho)

    def spectral_radius(self, f: float) -> float:
        """max |lambda| over the Liouvillian spectrum, bounded via eig(Heff).

        The Liouvillian without the jump term has eigenvalues
        ``-i(E_a - conj(E_b))``; the jump term is strictly lowering and does
        not move them.
        """
        E = np.linalg.eigvals(self.heff(f))
        return float(np.abs(E[:, None] - E.conj()[None, :]).max())

    def stable_substep(self, f: float, safety: float = 0.8) -> float:
        """Largest RK4 step inside the stability region for inputs up to |f|."""
        bucket = math.ceil(abs(f) * 4 + 1e-12) / 4
        if bucket not in self._step_memo:
            radius = max(self.spectral_radius(bucket), self.spectral_radius(-bucket))
            self._step_memo[bucket] = safety * 2 * math.sqrt(2) / radius if radius else math.inf
        return self._step_memo[bucket]

    def rk4(self, rho: np.ndarray, f: float, h: float, n: int) -> np.ndarray:
        data = self._csr_data0 + (self.params.epsilon * f) * self._csr_dataD
        out = _kernels.rk4_steps(
            rho, h, n, self._csr_indptr, self._csr_indices,
            np.ascontiguousarray(data.real), np.ascontiguousarray(data.imag), *self._jumps,
        )
        if not np.all(np.isfinite(out)):
            raise DynamicsError("non-finite density matrix entries (integration blow-up)")
        return out

    def spectral_box(self, f: float, margin: float = 0.02) -> tuple[float, float]:
        """(half-width of Im spectrum, largest decay rate) valid for inputs up to |f|.

        Eigenvalues of the non-jump generator are ``-i(E_a - conj(E_b))`` with
        ``Re E`` in the numerical range of H and ``-Im E`` in that of K, so the
        spectrum lies in ``Im in [-spread(H), spread(H)]``, ``Re in [-2 max K, 0]``.
        spread(H(f)) is convex in f, so the bucket endpoints bound the bucket.
        """
        bucket = math.ceil(abs(f) * 4 + 1e-12) / 4
        key = ("box", bucket)
        if key not in self._step_memo:
            spread = 0.0
            for fb in (bucket, -bucket):
                e = np.linalg.eigvalsh(self.hamiltonian(fb))
                spread = max(spread, e[-1] - e[0])
            gamma = 2.0 * float(np.linalg.eigvalsh(self.K)[-1])
            self._step_memo[key] = (spread * (1 + margin) + gamma, gamma)
        return self._step_memo[key]

    def chebyshev(self, rho: np.ndarray, f: float, dt: float, chunk_decay: float = 2.0,
                  tol: float = 1e-16) -> np.ndarray:
        """exp(dt L(f)) rho by a Bessel-Chebyshev series (error near machine precision).

        The interval is split into chunks with ``chunk * max_decay / 2 <= chunk_decay``
        so the dissipative part stays inside a thin Bernstein ellipse.
        """
        half_width, gamma = self.spectral_box(f)
        n_chunks = max(1, math.ceil(dt * gamma / (2 * chunk_decay)))
        tau = dt / n_chunks
        omega = tau * half_width
        # decay rates put eigenvalues off the segment, on a Bernstein ellipse
        # of radius rho_e, where the k-th term grows like rho_e**k
        a = gamma / (2 * half_width)
        rho_e = a + math.sqrt(a * a + 1)
        kmax = int(1.5 * omega + 60 + 8 * omega ** (1 / 3))
        k = np.arange(kmax)
        c = special.jv(k, omega)
        c[1:] *= 2.0
        big = np.nonzero(np.abs(c) * rho_e**k > tol)[0]
        c = c[: big[-1] + 1]
        data = self._csr_data0 + (self.params.epsilon * f) * self._csr_dataD
        out = _kernels.chebyshev_steps(
            rho, c, math.exp(-tau * gamma / 2), gamma / 2, 1.0 / half_width, n_chunks,
            self._csr_indptr, self._csr_indices,
            np.ascontiguousarray(data.real), np.ascontiguousarray(data.imag), *self._jumps,
        )
        if not np.all(np.isfinite(out)):
            raise DynamicsError("non-finite density matrix entries (series divergence)")
        return out

    def liouvillian(self, f: float) -> sp.csr_matrix:
        """Sparse superoperator for row-major vec(rho)."""
        d = self.space.dim
        Heff = sp.csr_matrix(self.heff(f))
        eye = sp.identity(d, dtype=complex, format="csr")
        L = -1j * sp.kron(Heff, eye) + 1j * sp.kron(eye, Heff.conj())
        for k, a in self.collapse:
            a_s = sp.csr_matrix(a)
            L = L + 2 * k * sp.kron(a_s, a_s.conj())
        return L.tocsr()


def rk4_step(rho: np.ndarray, f_value: float, h: float, model: LindbladModel) -> np.ndarray:
    """One classical RK4 step with the input held at ``f_value``; re-symmetrizes."""
    return model.rk4(rho, f_value, h, 1)


def liouvillian_gap(model: LindbladModel, f: float) -> float:
    """Smallest nonzero relaxation rate -Re(lambda) of the Liouvillian."""
    L = model.liouvillian(f)
    if L.shape[0] <= 1600:
        lam = np.linalg.eigvals(L.toarray())
    else:
        lam = spla.eigs(L, k=6, sigma=1e-3, which="LM", return_eigenvectors=False)
    rates = np.sort(-lam.real)
    return float(rates[1])


def _trace_constrained(model: LindbladModel, f: float) -> sp.csc_matrix:
    """Liouvillian with its first equation replaced by tr(rho) = 1."""
    d = model.space.dim
    L = model.liouvillian(f).tolil()
    trace_row = np.zeros(d * d, dtype=complex)
    trace_row[:: d + 1] = 1.0
    L[0, :] = trace_row
    return L.tocsc()


def steady_state(model: LindbladModel, f: float, rtol: float = 1e-13) -> np.ndarray:
    """Null vector of the Liouvillian normalized to unit trace.

    One sparse LU at f = 0 is cached on the model and preconditions GMRES for
    every other input; the drive is a small perturbation whenever the decay is
    strong enough for steady propagation. Falls back to a direct solve.
    """
    d = model.space.dim
    b = np.zeros(d * d, dtype=complex)
    b[0] = 1.0
    A = _trace_constrained(model, f)
    lu = model._step_memo.get("steady_lu")
    if lu is None:
        lu = model._step_memo["steady_lu"] = spla.splu(_trace_constrained(model, 0.0))
    x = lu.solve(b)
    if f != 0.0:
        M = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=complex)
        x, info = spla.gmres(A, b, x0=x, M=M, rtol=rtol, atol=0.0, restart=40, maxiter=10)
        if info != 0 or np.linalg.norm(A @ x - b) > 10 * rtol:
            x = spla.spsolve(A, b)
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + dag(rho))
    return rho / np.trace(rho).real


def validate_steady(model: LindbladModel, config: EvolutionConfig, f_values) -> float:
    """Check ``"steady"`` is exact to ~exp(-steady_min_decay); return the smallest gap."""
    gap = min(liouvillian_gap(model, float(f)) for f in f_values)
    if gap * config.dt_sample < config.steady_min_decay:
        raise DynamicsError(
            f"Liouvillian gap {gap:.3g} too small for steady-state propagation "
            f"over dt={config.dt_sample} (need gap*dt >= {config.steady_min_decay})"
        )
    return gap


def evolve_interval(
    rho: np.ndarray,
    f_k: float,
    config: EvolutionConfig,
    model: LindbladModel,
) -> np.ndarray:
    """Advance ``rho`` by ``config.dt_sample`` with the input held at ``f_k``."""
    if config.method == "chebyshev":
        rho = model.chebyshev(rho, f_k, config.dt_sample)
    elif config.method == "rk4":
        h_max = None if config.substep is not None else model.stable_substep(f_k)
        n = config.n_substeps(h_max)
        rho = model.rk4(rho, f_k, config.dt_sample / n, n)
    else:
        rho = steady_state(model, f_k)
    tail = top_fock_population(rho, model.space)
    if tail > config.fock_tail_threshold:
        raise DynamicsError(
            f"top Fock population {tail:.3e} exceeds threshold {config.fock_tail_threshold:.1e}; "
            "increase n_fock"
        )
    return rho
