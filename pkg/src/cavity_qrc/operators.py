"""Hilbert space and operator construction for atoms in a single-mode cavity.

Basis ordering is Fock index slowest, then atoms 1..N in order, each atom in
the (|g>, |e>) basis. All operators are dense complex128 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

__all__ = [
    "DEFAULT_DIM_CAP",
    "HilbertSpace",
    "OperatorSet",
    "build_space",
    "annihilation_op",
    "atom_lowering_op",
    "build_H0",
    "build_drive_op",
    "observable_set",
    "fock_projector",
    "embed",
    "dag",
]

DEFAULT_DIM_CAP = 4096


@dataclass(frozen=True)
class HilbertSpace:
    """Composite Fock(n_fock) x qubit^n_atom space."""

    n_fock: int
    n_atom: int

    @property
    def dim(self) -> int:
        return self.n_fock * 2**self.n_atom

    @property
    def factor_dims(self) -> tuple[int, ...]:
        return (self.n_fock,) + (2,) * self.n_atom


def build_space(n_fock: int, n_atom: int, dim_cap: int = DEFAULT_DIM_CAP) -> HilbertSpace:
    if n_fock < 2:
        raise ValueError(f"n_fock must be >= 2, got {n_fock}")
    if n_atom < 0:
        raise ValueError(f"n_atom must be >= 0, got {n_atom}")
    space = HilbertSpace(n_fock, n_atom)
    if space.dim > dim_cap:
        raise ValueError(
            f"Hilbert space dimension {space.dim} exceeds cap {dim_cap}; "
            "lower n_fock/n_atom or raise dim_cap"
        )
    return space


def dag(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def embed(space: HilbertSpace, factor: int, op: np.ndarray) -> np.ndarray:
    """Embed a single-factor operator at position ``factor`` (0 = cavity)."""
    dims = space.factor_dims
    if not 0 <= factor < len(dims):
        raise IndexError(f"factor {factor} out of range for {len(dims)} factors")
    if op.shape != (dims[factor], dims[factor]):
        raise ValueError(f"operator shape {op.shape} does not match factor dim {dims[factor]}")
    mats = [op if k == factor else np.eye(d, dtype=complex) for k, d in enumerate(dims)]
    return reduce(np.kron, mats).astype(complex)


def _destroy(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


_SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|


def annihilation_op(space: HilbertSpace) -> np.ndarray:
    """Truncated photon lowering operator, <n-1|c|n> = sqrt(n)."""
    return embed(space, 0, _destroy(space.n_fock))


def atom_lowering_op(space: HilbertSpace, i: int) -> np.ndarray:
    """Lowering operator |g><e| of atom ``i`` (0-based)."""
    if not 0 <= i < space.n_atom:
        raise IndexError(f"atom index {i} out of range for {space.n_atom} atoms")
    return embed(space, 1 + i, _SIGMA_MINUS)


def _check_lengths(space: HilbertSpace, **lists) -> None:
    for name, values in lists.items():
        if len(values) != space.n_atom:
            raise ValueError(
                f"{name} has length {len(values)} but the space has {space.n_atom} atoms"
            )


def build_H0(space: HilbertSpace, params) -> np.ndarray:
    """Time-independent Tavis-Cummings Hamiltonian.

    ``params`` needs ``omega_c``, ``omega_atoms`` and ``g`` attributes
    (a :class:`~cavity_qrc.dynamics.ReservoirParams` works).
    """
    omega_atoms = list(params.omega_atoms)
    g = list(params.g)
    _check_lengths(space, omega_atoms=omega_atoms, g=g)
    c = annihilation_op(space)
    H = params.omega_c * (dag(c) @ c)
    for i in range(space.n_atom):
        s = atom_lowering_op(space, i)
        H = H + omega_atoms[i] * (dag(s) @ s)
        H = H + g[i] * (dag(c) @ s + c @ dag(s))
    return H


def build_drive_op(space: HilbertSpace) -> np.ndarray:
    """D = i(c - c^dag); the drive Hamiltonian is epsilon * f(t) * D."""
    c = annihilation_op(space)
    return 1j * (c - dag(c))


def fock_projector(space: HilbertSpace, n: int | None = None) -> np.ndarray:
    """Projector onto Fock level ``n`` (default: the top retained level)."""
    if n is None:
        n = space.n_fock - 1
    p = np.zeros((space.n_fock, space.n_fock), dtype=complex)
    p[n, n] = 1.0
    return embed(space, 0, p)


@dataclass(frozen=True)
class OperatorSet:
    """Cavity and atom operators embedded in the full space."""

    space: HilbertSpace
    c: np.ndarray
    c_dag: np.ndarray
    sigma: tuple[np.ndarray, ...]
    sigma_dag: tuple[np.ndarray, ...]
    Q: np.ndarray
    P: np.ndarray
    sigma_x: tuple[np.ndarray, ...]
    sigma_y: tuple[np.ndarray, ...]
    names: tuple[str, ...] = field(default=())

    @property
    def observables(self) -> list[np.ndarray]:
        """Q, P, sigma_x_1, sigma_y_1, sigma_x_2, ... (length 2*n_atom + 2)."""
        out = [self.Q, self.P]
        for sx, sy in zip(self.sigma_x, self.sigma_y):
            out += [sx, sy]
        return out


def observable_names(n_atom: int) -> tuple[str, ...]:
    names = ["Q", "P"]
    for i in range(1, n_atom + 1):
        names += [f"sx{i}", f"sy{i}"]
    return tuple(names)


def observable_set(space: HilbertSpace) -> OperatorSet:
    c = annihilation_op(space)
    cd = dag(c)
    sigma = tuple(atom_lowering_op(space, i) for i in range(space.n_atom))
    sigma_dag = tuple(dag(s) for s in sigma)
    return OperatorSet(
        space=space,
        c=c,
        c_dag=cd,
        sigma=sigma,
        sigma_dag=sigma_dag,
        Q=c + cd,
        P=1j * (c - cd),
        sigma_x=tuple(s + sd for s, sd in zip(sigma, sigma_dag)),
        sigma_y=tuple(1j * (s - sd) for s, sd in zip(sigma, sigma_dag)),
        names=observable_names(space.n_atom),
    )
