"""Named sweep bundles that regenerate the data behind the benchmark figures.

Each preset is a list of :class:`Job`; a job is a sweep template plus the
regression modes to score on the shared readouts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harness import ExperimentConfig

__all__ = ["Job", "PRESETS", "preset_jobs"]


@dataclass(frozen=True)
class Job:
    label: str
    template: ExperimentConfig
    axis: str
    values: tuple
    ladder: str = "omega"
    regressions: tuple[str, ...] = ("linear", "polynomial")


def _atom_ladders(base: ExperimentConfig, prefix: str) -> list[Job]:
    jobs = [Job(f"{prefix}_{lad}", base, "n_atom", (1, 2, 3, 4, 5), lad) for lad in ("omega", "g")]
    esn = base.replace(reservoir="esn")
    jobs.append(Job(f"{prefix}_esn", esn, "neurons", (4, 6, 8, 10, 12), regressions=("linear",)))
    return jobs


def preset_jobs(name: str, base: ExperimentConfig | None = None) -> list[Job]:
    """Jobs for a preset; ``base`` supplies overrides (zones, fock, seed, ...)."""
    base = base or ExperimentConfig()
    mg = base.replace(task="mackey_glass")
    ss = base.replace(task="sine_square")
    three = dict(omega_atoms=(0.0, 20.0, 40.0), g=(30.0, 30.0, 30.0))
    five_omega = dict(omega_atoms=(0.0, 10.0, 20.0, 30.0, 40.0), g=(30.0,) * 5)
    five_g = dict(omega_atoms=(20.0,) * 5, g=(10.0, 20.0, 30.0, 40.0, 50.0))
    if name == "fig3a":
        return _atom_ladders(mg, "fig3a")
    if name == "fig3b":
        # measured atom (omega=20, g=30) plus hidden atoms from HIDDEN_OMEGA_POOL
        return [Job("fig3b", mg, "hidden_atoms", (0, 1, 2, 3, 4))]
    if name == "fig4":
        return [Job("fig4", mg.replace(**three), "delay", (2, 5, 10, 20, 50, 100, 150, 200))]
    if name == "fig5":
        kappas = tuple(float(k) for k in np.logspace(1, 5, 9))
        return [Job("fig5", mg.replace(**three), "kappa", kappas)]
    if name == "fig7a":
        return _atom_ladders(ss, "fig7a")
    if name == "fig8a":
        n_ss = (4, 8, 16, 32, 64)
        return [Job("fig8a_omega", ss.replace(**five_omega), "n_ss", n_ss, regressions=("polynomial",)),
                Job("fig8a_g", ss.replace(**five_g), "n_ss", n_ss, regressions=("polynomial",))]
    raise KeyError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")


PRESETS = ("fig3a", "fig3b", "fig4", "fig5", "fig7a", "fig8a")
