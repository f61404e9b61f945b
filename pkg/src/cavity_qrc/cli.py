"""Command line entry point: ``cavity-qrc {run,sweep,reproduce}``.

Settings resolve as defaults < ``--config`` JSON file < flags. Config-file
keys are the :class:`~cavity_qrc.harness.ExperimentConfig` field names plus
``atoms``, ``ladder``, ``workers`` and ``out_dir``; every flag maps to one of
them (``--omega-list`` -> ``omega_atoms``, ``--fock`` -> ``n_fock``, dashes
to underscores otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .harness import SWEEP_AXES, ConfigError, ExperimentConfig, emit_report, ladder_params, run_experiment, sweep
from .presets import PRESETS, preset_jobs

FLAG_KEYS = {
    "task": "task", "reservoir": "reservoir", "atoms": "atoms", "ladder": "ladder",
    "omega_list": "omega_atoms", "g_list": "g", "kappa": "kappa", "omega_c": "omega_c",
    "epsilon": "epsilon", "delay": "delay", "n_ss": "n_ss", "omega_ss": "omega_ss",
    "regression": "regression", "hidden_atoms": "hidden_atoms", "fock": "n_fock",
    "substep": "substep", "method": "method", "zones": "zones", "waveforms": "waveforms",
    "esn_members": "esn_members", "esn_neurons": "esn_neurons", "spectral_cap": "spectral_cap",
    "seed": "seed", "workers": "workers", "out_dir": "out_dir",
}
RUNTIME_KEYS = ("atoms", "ladder", "workers", "out_dir")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with config keys")
    p.add_argument("--task", choices=["mackey_glass", "sine_square"])
    p.add_argument("--reservoir", choices=["quantum", "esn"])
    p.add_argument("--atoms", type=int, help="number of atoms; parameters from --ladder unless lists given")
    p.add_argument("--ladder", choices=["omega", "g"], help="parameter ladder for --atoms and atom sweeps")
    p.add_argument("--omega-list", type=_floats, help="per-atom detunings, comma separated")
    p.add_argument("--g-list", type=_floats, help="per-atom couplings, comma separated")
    p.add_argument("--kappa", type=float)
    p.add_argument("--omega-c", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delay", type=int)
    p.add_argument("--n-ss", type=int)
    p.add_argument("--omega-ss", type=float)
    p.add_argument("--regression", choices=["linear", "polynomial"])
    p.add_argument("--hidden-atoms", type=int)
    p.add_argument("--fock", type=int, help="Fock-space truncation N_c")
    p.add_argument("--substep", type=float, help="fixed RK4 step (default: largest stable step)")
    p.add_argument("--method", choices=["auto", "chebyshev", "rk4", "steady"])
    p.add_argument("--zones", type=_ints, help="Mackey-Glass fading,training,testing steps")
    p.add_argument("--waveforms", type=_ints, help="sine-square fading,training,testing waveforms")
    p.add_argument("--esn-members", type=int)
    p.add_argument("--esn-neurons", type=int)
    p.add_argument("--spectral-cap", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity-qrc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="single experiment")
    _add_common(run)
    sw = sub.add_parser("sweep", help="sweep one axis")
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, type=_floats)
    _add_common(sw)
    rep = sub.add_parser("reproduce", help="named figure preset")
    rep.add_argument("preset", choices=PRESETS)
    _add_common(rep)
    return parser


def resolve(args: argparse.Namespace) -> tuple[ExperimentConfig, dict]:
    """Merge config file and flags into an ExperimentConfig plus runtime options."""
    settings: dict = {}
    if args.config:
        try:
            settings.update(json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for flag, key in FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is not None:
            settings[key] = val
    runtime = {k: settings.pop(k) for k in RUNTIME_KEYS if k in settings}
    runtime.setdefault("workers", 1)
    runtime.setdefault("ladder", "omega")
    runtime["out_dir"] = Path(runtime.get("out_dir", "results"))
    atoms = runtime.get("atoms")
    if atoms is not None:
        om, g = ladder_params(int(atoms), runtime["ladder"])
        settings.setdefault("omega_atoms", om)
        settings.setdefault("g", g)
    if "omega_atoms" in settings and "g" not in settings:
        settings["g"] = [30.0] * len(settings["omega_atoms"])
    if "g" in settings and "omega_atoms" not in settings:
        settings["omega_atoms"] = [20.0] * len(settings["g"])
    return ExperimentConfig.from_dict(settings), runtime


def _print_rows(label: str, res) -> None:
    for v, tr, te, status in res.table():
        print(f"{label}\t{res.axis}={v}\ttrain={tr:.6g}\ttest={te:.6g}\t{status}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, rt = resolve(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = rt["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    timing = {}
    summary = {"command": args.command, "code_version": __version__, "config": config.to_dict(),
               "runtime": {k: str(v) for k, v in rt.items() if k != "out_dir"}, "outputs": []}
    t0 = time.perf_counter()
    if args.command == "run":
        res = run_experiment(config, workers=rt["workers"])
        emit_report(res, out, name="run")
        summary["outputs"].append({"label": "run", "train_nrmse": res.train_nrmse, "test_nrmse": res.test_nrmse})
        print(f"train NRMSE {res.train_nrmse:.6g}  test NRMSE {res.test_nrmse:.6g}")
    elif args.command == "sweep":
        values = [int(v) if float(v).is_integer() and args.axis != "kappa" else v for v in args.values]
        res = sweep(config, args.axis, values, ladder=rt["ladder"], workers=rt["workers"])
        emit_report(res, out, name=f"sweep_{args.axis}")
        summary["outputs"].append({"label": f"sweep_{args.axis}", "rows": res.table()})
        _print_rows(f"sweep_{args.axis}", res)
    else:
        cache: dict = {}
        for job in preset_jobs(args.preset, config):
            for reg in job.regressions:
                label = f"{job.label}_{reg}"
                t1 = time.perf_counter()
                res = sweep(job.template.replace(regression=reg), job.axis, job.values,
                            ladder=job.ladder, workers=rt["workers"], cache=cache)
                timing[label] = time.perf_counter() - t1
                emit_report(res, out, name=label)
                summary["outputs"].append({"label": label, "axis": job.axis, "rows": res.table()})
                _print_rows(label, res)
    timing["total"] = time.perf_counter() - t0
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
