"""Command line: ``vortsel <command> [--config FILE] [--key=value ...]``.

Every ExperimentConfig key can be overridden with ``--key=value``.  Outputs
go to a run directory named after the command and a hash of the resolved
configuration, with ``manifest.json`` listing each artifact and its sha256.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import io as vio

log = logging.getLogger("vortsel")

COMMANDS = ("spectrum", "background", "layer", "evolve", "scan", "golovkin", "report")


def _split_overrides(extra: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ex.ConfigError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            try:
                val = next(it)
            except StopIteration:
                raise ex.ConfigError(f"missing value for --{key}") from None
        out[key] = val
    return out


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ex.ConfigError(f"expected a comma separated list of numbers, got {text!r}") from exc


def _horizon(cfg: ex.ExperimentConfig, tau: float) -> ex.ExperimentConfig:
    """Same config with the viscosity range cut so the background reaches just past ``tau``."""
    nu = math.exp(-cfg.gamma * tau)
    return cfg.with_overrides({"nu_min": nu, "nu_max": 10.0 * nu})


class RunDir:
    def __init__(self, root: Path, command: str, cfg: ex.ExperimentConfig, extra: dict):
        blob = json.dumps({"command": command, "config": cfg.items(), "extra": sorted(extra.items())})
        digest = hashlib.sha256(blob.encode()).hexdigest()[:12]
        self.path = root / f"{command}-{digest}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.command, self.cfg, self.extra = command, cfg, extra
        self.artifacts: list[Path] = []

    def add(self, *paths: Path) -> None:
        self.artifacts.extend(Path(p) for p in paths)

    def write_manifest(self) -> Path:
        items = [{"file": p.relative_to(self.path).as_posix(), "sha256": vio.sha256_file(p)}
                 for p in sorted(set(self.artifacts))]
        manifest = {"command": self.command, "config": dict(self.cfg.items()),
                    "options": {k: str(v) for k, v in sorted(self.extra.items())}, "artifacts": items}
        path = self.path / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


# ---------------------------------------------------------------------------
# commands


def cmd_spectrum(cfg, run: RunDir, opts) -> None:
    from .spectral import SPECTRUM_COLUMNS, find_unstable_eigenvalue, similarity_operator, spectrum_rows
    from .similarity import similarity_grid
    from .vortex import build_vortex

    profile = build_vortex({"family": cfg.family, "amplitude": cfg.amplitude}, cfg.alpha)
    grid = similarity_grid(cfg.n, cfg.r_max, cfg.core)
    res = [find_unstable_eigenvalue(similarity_operator(profile, m, grid), threshold=-np.inf)
           for m in range(cfg.m0_min, cfg.m0_max + 1)]
    rows = spectrum_rows(res)
    run.add(vio.write_csv(run.path / "spectrum.csv", SPECTRUM_COLUMNS, rows))
    best = max(res, key=lambda r: r.a)
    eta = best.eigen_field(1.0, cfg.n_modes)
    run.add(vio.save_field(eta, run.path / f"eta_m{best.m}.vshk"))
    flag = "meets" if best.meets_target else "below"
    print(f"m0={best.m} lambda={best.lam:.6g} ({flag} a >= 4/alpha)")


def cmd_background(cfg, run: RunDir, opts) -> None:
    from .heat import (LEDGER_COLUMNS, background_power_laws, evolve_modified_background, ledger_rows,
                       profile_difference_norms)
    from .vortex import build_vortex, similarity_force

    profile = build_vortex({"family": cfg.family, "amplitude": cfg.amplitude}, cfg.alpha)
    t_end = math.exp(cfg.tau_end)
    traj = evolve_modified_background(similarity_force(profile), t_end=max(t_end, 1.0), dtau=cfg.heat_dtau,
                                      stride=5)
    led = profile_difference_norms(traj, ps=(2.0, 2.0 + 0.5))
    run.add(vio.write_csv(run.path / "background_ledger.csv", LEDGER_COLUMNS, ledger_rows(led)))
    pl = background_power_laws(traj)
    rows = [[float(t), float(e), float(c)] for t, e, c in zip(pl.times, pl.energy, pl.critical)]
    run.add(vio.write_csv(run.path / "background_power_laws.csv", ["t", "energy", "critical"], rows))
    print(f"energy exponent {pl.energy_exponent:.4g}, critical-norm exponent {pl.critical_exponent:.4g}")


def cmd_layer(cfg, run: RunDir, opts) -> None:
    from .layer import CONTROL_COLUMNS

    ws = ex.prepare(_horizon(cfg, cfg.tau0 + 0.5).with_overrides({"layer": True, "background": "heat"}))
    run.add(vio.write_csv(run.path / "control.csv", CONTROL_COLUMNS, ws.control["history"]))
    run.add(vio.save_field(ws.v0, run.path / "v0.vshk"))
    print(f"controllability residual {ws.control['residual']:.3g} after {ws.control['iterations']} iterations")


def cmd_evolve(cfg, run: RunDir, opts) -> None:
    from .similarity import (LEDGER_COLUMNS, SimilarityContext, evolve_ss_navier_stokes, evolve_uper_direct,
                             ledger, decompose_solution, similarity_grid)
    from .grid import l2_norm

    tau_end = cfg.tau_end
    if not tau_end > cfg.tau0:
        raise ex.ConfigError("need tau_end > tau0")
    ws = ex.prepare(_horizon(cfg, tau_end).with_overrides({"layer": False}))
    ctx = SimilarityContext(ws.profile, similarity_grid(cfg.n, cfg.r_max, cfg.core), ws.spec, ws.sampler,
                            cfg.n_modes)
    if opts.get("phi_file"):
        phi = vio.load_field(opts["phi_file"])
        if phi.grid.key != ctx.grid.key:
            raise ex.ConfigError("phi file is not on the similarity grid of this configuration")
        phi = ctx.field(phi.data, cfg.tau0)
    else:
        phi = ctx.mode_field(cfg.phi_amp, cfg.tau0)
    res = evolve_ss_navier_stokes(ctx, phi, cfg.tau0, tau_end, h=cfg.h, keep_every=10)
    run.add(vio.write_csv(run.path / "similarity_ledger.csv", LEDGER_COLUMNS, ledger(res)))
    run.add(vio.save_field(res.field(len(res.taus) - 1), run.path / "final.vshk"))
    if opts.get("direct_uper_check"):
        direct = evolve_uper_direct(res)
        rows = []
        for i, tau in enumerate(res.taus):
            d = decompose_solution(res, i)
            scale = float(np.max(abs(d.per.data))) or 1.0
            rows.append([float(tau), float(np.max(abs(direct[i] - d.per.data))) / scale, l2_norm(d.per)])
        run.add(vio.write_csv(run.path / "uper_direct.csv", ["tau", "rel_gap", "per_l2"], rows))
    print(f"evolved to tau={res.taus[-1]:.4g}")


def cmd_scan(cfg, run: RunDir, opts) -> None:
    ckpt = run.path / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    rep = ex.run_threshold_scan(cfg, ckpt_dir=ckpt)
    run.add(*ex.emit_report(rep, "csv", run.path))
    run.add(*ex.emit_report(rep, "plot-data", run.path, figures=True))
    run.add(*sorted(ckpt.glob("*.vshk")))
    for k, v in sorted(rep.summary.items()):
        print(f"{k} = {v}")


def cmd_golovkin(cfg, run: RunDir, opts) -> None:
    from .similarity import similarity_grid
    from .spectral import find_unstable_eigenvalue, similarity_operator
    from .vortex import build_vortex

    profile = build_vortex({"family": cfg.family, "amplitude": cfg.amplitude}, cfg.alpha)
    grid = similarity_grid(cfg.n, cfg.r_max, cfg.core)
    spec, _ = ex.pick_mode(profile, grid, range(cfg.m0_min, cfg.m0_max + 1))
    growth = float(opts["growth"]) if opts.get("growth") else None
    rep = ex.golovkin_forces(profile, spec, np.array(_floats(cfg.golovkin_nus)), tuple(_floats(cfg.golovkin_ps)),
                             growth=growth)
    run.add(*ex.emit_report(rep, "csv", run.path))
    run.add(*ex.emit_report(rep, "plot-data", run.path, figures=True))
    for k, v in sorted(rep.summary.items()):
        print(f"{k} = {v}")


def cmd_report(cfg, run: RunDir, opts) -> None:
    src = Path(opts.get("from", cfg.out_dir))
    files = sorted(f for f in src.rglob("*_plot.csv") if run.path not in f.parents)
    if not files:
        raise ex.ConfigError(f"no plot-data files under {src}")
    for f in files:
        series = ex.read_plot_data(f)
        rep = ex.Report(f.stem.removesuffix("_plot"), [], [], series=series)
        run.add(*ex.emit_report(rep, "plot-data", run.path, figures=True))
    print(f"rendered {len(files)} plot-data files")


HANDLERS = {"spectrum": cmd_spectrum, "background": cmd_background, "layer": cmd_layer, "evolve": cmd_evolve,
            "scan": cmd_scan, "golovkin": cmd_golovkin, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vortsel", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--run-root", help="parent of the run directory (default: out_dir)")
    p.add_argument("--phi-file", dest="phi_file")
    p.add_argument("--direct-uper-check", action="store_true", dest="direct_uper_check")
    p.add_argument("--growth", help="golovkin: override the growth rate of the linear solution")
    p.add_argument("--from", dest="from", help="report: directory holding plot-data files")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ex.load_config(args.config, _split_overrides(extra))
    except (ex.ConfigError, ValueError) as exc:
        parser.error(str(exc))
    opts = {k: v for k, v in vars(args).items() if k not in ("command", "config", "run_root", "verbose")
            and v not in (None, False)}
    run = RunDir(Path(args.run_root or cfg.out_dir), args.command, cfg, opts)
    try:
        HANDLERS[args.command](cfg, run, opts)
    except (ex.ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        run.write_manifest()
    print(f"run directory: {run.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
