"""Command-line entry point: ``gsav-gl run | converge | audit``.

Exit codes: 0 success / all audits pass, 1 usage or configuration error,
2 solver failure, 3 audit failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, dump_config, load_config
from .harness import audit_result, temporal_convergence
from .io import OutputError, write_manifest, write_snapshot, write_timeseries
from .observables import vortex_count
from .stepper import run

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_AUDIT = 0, 1, 2, 3

log = logging.getLogger("gsav_gl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--preset", choices=["square", "multiconnected", "custom"])
    p.add_argument("--kappa", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--T", type=float, dest="T")
    p.add_argument("--n", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gsav-gl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_common(sub.add_parser("run", help="integrate one configuration"))
    conv = sub.add_parser("converge", help="temporal self-convergence study")
    _add_common(conv)
    conv.add_argument("--taus", required=True, help="comma separated time steps")
    conv.add_argument("--tau-ref", type=float, required=True, dest="tau_ref")
    conv.add_argument("--workers", type=int, default=None)
    _add_common(sub.add_parser("audit", help="run and check discrete invariants"))
    return parser


def _resolve(args):
    overrides = {k: getattr(args, k) for k in ("preset", "kappa", "tau", "T", "n", "out")}
    overrides = {k: str(v) for k, v in overrides.items() if v is not None}
    return load_config(args.config, overrides)


def _write_outputs(result, cfg, audit, started: float) -> list[str]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    ts = out / "timeseries.csv"
    write_timeseries(result.series, ts)
    files.append(str(ts))
    for step, _t, psi, A in result.snapshots:
        f = out / f"snapshot_{step:06d}.vtk"
        write_snapshot(psi, A, result.mesh, result.dofmap, f)
        files.append(str(f))
    (out / "config.txt").write_text(dump_config(cfg))
    files.append(str(out / "config.txt"))
    manifest = {
        "config": cfg.as_dict(),
        "version": __version__,
        "wall_clock_seconds": time.perf_counter() - started,
        "audit": audit.as_dict(),
        "failure": result.failure,
        "final_vortex_count": vortex_count(result.psi, result.mesh, result.dofmap),
        "warnings": result.warnings,
        "outputs": files,
    }
    write_manifest(out / "manifest.json", manifest)
    return files


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"gsav-gl: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "converge":
        try:
            taus = [float(t) for t in args.taus.split(",") if t.strip()]
            report = temporal_convergence(cfg, taus, args.tau_ref, args.workers)
        except ValueError as exc:
            print(f"gsav-gl: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except RuntimeError as exc:
            print(f"gsav-gl: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        print("\n".join(report.report_lines()))
        return EXIT_OK

    started = time.perf_counter()
    progress = None
    if args.verbose:
        def progress(rep):
            s = rep.state
            log.info("step %d t=%.4f G=%.8g r=%.8g zeta=%.6f case=%d max|psi|=%.6f",
                     s.step, s.t, rep.G_new, s.r, s.zeta, s.case_id, rep.max_psi)
    result = run(cfg, progress=progress)
    audit = audit_result(result)
    for w in result.warnings:
        log.warning(w)
    if cfg.out:
        try:
            _write_outputs(result, cfg, audit, started)
        except OutputError as exc:
            print(f"gsav-gl: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.command == "audit":
        print("\n".join(audit.report_lines()))
    else:
        print(f"steps={len(result.reports)} t={result.reports[-1].state.t if result.reports else 0.0!r}")
        print(f"energy={result.reports[-1].G_new if result.reports else result.G0!r}")
        print(f"vortices={vortex_count(result.psi, result.mesh, result.dofmap)}")
    if result.failure:
        print(f"gsav-gl: {result.failure}", file=sys.stderr)
        return EXIT_SOLVER
    if args.command == "audit" and not audit.ok:
        return EXIT_AUDIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
