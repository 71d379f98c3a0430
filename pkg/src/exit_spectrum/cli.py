"""Command-line entry point ``exit-spectrum``.

Exit status: 0 when every check passes, 1 when a check fails (or a Monte
Carlo z-score is flagged for ``mc``), 2 on a configuration or library error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import FORMATS, parse_config
from .errors import ExitSpectrumError
from .montecarlo import SCHEMES, McConfig
from .report import render_text, run, write_report


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exit-spectrum", description="Exit-time moments and Dirichlet eigenvalue bounds.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the full pipeline for a config")
    r.add_argument("config")
    r.add_argument("--out", help="write the report here instead of stdout")
    r.add_argument("--format", choices=FORMATS, help="report format (default: config output.format)")

    m = sub.add_parser("mc", help="Monte Carlo cross-check against the solver")
    m.add_argument("config")
    m.add_argument("--paths", type=int, required=True)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--dt", type=float)
    m.add_argument("--scheme", choices=SCHEMES)
    m.add_argument("--kmax", type=int, default=2)
    m.add_argument("--threads", type=int, default=1)
    m.add_argument("--out")
    m.add_argument("--format", choices=FORMATS)

    b = sub.add_parser("bounds", help="moment table and eigenvalue bounds only")
    b.add_argument("config")
    b.add_argument("-K", type=int, help="highest moment order")
    b.add_argument("--beta", type=float, action="append", default=[], help="absolute beta in (0, lambda0); repeatable")
    b.add_argument("--out")
    b.add_argument("--format", choices=FORMATS)
    return p


def _mc_config(cfg, args) -> McConfig:
    base = cfg.mc
    if base is None:
        default = {"diffusion": "euler-maruyama", "fractional": "stable-increment"}.get(cfg.model_kind, "exact-jump")
        base = McConfig(scheme=args.scheme or default, dt=args.dt or (1e-4 if (args.scheme or default) != "exact-jump" else None))
    changes = {"n_paths": args.paths, "seed": args.seed, "kmax": args.kmax, "threads": args.threads}
    if args.scheme:
        changes["scheme"] = args.scheme
    if args.dt is not None:
        changes["dt"] = args.dt
    return replace(base, **changes)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.command == "mc":
            cfg.mc = _mc_config(cfg, args)
        elif args.command == "bounds":
            cfg.mc = None
            if args.K is not None:
                cfg.K = args.K
            if args.beta:
                cfg.betas = args.beta
                cfg.beta_fractions = []
        report = run(cfg)
    except ExitSpectrumError as exc:
        print(f"error [{exc.module}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error [cli_report] {exc}", file=sys.stderr)
        return 2

    fmt = args.format or cfg.output_format
    path = args.out or cfg.output_path
    text = write_report(report, fmt, path)
    if not path:
        sys.stdout.write(text)
    elif fmt != "text":
        sys.stdout.write(render_text(report.to_dict()))

    if args.command == "mc":
        flagged = any(r["flagged"] for r in report.mc["z_table"])
        return 1 if flagged or not report.passed else 0
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
