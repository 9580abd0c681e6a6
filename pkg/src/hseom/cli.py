"""Command line entry point: ``hseom run|resume|bath-table|validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bath import BathSpec, bessel_coefficients, corr_exact, reconstruct_corr
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .io import format_float
from .propagator import NumericalError
from .runner import (EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_RESOURCE, Experiment, ResourceError,
                     memory_estimate)

log = logging.getLogger("hseom")


def _set_threads(n: int | None):
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _output_dir(args, cfg) -> Path:
    out = args.output or cfg.output_dir
    if out is None:
        raise ConfigError("output: no directory given (use --output or output.directory)")
    return Path(out)


def _finish(exp: Experiment, out: Path) -> int:
    exp.run()
    files = exp.write_outputs(out)
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _output_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    exp = Experiment(cfg, checkpoint_path=out / "checkpoint.bin")
    print(f"memory estimate {exp.estimate} bytes ({exp.estimate / 2**30:.3g} GB) per AWF set; "
          f"hierarchy {exp.space.size} members, dimension {exp.H.dim}")
    return _finish(exp, out)


def cmd_resume(args) -> int:
    cfg = load_config(args.config) if args.config else None
    exp = Experiment.resume(args.checkpoint, cfg)
    out = Path(args.output) if args.output else (Path(exp.cfg.output_dir) if exp.cfg.output_dir
                                                  else Path(args.checkpoint).parent)
    return _finish(exp, out)


def cmd_bath_table(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        bath, K = cfg.bath, cfg.K
    else:
        bath, K = BathSpec(args.zeta, args.nu, args.beta), args.K
    exp = bessel_coefficients(bath, K)
    out = Path(args.output) if args.output else None
    lines = ["k,re,im"] + [f"{k},{format_float(c.real)},{format_float(c.imag)}" for k, c in enumerate(exp.coeffs)]
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    (out / "bath_coefficients.csv").write_text(text)
    ts = np.arange(0.0, args.t_max + 1e-12, args.dt_table)
    rec = reconstruct_corr(exp, ts)
    rows = ["t,re_alpha,im_alpha,re_reconstruction,im_reconstruction"]
    for t, r in zip(ts, rec):
        a = corr_exact(bath, t)
        rows.append(",".join(format_float(v) for v in (t, a.real, a.imag, r.real, r.imag)))
    (out / "bath_residual.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote bath tables to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    est = memory_estimate(cfg.K, cfg.depth, cfg.system.n_spins)
    budget = cfg.resources["memory_budget_gb"]
    print(f"config ok: hash {cfg.hash}")
    print(f"memory estimate {est} bytes ({est / 2**30:.3g} GB) per AWF set, budget {budget} GB")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hseom", description=__doc__)
    p.add_argument("--threads", type=int, default=None, help="worker threads for the propagation kernel")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="output directory (overrides output.directory)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("resume", help="continue from a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--config", help="config to check against the checkpoint hash")
    s.add_argument("--output")
    s.set_defaults(func=cmd_resume)

    b = sub.add_parser("bath-table", help="dump Bessel coefficients and the kernel residual")
    b.add_argument("--config")
    b.add_argument("--zeta", type=float, default=0.01)
    b.add_argument("--nu", type=float, default=2.0)
    b.add_argument("--beta", default="inf")
    b.add_argument("--K", type=int, default=40)
    b.add_argument("--t-max", type=float, default=20.0)
    b.add_argument("--dt-table", type=float, default=0.1)
    b.add_argument("--output")
    b.set_defaults(func=cmd_bath_table)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(args.threads)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
