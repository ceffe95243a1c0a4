import argparse
import logging
import sys
from typing import Dict, List, Optional

from config import Config, configure_logging
from exceptions import ConfigError
from services.pipeline_service import DNLS_CHECKS, load_config_file, resolve_config, run

logger = logging.getLogger("nonsqueeze")

# CLI flag dest -> config key
FLAG_KEYS = {
    'seed': 'seed',
    'nr': 'grid.nr',
    'ntheta': 'grid.ntheta',
    'boundary_samples': 'grid.boundary_samples',
    'a': 'disc.a',
    'd_w': 'disc.d_w',
    'structure': 'disc.structure',
    'z0': 'disc.z0',
    'w0': 'disc.w0',
    'damping': 'disc.damping',
    'tol': 'disc.tol',
    'max_iter': 'disc.max_iter',
    'half_window': 'dnls.half_window',
    'exponent': 'dnls.exponent',
    't_final': 'dnls.t_final',
    'dt': 'dnls.dt',
    'coupling': 'dnls.coupling',
    'coupling_file': 'dnls.coupling_file',
    'pipeline_half_window': 'pipeline.half_window',
    'pipeline_d_w': 'pipeline.d_w',
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value or .json experiment config")
    parser.add_argument("--out", help=f"output directory (default {Config.OUTPUT_DIR})")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set grid.nr=48")
    parser.add_argument("--nr", type=int, help="radial Gauss-Legendre nodes")
    parser.add_argument("--ntheta", type=int, help="angular nodes")
    parser.add_argument("--boundary-samples", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=Config.APP_NAME,
        description="Desk-scale numerics for non-squeezing: transforms, J-discs, lattice NLS.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)

    ops = sub.add_parser("validate-ops", help="Cauchy-Green transform and symplectic-calculus invariants")
    _add_common(ops)

    disc = sub.add_parser("solve-disc", help="J-holomorphic disc through a point of the triangular cylinder")
    _add_common(disc)
    disc.add_argument("--a", type=float, help="structure bound ||A||")
    disc.add_argument("--d-w", type=int, help="number of w-coordinates")
    disc.add_argument("--structure", choices=["random", "hermitian", "zero"])
    disc.add_argument("--z0", help="base point in the triangle, e.g. 0.4j")
    disc.add_argument("--w0", help="w-coordinates of the base point, ';'-separated, e.g. '0.1;-0.2j'")
    disc.add_argument("--damping", type=float, help="outer Picard damping in (0, 1]")
    disc.add_argument("--tol", type=float, help="outer tolerance")
    disc.add_argument("--max-iter", type=int, help="outer iteration cap")

    lattice = sub.add_parser("dnls", help="lattice NLS flow, conservation and linearized-flow checks")
    _add_common(lattice)
    lattice.add_argument("--check", action="append", choices=DNLS_CHECKS,
                         help="run only these checks (repeatable)")
    lattice.add_argument("--half-window", "--n", dest="half_window", type=int)
    lattice.add_argument("--exponent", "--p", dest="exponent", type=float)
    lattice.add_argument("--t-final", "--t", dest="t_final", type=float)
    lattice.add_argument("--dt", type=float)
    lattice.add_argument("--coupling", type=float, help="nearest-neighbor strength")
    lattice.add_argument("--coupling-file", help="dense coupling matrix as JSON [re, im] rows")

    pipe = sub.add_parser("nonsqueeze-pipeline", help="flow Jacobian -> structure field -> disc diagnostics")
    _add_common(pipe)
    pipe.add_argument("--pipeline-half-window", type=int)
    pipe.add_argument("--pipeline-d-w", type=int)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[key] = value
    if getattr(args, "check", None):
        values['dnls.checks'] = ",".join(args.check)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", keys=[item])
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        file_values = load_config_file(args.config) if args.config else {}
        config = resolve_config(args.kind, file_values, _overrides(args), output_dir=args.out)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return 2

    report = run(config)
    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        logger.warning(f"{len(failed)} checks failed: {', '.join(failed)}")
    logger.info(f"Results in {config.output_dir}")
    return 0 if report.passed else 1


if __name__ == '__main__':
    sys.exit(main())
