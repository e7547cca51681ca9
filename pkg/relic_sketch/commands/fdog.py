"""
Relic Sketch - FDoG Command
Classical coherent line extraction for a single image
"""

import logging

from relic_sketch.commands.common import CommandGroup, command_handler
from relic_sketch.fdog.flow import FdogParams
from relic_sketch.fdog.lines import extract_fdog
from relic_sketch.parsers.image_parser import load_gray, save_gray

logger = logging.getLogger(__name__)


class FdogCommands(CommandGroup):
    def register(self, subparsers):
        parser = subparsers.add_parser("fdog", help="Extract a binary line drawing with flow-guided DoG")
        parser.add_argument("--in", dest="image", required=True, help="Grayscale PNG")
        parser.add_argument("--out", required=True)
        defaults = FdogParams()
        parser.add_argument("--radius", type=float, default=defaults.radius)
        parser.add_argument("--iters", dest="etf_iters", type=int, default=defaults.etf_iters, help="ETF smoothing passes")
        parser.add_argument("--sigma-c", type=float, default=defaults.sigma_c)
        parser.add_argument("--sigma-m", type=float, default=defaults.sigma_m)
        parser.add_argument("--rho", type=float, default=defaults.rho)
        parser.add_argument("--tau", type=float, default=defaults.tau)
        parser.add_argument("--line-iters", type=int, default=defaults.line_iters)
        parser.add_argument("--eta", type=float, default=defaults.eta)
        parser.set_defaults(handler=self.fdog)

    @command_handler
    def fdog(self, args):
        params = FdogParams(radius=args.radius, etf_iters=args.etf_iters, sigma_c=args.sigma_c,
                            sigma_m=args.sigma_m, rho=args.rho, tau=args.tau, line_iters=args.line_iters,
                            eta=args.eta)
        lines = extract_fdog(load_gray(args.image), params)
        save_gray(lines, args.out, display_invert=True)
        logger.info(f"✅ FDoG lines written to {args.out} ({int(lines.pixels.sum())} line pixels)")


def setup(cli):
    cli.add_command_group(FdogCommands(cli))
