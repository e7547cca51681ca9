"""
Relic Sketch - Evaluation Command
"""

import asyncio
import logging

from relic_sketch.commands.common import CommandGroup, command_handler
from relic_sketch.training.pipeline import evaluate_dirs
from relic_sketch.utils.artifacts import write_json

logger = logging.getLogger(__name__)


class EvaluationCommands(CommandGroup):
    def register(self, subparsers):
        parser = subparsers.add_parser("eval", help="Score predicted sketches against ground truth")
        parser.add_argument("--pred-dir", required=True)
        parser.add_argument("--gt-dir", required=True)
        parser.add_argument("--out", required=True, help="JSON report path")
        parser.add_argument("--d-max", type=float, default=None,
                            help="match tolerance in pixels (default: 0.75%% of the image diagonal)")
        parser.add_argument("--threshold", type=float, default=0.5, help="binarisation threshold for recall")
        parser.add_argument("--pred-raw", action="store_true",
                            help="predictions are stored white-on-black (lines bright)")
        parser.add_argument("--gt-inverted", action="store_true",
                            help="ground truth is stored black-on-white")
        parser.set_defaults(handler=self.evaluate)

    @command_handler
    def evaluate(self, args):
        async def run():
            report = await evaluate_dirs(args.pred_dir, args.gt_dir, args.d_max, args.threshold,
                                         pred_invert=not args.pred_raw, gt_invert=args.gt_inverted)
            await write_json(args.out, report.to_dict())

        asyncio.run(run())
        logger.info(f"💾 Report written to {args.out}")


def setup(cli):
    cli.add_command_group(EvaluationCommands(cli))
