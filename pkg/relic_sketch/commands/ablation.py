"""
Relic Sketch - Ablation Command
"""

import asyncio
import logging

from relic_sketch.commands.common import CommandGroup, add_config_arguments, command_handler, config_from_args
from relic_sketch.parsers.manifest_parser import load_manifest
from relic_sketch.training.pipeline import ABLATION_AXES, ablate

logger = logging.getLogger(__name__)


class AblationCommands(CommandGroup):
    def register(self, subparsers):
        parser = subparsers.add_parser("ablate", help="Sweep loss weights or refiner fusion levels")
        parser.add_argument("--data", required=True)
        parser.add_argument("--axis", required=True, choices=ABLATION_AXES)
        parser.add_argument("--out", required=True)
        add_config_arguments(parser)
        parser.set_defaults(handler=self.ablate)

    @command_handler
    def ablate(self, args):
        config = config_from_args(args)
        report = asyncio.run(ablate(config, load_manifest(args.data), args.axis, out_path=args.out))
        logger.info(f"✅ Ablation over {args.axis}: {len(report['rows'])} rows written to {args.out}")


def setup(cli):
    cli.add_command_group(AblationCommands(cli))
