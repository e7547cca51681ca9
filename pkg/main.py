#!/usr/bin/env python3
"""
Relic Sketch - Sketch extraction toolkit for painted cultural relics
FDoG lines, coarse cascade network, U-Net refiner, evaluation and MNF tooling
"""

import argparse
import importlib
import logging
import sys
import traceback
from typing import List, Optional

from relic_sketch import settings
from relic_sketch.errors import RelicSketchError

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(settings.log_file()),
        logging.StreamHandler(sys.stdout)
    ]
)
logger = logging.getLogger(__name__)

COMMAND_MODULES = [
    'relic_sketch.commands.fdog',
    'relic_sketch.commands.training',
    'relic_sketch.commands.extraction',
    'relic_sketch.commands.evaluation',
    'relic_sketch.commands.ablation',
    'relic_sketch.commands.hyperspectral',
    'relic_sketch.commands.synth',
]


class RelicSketchCLI:
    """Argument parser assembled from command modules, each exposing setup(cli)"""

    def __init__(self):
        self.parser = argparse.ArgumentParser(prog="relic-sketch", description=__doc__.strip().splitlines()[0])
        self.subparsers = self.parser.add_subparsers(dest="command", metavar="command")
        self.groups = []

    def add_command_group(self, group):
        group.register(self.subparsers)
        self.groups.append(group)

    def load_command_modules(self):
        loaded_count = 0
        failed_modules = []

        for name in COMMAND_MODULES:
            try:
                module = importlib.import_module(name)
                module.setup(self)
                logger.debug(f"✅ Loaded command module: {name}")
                loaded_count += 1
            except Exception as e:
                logger.error(f"❌ Failed to load command module {name}: {e}")
                logger.error(f"Command module traceback: {traceback.format_exc()}")
                failed_modules.append(name)

        logger.debug(f"📊 Loaded {loaded_count}/{len(COMMAND_MODULES)} command modules")
        if failed_modules:
            logger.warning(f"⚠️ Continuing without: {failed_modules}")
        return loaded_count, failed_modules

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        if not getattr(args, "handler", None):
            self.parser.print_help()
            return 2
        logger.info(f"🚀 relic-sketch {args.command}")
        return args.handler(args)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    cli = RelicSketchCLI()
    cli.load_command_modules()
    try:
        return cli.run(argv)
    except SystemExit as e:
        # argparse usage errors
        return e.code if isinstance(e.code, int) else 2
    except RelicSketchError as e:
        logger.error(f"❌ {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"❌ Unexpected error: {e}")
        logger.error(traceback.format_exc())
        return 1


if __name__ == "__main__":
    sys.exit(main())
