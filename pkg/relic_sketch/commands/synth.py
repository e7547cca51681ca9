"""
Relic Sketch - Synthetic Data Command
"""

import asyncio
import logging
from pathlib import Path

from relic_sketch.commands.common import CommandGroup, command_handler
from relic_sketch.parsers.cube_parser import save_cube
from relic_sketch.parsers.manifest_parser import save_manifest
from relic_sketch.utils.synthetic import generate_shape_corpus, planted_cube

logger = logging.getLogger(__name__)


class SynthCommands(CommandGroup):
    def register(self, subparsers):
        parser = subparsers.add_parser("synth", help="Generate a toy corpus or a planted-signal cube")
        parser.add_argument("--kind", choices=("natural", "relic", "cube"), default="natural")
        parser.add_argument("--out-dir", required=True)
        parser.add_argument("--count", type=int, default=32)
        parser.add_argument("--size", type=int, default=64)
        parser.add_argument("--bands", type=int, default=10)
        parser.add_argument("--seed", type=int, default=0)
        parser.set_defaults(handler=self.synth)

    @command_handler
    def synth(self, args):
        out_dir = Path(args.out_dir)
        if args.kind == "cube":
            cube, _ = planted_cube(args.bands, args.size, args.size, args.seed)
            save_cube(cube, out_dir / "cube.raw", out_dir / "cube.json")
            logger.info(f"✅ Planted cube ({args.bands}x{args.size}x{args.size}) written to {out_dir}")
            return
        manifest = generate_shape_corpus(out_dir, args.count, args.size, args.seed, args.kind)
        asyncio.run(save_manifest(manifest, out_dir / "manifest.json"))


def setup(cli):
    cli.add_command_group(SynthCommands(cli))
