"""
Relic Sketch - Hyperspectral Commands
MNF rotation, MNF denoising and single-band export
"""

import asyncio
import logging
from pathlib import Path

from relic_sketch.commands.common import CommandGroup, command_handler
from relic_sketch.errors import ParameterError
from relic_sketch.hyperspectral.mnf import mnf, mnf_denoise, select_band
from relic_sketch.parsers.cube_parser import load_cube, save_cube
from relic_sketch.parsers.image_parser import save_gray
from relic_sketch.utils.artifacts import write_json

logger = logging.getLogger(__name__)


class HyperspectralCommands(CommandGroup):
    def register(self, subparsers):
        rotate = subparsers.add_parser("mnf", help="Minimum noise fraction rotation of a cube")
        rotate.add_argument("--cube", required=True)
        rotate.add_argument("--meta", required=True)
        rotate.add_argument("--out-dir", required=True)
        rotate.add_argument("--preview", type=int, default=None,
                            help="cap on the leading components written as PNG (default: all)")
        rotate.add_argument("--denoise", type=int, default=None,
                            help="also write a cube rebuilt from the first K components")
        rotate.set_defaults(handler=self.mnf)

        band = subparsers.add_parser("band", help="Export one band (or MNF component) as an image")
        band.add_argument("--cube", required=True)
        band.add_argument("--meta", required=True)
        band.add_argument("--index", type=int, required=True, help="1-based")
        band.add_argument("--mnf", action="store_true")
        band.add_argument("--out", required=True)
        band.set_defaults(handler=self.band)

    @command_handler
    def mnf(self, args):
        cube = load_cube(args.cube, args.meta)
        out_dir = Path(args.out_dir)
        if args.preview is not None and args.preview < 0:
            raise ParameterError(f"--preview must be >= 0, got {args.preview}")
        components, eigenvalues = mnf(cube)
        save_cube(components, out_dir / "components.raw", out_dir / "components.json")
        shown = components.bands if args.preview is None else min(args.preview, components.bands)
        for index in range(shown):
            save_gray(select_band(components, index), out_dir / f"component_{index + 1:02d}.png")
        asyncio.run(write_json(out_dir / "eigenvalues.json", {"eigenvalues": eigenvalues.tolist()}))
        logger.info(f"📊 MNF of {cube.bands} bands, leading eigenvalue {eigenvalues[0]:.3f}")
        if args.denoise is not None:
            save_cube(mnf_denoise(cube, args.denoise), out_dir / "denoised.raw", out_dir / "denoised.json")
            logger.info(f"✅ Denoised cube kept {args.denoise}/{cube.bands} components")

    @command_handler
    def band(self, args):
        cube = load_cube(args.cube, args.meta)
        if args.mnf:
            cube, _ = mnf(cube)
        save_gray(select_band(cube, args.index - 1), args.out)
        logger.info(f"✅ {'Component' if args.mnf else 'Band'} {args.index} written to {args.out}")


def setup(cli):
    cli.add_command_group(HyperspectralCommands(cli))
