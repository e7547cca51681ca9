"""
Relic Sketch - Extraction Command
Sketch extraction from a grayscale image or a hyperspectral cube band
"""

import logging

from relic_sketch.commands.common import CommandGroup, command_handler
from relic_sketch.errors import ParameterError
from relic_sketch.hyperspectral.mnf import mnf, select_band
from relic_sketch.parsers.cube_parser import load_cube
from relic_sketch.parsers.image_parser import load_gray
from relic_sketch.training.pipeline import extract

logger = logging.getLogger(__name__)


def load_input(args):
    """Grayscale image, or the 1-based band (optionally of the MNF components) of a cube"""
    if args.image and args.cube:
        raise ParameterError("give either --image or --cube, not both")
    if args.image:
        return load_gray(args.image)
    if not args.cube or not args.meta:
        raise ParameterError("--cube needs --meta, or pass --image")
    cube = load_cube(args.cube, args.meta)
    if args.mnf:
        cube, _ = mnf(cube)
    return select_band(cube, args.band - 1)


class ExtractionCommands(CommandGroup):
    def register(self, subparsers):
        parser = subparsers.add_parser("extract", help="Extract a sketch with trained networks")
        parser.add_argument("--image")
        parser.add_argument("--cube", help="raw little-endian float32 band-sequential cube")
        parser.add_argument("--meta", help="JSON sidecar of the cube")
        parser.add_argument("--band", type=int, default=1, help="1-based band or component index")
        parser.add_argument("--mnf", action="store_true", help="select from MNF components instead of bands")
        parser.add_argument("--coarse", required=True, help="coarse checkpoint")
        parser.add_argument("--fine", help="fine checkpoint")
        parser.add_argument("--coarse-only", action="store_true")
        parser.add_argument("--out", required=True)
        parser.set_defaults(handler=self.extract)

    @command_handler
    def extract(self, args):
        if not args.coarse_only and not args.fine:
            raise ParameterError("--fine is required unless --coarse-only is set")
        image = load_input(args)
        extract(image, args.coarse, None if args.coarse_only else args.fine, args.out)


def setup(cli):
    cli.add_command_group(ExtractionCommands(cli))
