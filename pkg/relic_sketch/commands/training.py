"""
Relic Sketch - Training Commands
prepare-targets, train-coarse, train-fine and pretrain-finetune
"""

import asyncio
import logging
from pathlib import Path

from relic_sketch.commands.common import CommandGroup, add_config_arguments, command_handler, config_from_args
from relic_sketch.parsers.manifest_parser import load_manifest
from relic_sketch.training.pipeline import prepare_targets, run_pretrain_finetune, run_train_coarse, run_train_fine
from relic_sketch.utils.artifacts import write_json

logger = logging.getLogger(__name__)

LABEL_FIELDS = {"edge": "edge_label_path", "sketch": "sketch_label_path"}


class TrainingCommands(CommandGroup):
    def register(self, subparsers):
        prepare = subparsers.add_parser("prepare-targets", help="Generate missing FDoG supervision targets")
        prepare.add_argument("--data", required=True, help="dataset manifest")
        prepare.add_argument("--out", help="where to write the updated manifest (default: in place)")
        prepare.add_argument("--fdog-dir", help="directory for generated targets")
        add_config_arguments(prepare)
        prepare.set_defaults(handler=self.prepare_targets)

        coarse = subparsers.add_parser("train-coarse", help="Train or fine-tune the coarse network")
        coarse.add_argument("--data", required=True)
        coarse.add_argument("--out", required=True, help="checkpoint path")
        coarse.add_argument("--init", help="coarse checkpoint to fine-tune from")
        coarse.add_argument("--labels", choices=sorted(LABEL_FIELDS), default=None,
                            help="supervision label (default: edge, or sketch with --init)")
        coarse.add_argument("--history", help="optional JSON file for the loss history")
        add_config_arguments(coarse)
        coarse.set_defaults(handler=self.train_coarse)

        fine = subparsers.add_parser("train-fine", help="Train the refiner on frozen coarse predictions")
        fine.add_argument("--data", required=True)
        fine.add_argument("--coarse", required=True, help="coarse checkpoint")
        fine.add_argument("--out", required=True)
        fine.add_argument("--labels", choices=sorted(LABEL_FIELDS), default="sketch")
        fine.add_argument("--history")
        add_config_arguments(fine)
        fine.set_defaults(handler=self.train_fine)

        both = subparsers.add_parser("pretrain-finetune", help="Natural-image pretraining then relic fine-tuning")
        both.add_argument("--natural", required=True)
        both.add_argument("--relic", required=True)
        both.add_argument("--out-dir", required=True)
        add_config_arguments(both)
        both.set_defaults(handler=self.pretrain_finetune)

    @command_handler
    def prepare_targets(self, args):
        config = config_from_args(args)
        manifest = load_manifest(args.data)
        out = args.out or args.data
        asyncio.run(prepare_targets(manifest, config.fdog, args.fdog_dir, manifest_path=out))

    @command_handler
    def train_coarse(self, args):
        config = config_from_args(args)
        manifest = load_manifest(args.data)
        label_field = LABEL_FIELDS[args.labels] if args.labels else None
        history = run_train_coarse(manifest, config, args.out, init=args.init, label_field=label_field)
        if args.history:
            asyncio.run(write_json(args.history, history.to_dict()))

    @command_handler
    def train_fine(self, args):
        config = config_from_args(args)
        manifest = load_manifest(args.data)
        history = run_train_fine(manifest, args.coarse, config, args.out, LABEL_FIELDS[args.labels])
        if args.history:
            asyncio.run(write_json(args.history, history.to_dict()))

    @command_handler
    def pretrain_finetune(self, args):
        config = config_from_args(args)
        result = run_pretrain_finetune(load_manifest(args.natural), load_manifest(args.relic), config, args.out_dir)
        histories = {
            "pretrain": result.pretrain_history.to_dict(),
            "finetune": result.finetune_history.to_dict(),
        }
        asyncio.run(write_json(Path(args.out_dir) / "history.json", histories))


def setup(cli):
    cli.add_command_group(TrainingCommands(cli))
