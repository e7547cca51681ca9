"""
Relic Sketch - Shared Command Plumbing
Config flags, error-to-exit-code handling and the base class command groups extend
"""

import argparse
import functools
import logging
from typing import Callable

from relic_sketch.config import TrainConfig, apply_overrides, load_train_config
from relic_sketch.errors import RelicSketchError

logger = logging.getLogger(__name__)


class CommandGroup:
    """A set of related subcommands, registered on the CLI like a bot cog"""

    def __init__(self, cli):
        self.cli = cli

    def register(self, subparsers: argparse._SubParsersAction):
        raise NotImplementedError


def command_handler(func: Callable) -> Callable:
    """Log failures with their status glyph and turn them into exit codes"""

    @functools.wraps(func)
    def wrapper(self, args: argparse.Namespace) -> int:
        try:
            result = func(self, args)
            return 0 if result is None else int(result)
        except RelicSketchError as e:
            logger.error(f"❌ {args.command} failed: {e}")
            return e.exit_code
        except KeyboardInterrupt:
            logger.warning(f"⚠️ {args.command} interrupted")
            return 130
        except Exception as e:
            logger.exception(f"❌ {args.command} failed unexpectedly: {e}")
            return 1

    return wrapper


def add_config_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON training config (defaults when omitted)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--beta", type=float, default=None)
    parser.add_argument("--gamma", type=float, default=None)
    parser.add_argument("--batch-size", type=int, default=None)


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    config = load_train_config(args.config)
    return apply_overrides(config, seed=args.seed, steps=args.steps, lr=args.lr, alpha=args.alpha,
                           beta=args.beta, gamma=args.gamma, batch_size=args.batch_size)
