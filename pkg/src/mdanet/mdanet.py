#!/bin/python3

"""
Slice-wise 3D brain tissue segmentation with multi-dimensional attention:
phantom generation, training, cross-validation, evaluation, inference,
parameter audits and gradient verification.

Date: 2024-03-20
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import sys

from cli import commands
from cli.argparser import (ArgParser, CMD_CROSSVAL, CMD_EVAL, CMD_GRADCHECK, CMD_IMPORT, CMD_INFER,
    CMD_MAKE_PHANTOMS, CMD_PARAMCOUNT, CMD_TRAIN)
from common import defines
from common.config_loader import load_prog_config, install_config, ConfigParamsError
from common.exceptions import (ArgumentCombinationException, DataError, ModelConfigError, NumericalError,
    ShapeError)
from common.logsetup import setup_logging
from segnet import model_config
from slice_compression import compression
from train_eval import trainer
from volume_data import samples

SCRIPT_NAME = "mdanet"

# Commands reading the YAML configuration
CONFIGURED_COMMANDS = {
    CMD_TRAIN: commands.cmd_train,
    CMD_CROSSVAL: commands.cmd_crossval,
    CMD_PARAMCOUNT: commands.cmd_paramcount
}

# Commands working on their flags alone
PLAIN_COMMANDS = {
    CMD_MAKE_PHANTOMS: commands.cmd_make_phantoms,
    CMD_IMPORT: commands.cmd_import,
    CMD_EVAL: commands.cmd_eval,
    CMD_INFER: commands.cmd_infer,
    CMD_GRADCHECK: commands.cmd_gradcheck
}


def fail(exc: Exception, exit_code: int) -> None:
    print("Error: {}".format(exc), file=sys.stderr)
    sys.exit(exit_code)


if __name__ == "__main__":
    args        = None      # Parsed argument values
    config_user = None      # Resolved configuration of configured commands

    # Initialize script expected configuration with used modules
    config_setup = install_config(SCRIPT_NAME, None, [model_config, compression, trainer, samples])

    try:
        # Parse arguments and load the program configuration
        args = ArgParser().parse_args(sys.argv[1:])
        setup_logging(args.log_level, args.log_format)

        if args.command in CONFIGURED_COMMANDS:
            config_user = load_prog_config(args.config, config_setup, commands.config_overrides(args))
    except (ArgumentCombinationException, FileNotFoundError, ConfigParamsError) as exc:
        fail(exc, defines.EXIT_USAGE)

    try:
        if args.command in CONFIGURED_COMMANDS:
            CONFIGURED_COMMANDS[args.command](args, config_user)
        else:
            PLAIN_COMMANDS[args.command](args)
    except (ConfigParamsError, ModelConfigError) as exc:
        fail(exc, defines.EXIT_USAGE)
    except (DataError, ShapeError, FileNotFoundError) as exc:
        fail(exc, defines.EXIT_DATA)
    except (NumericalError, FloatingPointError) as exc:
        fail(exc, defines.EXIT_NUMERICAL)
    except ValueError as exc:
        fail(exc, defines.EXIT_USAGE)
