"""
Argument parser for the mdanet script.

Date: 2024-03-20
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import argparse

from common import defines
from common.exceptions import ArgumentCombinationException
from common.logsetup import LOG_FORMATS

# Program description messages
PROG_DESCRIPTION = "Slice-wise 3D segmentation with multi-dimensional attention: phantoms, training, evaluation, "\
    "inference and verification."
PROG_EPILOG = "Configuration keys: segnet, slice_compression, train_eval, volume_data"\
    "\n\nExit codes: 0 success, 1 usage or configuration error, 2 data error, 3 numerical failure"
PROG_NAME = "mdanet.py"

# Subcommand names
CMD_MAKE_PHANTOMS = "make-phantoms"
CMD_IMPORT        = "import"
CMD_TRAIN         = "train"
CMD_CROSSVAL      = "crossval"
CMD_EVAL          = "eval"
CMD_INFER         = "infer"
CMD_PARAMCOUNT    = "paramcount"
CMD_GRADCHECK     = "gradcheck"

GRADCHECK_SCOPES = ["ops", "block", "compression", "network", "all"]
LOG_LEVELS = ["error", "warning", "info", "debug"]

# Argument help messages
ARG_HELP_ALL         = "Audit all four variants and check the ordering of their parameter counts"
ARG_HELP_CHECKPOINT  = "Checkpoint file of a trained network"
ARG_HELP_CONFIG      = "Path to the YAML configuration file, defaults are used when omitted"
ARG_HELP_DATA        = "Subject manifest or the directory holding it"
ARG_HELP_DIMS        = "Volume dims as d0,d1,d2"
ARG_HELP_DTYPE       = "Voxel type of the raw image"
ARG_HELP_EPOCHS      = "Maximum number of epochs (overrides train_eval.max_epochs)"
ARG_HELP_FOLD        = "Cross-validation fold to train"
ARG_HELP_FOLDS       = "Number of cross-validation folds (overrides volume_data.folds)"
ARG_HELP_ID          = "Subject id of the imported volume, the output file name by default"
ARG_HELP_INPUT_SHAPE = "In-plane network input shape as m,n (overrides segnet.input_shape)"
ARG_HELP_JOBS        = "Folds trained in parallel (overrides train_eval.jobs)"
ARG_HELP_LABELS_RAW  = "Raw u8 label file of the same dims"
ARG_HELP_LOG_FORMAT  = "Log record format on stderr"
ARG_HELP_LOG_LEVEL   = "Logging level"
ARG_HELP_MAX_ENTRIES = "Checked entries per tensor in network scope"
ARG_HELP_NUM_CLASSES = "Number of phantom classes, background included"
ARG_HELP_OUT_DIR     = "Output directory"
ARG_HELP_OUT_EVAL    = "Optional CSV file receiving the per-class Dice"
ARG_HELP_OUT_INFER   = "Path of the predicted label volume"
ARG_HELP_OUT_IMPORT  = "Output volume path (header), the manifest of its directory is updated"
ARG_HELP_PREDICTION  = "Predicted label volume to score instead of running a checkpoint"
ARG_HELP_RAW         = "Raw image dump, d0-major little-endian"
ARG_HELP_RUN_DIR     = "Run directory receiving the resolved configuration, checkpoints and metrics"
ARG_HELP_SCOPE       = "What to verify"
ARG_HELP_SEED        = "Seed of every random decision of the command"
ARG_HELP_SPACING     = "Voxel spacing in mm as s0,s1,s2"
ARG_HELP_SUBJECTS    = "Number of phantom subjects"
ARG_HELP_TOL         = "Maximum accepted relative gradient error"
ARG_HELP_VARIANT     = "Network variant (overrides segnet.variant)"
ARG_HELP_VIEW        = "Anatomical view (overrides volume_data.view)"
ARG_HELP_VOLUME      = "Labeled volume header"
ARG_HELP_ZERO_NOISE  = "Generate phantoms without noise and bias field"

# Exception messages
EXC_EVAL_SOURCE = "Exactly one of --checkpoint and --prediction must be given"
EXC_FOLD_RANGE  = "Fold {} out of range for {} folds"
EXC_NO_COMMAND  = "A command is required, see --help"


def int_list(length: int):
    """Argument type of a comma separated list of positive integers."""

    def parse(value: str) -> list:
        try:
            values = [int(item) for item in value.split(",")]
        except ValueError as exc:
            raise argparse.ArgumentTypeError("expected {} comma separated integers, got {}".format(length,
                value)) from exc

        if len(values) != length or any(item < 1 for item in values):
            raise argparse.ArgumentTypeError("expected {} comma separated positive integers, got {}".format(length,
                value))
        return values

    return parse


def float_list(length: int):
    def parse(value: str) -> list:
        try:
            values = [float(item) for item in value.split(",")]
        except ValueError as exc:
            raise argparse.ArgumentTypeError("expected {} comma separated numbers".format(length)) from exc

        if len(values) != length:
            raise argparse.ArgumentTypeError("expected {} comma separated numbers".format(length))
        return values

    return parse


class CommandParser(argparse.ArgumentParser):
    """Parser of one subcommand. Usage errors raise instead of exiting, so they map to the usage exit code."""

    def error(self, message: str):
        raise ArgumentCombinationException("{}: {}".format(self.prog, message))


class ArgParser(CommandParser):
    """Argument parser class for mdanet script."""

    def __init__(self) -> None:
        """Calls parrent constructor and presets argparser class values, subcommands and their arguments."""

        super().__init__()

        # Set argument parser properties
        self.add_help        = True
        self.description     = PROG_DESCRIPTION
        self.epilog          = PROG_EPILOG
        self.formatter_class = argparse.RawTextHelpFormatter
        self.prog            = PROG_NAME

        # Add argparser arguments shared by every command
        self.add_argument("-l", "--log-level", type=str, choices=LOG_LEVELS, default="info",
            help=ARG_HELP_LOG_LEVEL)
        self.add_argument("--log-format", type=str, choices=LOG_FORMATS, default="text", help=ARG_HELP_LOG_FORMAT)

        commands = self.add_subparsers(dest="command", metavar="COMMAND", parser_class=CommandParser)

        phantoms = commands.add_parser(CMD_MAKE_PHANTOMS, help="Generate labeled synthetic phantoms")
        phantoms.add_argument("-o", "--out", type=str, required=True, metavar="DIR", help=ARG_HELP_OUT_DIR)
        phantoms.add_argument("-n", "--subjects", type=int, default=10, metavar="N", help=ARG_HELP_SUBJECTS)
        phantoms.add_argument("-d", "--dims", type=int_list(3), default=[48, 64, 56], metavar="D0,D1,D2",
            help=ARG_HELP_DIMS)
        phantoms.add_argument("-s", "--seed", type=int, default=0, metavar="SEED", help=ARG_HELP_SEED)
        phantoms.add_argument("-k", "--num-classes", type=int, default=len(defines.CLASS_NAMES), metavar="K",
            help=ARG_HELP_NUM_CLASSES)
        phantoms.add_argument("--zero-noise", action="store_true", help=ARG_HELP_ZERO_NOISE)

        importer = commands.add_parser(CMD_IMPORT, help="Convert a raw dump into the volume format")
        importer.add_argument("-r", "--raw", type=str, required=True, metavar="RAW_FILE", help=ARG_HELP_RAW)
        importer.add_argument("-d", "--dims", type=int_list(3), required=True, metavar="D0,D1,D2",
            help=ARG_HELP_DIMS)
        importer.add_argument("-t", "--dtype", type=str, choices=["f32", "u8"], default="f32", help=ARG_HELP_DTYPE)
        importer.add_argument("--labels-raw", type=str, metavar="RAW_FILE", help=ARG_HELP_LABELS_RAW)
        importer.add_argument("--spacing", type=float_list(3), default=[1.0, 1.0, 1.0], metavar="S0,S1,S2",
            help=ARG_HELP_SPACING)
        importer.add_argument("--id", type=str, metavar="ID", help=ARG_HELP_ID)
        importer.add_argument("-o", "--out", type=str, required=True, metavar="PATH", help=ARG_HELP_OUT_IMPORT)

        for name, help_msg in ((CMD_TRAIN, "Train one cross-validation fold"),
            (CMD_CROSSVAL, "Train and evaluate every cross-validation fold")):
            training = commands.add_parser(name, help=help_msg)
            training.add_argument("-c", "--config", type=str, metavar="CONFIG_FILE", help=ARG_HELP_CONFIG)
            training.add_argument("--data", type=str, metavar="PATH", help=ARG_HELP_DATA)
            training.add_argument("--variant", type=str, choices=defines.VARIANTS, help=ARG_HELP_VARIANT)
            training.add_argument("--view", type=str, choices=defines.VIEWS, help=ARG_HELP_VIEW)
            training.add_argument("--folds", type=int, metavar="K", help=ARG_HELP_FOLDS)
            training.add_argument("-s", "--seed", type=int, metavar="SEED", help=ARG_HELP_SEED)
            training.add_argument("-e", "--epochs", type=int, metavar="N", help=ARG_HELP_EPOCHS)
            training.add_argument("-o", "--run-dir", type=str, required=True, metavar="DIR", help=ARG_HELP_RUN_DIR)

            if name == CMD_TRAIN:
                training.add_argument("-f", "--fold", type=int, default=0, metavar="K", help=ARG_HELP_FOLD)
            else:
                training.add_argument("-j", "--jobs", type=int, metavar="N", help=ARG_HELP_JOBS)

        for name, help_msg in ((CMD_EVAL, "Per-class Dice of a network or a prediction on a labeled volume"),
            (CMD_INFER, "Segment a volume with a trained network")):
            scoring = commands.add_parser(name, help=help_msg)
            scoring.add_argument("--checkpoint", type=str, metavar="FILE", required=name == CMD_INFER,
                help=ARG_HELP_CHECKPOINT)
            scoring.add_argument("--volume", type=str, required=True, metavar="PATH", help=ARG_HELP_VOLUME)
            scoring.add_argument("--view", type=str, choices=defines.VIEWS, help=ARG_HELP_VIEW)
            scoring.add_argument("--variant", type=str, choices=defines.VARIANTS, help=ARG_HELP_VARIANT)
            scoring.add_argument("-o", "--out", type=str, required=name == CMD_INFER, metavar="PATH",
                help=ARG_HELP_OUT_INFER if name == CMD_INFER else ARG_HELP_OUT_EVAL)

            if name == CMD_EVAL:
                scoring.add_argument("--prediction", type=str, metavar="PATH", help=ARG_HELP_PREDICTION)

        paramcount = commands.add_parser(CMD_PARAMCOUNT, help="Parameter count with its breakdown")
        paramcount.add_argument("-c", "--config", type=str, metavar="CONFIG_FILE", help=ARG_HELP_CONFIG)
        paramcount.add_argument("--variant", type=str, choices=defines.VARIANTS, help=ARG_HELP_VARIANT)
        paramcount.add_argument("--input-shape", type=int_list(2), metavar="M,N", help=ARG_HELP_INPUT_SHAPE)
        paramcount.add_argument("-a", "--all", action="store_true", help=ARG_HELP_ALL)

        gradcheck = commands.add_parser(CMD_GRADCHECK, help="Finite-difference verification of the gradients")
        gradcheck.add_argument("--scope", type=str, choices=GRADCHECK_SCOPES, default="block", help=ARG_HELP_SCOPE)
        gradcheck.add_argument("-s", "--seed", type=int, default=0, metavar="SEED", help=ARG_HELP_SEED)
        gradcheck.add_argument("--tol", type=float, default=1e-4, metavar="TOL", help=ARG_HELP_TOL)
        gradcheck.add_argument("--max-entries", type=int, default=16, metavar="N", help=ARG_HELP_MAX_ENTRIES)


    def parse_args(self, args: list):
        """Overridden parse_args function, performing the same functionality with additional semantics checks.

        Parameters:
            args List of arguments to be parsed

        Raises:
            ArgumentCombinationException if invalid argument combination is detected"""

        parsed_args = super().parse_args(args)

        if parsed_args.command is None:
            raise ArgumentCombinationException(EXC_NO_COMMAND)

        # Eval scores either a network or an existing prediction
        if parsed_args.command == CMD_EVAL and (parsed_args.checkpoint is None) == (parsed_args.prediction is None):
            raise ArgumentCombinationException(EXC_EVAL_SOURCE)

        if parsed_args.command == CMD_TRAIN and parsed_args.folds is not None and \
            not 0 <= parsed_args.fold < parsed_args.folds:
            raise ArgumentCombinationException(EXC_FOLD_RANGE.format(parsed_args.fold, parsed_args.folds))

        return parsed_args
