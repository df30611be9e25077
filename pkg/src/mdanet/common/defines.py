"""
Common defines and constants used across multiple files.

Date: 2024-03-04
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

# Configuration name defines
CONF_PARAMS_MANDATORY = "mandatory"
CONF_PARAMS_DEFAULTS  = "defaults"
CONF_PARAMS_INTS      = "ints"
CONF_PARAMS_FLOATS    = "floats"
CONF_PARAMS_STRINGS   = "strings"
CONF_PARAMS_BOOLS     = "bools"
CONF_PARAMS_LISTS     = "lists"

CONF_PARAMS_KINDS = (CONF_PARAMS_MANDATORY, CONF_PARAMS_DEFAULTS, CONF_PARAMS_INTS, CONF_PARAMS_FLOATS,
    CONF_PARAMS_STRINGS, CONF_PARAMS_BOOLS, CONF_PARAMS_LISTS)

# Network variants of the ablation study
VARIANT_PLAIN = "plain"
VARIANT_CSCSE = "cscse"
VARIANT_MSE   = "mse"
VARIANT_MDA   = "mda"
VARIANTS = [VARIANT_PLAIN, VARIANT_CSCSE, VARIANT_MSE, VARIANT_MDA]

# Anatomical views and the volume axis each one cuts along
VIEW_SAGITTAL = "sagittal"
VIEW_AXIAL    = "axial"
VIEW_CORONAL  = "coronal"
VIEWS = [VIEW_SAGITTAL, VIEW_AXIAL, VIEW_CORONAL]
VIEW_SLICE_AXIS = {VIEW_SAGITTAL: 0, VIEW_AXIAL: 1, VIEW_CORONAL: 2}

# Tissue classes; background is class 0 and excluded from foreground averages
CLASS_NAMES = ["background", "csf", "gm", "wm"]
CLASS_BACKGROUND = 0

# Metrics CSV layout, the column order is part of the file format
METRICS_COLUMNS = ["fold", "view", "variant", "epoch", "class", "dice_mean", "dice_std", "loss"]

# Run directory artefacts
RUN_RESOLVED_CONFIG = "resolved_config.yml"
RUN_CHECKPOINT      = "model.ckpt"
RUN_METRICS         = "metrics.csv"
SUBJECTS_MANIFEST   = "manifest.json"

# Process exit codes
EXIT_OK        = 0
EXIT_USAGE     = 1
EXIT_DATA      = 2
EXIT_NUMERICAL = 3

# Parameter registry sections of a network
PARAM_SECTION_BACKBONE    = "backbone"
PARAM_SECTION_ATTENTION   = "attention"
PARAM_SECTION_COMPRESSION = "compression"
PARAM_SECTIONS = [PARAM_SECTION_BACKBONE, PARAM_SECTION_ATTENTION, PARAM_SECTION_COMPRESSION]
