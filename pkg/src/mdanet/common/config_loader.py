"""
Configuration loading and management from YAML configuration files.

Date: 2024-03-04
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import copy
import yaml

from common import defines
from common.exceptions import MdaNetError


class ConfigParamsError(MdaNetError):
    """Configuration parameters exception such as missing mandatory parameter or invalid parameter value."""

    def __init__(self, msg: str) -> None:
        super().__init__(msg)


def load_config(cfg_file: str | None) -> dict:
    """Loads configuration file and returns a corresponding dictionary.

    Parameters:
        cfg_file Path to file containing configuration, None for an empty configuration

    Raises:
        FileNotFoundError if the supplied file does not exist
        ConfigParamsError if the file does not contain a mapping

    Returns:
        dict Dictionary corresponding to the loaded configuration"""

    if cfg_file is None:
        return {}

    with open(cfg_file, 'r') as stream_config:
        config = yaml.safe_load(stream_config)

    # Empty YAML documents load as None
    if config is None:
        return {}

    if not isinstance(config, dict):
        raise ConfigParamsError("Configuration file {} must contain a mapping of module sections".format(cfg_file))

    return config


def resolve_config(config: dict, params_setup: dict, overrides: dict | None = None) -> dict:
    """Fills default parameters, applies overrides and performs checks for mandatory parameters and their
    expected types on an already loaded configuration.

    Parameters:
        config       Loaded configuration dictionary (left untouched)
        params_setup Dictionary of params which to process based on common.defines CONF_PARAMS* naming
        overrides    {section: {param: value}} values taking precedence over the file, None values are skipped

    Raises:
        ConfigParamsError upon a missing mandatory parameter or a parameter of invalid type or value

    Returns:
        dict Fully resolved configuration"""

    config = copy.deepcopy(config)

    # Extract parameters setup
    mandatory_params = params_setup[defines.CONF_PARAMS_MANDATORY]
    default_values   = params_setup[defines.CONF_PARAMS_DEFAULTS]
    int_params       = params_setup[defines.CONF_PARAMS_INTS]
    float_params     = params_setup[defines.CONF_PARAMS_FLOATS]
    string_params    = params_setup[defines.CONF_PARAMS_STRINGS]
    bool_params      = params_setup[defines.CONF_PARAMS_BOOLS]
    list_params      = params_setup[defines.CONF_PARAMS_LISTS]

    # Sections omitted in the file are filled from defaults entirely
    for kind in defines.CONF_PARAMS_KINDS:
        for section in params_setup[kind].keys():
            if config.get(section) is None:
                config[section] = {}
            elif not isinstance(config[section], dict):
                raise ConfigParamsError("Configuration section \"{}\" must be a mapping".format(section))

    # Command-line overrides win over the file
    for section, values in (overrides or {}).items():
        for param, value in values.items():
            if value is not None:
                config.setdefault(section, {})[param] = value

    # Fill-in omitted parameters
    for default_param_key in default_values.keys():
        for default_param, default_value in default_values[default_param_key].items():
            if default_param not in config[default_param_key]:
                config[default_param_key][default_param] = copy.deepcopy(default_value)

    # Check for mandatory configuration parameters
    for mandatory_key in mandatory_params.keys():
        for mandatory_param in mandatory_params[mandatory_key]:
            if config[mandatory_key].get(mandatory_param) is None:
                raise ConfigParamsError("Mandatory parameter \"{}\" missing for {}".format(mandatory_param,
                    mandatory_key))

    # Check if specified parameters match their desired types
    for param_key in int_params:
        for param in int_params[param_key]:
            value = config[param_key].get(param)
            # bool is a subclass of int and must not pass as one
            if value is not None and (not isinstance(value, int) or isinstance(value, bool)):
                raise ConfigParamsError("Parameter \"{}\" for {} must be an integer".format(param, param_key))

    for param_key in float_params:
        for param in float_params[param_key]:
            value = config[param_key].get(param)
            if value is not None:
                # Float parameters check against floats and integers
                if not isinstance(value, (float, int)) or isinstance(value, bool):
                    raise ConfigParamsError("Parameter \"{}\" for {} must be a numeric value".format(param,
                        param_key))
                config[param_key][param] = float(value)

    for param_key in string_params:
        for param in string_params[param_key]:
            if param in config[param_key]:
                # String parameters check against list of acceptable strings
                if config[param_key][param] not in string_params[param_key][param]:
                    raise ConfigParamsError("Configuration value of \"{}\" for {} is invalid, expected one of {}"
                        .format(config[param_key][param], param, string_params[param_key][param]))

    for param_key in bool_params:
        for param in bool_params[param_key]:
            if param in config[param_key]:
                if not isinstance(config[param_key][param], bool):
                    raise ConfigParamsError("Parameter \"{}\" for {} must be a bool".format(param, param_key))

    for param_key in list_params:
        for param, length in list_params[param_key].items():
            value = config[param_key].get(param)
            if value is not None:
                if not isinstance(value, (list, tuple)) or len(value) != length or \
                    not all(isinstance(elem, int) and not isinstance(elem, bool) for elem in value):
                    raise ConfigParamsError("Parameter \"{}\" for {} must be a list of {} integers".format(param,
                        param_key, length))
                config[param_key][param] = list(value)

    return config


def load_prog_config(cfg_file: str | None, params_setup: dict, overrides: dict | None = None) -> dict:
    """Loads program configuration from YAML file specified by cfg_file, fills default parameters, perform checks for
    mandatory parameters and their expected types.

    Parameters:
        cfg_file     Path to YAML configuration file to load, None to use defaults only
        params_setup Dictionary of params which to process in YAML config based on common.defines CONF_PARAMS* naming
        overrides    Command-line values overriding the file

    Returns:
        dict Dictionary with loaded configuration from the given file"""

    return resolve_config(load_config(cfg_file), params_setup, overrides)


def install_config(script_name: str, script_config: dict | None, modules) -> dict:
    """Installs provided modules config to the overall script configuration.

    Parameters:
        script_name   Name of the calling script
        script_config Script existing configuration
        modules       Single or list of module objects to import

    Returns:
        dict Modified configuration dictionary with the module's configuration installed."""

    # Create configuration-form template
    config = {kind: {} for kind in defines.CONF_PARAMS_KINDS}

    if not isinstance(modules, list):
        modules = [modules]

    # Initialize with initial script configuration
    if script_config is not None:
        for key, val in script_config.items():
            if val is not None:
                config[key][script_name] = val

    # Initialize with imported modules configuration
    for module in modules:
        mod_name = module.MODULE_NAME

        for key, val in module.MODULE_CONFIG.items():
            if val is not None:
                config[key][mod_name] = val

    return config


def write_config(config: dict, cfg_file: str) -> None:
    """Writes a resolved configuration into a YAML file so the run stays reproducible.

    Parameters:
        config   Configuration dictionary to save
        cfg_file Destination path"""

    with open(cfg_file, 'w') as stream_config:
        yaml.safe_dump(config, stream_config, default_flow_style=False, sort_keys=True)
