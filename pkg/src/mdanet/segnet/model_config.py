"""
Network configuration of the four ablation variants.

Date: 2024-03-14
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from dataclasses import dataclass, field, replace

from attention_blocks.blocks import ATTENTION_SCALES, ATTENTION_SCALE_NONE
from common import defines
from common.exceptions import ModelConfigError
from slice_compression.compression import CompressionConfig

# Module configuration settings
MODULE_NAME = "segnet"
MODULE_CONFIG = {
    defines.CONF_PARAMS_MANDATORY: [],
    defines.CONF_PARAMS_DEFAULTS: {'variant': defines.VARIANT_MDA, 'depth': 5, 'base_channels': 32, 'num_classes': 4,
        'dropout_rate': 0.3, 'attention_scale': ATTENTION_SCALE_NONE, 'input_shape': [256, 192]},
    defines.CONF_PARAMS_INTS: ['depth', 'base_channels', 'num_classes'],
    defines.CONF_PARAMS_FLOATS: ['dropout_rate'],
    defines.CONF_PARAMS_STRINGS: {'variant': defines.VARIANTS, 'attention_scale': ATTENTION_SCALES},
    defines.CONF_PARAMS_BOOLS: None,
    defines.CONF_PARAMS_LISTS: {'input_shape': 2}
}

# Attention block kind used by every variant, None for no attention
VARIANT_BLOCK_KIND = {
    defines.VARIANT_PLAIN: None,
    defines.VARIANT_CSCSE: "cscse",
    defines.VARIANT_MSE:   "mse",
    defines.VARIANT_MDA:   "mse"
}


@dataclass(frozen=True)
class ModelConfig:
    """Topology of one network. The attention and compression parameters are bound to input_shape (m, n)."""
    variant:         str = defines.VARIANT_MDA
    depth:           int = 5
    base_channels:   int = 32
    num_classes:     int = 4
    dropout_rate:    float = 0.3
    attention_scale: str = ATTENTION_SCALE_NONE
    input_shape:     tuple = (256, 192)
    compression:     CompressionConfig | None = field(default_factory=CompressionConfig)


    def __post_init__(self) -> None:
        object.__setattr__(self, 'input_shape', tuple(int(extent) for extent in self.input_shape))

        # Only the combined variant carries a compression module
        if self.variant != defines.VARIANT_MDA and self.compression is not None:
            object.__setattr__(self, 'compression', None)


    @property
    def in_channels(self) -> int:
        return 2 if self.variant == defines.VARIANT_MDA else 1


    @property
    def block_kind(self) -> str | None:
        return VARIANT_BLOCK_KIND.get(self.variant)


    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level


    def resolution(self, level: int) -> tuple:
        return (self.input_shape[0] // 2 ** level, self.input_shape[1] // 2 ** level)


    def validate(self) -> None:
        """Checks the variant, channel and shape invariants.

        Raises:
            ModelConfigError naming the violated constraint"""

        if self.variant not in defines.VARIANTS:
            raise ModelConfigError("Unknown variant \"{}\", expected one of {}".format(self.variant,
                defines.VARIANTS))
        if self.variant == defines.VARIANT_MDA and self.compression is None:
            raise ModelConfigError("Variant mda requires a compression configuration")
        if self.depth < 1:
            raise ModelConfigError("Network depth must be >= 1, got {}".format(self.depth))
        if self.base_channels < 1:
            raise ModelConfigError("Base channel count must be >= 1, got {}".format(self.base_channels))
        if self.num_classes < 2:
            raise ModelConfigError("At least two classes are required, got {}".format(self.num_classes))
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ModelConfigError("Dropout rate must be in [0, 1), got {}".format(self.dropout_rate))
        if self.attention_scale not in ATTENTION_SCALES:
            raise ModelConfigError("Unknown attention scale \"{}\"".format(self.attention_scale))

        multiple = 2 ** (self.depth - 1)
        for axis, extent in enumerate(self.input_shape):
            if extent < 1 or extent % multiple:
                raise ModelConfigError("Input extent {} on axis {} is not a positive multiple of 2^(depth-1) = {}"
                    .format(extent, axis, multiple))

        if self.compression is not None:
            try:
                self.compression.validate()
            except ValueError as exc:
                raise ModelConfigError(str(exc)) from exc


    def with_variant(self, variant: str) -> "ModelConfig":
        """Same topology for another variant; a compression configuration is added for mda when missing."""

        compression = self.compression or CompressionConfig()

        return replace(self, variant=variant, compression=compression if variant == defines.VARIANT_MDA else None)


    def with_input_shape(self, input_shape) -> "ModelConfig":
        return replace(self, input_shape=tuple(input_shape))


    def to_dict(self) -> dict:
        result = {
            'variant': self.variant,
            'depth': self.depth,
            'base_channels': self.base_channels,
            'num_classes': self.num_classes,
            'dropout_rate': self.dropout_rate,
            'attention_scale': self.attention_scale,
            'input_shape': list(self.input_shape)
        }

        if self.compression is not None:
            result['compression'] = {'radius': self.compression.radius,
                'boundary_policy': self.compression.boundary_policy, 'ordering': self.compression.ordering}

        return result


    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        values = dict(values)
        compression = values.pop('compression', None)

        try:
            config = cls(**values, compression=CompressionConfig(**compression) if compression else None)
        except TypeError as exc:
            raise ModelConfigError("Invalid model configuration: {}".format(exc)) from exc

        config.validate()
        return config


    @classmethod
    def from_config(cls, config: dict) -> "ModelConfig":
        """Typed view of the segnet and slice_compression sections of a resolved configuration."""

        section = config[MODULE_NAME]
        compression = CompressionConfig.from_config(config) if section['variant'] == defines.VARIANT_MDA else None

        model_config = cls(section['variant'], section['depth'], section['base_channels'], section['num_classes'],
            section['dropout_rate'], section['attention_scale'], tuple(section['input_shape']), compression)
        model_config.validate()

        return model_config
