"""
Ordered registry of the named parameter tensors of a network.

Date: 2024-03-14
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from typing import Iterable, Mapping

from common import defines
from common.exceptions import ModelConfigError, ShapeError
from tensor_engine.tensor import Tensor


class ParamRegistry:
    """Name -> Tensor mapping in registration order, every name tagged with its section
    (backbone, attention or compression). Tensors are immutable; updates replace them."""

    def __init__(self) -> None:
        self._tensors  = {}     # name -> Tensor
        self._sections = {}     # name -> section


    def register(self, name: str, tensor: Tensor, section: str = defines.PARAM_SECTION_BACKBONE) -> None:
        if name in self._tensors:
            raise ModelConfigError("Parameter \"{}\" registered twice".format(name))
        if section not in defines.PARAM_SECTIONS:
            raise ModelConfigError("Unknown parameter section \"{}\"".format(section))

        self._tensors[name] = tensor
        self._sections[name] = section


    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]


    def __contains__(self, name: str) -> bool:
        return name in self._tensors


    def __len__(self) -> int:
        return len(self._tensors)


    def names(self) -> list:
        return list(self._tensors.keys())


    def items(self) -> list:
        return list(self._tensors.items())


    def section(self, name: str) -> str:
        return self._sections[name]


    def count(self, section: str | None = None) -> int:
        """Number of scalar parameters, optionally restricted to one section."""

        return int(sum(tensor.size for name, tensor in self._tensors.items()
            if section is None or self._sections[name] == section))


    def lookup(self, overrides: Mapping[str, Tensor] | None = None) -> dict:
        """Returns a name -> Tensor dict with the given tensors taking the place of the registered ones."""

        lookup = dict(self._tensors)

        for name, tensor in (overrides or {}).items():
            if name not in lookup:
                raise ModelConfigError("Override for unknown parameter \"{}\"".format(name))
            lookup[name] = tensor

        return lookup


    def update(self, named: Mapping[str, Tensor]) -> None:
        """Replaces registered tensors in place of the registry.

        Raises:
            ShapeError if a replacement changes the shape of a parameter"""

        for name, tensor in named.items():
            if name not in self._tensors:
                raise ModelConfigError("Update of unknown parameter \"{}\"".format(name))
            if tensor.shape != self._tensors[name].shape:
                raise ShapeError("Parameter \"{}\" has shape {} but the update has {}".format(name,
                    list(self._tensors[name].shape), list(tensor.shape)))

            self._tensors[name] = tensor


    def subset(self, sections: Iterable[str]) -> "ParamRegistry":
        """Registry of the tensors of the given sections (tensors shared, not copied)."""

        sections = set(sections)
        registry = ParamRegistry()

        for name, tensor in self._tensors.items():
            if self._sections[name] in sections:
                registry.register(name, tensor, self._sections[name])

        return registry


    def detached(self) -> dict:
        """Lookup of constant tensors, for forward passes that need no gradients."""

        return {name: tensor.detach() for name, tensor in self._tensors.items()}
