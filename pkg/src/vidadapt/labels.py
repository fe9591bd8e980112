"""Class catalogs and label-map conventions.

A label map is a (H, W) uint8 array. Value 0 is the background class,
values 1..K-1 are object classes from the catalog, and IGNORE_LABEL (255)
marks pixels excluded from training losses and confidence statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation

IGNORE_LABEL = 255

# 255 is reserved for IGNORE_LABEL in 8-bit label files.
MAX_CLASSES = 255


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class names; index 0 is the background class."""

    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) < 2:
            raise ConfigurationError(
                "catalog needs background plus at least one object class, got %r"
                % (self.names,)
            )
        if len(self.names) > MAX_CLASSES:
            raise ConfigurationError(
                "catalog has %d classes; at most %d are representable in 8-bit "
                "label files" % (len(self.names), MAX_CLASSES)
            )
        if len(set(self.names)) != len(self.names):
            raise ConfigurationError("catalog names must be unique: %r" % (self.names,))

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigurationError(
                "unknown class %r; catalog has %r" % (name, self.names)
            ) from None

    def object_classes(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.names)))


def validate_label_map(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Check dtype/range of a label map and return it as uint8."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ContractViolation("label map must be 2-D, got shape %r" % (arr.shape,))
    arr = arr.astype(np.uint8, copy=False)
    bad = (arr != IGNORE_LABEL) & (arr >= num_classes)
    if bad.any():
        raise ContractViolation(
            "label map contains values >= %d that are not IGNORE" % num_classes
        )
    return arr
