from __future__ import annotations

from typing import Dict, Optional


class XfcsiError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(XfcsiError, ValueError):
    pass


class ConfigError(XfcsiError, ValueError):
    """Invalid configuration; `field` is the dotted path when known."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DomainError(XfcsiError, ValueError):
    pass


class ContractError(XfcsiError, ValueError):
    pass


class UndefinedMetricError(XfcsiError, ArithmeticError):
    pass


class GenerationError(XfcsiError, RuntimeError):
    pass


class CheckpointError(XfcsiError, RuntimeError):
    pass


class DatasetFormatError(XfcsiError, ValueError):
    pass


class TrainingDivergedError(XfcsiError, RuntimeError):
    def __init__(self, epoch: int, step: int, components: Dict[str, float]):
        parts = ", ".join(f"{k}={v:.6g}" for k, v in components.items())
        super().__init__(f"training diverged at epoch {epoch} (step {step}): {parts}")
        self.epoch = epoch
        self.step = step
        self.components = dict(components)
