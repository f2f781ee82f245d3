"""Custom exceptions for the point cloud ray launcher."""

from typing import Any, List, Optional


class PropagationError(Exception):
    """Base exception for simulator errors."""

    pass


class EmptySceneError(PropagationError):
    """Raised when a scene has nothing to bound."""

    def __init__(self, message: str = "empty scene"):
        super().__init__(message)


class GridTooLargeError(PropagationError):
    """Raised when the voxel grid would exceed the cell budget."""

    def __init__(self, cells: int = 0, budget: int = 0):
        msg = "grid too large"
        if cells:
            msg += f" ({cells} voxels, budget {budget})"
        super().__init__(msg)
        self.cells = cells
        self.budget = budget


class DegenerateSegmentError(PropagationError):
    """Raised when two consecutive path nodes coincide."""

    def __init__(self, node_index: int = -1):
        msg = "degenerate segment"
        if node_index >= 0:
            msg += f" at node {node_index}"
        super().__init__(msg)
        self.node_index = node_index


class BackFacingHitError(PropagationError):
    """Raised when a ray reaches a surface from behind its normal."""

    def __init__(self, label: int = -1):
        super().__init__(f"back-facing hit on surface {label}")
        self.label = label


class SceneFormatError(PropagationError):
    """Raised when an input file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class MissingFieldError(SceneFormatError):
    """Raised when a polygon point file lacks a required vertex property."""

    def __init__(self, field: str):
        super().__init__(f"missing field: {field}")
        self.field = field


class EdgeRecordError(PropagationError):
    """Raised when a diffraction edge record is invalid."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"invalid edge record {index}: {reason}")
        self.index = index
        self.reason = reason


class SceneValidationError(PropagationError):
    """Raised by the pipeline when validate_scene reports violations."""

    def __init__(self, violations: List[Any]):
        head = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"scene failed validation: {head}{more}")
        self.violations = violations


class InvalidParameterError(PropagationError):
    """Raised when an invalid parameter is provided."""

    def __init__(self, param_name: str, requirement: str = None):
        msg = f"Invalid value for '{param_name}'"
        if requirement:
            msg += f". Must be {requirement}"
        super().__init__(msg)
        self.param_name = param_name
        self.requirement = requirement


class ConfigError(PropagationError):
    """Raised when a run configuration document is malformed."""

    pass


class StageError(PropagationError):
    """Raised when a pipeline stage fails; names the stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
