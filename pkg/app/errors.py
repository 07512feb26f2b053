"""
Lab Errors
Structured exceptions shared by services, CLI and API routes
"""

from typing import Any, Dict, Optional


class LabError(Exception):
    """
    Base error carrying a structured detail payload

    The payload has the same shape the API returns:
    {"error": <message>, ...context}
    """

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    @property
    def detail(self) -> Dict[str, Any]:
        return {"error": self.message, **self.context}


class InvalidParameterError(LabError):
    """A parameter is outside its allowed range"""


class DimensionMismatchError(LabError):
    """Feature vector dimension does not match the model or dataset"""

    def __init__(self, expected: int, got: int, where: Optional[str] = None):
        message = f"Dimension mismatch: expected {expected}, got {got}"
        if where:
            message = f"{message} ({where})"
        super().__init__(message, expected=expected, got=got)


class NonFiniteLossError(LabError):
    """Training produced a NaN/Inf loss or parameter"""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(
            f"Non-finite loss {loss} at epoch {epoch}, batch {batch}",
            epoch=epoch,
            batch=batch,
        )


class DataFormatError(LabError):
    """CSV or manifest content could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, line=line)


class EmptySubsetError(LabError):
    """A Split-AI sub-model would receive no training samples"""


class ConflictingDuplicateError(LabError):
    """The same feature vector appears with two different labels"""


class StageFailedError(LabError):
    """An experiment stage failed; the report is partial"""
