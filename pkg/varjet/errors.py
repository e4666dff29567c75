from __future__ import annotations

from typing import Any


class VarjetError(Exception):
    code = "varjet_error"
    exit_code = 1

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": str(self)}


class ShapeError(VarjetError, ValueError):
    code = "shape_mismatch"
    exit_code = 3


class NonFiniteError(ShapeError):
    code = "non_finite"


class OrderUnsupportedError(VarjetError, ValueError):
    code = "order_unsupported"
    exit_code = 3


class DimensionError(VarjetError, ValueError):
    code = "dimension_mismatch"
    exit_code = 3


class ConfigError(VarjetError, ValueError):
    code = "invalid_config"
    exit_code = 2


class DocumentError(VarjetError, ValueError):
    code = "invalid_document"
    exit_code = 3

    def __init__(self, message: str, field: str | None = None, line: int | None = None) -> None:
        location = ""
        if field is not None:
            location += f" field={field}"
        if line is not None:
            location += f" line={line}"
        super().__init__(f"{message}{location}")
        self.field = field
        self.line = line

    def to_dict(self) -> dict[str, Any]:
        return {**super().to_dict(), "field": self.field, "line": self.line}


class SingularMatrixError(VarjetError, ArithmeticError):
    code = "singular_matrix"
    exit_code = 6

    def __init__(self, message: str, condition: float) -> None:
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class IllConditionedFlowError(VarjetError, ArithmeticError):
    code = "ill_conditioned_flow"
    exit_code = 6

    def __init__(self, t: float, condition: float) -> None:
        super().__init__(f"Dphi ill-conditioned at t={t:.6g} (condition estimate {condition:.3e})")
        self.t = t
        self.condition = condition


class BlowUpError(VarjetError, ArithmeticError):
    """Solution left every bounded set; ``partial`` holds the accepted samples."""

    code = "blow_up"
    exit_code = 4

    def __init__(self, t_escape: float, partial: list[Any] | None = None) -> None:
        super().__init__(f"solution escapes near t={t_escape:.6g}")
        self.t_escape = t_escape
        self.partial = partial or []

    def to_dict(self) -> dict[str, Any]:
        return {**super().to_dict(), "tEscape": self.t_escape}


class PoleError(VarjetError, ArithmeticError):
    code = "pole"
    exit_code = 5


class PoleCrossedError(VarjetError, ArithmeticError):
    code = "pole_crossed"
    exit_code = 5

    def __init__(self, bracket: tuple[float, float], interval: tuple[float, float] | None = None) -> None:
        super().__init__(f"lift denominator vanishes between t={bracket[0]:.6g} and t={bracket[1]:.6g}")
        self.bracket = bracket
        self.interval = interval

    def to_dict(self) -> dict[str, Any]:
        out = {**super().to_dict(), "bracket": list(self.bracket)}
        if self.interval is not None:
            out["existenceInterval"] = list(self.interval)
        return out


class ReportWriteError(VarjetError, OSError):
    code = "report_io"
    exit_code = 7
