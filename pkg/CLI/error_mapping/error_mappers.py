from dataclasses import dataclass, field
from typing import Optional, List, Dict, Any
from enum import Enum

from gaptv.exceptions import (
    DataError, GapTVError, GenerationError, InvalidArgumentError, ModelFormatError,
    SelectionError, SolverError,
)


class ExitCode(Enum):
    SUCCESS = 0
    INPUT = 1
    NUMERICAL = 2


class CliErrorSeverity(Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass
class CliSourceLocation:
    file: Optional[str] = None
    line: Optional[int] = None
    column: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def describe(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.column:
            where.append(f"column '{self.column}'")
        text = str(self.file) if self.file else ""
        if where:
            text = f"{text} ({', '.join(where)})" if text else ", ".join(where)
        return text


@dataclass
class CliError:
    severity: CliErrorSeverity
    message: str
    exit_code: ExitCode = ExitCode.INPUT
    source_location: Optional[CliSourceLocation] = None
    suggestion: Optional[str] = None
    details: Optional[str] = None


def exit_code_for(errors: List[CliError]) -> int:
    """Largest exit code among the errors; warnings count too (non-convergence)."""
    if not errors:
        return ExitCode.SUCCESS.value
    return max(e.exit_code.value for e in errors)


class GapTVErrorMapper:
    """Maps gaptv exceptions to CliErrors with stable exit codes"""

    def __init__(self, input_file: Optional[str] = None):
        self.input_file = input_file

    def _location(self, error: Exception, context: Dict) -> Optional[CliSourceLocation]:
        file = context.get('file', self.input_file)
        line = getattr(error, 'line', None)
        column = getattr(error, 'column', None)
        if file is None and line is None and column is None:
            return None
        return CliSourceLocation(file=file, line=line, column=column)

    def _parse_data_error(self, error: DataError, context: Dict) -> CliError:
        if isinstance(error, ModelFormatError):
            suggestion = "Re-create the model with 'gaptv fit'"
        else:
            suggestion = "Check the CSV header and make every value a finite number"
        return CliError(
            severity=CliErrorSeverity.ERROR,
            message=str(error),
            source_location=self._location(error, context),
            suggestion=suggestion
        )

    def _parse_selection_error(self, error: SelectionError, context: Dict) -> CliError:
        scanned = len(error.scan) if error.scan is not None else 0
        return CliError(
            severity=CliErrorSeverity.ERROR,
            message=str(error),
            source_location=self._location(error, context),
            suggestion="Widen --q-min/--q-max or supply more observations",
            details=f"{scanned} candidate grid sizes were scanned"
        )

    def _parse_solver_error(self, error: SolverError, context: Dict) -> CliError:
        return CliError(
            severity=CliErrorSeverity.ERROR,
            message=str(error),
            exit_code=ExitCode.NUMERICAL,
            suggestion="Loosen --tol or raise --max-iters"
        )

    def map_error(self, error: BaseException, context: Dict = None) -> CliError:
        """Map an exception raised during a command to a CliError"""
        if context is None:
            context = {}

        if isinstance(error, DataError):
            return self._parse_data_error(error, context)
        if isinstance(error, SelectionError):
            return self._parse_selection_error(error, context)
        if isinstance(error, SolverError):
            return self._parse_solver_error(error, context)
        if isinstance(error, InvalidArgumentError):
            return CliError(
                severity=CliErrorSeverity.ERROR,
                message=str(error),
                source_location=self._location(error, context),
                suggestion=context.get('suggestion', "Check the command options")
            )
        if isinstance(error, GenerationError):
            return CliError(
                severity=CliErrorSeverity.ERROR,
                message=str(error),
                suggestion="Try a different --seed"
            )
        if isinstance(error, (OSError, GapTVError)):
            return CliError(
                severity=CliErrorSeverity.ERROR,
                message=str(error),
                source_location=self._location(error, context)
            )
        raise error

    def non_convergence(self, what: str) -> CliError:
        return CliError(
            severity=CliErrorSeverity.WARNING,
            message=f"{what} did not converge within the iteration budget",
            exit_code=ExitCode.NUMERICAL,
            suggestion="Loosen --tol or raise --max-iters; the best iterate was kept"
        )
