"""
Error Handler Module
Provides the exception hierarchy, validation helpers and logging setup for wallscale.
"""

import logging
import math
import traceback
from functools import wraps
from typing import Dict, Any, Optional, Sequence

import numpy as np


LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def configure_logging(level: str = 'INFO', log_file: Optional[str] = None) -> None:
    """
    Configure root logging for the command-line application.

    Args:
        level: Logging level name
        log_file: Optional path of an additional log file
    """
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True
    )


class WallScaleError(Exception):
    """Base exception class for wallscale errors."""

    def __init__(self, message: str, error_code: str = None, details: Dict = None):
        self.message = message
        self.error_code = error_code or 'UNKNOWN_ERROR'
        self.details = details or {}
        super().__init__(self.message)


class FieldValidationError(WallScaleError):
    """Exception for malformed magnetization data or parameters."""
    pass


class RegimeError(WallScaleError):
    """Exception for parameters outside the hypothesis of an operation."""
    pass


class ConstructionError(WallScaleError):
    """Exception for wall constructions that cannot be built on a grid."""
    pass


class RelaxationError(WallScaleError):
    """Exception for failed relaxations; details carry the energy trace."""
    pass


class FieldFormatError(WallScaleError):
    """Exception for unreadable field files; details carry line and offset."""
    pass


class SweepError(WallScaleError):
    """Exception for sweep, bisection and fit failures."""
    pass


class ConfigError(WallScaleError):
    """Exception for invalid run configurations."""
    pass


class ErrorHandler:
    """Validation helpers and error plumbing shared by all modules."""

    # CLI exit codes
    EXIT_OK = 0
    EXIT_VALIDATION = 1
    EXIT_IO = 2

    @staticmethod
    def validate_positive(name: str, value: float) -> float:
        """
        Validate a strictly positive, finite scalar.

        Args:
            name: Parameter name used in the message
            value: Value to check

        Returns:
            The value as float
        """
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise FieldValidationError(f"{name} must be a number, got {value!r}", "INVALID_PARAMETER")
        if not math.isfinite(value) or value <= 0:
            raise FieldValidationError(f"{name} must be positive and finite, got {value}", "INVALID_PARAMETER")
        return value

    @staticmethod
    def validate_unit_vector(v: Sequence[float], tol: float = 1e-12) -> np.ndarray:
        """
        Validate a unit 3-vector.

        Args:
            v: Candidate vector
            tol: Accepted deviation of the norm from one

        Returns:
            The vector as a float array
        """
        arr = np.asarray(v, dtype=float)
        if arr.shape != (3,):
            raise FieldValidationError(f"Expected a 3-vector, got shape {arr.shape}", "INVALID_VECTOR")
        if not np.all(np.isfinite(arr)):
            raise FieldValidationError("Vector contains NaN or Inf", "NON_FINITE")
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > tol:
            raise FieldValidationError(f"Vector {arr.tolist()} is not a unit vector (norm {norm})",
                                       "NON_UNIT_VECTOR", {'norm': norm})
        return arr

    @staticmethod
    def validate_finite(name: str, values: np.ndarray) -> np.ndarray:
        """Reject arrays containing NaN or Inf."""
        if not np.all(np.isfinite(values)):
            raise FieldValidationError(f"{name} contains NaN or Inf", "NON_FINITE")
        return values

    @staticmethod
    def handle_processing_error(func):
        """
        Decorator that turns wallscale errors into result dictionaries.

        Args:
            func: Function to wrap

        Returns:
            Wrapped function returning {'success': False, ...} on failure
        """
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except WallScaleError as e:
                logger.error(f"{type(e).__name__} in {func.__name__}: {e.message}")
                return {'success': False, 'error': e.message, 'error_code': e.error_code,
                        'details': e.details}
            except FloatingPointError as e:
                logger.error(f"Floating point error in {func.__name__}: {str(e)}")
                return {'success': False, 'error': str(e), 'error_code': 'NON_FINITE'}
            except MemoryError:
                logger.error(f"Memory error in {func.__name__}")
                return {'success': False, 'error': 'Grid too large for memory', 'error_code': 'MEMORY_ERROR'}
            except Exception as e:
                logger.error(f"Unexpected error in {func.__name__}: {str(e)}")
                logger.error(f"Traceback: {traceback.format_exc()}")
                return {'success': False, 'error': str(e), 'error_code': 'PROCESSING_ERROR'}

        return wrapper

    @staticmethod
    def exit_code_for(error: WallScaleError) -> int:
        """Map an exception to the CLI exit code."""
        if isinstance(error, (FieldFormatError, OSError)):
            return ErrorHandler.EXIT_IO
        if isinstance(error, ConfigError) and error.error_code in ('CONFIG_IO', 'PARSE_ERROR'):
            return ErrorHandler.EXIT_IO
        return ErrorHandler.EXIT_VALIDATION

    @staticmethod
    def create_error_response(error_message: str, error_code: str = None,
                              exit_code: int = EXIT_VALIDATION, details: Dict = None) -> tuple:
        """
        Create a standardized error response.

        Args:
            error_message: Error message
            error_code: Error code
            exit_code: Process exit code
            details: Optional diagnostic details

        Returns:
            Tuple of (response_dict, exit_code)
        """
        response = {
            'success': False,
            'error': error_message,
            'error_code': error_code or 'UNKNOWN_ERROR'
        }
        if details:
            response['details'] = details

        logger.error(f"Error: {error_message} (Code: {error_code})")

        return response, exit_code

    @staticmethod
    def log_operation(operation: str, details: Dict[str, Any] = None):
        """
        Log an operation for monitoring and debugging.

        Args:
            operation: Operation name
            details: Additional details to log
        """
        log_message = f"Operation: {operation}"
        if details:
            log_message += f" | Details: {details}"

        logger.info(log_message)
