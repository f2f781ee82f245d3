"""
Decorators for the point cloud ray launcher.

These decorators keep stage bookkeeping (timing, error wrapping, parameter
checks) out of the geometric kernels and the tool functions.
"""

import functools
import inspect
import logging
import time
from typing import Any, Callable, Dict, Optional, ParamSpec, TypeVar

from .errors import InvalidParameterError, PropagationError, StageError

logger = logging.getLogger("pc-raylauncher")

P = ParamSpec("P")
T = TypeVar("T")


def handle_pipeline_errors(func: Callable[P, T]) -> Callable[P, str | T]:
    """
    Decorator that catches simulator exceptions and returns error messages.

    Use this for tool-server functions that should return error strings
    instead of raising.
    """

    @functools.wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> str | T:
        try:
            return func(*args, **kwargs)
        except PropagationError as e:
            logger.error(f"Simulation error in {func.__name__}: {e}")
            return f"Error: {e}"
        except Exception as e:
            logger.error(f"Unexpected error in {func.__name__}: {e}")
            return f"Error: {e}"

    return wrapper


def pipeline_stage(stage: str):
    """
    Decorator that times a pipeline stage and attaches the stage name to failures.

    The wrapped function may be called with an extra keyword ``timings``
    (a dict); the elapsed wall time is added under ``stage``. Any exception
    other than StageError is re-raised as StageError(stage, cause).

    Args:
        stage: Stage name as reported in the run summary
    """

    def decorator(func: Callable[P, T]) -> Callable[P, T]:
        @functools.wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
            timings: Optional[Dict[str, float]] = kwargs.pop("timings", None)
            start = time.perf_counter()
            logger.debug(f"Stage '{stage}' started")
            try:
                return func(*args, **kwargs)
            except StageError:
                raise
            except Exception as e:
                logger.error(f"Stage '{stage}' failed: {e}")
                raise StageError(stage, e) from e
            finally:
                elapsed = time.perf_counter() - start
                if timings is not None:
                    timings[stage] = timings.get(stage, 0.0) + elapsed
                logger.info(f"Stage '{stage}' finished in {elapsed:.3f}s")

        return wrapper

    return decorator


def validate_params(**validators: Callable[[Any], bool]):
    """
    Decorator that validates function parameters.

    Args:
        **validators: Dict of param_name -> validator_function

    Example:
        @validate_params(
            density=lambda d: d > 0,
            seed=lambda s: s >= 0,
        )
        def make_scene(preset: str, density: float, seed: int): ...
    """

    def decorator(func: Callable[P, T]) -> Callable[P, T]:
        sig = inspect.signature(func)
        params = list(sig.parameters.keys())

        @functools.wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
            full_kwargs = dict(zip(params, args))
            full_kwargs.update(kwargs)

            for param_name, validator in validators.items():
                if param_name in full_kwargs:
                    value = full_kwargs[param_name]
                    if value is not None and not validator(value):
                        raise InvalidParameterError(param_name, f"valid, got {value!r}")

            return func(*args, **kwargs)

        return wrapper

    return decorator
