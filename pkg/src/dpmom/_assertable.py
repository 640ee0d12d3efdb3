"""``@assertable``: let a getter keyword check its own return value."""

import inspect
from collections.abc import Callable
from numbers import Integral, Real
from typing import Any, cast

import numpy as np
from assertionengine import (
    AssertionOperator,
    float_str_verify_assertion,
    int_str_verify_assertion,
    verify_assertion,
)

__all__ = ['ASSERTABLE_MARKER', 'assertable', 'plain_value']

ASSERTABLE_MARKER = 'DPMOM_ASSERTABLE'

# name -> (Python annotation, type name shown to Robot Framework)
_EXTRA_ARGUMENTS: dict[str, tuple[Any, str]] = {
    'assertion_operator': (AssertionOperator | None, 'AssertionOperator | None'),
    'assertion_expected': (Any, 'Any'),
    'assertion_message': (str | None, 'str | None'),
}


def plain_value(value: Any) -> Any:
    """Turn numpy scalars into ``int``/``float`` so assertion operators compare them like Robot numbers."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, Integral):
        return int(value)
    if isinstance(value, Real):
        return float(value)
    return value


def _verify(value: Any, operator: AssertionOperator, expected: Any, message: str | None) -> None:
    # Robot passes the expected value as text; numeric results compare numerically.
    if isinstance(value, bool):
        verify_assertion(value, operator, expected, '', message or '')
    elif isinstance(value, int):
        int_str_verify_assertion(value, operator, expected, '', message or '')
    elif isinstance(value, float):
        float_str_verify_assertion(value, operator, expected, '', message or '')
    else:
        verify_assertion(value, operator, expected, '', message or '')


def _with_assertion_arguments(signature: inspect.Signature) -> inspect.Signature:
    extra = [
        inspect.Parameter(name, inspect.Parameter.POSITIONAL_OR_KEYWORD, default=None, annotation=annotation)
        for name, (annotation, _) in _EXTRA_ARGUMENTS.items()
    ]
    return signature.replace(parameters=[*signature.parameters.values(), *extra])


def _source_location(func: Callable[..., Any]) -> tuple[str | None, int | None]:
    try:
        filename = inspect.getsourcefile(func)
    except (TypeError, OSError):
        filename = None
    code = getattr(func, '__code__', None)
    return filename, getattr(code, 'co_firstlineno', None)


def _publish_metadata(func: Callable[..., Any], wrapper: Callable[..., Any], signature: inspect.Signature) -> None:
    target = cast(Any, wrapper)
    for attribute in ('__name__', '__qualname__', '__doc__', '__module__'):
        setattr(target, attribute, getattr(func, attribute, getattr(target, attribute, None)))
    target.__annotations__ = {
        **getattr(func, '__annotations__', {}),
        **{name: annotation for name, (annotation, _) in _EXTRA_ARGUMENTS.items()},
    }
    target.__signature__ = signature
    target.robot_name = getattr(func, 'robot_name', None)
    target.robot_tags = getattr(func, 'robot_tags', ())
    filename, lineno = _source_location(func)
    target.robot_source = getattr(func, 'robot_source', None) or filename
    target.robot_lineno = getattr(func, 'robot_lineno', None) or lineno
    robot_types = getattr(func, 'robot_types', None)
    target.robot_types = {
        **(robot_types if isinstance(robot_types, dict) else {}),
        **{name: robot_type for name, (_, robot_type) in _EXTRA_ARGUMENTS.items()},
    }
    setattr(target, ASSERTABLE_MARKER, True)


def assertable(func: Callable[..., Any]) -> Callable[..., Any]:
    """Append ``assertion_operator``, ``assertion_expected`` and ``assertion_message`` to a keyword.

    Without an operator the keyword just returns its value. With one, the value is checked through
    ``assertionengine.verify_assertion`` and returned when the check passes.
    """
    signature = _with_assertion_arguments(inspect.signature(func))

    def wrapper(*args: Any, **kwargs: Any) -> Any:
        bound = signature.bind_partial(*args, **kwargs)
        operator = bound.arguments.pop('assertion_operator', None)
        expected = bound.arguments.pop('assertion_expected', None)
        message = bound.arguments.pop('assertion_message', None)
        value = plain_value(func(*bound.args, **bound.kwargs))
        if operator is not None:
            _verify(value, operator, expected, message)
        return value

    _publish_metadata(func, wrapper, signature)
    return wrapper
