"""Custom-formula grammar: identifiers, arithmetic, sqrt, floor."""

from __future__ import annotations

import pytest

from featurespace.errors import KernelError, ValidationError
from featurespace.expressions import evaluate, expression_names, parse_expression


def run(text, **env):
    return evaluate(parse_expression(text), env)


def test_arithmetic_and_precedence():
    assert run("1 + 2 * 3") == 7.0
    assert run("(1 + 2) * 3") == 9.0
    assert run("10 / 4") == 2.5
    assert run("-x + 2", x=3.0) == -1.0


def test_backtick_identifiers_allow_spaces():
    value = run("sqrt(`Horizontal Distance`*`Horizontal Distance` + v*v)",
                **{"Horizontal Distance": 3.0, "v": 4.0})
    assert value == 5.0


def test_floor_function():
    assert run("floor(sqrt(2) * 10)") == 14


def test_expression_names_collects_identifiers():
    ast = parse_expression("`a b` + c * sqrt(d)")
    assert expression_names(ast) == {"a b", "c", "d"}


def test_unknown_function_rejected():
    with pytest.raises(ValidationError, match="unknown function"):
        parse_expression("log(x)")


def test_malformed_expressions_rejected():
    for bad in ("", "1 +", "(1", "x y", "1 @ 2"):
        with pytest.raises(ValidationError):
            parse_expression(bad)


def test_division_by_zero_is_a_kernel_error():
    with pytest.raises(KernelError, match="division by zero"):
        run("1 / x", x=0.0)


def test_sqrt_of_negative_is_a_kernel_error():
    with pytest.raises(KernelError, match="sqrt"):
        run("sqrt(x)", x=-1.0)
