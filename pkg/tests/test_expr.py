import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from exit_spectrum import Expression, expr_eval
from exit_spectrum.errors import DomainError, ExpressionOverflow, ParseError


class TestEvaluate:
    def test_polynomial(self):
        assert expr_eval("x*(1-x)", 0.5) == 0.25

    def test_sqrt(self):
        assert expr_eval("sqrt(1+x^2)", 0.0) == 1.0

    def test_power_is_right_associative(self):
        assert expr_eval("2^3^2", 0.0) == 512.0

    def test_functions_and_constants(self):
        v = expr_eval("exp(1) - e + sin(pi/2) + cos(0) + abs(-2) + log(e)", 0.0)
        assert v == pytest.approx(5.0)

    def test_unary(self):
        assert expr_eval("-x + +2", 3.0) == -1.0

    def test_vectorized(self):
        x = np.linspace(0, 1, 5)
        np.testing.assert_allclose(Expression("x^2 + 1")(x), x**2 + 1)

    def test_constant_broadcasts(self):
        out = Expression("3")(np.zeros(4))
        np.testing.assert_array_equal(out, [3.0] * 4)

    @given(st.floats(-50, 50))
    def test_matches_python(self, x):
        assert expr_eval("x^2 - 3*x + exp(-abs(x))", x) == pytest.approx(x * x - 3 * x + math.exp(-abs(x)), rel=1e-12, abs=1e-12)


class TestErrors:
    def test_log_negative(self):
        with pytest.raises(DomainError) as err:
            expr_eval("log(x)", -1.0)
        assert err.value.module == "cli_report"

    def test_sqrt_negative(self):
        with pytest.raises(DomainError):
            expr_eval("sqrt(x)", -1.0)

    def test_division_by_zero(self):
        with pytest.raises(DomainError):
            expr_eval("1/x", 0.0)

    def test_overflow(self):
        with pytest.raises(ExpressionOverflow):
            expr_eval("exp(x)", 1000.0)
        assert issubclass(ExpressionOverflow, DomainError)

    def test_fractional_power_of_negative(self):
        with pytest.raises(DomainError):
            expr_eval("x^0.5", -4.0)

    @pytest.mark.parametrize(
        "text,pos",
        [("x +", None), ("foo(x)", 0), ("y", 0), ("x ** 2", 2), ("", 0), ("__import__('os')", 0), ("x[0]", None), ("'a'", 0), ("sin(x, 2)", 0)],
    )
    def test_parse_errors(self, text, pos):
        with pytest.raises(ParseError) as err:
            Expression(text)
        if pos is not None:
            assert err.value.position == pos

    def test_attribute_access_rejected(self):
        with pytest.raises(ParseError):
            Expression("x.real")
