import cmath
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomlab import expr as ex
from geomlab.metricfield import CPoint

P = CPoint(0.3, -0.7, 0.4, 1.1)


def ev(src, p=P):
    return ex.evaluate(ex.parse(src), p)


class TestParse:
    def test_warren_potential_evaluates(self):
        val = ev("4*|z|^2*exp(Re(w)) + exp(-Re(w))", CPoint(1, 0, 0, 0))
        assert val == pytest.approx(5.0, abs=1e-15)

    def test_precedence(self):
        assert ev("1 + 2*3^2") == 19
        assert ev("-2^2") == -4
        assert ev("2^-1") == 0.5

    def test_imaginary_unit(self):
        assert ev("i*i") == -1

    def test_lowering(self):
        z = complex(P.x, P.y)
        assert abs(ev("Re(z)") - z.real) < 1e-14
        assert abs(ev("Im(z)") - z.imag) < 1e-14
        assert abs(ev("|z|^2") - abs(z) ** 2) < 1e-14
        assert abs(ev("conj(z*w)") - (z * complex(P.u, P.v)).conjugate()) < 1e-14

    def test_re_im_become_conj_sums(self):
        node = ex.parse("Re(z)")
        assert "zbar" in node.symbols()
        assert node.op != "Re"

    def test_interning(self):
        assert ex.parse("z*w + 1") is ex.parse("(z*w)+1")
        assert ex.parse("z + 0") is ex.var("z")
        assert ex.parse("1*w") is ex.var("w")
        assert ex.parse("0*exp(z)") is ex.ZERO

    def test_constant_folding(self):
        node = ex.parse("2*3 + exp(0)")
        assert node.op == "const" and node.value == 7

    def test_conj_pushed_to_leaves(self):
        node = ex.parse("conj(exp(z) * w)")
        assert node is ex.parse("exp(zbar) * wbar")


class TestParseErrors:
    @pytest.mark.parametrize(
        "src, offset",
        [("z +", 3), ("(z", 2), ("z ** w", 3), ("exp(z", 5), ("|z|^3", 4), ("", 0)],
    )
    def test_offsets(self, src, offset):
        with pytest.raises(ex.ParseError) as info:
            ex.parse(src)
        assert info.value.offset == offset

    def test_expected_set_reported(self):
        with pytest.raises(ex.ParseError) as info:
            ex.parse("z +")
        assert "z" in info.value.expected and "(" in info.value.expected

    def test_unknown_identifier(self):
        with pytest.raises(ex.UnknownIdentifierError) as info:
            ex.parse("z + sin(w)")
        assert info.value.name == "sin" and info.value.offset == 4

    def test_power_needs_integer(self):
        with pytest.raises(ex.ParseError):
            ex.parse("z^0.5")


class TestEvaluate:
    def test_log_of_zero_names_node(self):
        with pytest.raises(ex.EvalError) as info:
            ex.evaluate(ex.parse("1 + log(z)"), CPoint(0, 0, 0, 0))
        assert "log" in str(info.value)
        assert info.value.node is ex.parse("log(z)")

    def test_division_by_zero(self):
        with pytest.raises(ex.EvalError):
            ex.evaluate(ex.parse("w / z"), CPoint(0, 0, 1, 0))

    def test_extended_precision(self):
        val = ex.evaluate(ex.parse("exp(Re(w))"), CPoint(0, 0, 1, 0), dtype=np.clongdouble)
        assert val.dtype == np.clongdouble
        assert abs(val - np.exp(np.longdouble(1))) < 1e-17

    def test_pickle_roundtrip_preserves_identity(self):
        node = ex.parse("exp(z*wbar) + |w|^2")
        assert pickle.loads(pickle.dumps(node)) is node

    def test_compiled_batch_matches_pointwise(self):
        node = ex.parse("exp(z) * wbar + z^3")
        fn = ex.compile_exprs([node])
        rng = np.random.default_rng(1)
        z = rng.normal(size=5) + 1j * rng.normal(size=5)
        w = rng.normal(size=5) + 1j * rng.normal(size=5)
        (batch,) = fn(z, np.conj(z), w, np.conj(w))
        for k in range(5):
            p = CPoint.from_complex(z[k], w[k])
            assert abs(batch[k] - ex.evaluate(node, p)) < 1e-13 * max(1, abs(batch[k]))


# -- properties --------------------------------------------------------------

leaves = st.sampled_from(["z", "zbar", "w", "wbar", "1", "2", "i", "0.5"])


def _combine(children):
    binary = st.tuples(st.sampled_from(["+", "-", "*"]), children, children).map(lambda t: f"({t[1]} {t[0]} {t[2]})")
    unary = st.tuples(st.sampled_from(["exp", "conj", "Re", "Im", "-"]), children).map(
        lambda t: f"{t[0]}({t[1]})" if t[0] != "-" else f"(-{t[1]})"
    )
    square = children.map(lambda c: f"|{c}|^2")
    return st.one_of(binary, unary, square)


sources = st.recursive(leaves, _combine, max_leaves=8)
coords = st.floats(-1.5, 1.5, allow_nan=False)
points = st.builds(CPoint, coords, coords, coords, coords)


@settings(max_examples=150, deadline=None)
@given(sources)
def test_print_parse_roundtrip(src):
    node = ex.parse(src)
    assert ex.parse(ex.to_source(node)) is node


def _safe(node, p):
    try:
        val = ex.evaluate(node, p)
    except ex.EvalError:
        return None
    return val if cmath.isfinite(val) and abs(val) < 1e6 else None


@settings(max_examples=150, deadline=None)
@given(sources, points)
def test_conj_matches_numeric_conjugate(src, p):
    node = ex.parse(src)
    a, b = _safe(ex.conj(node), p), _safe(node, p)
    if a is None or b is None:
        return
    assert abs(a - b.conjugate()) <= 1e-12 * max(1.0, abs(b))


@settings(max_examples=150, deadline=None)
@given(sources, points)
def test_lowered_re_im_abs_agree(src, p):
    node = ex.parse(src)
    val = _safe(node, p)
    if val is None:
        return
    scale = max(1.0, abs(val))
    assert abs(ex.evaluate(ex.re_part(node), p) - val.real) <= 1e-14 * scale * 4
    assert abs(ex.evaluate(ex.im_part(node), p) - val.imag) <= 1e-14 * scale * 4
    assert abs(ex.evaluate(ex.abs2(node), p) - abs(val) ** 2) <= 1e-14 * scale * scale * 8
