"""Map literals: rational expressions in z such as ``"z^2 - 1.7549"``,
``"(z^2 - 1)/(z^2 + 1)"`` or ``"z^3 + a*z + b"`` with named parameters.

The text is rewritten into Python syntax (``^`` becomes ``**``, ``2.5i``
becomes ``2.5j``, a bare ``i`` becomes ``1j``) and parsed with ``ast``;
only numbers, the variable ``z``, declared parameter names, parentheses,
unary +/- and the binary operators + - * / ^ (integer exponents) are
accepted.  Evaluation yields ascending coefficient arrays (num, den).
"""

from __future__ import annotations

import ast
import re

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import BadSpec

_IMAG = re.compile(r"(?<![\w.])((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)i\b")
_BARE_I = re.compile(r"(?<![\w.])i\b")
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
MAX_EXPONENT = 64


def _to_python(text: str) -> str:
    s = _IMAG.sub(r"\1j", text)
    s = _BARE_I.sub("1j", s)
    return s.replace("^", "**")


class MapLiteral:
    """Parsed rational expression; ``evaluate(**params)`` gives (num, den)."""

    def __init__(self, text: str, params=()):
        self.text = text
        self.params = tuple(params)
        if "z" in self.params or "i" in self.params:
            raise BadSpec("parameter names 'z' and 'i' are reserved")
        try:
            tree = ast.parse(_to_python(text), mode="eval")
        except SyntaxError as exc:
            raise BadSpec(f"cannot parse map literal {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if not isinstance(node.op, _BINOPS):
                raise BadSpec(f"operator {type(node.op).__name__} not allowed in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
            if isinstance(node.op, ast.Pow):
                try:
                    e = _const_exponent(node.right)
                except BadSpec:
                    raise BadSpec(f"exponents must be integer constants in {self.text!r}") from None
                if abs(e) > MAX_EXPONENT:
                    raise BadSpec(f"exponent {e} too large")
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                raise BadSpec(f"unary operator not allowed in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float, complex)):
                raise BadSpec(f"bad constant {node.value!r}")
        elif isinstance(node, ast.Name):
            if node.id != "z" and node.id not in self.params:
                raise BadSpec(f"unknown name {node.id!r} in {self.text!r}")
        else:
            raise BadSpec(f"unsupported syntax in {self.text!r}")

    def evaluate(self, **values):
        missing = set(self.params) - set(values)
        if missing:
            raise BadSpec(f"missing parameter values: {sorted(missing)}")
        num, den = _eval(self._tree, {k: complex(v) for k, v in values.items()})
        num, den = _trim(num), _trim(den)
        if not np.any(den):
            raise BadSpec(f"denominator of {self.text!r} vanishes identically")
        n = max(len(num), len(den))
        return np.pad(num, (0, n - len(num))), np.pad(den, (0, n - len(den)))


def _const_exponent(node) -> int:
    sign = 1
    while isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        if isinstance(node.op, ast.USub):
            sign = -sign
        node = node.operand
    if isinstance(node, ast.Constant) and isinstance(node.value, int) and not isinstance(node.value, bool):
        return sign * node.value
    raise BadSpec("non-integer exponent")


def _trim(c):
    c = np.asarray(c, dtype=complex)
    nz = np.nonzero(c)[0]
    return c[: nz[-1] + 1] if nz.size else np.zeros(1, dtype=complex)


def _eval(node, env):
    one = np.ones(1, dtype=complex)
    if isinstance(node, ast.Constant):
        return np.array([complex(node.value)]), one
    if isinstance(node, ast.Name):
        if node.id == "z":
            return np.array([0, 1], dtype=complex), one
        return np.array([env[node.id]]), one
    if isinstance(node, ast.UnaryOp):
        n, d = _eval(node.operand, env)
        return (-n if isinstance(node.op, ast.USub) else n), d
    if isinstance(node.op, ast.Pow):
        n, d = _eval(node.left, env)
        e = _const_exponent(node.right)
        if e < 0:
            n, d, e = d, n, -e
        return npoly.polypow(n, e), npoly.polypow(d, e)
    a, b = _eval(node.left, env), _eval(node.right, env)
    if isinstance(node.op, ast.Add):
        return npoly.polyadd(npoly.polymul(a[0], b[1]), npoly.polymul(b[0], a[1])), npoly.polymul(a[1], b[1])
    if isinstance(node.op, ast.Sub):
        return npoly.polysub(npoly.polymul(a[0], b[1]), npoly.polymul(b[0], a[1])), npoly.polymul(a[1], b[1])
    if isinstance(node.op, ast.Mult):
        return npoly.polymul(a[0], b[0]), npoly.polymul(a[1], b[1])
    return npoly.polymul(a[0], b[1]), npoly.polymul(a[1], b[0])


def parse_map(text: str):
    """Coefficient pair (num, den) of a parameter-free map literal."""
    return MapLiteral(text).evaluate()


def map_from_literal(text: str):
    from .sphere import make_rational_map
    return make_rational_map(*parse_map(text))
