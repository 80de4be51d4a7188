"""Scalar expressions: parsing, evaluation and exact partial differentiation.

Grammar (precedence from loosest to tightest)::

    expr    := term   (("+" | "-") term)*
    term    := unary  (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?          # right associative
    atom    := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

Names are either declared variables or the constant ``pi``.  Angles are in
radians.  Trees are immutable and built through smart constructors that fold
constant subtrees and apply the identities ``x*0``, ``x*1``, ``x+0`` and
``x^1``; nothing else is simplified.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

from .errors import ExprDomainError, ExprSyntaxError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "tan", "sinh", "cosh", "tanh", "exp", "ln", "sqrt", "abs")
CONSTANTS = {"pi": math.pi}


# ---------------------------------------------------------------------------
# nodes


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Const(Node):
    name: str

    @property
    def value(self):
        return CONSTANTS[self.name]


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Bin(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


ZERO = Num(0.0)
ONE = Num(1.0)
TWO = Num(2.0)


def _free(node: Node) -> frozenset:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, (Num, Const)):
        return frozenset()
    if isinstance(node, (Neg, Call)):
        return _free(node.arg)
    return _free(node.left) | _free(node.right)


def _const_value(node):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return node.value
    return None


# ---------------------------------------------------------------------------
# primitive numerics shared by the tree walker and the compiled path


def _pow(a, b):
    return math.pow(a, b)


_FUNC_IMPL = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
}


def _apply_call(func, x, node):
    if func == "ln" and x <= 0.0:
        raise ExprDomainError(f"ln of non-positive value {x!r} in {to_string(node)}", node)
    if func == "sqrt" and x < 0.0:
        raise ExprDomainError(f"sqrt of negative value {x!r} in {to_string(node)}", node)
    try:
        return _FUNC_IMPL[func](x)
    except (ValueError, OverflowError) as exc:
        raise ExprDomainError(f"{func}({x!r}) failed: {exc} in {to_string(node)}", node) from None


def _apply_bin(op, a, b, node):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise ExprDomainError(f"division by zero in {to_string(node)}", node)
        return a / b
    # "^"
    try:
        return _pow(a, b)
    except (ValueError, OverflowError, ZeroDivisionError):
        raise ExprDomainError(f"power {a!r}^{b!r} undefined in {to_string(node)}", node) from None


def _eval(node: Node, env: Mapping[str, float]) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        return _apply_call(node.func, _eval(node.arg, env), node)
    return _apply_bin(node.op, _eval(node.left, env), _eval(node.right, env), node)


# ---------------------------------------------------------------------------
# smart constructors (constant folding + the four identities)


def _fold(node: Node) -> Node:
    try:
        value = _eval(node, {})
    except ExprDomainError:
        return node
    if not math.isfinite(value):
        return node
    return Num(float(value))


def neg(a: Node) -> Node:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Node, b: Node) -> Node:
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if _const_value(a) is not None and _const_value(b) is not None:
        return _fold(Bin("+", a, b))
    return Bin("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    if _const_value(a) is not None and _const_value(b) is not None:
        return _fold(Bin("-", a, b))
    return Bin("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if _const_value(a) is not None and _const_value(b) is not None:
        return _fold(Bin("*", a, b))
    return Bin("*", a, b)


def div(a: Node, b: Node) -> Node:
    if b == ONE:
        return a
    if a == ZERO and b != ZERO:
        return ZERO
    if _const_value(a) is not None and _const_value(b) is not None:
        return _fold(Bin("/", a, b))
    return Bin("/", a, b)


def power(a: Node, b: Node) -> Node:
    if b == ONE:
        return a
    if _const_value(a) is not None and _const_value(b) is not None:
        return _fold(Bin("^", a, b))
    return Bin("^", a, b)


def call(func: str, a: Node) -> Node:
    node = Call(func, a)
    if _const_value(a) is not None:
        return _fold(node)
    return node


_BUILD = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


# ---------------------------------------------------------------------------
# parser


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text, variables):
        self.text = text
        self.variables = set(variables)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", pos, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                nkind, nval, npos = self.peek()
                if nval != "(":
                    raise ExprSyntaxError(f"function {val!r} requires parentheses", npos, self.text)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in self.variables:
                return Var(val)
            if val in CONSTANTS:
                return Const(val)
            raise UnknownIdentifierError(f"unknown identifier {val!r}", pos, self.text)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", pos, self.text)


def _rebuild(node: Node) -> Node:
    """Pass a raw parse tree through the smart constructors."""
    if isinstance(node, (Num, Var, Const)):
        return node
    if isinstance(node, Neg):
        return neg(_rebuild(node.arg))
    if isinstance(node, Call):
        return call(node.func, _rebuild(node.arg))
    return _BUILD[node.op](_rebuild(node.left), _rebuild(node.right))


# ---------------------------------------------------------------------------
# printing


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node):
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Num) and node.value < 0:
        return 3
    return 5


def _fmt_num(x):
    if x.is_integer() and abs(x) < 1e15:
        s = str(int(x))
    else:
        s = repr(x)
    return f"({s})" if x < 0 or s.startswith("-") else s


def to_string(node: Node) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        return f"-{inner}" if _prec(node.arg) >= 4 else f"-({inner})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    p = _PREC[node.op]
    left = to_string(node.left)
    right = to_string(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < p:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# ---------------------------------------------------------------------------
# differentiation


def _d(node: Node, var: str) -> Node:
    if isinstance(node, (Num, Const)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if var not in _free(node):
        return ZERO
    if isinstance(node, Neg):
        return neg(_d(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = _d(u, var)
        f = node.func
        if f == "sin":
            inner = call("cos", u)
        elif f == "cos":
            inner = neg(call("sin", u))
        elif f == "tan":
            return div(du, power(call("cos", u), TWO))
        elif f == "sinh":
            inner = call("cosh", u)
        elif f == "cosh":
            inner = call("sinh", u)
        elif f == "tanh":
            inner = sub(ONE, power(call("tanh", u), TWO))
        elif f == "exp":
            inner = node
        elif f == "ln":
            return div(du, u)
        elif f == "sqrt":
            return div(du, mul(TWO, node))
        else:  # abs
            inner = div(u, node)
        return mul(du, inner)
    a, b = node.left, node.right
    op = node.op
    if op == "+":
        return add(_d(a, var), _d(b, var))
    if op == "-":
        return sub(_d(a, var), _d(b, var))
    if op == "*":
        return add(mul(_d(a, var), b), mul(a, _d(b, var)))
    if op == "/":
        return sub(div(_d(a, var), b), div(mul(a, _d(b, var)), power(b, TWO)))
    # "^"
    if var not in _free(b):
        exponent = sub(b, ONE)
        return mul(mul(b, power(a, exponent)), _d(a, var))
    if var not in _free(a):
        return mul(mul(node, call("ln", a)), _d(b, var))
    return mul(node, add(mul(_d(b, var), call("ln", a)), div(mul(b, _d(a, var)), a)))


def _substitute(node: Node, values: Mapping[str, Node]) -> Node:
    if isinstance(node, Var):
        return values.get(node.name, node)
    if isinstance(node, (Num, Const)):
        return node
    if isinstance(node, Neg):
        return neg(_substitute(node.arg, values))
    if isinstance(node, Call):
        return call(node.func, _substitute(node.arg, values))
    return _BUILD[node.op](_substitute(node.left, values), _substitute(node.right, values))


# ---------------------------------------------------------------------------
# compilation to a Python closure


def _source(node: Node, names: Mapping[str, str]) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return names[node.name]
    if isinstance(node, Neg):
        return f"(-{_source(node.arg, names)})"
    if isinstance(node, Call):
        return f"_{node.func}({_source(node.arg, names)})"
    left = _source(node.left, names)
    right = _source(node.right, names)
    if node.op == "^":
        return f"_pow({left}, {right})"
    return f"({left} {node.op} {right})"


_NAMESPACE = {f"_{name}": impl for name, impl in _FUNC_IMPL.items()}
_NAMESPACE["_pow"] = _pow


def compile_many(exprs: Sequence["Expression"], variables: Sequence[str]) -> Callable[..., list]:
    """Compile several expressions into one function of positional arguments.

    The returned callable evaluates every expression and returns a list of
    floats in order.  Failures are re-evaluated through the tree walker so the
    raised :class:`ExprDomainError` names the offending node.
    """
    variables = list(variables)
    names = {v: f"_a{i}" for i, v in enumerate(variables)}
    for e in exprs:
        missing = set(e.variables) - set(variables)
        if missing:
            raise ValueError(f"variables {sorted(missing)} not among {variables}")
    body = ", ".join(_source(e.root, names) for e in exprs)
    args = ", ".join(names[v] for v in variables)
    src = f"def _f({args}):\n    return [{body}]\n"
    namespace = dict(_NAMESPACE)
    exec(compile(src, "<expr>", "exec"), namespace)
    fast = namespace["_f"]
    isfinite = math.isfinite

    def run(*args):
        try:
            out = fast(*args)
        except (ValueError, ZeroDivisionError, OverflowError):
            env = dict(zip(variables, args))
            out = [e.eval(env) for e in exprs]
        for k, value in enumerate(out):
            if not isfinite(value):
                raise ExprDomainError(f"non-finite value in {exprs[k]}", exprs[k].root)
        return out

    return run


# ---------------------------------------------------------------------------
# public wrapper


class Expression:
    """An immutable parsed expression over a declared set of variables."""

    def __init__(self, root: Node, variables: Iterable[str]):
        self.root = root
        self.variables = tuple(variables)
        unknown = _free(root) - set(self.variables)
        if unknown:
            raise UnknownIdentifierError(f"undeclared variables {sorted(unknown)}")

    def __repr__(self):
        return f"Expression({str(self)!r}, variables={self.variables!r})"

    def __str__(self):
        return to_string(self.root)

    def __eq__(self, other):
        return isinstance(other, Expression) and self.root == other.root

    def __hash__(self):
        return hash(self.root)

    @property
    def free_variables(self) -> frozenset:
        return _free(self.root)

    @property
    def is_constant(self) -> bool:
        return not _free(self.root)

    @property
    def is_zero(self) -> bool:
        return self.root == ZERO

    def eval(self, binding: Mapping[str, float]) -> float:
        missing = [v for v in _free(self.root) if v not in binding]
        if missing:
            raise KeyError(f"no value bound for {sorted(missing)}")
        env = {k: float(v) for k, v in binding.items()}
        value = _eval(self.root, env)
        if not math.isfinite(value):
            raise ExprDomainError(f"non-finite result of {self}", self.root)
        return value

    __call__ = eval

    def diff(self, var: str) -> "Expression":
        if var not in self.variables:
            raise ValueError(f"{var!r} is not a declared variable of {self}")
        return Expression(_d(self.root, var), self.variables)

    def substitute(self, values: Mapping[str, float]) -> "Expression":
        """Bind some variables to numbers; they are removed from the variable set."""
        nodes = {k: Num(float(v)) for k, v in values.items()}
        rest = [v for v in self.variables if v not in values]
        return Expression(_substitute(self.root, nodes), rest)

    @cached_property
    def _compiled(self):
        return compile_many([self], self.variables)

    def fast(self, *args: float) -> float:
        """Evaluate with positional arguments in declared-variable order."""
        return self._compiled(*args)[0]


def parse(text: str, variables: Iterable[str] = ()) -> Expression:
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text)
    variables = tuple(variables)
    bad = [v for v in variables if v in FUNCTIONS or v in CONSTANTS]
    if bad:
        raise ExprSyntaxError(f"variable names shadow builtins: {bad}")
    raw = _Parser(text, variables).parse()
    return Expression(_rebuild(raw), variables)


def differentiate(e: Expression, var: str) -> Expression:
    return e.diff(var)


def constant(value: float, variables: Iterable[str] = ()) -> Expression:
    return Expression(Num(float(value)), variables)
