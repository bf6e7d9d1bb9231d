"""Abstract syntax.

Two node families share this module:

* the source language: ``Const``, ``Var``, ``Lambda``, ``App``, ``If``,
  ``Unary``, ``Binary``, the AD forms ``ForwardJ`` / ``ReverseJ`` /
  ``CheckpointReverseJ``, and the machinery forms ``Interrupt`` /
  ``Resume`` (the latter two are not parseable from user source; they are
  only built internally), and

* the converted form produced by :mod:`ckad.convert`: three- and
  four-argument lambdas and applications (``Lambda3`` / ``Lambda4`` /
  ``App3`` / ``App4``), the per-site step-limit check ``LimitCheck``, and
  ``HostOp`` for the AD operators appearing in converted code.

Every node carries an integer ``TAG`` class attribute used for fast
dispatch in the evaluators.
"""

from __future__ import annotations

# -- source language tags -------------------------------------------------
T_CONST = 0
T_VAR = 1
T_LAMBDA = 2
T_APP = 3
T_IF = 4
T_UNARY = 5
T_BINARY = 6
T_FORWARD_J = 7
T_REVERSE_J = 8
T_CHECKPOINT_J = 9
T_INTERRUPT = 10
T_RESUME = 11

# -- converted form tags ---------------------------------------------------
T_LAMBDA3 = 12
T_LAMBDA4 = 13
T_APP3 = 14
T_APP4 = 15
T_LIMIT = 16
T_HOSTOP = 17


class Expr:
    __slots__ = ()


class Const(Expr):
    __slots__ = ("value",)
    TAG = T_CONST

    def __init__(self, value):
        self.value = value


class Var(Expr):
    __slots__ = ("name",)
    TAG = T_VAR

    def __init__(self, name: str):
        self.name = name


class Lambda(Expr):
    __slots__ = ("param", "body", "fvs")
    TAG = T_LAMBDA

    def __init__(self, param: str, body: Expr):
        self.param = param
        self.body = body
        self.fvs = None  # cached tuple of free variable names


class App(Expr):
    __slots__ = ("fn", "arg")
    TAG = T_APP

    def __init__(self, fn: Expr, arg: Expr):
        self.fn = fn
        self.arg = arg


class If(Expr):
    __slots__ = ("cond", "then", "alt")
    TAG = T_IF

    def __init__(self, cond: Expr, then: Expr, alt: Expr):
        self.cond = cond
        self.then = then
        self.alt = alt


class Unary(Expr):
    __slots__ = ("op", "arg")
    TAG = T_UNARY

    def __init__(self, op: str, arg: Expr):
        self.op = op
        self.arg = arg


class Binary(Expr):
    __slots__ = ("op", "left", "right")
    TAG = T_BINARY

    def __init__(self, op: str, left: Expr, right: Expr):
        self.op = op
        self.left = left
        self.right = right


class _TripleForm(Expr):
    __slots__ = ("e1", "e2", "e3")

    def __init__(self, e1: Expr, e2: Expr, e3: Expr):
        self.e1 = e1
        self.e2 = e2
        self.e3 = e3


class ForwardJ(_TripleForm):
    """(j* f x x-tangent)"""

    __slots__ = ()
    TAG = T_FORWARD_J


class ReverseJ(_TripleForm):
    """(*j f x y-cotangent)"""

    __slots__ = ()
    TAG = T_REVERSE_J


class CheckpointReverseJ(_TripleForm):
    """(checkpoint-*j f x y-cotangent)"""

    __slots__ = ()
    TAG = T_CHECKPOINT_J


class Interrupt(_TripleForm):
    """(interrupt f x limit) — internal machinery form."""

    __slots__ = ()
    TAG = T_INTERRUPT


class Resume(Expr):
    """(resume z) — internal machinery form."""

    __slots__ = ("arg",)
    TAG = T_RESUME

    def __init__(self, arg: Expr):
        self.arg = arg


# -- converted form --------------------------------------------------------

class Lambda3(Expr):
    """A continuation lambda binding (count, limit, value)."""

    __slots__ = ("n", "l", "x", "body", "fvs")
    TAG = T_LAMBDA3

    def __init__(self, n: str, l: str, x: str, body: Expr):
        self.n = n
        self.l = l
        self.x = x
        self.body = body
        self.fvs = None  # free-variable cache (convert.converted_free_variables)


class Lambda4(Expr):
    """A converted function lambda binding (continuation, count, limit, value)."""

    __slots__ = ("k", "n", "l", "x", "body", "n_offset", "fvs")
    TAG = T_LAMBDA4

    def __init__(self, k: str, n: str, l: str, x: str, body: Expr,
                 n_offset: int = 0):
        self.k = k
        self.n = n
        self.l = l
        self.x = x
        self.body = body
        self.fvs = None  # free-variable cache (convert.converted_free_variables)
        # Restart closures built by the limit check bind the count
        # variable to (supplied count - n_offset) so that the counts the
        # body derives restart from the supplied count (see convert._wrap).
        self.n_offset = n_offset


class App3(Expr):
    __slots__ = ("fn", "n", "l", "arg")
    TAG = T_APP3

    def __init__(self, fn: Expr, n: Expr, l: Expr, arg: Expr):
        self.fn = fn
        self.n = n
        self.l = l
        self.arg = arg


class App4(Expr):
    __slots__ = ("fn", "k", "n", "l", "arg")
    TAG = T_APP4

    def __init__(self, fn: Expr, k: Expr, n: Expr, l: Expr, arg: Expr):
        self.fn = fn
        self.k = k
        self.n = n
        self.l = l
        self.arg = arg


class LimitCheck(Expr):
    """Per-site step-limit check wrapping a converted clause.

    If the current count (``n_expr``) equals the current limit
    (``l_expr``) the evaluator packages the pending work as a capsule
    whose restart closure is ``relam`` closed over the current
    environment; otherwise it evaluates ``body``.  ``relam`` is prebuilt
    at conversion time and always has ``body`` as its body.
    """

    __slots__ = ("k_expr", "n_expr", "l_expr", "body", "relam")
    TAG = T_LIMIT

    def __init__(self, k_expr: Expr, n_expr: Expr, l_expr: Expr, body: Expr,
                 relam: Lambda4):
        self.k_expr = k_expr
        self.n_expr = n_expr
        self.l_expr = l_expr
        self.body = body
        self.relam = relam


class HostOp(Expr):
    """An AD operator site inside converted code: ``which`` is one of
    ``"j*"``, ``"*j"``, ``"checkpoint-*j"``."""

    __slots__ = ("which", "e1", "e2", "e3")
    TAG = T_HOSTOP

    def __init__(self, which: str, e1: Expr, e2: Expr, e3: Expr):
        self.which = which
        self.e1 = e1
        self.e2 = e2
        self.e3 = e3


# -- free variables ---------------------------------------------------------

def free_variables(e: Expr) -> tuple:
    """Free variables of ``e`` in first-occurrence order.

    Results for ``Lambda`` nodes are cached on the node.
    """
    if e.TAG == T_LAMBDA and e.fvs is not None:
        return e.fvs
    acc: dict = {}
    _fv(e, frozenset(), acc)
    result = tuple(acc)
    if e.TAG == T_LAMBDA:
        e.fvs = result
    return result


def _fv(e: Expr, bound: frozenset, acc: dict) -> None:
    tag = e.TAG
    if tag == T_CONST:
        return
    if tag == T_VAR:
        if e.name not in bound:
            acc.setdefault(e.name, True)
        return
    if tag == T_LAMBDA:
        if e.fvs is not None:
            for name in e.fvs:
                if name not in bound:
                    acc.setdefault(name, True)
            return
        inner: dict = {}
        _fv(e.body, frozenset((e.param,)), inner)
        e.fvs = tuple(inner)
        for name in e.fvs:
            if name not in bound:
                acc.setdefault(name, True)
        return
    if tag == T_APP:
        _fv(e.fn, bound, acc)
        _fv(e.arg, bound, acc)
        return
    if tag == T_IF:
        _fv(e.cond, bound, acc)
        _fv(e.then, bound, acc)
        _fv(e.alt, bound, acc)
        return
    if tag == T_UNARY:
        _fv(e.arg, bound, acc)
        return
    if tag == T_BINARY:
        _fv(e.left, bound, acc)
        _fv(e.right, bound, acc)
        return
    if tag in (T_FORWARD_J, T_REVERSE_J, T_CHECKPOINT_J, T_INTERRUPT):
        _fv(e.e1, bound, acc)
        _fv(e.e2, bound, acc)
        _fv(e.e3, bound, acc)
        return
    if tag == T_RESUME:
        _fv(e.arg, bound, acc)
        return
    if tag == T_LAMBDA3:
        _fv(e.body, bound | {e.n, e.l, e.x}, acc)
        return
    if tag == T_LAMBDA4:
        _fv(e.body, bound | {e.k, e.n, e.l, e.x}, acc)
        return
    if tag == T_APP3:
        _fv(e.fn, bound, acc)
        _fv(e.n, bound, acc)
        _fv(e.l, bound, acc)
        _fv(e.arg, bound, acc)
        return
    if tag == T_APP4:
        _fv(e.fn, bound, acc)
        _fv(e.k, bound, acc)
        _fv(e.n, bound, acc)
        _fv(e.l, bound, acc)
        _fv(e.arg, bound, acc)
        return
    if tag == T_LIMIT:
        _fv(e.k_expr, bound, acc)
        _fv(e.n_expr, bound, acc)
        _fv(e.l_expr, bound, acc)
        _fv(e.body, bound, acc)
        return
    if tag == T_HOSTOP:
        _fv(e.e1, bound, acc)
        _fv(e.e2, bound, acc)
        _fv(e.e3, bound, acc)
        return
    raise TypeError(f"unknown expression node: {e!r}")


# -- pretty printing ---------------------------------------------------------

def to_sexpr(e: Expr) -> str:
    tag = e.TAG
    if tag == T_CONST:
        v = e.value
        if v is True:
            return "#t"
        if v is False:
            return "#f"
        if type(v) is float:
            return repr(v)
        if type(v) is int:
            return repr(v)
        return "nil"  # the only other constant a program can denote
    if tag == T_VAR:
        return e.name
    if tag == T_LAMBDA:
        return f"(lambda ({e.param}) {to_sexpr(e.body)})"
    if tag == T_APP:
        return f"({to_sexpr(e.fn)} {to_sexpr(e.arg)})"
    if tag == T_IF:
        return f"(if {to_sexpr(e.cond)} {to_sexpr(e.then)} {to_sexpr(e.alt)})"
    if tag == T_UNARY:
        return f"({e.op} {to_sexpr(e.arg)})"
    if tag == T_BINARY:
        return f"({e.op} {to_sexpr(e.left)} {to_sexpr(e.right)})"
    if tag == T_FORWARD_J:
        return f"(j* {to_sexpr(e.e1)} {to_sexpr(e.e2)} {to_sexpr(e.e3)})"
    if tag == T_REVERSE_J:
        return f"(*j {to_sexpr(e.e1)} {to_sexpr(e.e2)} {to_sexpr(e.e3)})"
    if tag == T_CHECKPOINT_J:
        return (f"(checkpoint-*j {to_sexpr(e.e1)} {to_sexpr(e.e2)} "
                f"{to_sexpr(e.e3)})")
    if tag == T_INTERRUPT:
        return f"(interrupt {to_sexpr(e.e1)} {to_sexpr(e.e2)} {to_sexpr(e.e3)})"
    if tag == T_RESUME:
        return f"(resume {to_sexpr(e.arg)})"
    if tag == T_LAMBDA3:
        return f"(lambda3 ({e.n} {e.l} {e.x}) {to_sexpr(e.body)})"
    if tag == T_LAMBDA4:
        return f"(lambda4 ({e.k} {e.n} {e.l} {e.x}) {to_sexpr(e.body)})"
    if tag == T_APP3:
        return (f"({to_sexpr(e.fn)} {to_sexpr(e.n)} {to_sexpr(e.l)} "
                f"{to_sexpr(e.arg)})")
    if tag == T_APP4:
        return (f"({to_sexpr(e.fn)} {to_sexpr(e.k)} {to_sexpr(e.n)} "
                f"{to_sexpr(e.l)} {to_sexpr(e.arg)})")
    if tag == T_LIMIT:
        return (f"(limit-check {to_sexpr(e.n_expr)} {to_sexpr(e.l_expr)} "
                f"{to_sexpr(e.body)})")
    if tag == T_HOSTOP:
        return (f"({e.which} {to_sexpr(e.e1)} {to_sexpr(e.e2)} "
                f"{to_sexpr(e.e3)})")
    raise TypeError(f"unknown expression node: {e!r}")


def node_count(e: Expr) -> int:
    """Number of AST nodes in ``e`` (used to check conversion size bounds)."""
    tag = e.TAG
    if tag in (T_CONST, T_VAR):
        return 1
    if tag == T_LAMBDA:
        return 1 + node_count(e.body)
    if tag == T_APP:
        return 1 + node_count(e.fn) + node_count(e.arg)
    if tag == T_IF:
        return 1 + node_count(e.cond) + node_count(e.then) + node_count(e.alt)
    if tag == T_UNARY:
        return 1 + node_count(e.arg)
    if tag == T_BINARY:
        return 1 + node_count(e.left) + node_count(e.right)
    if tag in (T_FORWARD_J, T_REVERSE_J, T_CHECKPOINT_J, T_INTERRUPT):
        return 1 + node_count(e.e1) + node_count(e.e2) + node_count(e.e3)
    if tag == T_RESUME:
        return 1 + node_count(e.arg)
    if tag == T_LAMBDA3:
        return 1 + node_count(e.body)
    if tag == T_LAMBDA4:
        return 1 + node_count(e.body)
    if tag == T_APP3:
        return (1 + node_count(e.fn) + node_count(e.n) + node_count(e.l)
                + node_count(e.arg))
    if tag == T_APP4:
        return (1 + node_count(e.fn) + node_count(e.k) + node_count(e.n)
                + node_count(e.l) + node_count(e.arg))
    if tag == T_LIMIT:
        # the prebuilt restart lambda shares `body`, count it once
        return (1 + node_count(e.k_expr) + node_count(e.n_expr)
                + node_count(e.l_expr) + node_count(e.body))
    if tag == T_HOSTOP:
        return 1 + node_count(e.e1) + node_count(e.e2) + node_count(e.e3)
    raise TypeError(f"unknown expression node: {e!r}")


def contains_tag(e: Expr, tags: set) -> bool:
    """Whether any node in ``e`` has a TAG in ``tags``."""
    stack = [e]
    while stack:
        node = stack.pop()
        tag = node.TAG
        if tag in tags:
            return True
        if tag == T_LAMBDA:
            stack.append(node.body)
        elif tag == T_APP:
            stack.append(node.fn)
            stack.append(node.arg)
        elif tag == T_IF:
            stack.append(node.cond)
            stack.append(node.then)
            stack.append(node.alt)
        elif tag == T_UNARY:
            stack.append(node.arg)
        elif tag == T_BINARY:
            stack.append(node.left)
            stack.append(node.right)
        elif tag in (T_FORWARD_J, T_REVERSE_J, T_CHECKPOINT_J, T_INTERRUPT,
                     T_HOSTOP):
            stack.append(node.e1)
            stack.append(node.e2)
            stack.append(node.e3)
        elif tag == T_RESUME:
            stack.append(node.arg)
        elif tag in (T_LAMBDA3, T_LAMBDA4):
            stack.append(node.body)
        elif tag == T_APP3:
            stack.extend((node.fn, node.n, node.l, node.arg))
        elif tag == T_APP4:
            stack.extend((node.fn, node.k, node.n, node.l, node.arg))
        elif tag == T_LIMIT:
            stack.extend((node.k_expr, node.n_expr, node.l_expr, node.body))
    return False
