"""Runtime values and environments.

Values are:

* numbers        — Python floats (the language works in doubles); Python
                   ints appear only in machinery positions (step counts,
                   budgets) and are never produced by language arithmetic
* booleans       — Python bools
* the empty list — the ``EMPTY`` singleton
* pairs          — ``Pair``
* closures       — ``Closure`` (the stored lambda may be a source-level
                   ``Lambda`` or one of the converted-form lambdas)
* capsules       — ``Capsule``: an interrupted computation, holding the
                   continuation at the interruption point and a nullary
                   restart closure
* ``BOTTOM``     — the placeholder argument used to resume a capsule
* ``INFINITY``   — the "no step limit" sentinel

AD values (``Dual``, ``TapeCell``) live in :mod:`ckad.ad`.
"""

from __future__ import annotations

from .errors import UnboundVariableError


class _Singleton:
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name

    def __repr__(self) -> str:
        return self._name


#: The empty list.
EMPTY = _Singleton("#empty")

#: Placeholder argument passed when resuming a capsule.
BOTTOM = _Singleton("#bottom")

#: Step-limit sentinel meaning "never interrupt".  Comparisons of an int
#: step count against INFINITY are always false, which is exactly the
#: behaviour the limit check needs.
INFINITY = _Singleton("#infinity")


class Pair:
    __slots__ = ("car", "cdr")

    def __init__(self, car, cdr):
        self.car = car
        self.cdr = cdr

    def __repr__(self) -> str:
        return f"(cons {self.car!r} {self.cdr!r})"


class Env:
    """A frame of bindings plus an optional parent environment.

    User-level closures capture a single flat frame containing exactly the
    free variables of their lambda (see :func:`ckad.direct.make_closure`),
    except for closures installed by top-level definitions, which keep the
    global environment as their parent so that (mutually) recursive
    definitions resolve by late binding.
    """

    __slots__ = ("frame", "parent")

    def __init__(self, frame: dict, parent: "Env | None" = None):
        self.frame = frame
        self.parent = parent

    def lookup(self, name: str):
        env = self
        while env is not None:
            frame = env.frame
            if name in frame:
                return frame[name]
            env = env.parent
        raise UnboundVariableError(f"unbound variable: {name}")

    def maybe_lookup(self, name: str, default=None):
        env = self
        while env is not None:
            frame = env.frame
            if name in frame:
                return frame[name]
            env = env.parent
        return default

    def extend(self, name: str, value) -> "Env":
        return Env({name: value}, self)

    def __repr__(self) -> str:
        names = []
        env = self
        while env is not None:
            names.extend(env.frame.keys())
            env = env.parent
        return f"<env {' '.join(names)}>"


class Closure:
    """A lambda together with its captured environment."""

    __slots__ = ("lam", "env")

    def __init__(self, lam, env: Env):
        self.lam = lam
        self.env = env

    def __repr__(self) -> str:
        return f"<closure {self.lam!r}>"


class Capsule:
    """An interrupted computation: the continuation ``k`` at the point of
    interruption and a restart closure ``f`` that, when applied (to the
    ``BOTTOM`` placeholder), re-enters the computation exactly where it
    stopped."""

    __slots__ = ("k", "f")

    def __init__(self, k, f):
        self.k = k
        self.f = f

    def __repr__(self) -> str:
        return "<capsule>"


def is_number(v) -> bool:
    """True for plain language numbers (doubles).

    Ints are machinery values (step counts / budgets) and deliberately do
    not count: they must never be perturbed or taped.
    """
    return type(v) is float


def to_number(v) -> float:
    if type(v) is float:
        return v
    if type(v) is int:
        return float(v)
    raise TypeError(f"not a number: {v!r}")
