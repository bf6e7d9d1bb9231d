"""Step-counting CPS evaluator with general interruption and resumption.

The machine threads a step count ``n`` and a step limit ``l`` through
evaluation.  Entering the evaluator on any expression first checks the
limit: when ``n == l`` the pending work is packaged as a *capsule* — the
continuation at that point plus a restart closure — and returned to the
host.  Otherwise each expression clause increments the count exactly
once.  Continuations are defunctionalized records so that the reverse-AD
structural walks can traverse (and tape through) a capsule.

Step accounting (checked by the tests):

* every expression clause costs exactly one step;
* applying a closure costs nothing beyond its body;
* the AD operators are atomic — their inner runs use a fresh count and no
  limit, and contribute nothing to the outer count;
* an interrupted run restarts its count at zero, so the steps needed to
  finish a computation after an interruption at budget ``l`` are exactly
  ``total - l``.

Host entry points:

* ``primops(f, x)``    — run to completion, return the step count;
* ``interrupt(f, x, l)`` — run for ``l`` steps, return a capsule (or
  raise :class:`RanToCompletionError` if the run finishes early);
* ``resume(z)``        — run a capsule to completion, return its value;
* ``make_I(f, l)``     — a closure that behaves like ``f`` but
  interrupts itself after ``l`` steps;
* ``make_R()``         — the closure that resumes a capsule.
"""

from __future__ import annotations

from .ast import (Interrupt, Lambda, Resume, T_APP, T_BINARY,
                  T_CHECKPOINT_J, T_CONST, T_FORWARD_J, T_IF, T_INTERRUPT,
                  T_LAMBDA, T_REVERSE_J, T_RESUME, T_UNARY, T_VAR, Var)
from .ad import forward_j, reverse_j
from .direct import _apply_binary, _apply_unary, make_closure
from .errors import EvalError, NotAFunctionError, RanToCompletionError
from .parser import Program
from .values import BOTTOM, INFINITY, Capsule, Closure, Env


class _Done:
    __slots__ = ("v", "n")

    def __init__(self, v, n):
        self.v = v
        self.n = n


# -- defunctionalized continuations -----------------------------------------

class KHost:
    """Bottom continuation: delivers the value and count to the host."""

    __slots__ = ()
    TAG = 0

    def map_children(self, rec):
        return self


K_HOST = KHost()


class KArg:
    """Waiting for the operator; will evaluate the operand next."""

    __slots__ = ("e", "env", "k")
    TAG = 1

    def __init__(self, e, env, k):
        self.e = e
        self.env = env
        self.k = k

    def map_children(self, rec):
        return KArg(self.e, rec(self.env), rec(self.k))


class KApply:
    """Waiting for the operand; will apply the closure ``f``."""

    __slots__ = ("f", "k")
    TAG = 2

    def __init__(self, f, k):
        self.f = f
        self.k = k

    def map_children(self, rec):
        return KApply(rec(self.f), rec(self.k))


class KIf:
    __slots__ = ("then", "alt", "env", "k")
    TAG = 3

    def __init__(self, then, alt, env, k):
        self.then = then
        self.alt = alt
        self.env = env
        self.k = k

    def map_children(self, rec):
        return KIf(self.then, self.alt, rec(self.env), rec(self.k))


class KUnary:
    __slots__ = ("op", "k")
    TAG = 4

    def __init__(self, op, k):
        self.op = op
        self.k = k

    def map_children(self, rec):
        return KUnary(self.op, rec(self.k))


class KBin1:
    __slots__ = ("op", "right", "env", "k")
    TAG = 5

    def __init__(self, op, right, env, k):
        self.op = op
        self.right = right
        self.env = env
        self.k = k

    def map_children(self, rec):
        return KBin1(self.op, self.right, rec(self.env), rec(self.k))


class KBin2:
    __slots__ = ("op", "left", "k")
    TAG = 6

    def __init__(self, op, left, k):
        self.op = op
        self.left = left
        self.k = k

    def map_children(self, rec):
        return KBin2(self.op, rec(self.left), rec(self.k))


class KAd1:
    __slots__ = ("form", "e2", "e3", "env", "k")
    TAG = 7

    def __init__(self, form, e2, e3, env, k):
        self.form = form
        self.e2 = e2
        self.e3 = e3
        self.env = env
        self.k = k

    def map_children(self, rec):
        return KAd1(self.form, self.e2, self.e3, rec(self.env), rec(self.k))


class KAd2:
    __slots__ = ("form", "v1", "e3", "env", "k")
    TAG = 8

    def __init__(self, form, v1, e3, env, k):
        self.form = form
        self.v1 = v1
        self.e3 = e3
        self.env = env
        self.k = k

    def map_children(self, rec):
        return KAd2(self.form, rec(self.v1), self.e3, rec(self.env),
                    rec(self.k))


class KAd3:
    __slots__ = ("form", "v1", "v2", "k")
    TAG = 9

    def __init__(self, form, v1, v2, k):
        self.form = form
        self.v1 = v1
        self.v2 = v2
        self.k = k

    def map_children(self, rec):
        return KAd3(self.form, rec(self.v1), rec(self.v2), rec(self.k))


class KResume:
    __slots__ = ("k",)
    TAG = 10

    def __init__(self, k):
        self.k = k

    def map_children(self, rec):
        return KResume(rec(self.k))


# The restart closure of a capsule wraps the pending expression in a
# one-parameter lambda whose (ignored) parameter receives BOTTOM on resume.
_IGNORED = "%_"

# Body of the interrupting wrapper built by make_I.  The captured budget
# lives in its own variable so the contextual limit cannot shadow it.
_I_LAMBDA = Lambda("%x", Interrupt(Var("%f"), Var("%x"), Var("%b")))
_R_LAMBDA = Lambda("%z", Resume(Var("%z")))
_R_CLOSURE = Closure(_R_LAMBDA, Env({}, None))


class CpsMachine:
    """The interruptible evaluator plus its host-level entry points.

    ``config`` (a :class:`ckad.drivers.RunConfig` or None) selects how the
    checkpointing reverse operator is carried out when a program uses it.
    """

    name = "a"

    def __init__(self, config=None):
        self.config = config

    # -- the machine ---------------------------------------------------------

    def run_apply(self, k, n, l, f, v):
        """Apply closure ``f`` to ``v`` under continuation ``k`` with count
        ``n`` and limit ``l``.  Returns ``_Done`` or a ``Capsule``."""
        if type(f) is not Closure or f.lam.TAG != T_LAMBDA:
            raise NotAFunctionError(f"not a function: {f!r}")
        env = f.env.extend(f.lam.param, v)
        e = f.lam.body
        while True:
            # ---- evaluate e in env: the limit check comes first
            if n == l:
                return Capsule(k, Closure(Lambda(_IGNORED, e), env))
            tag = e.TAG
            if tag == T_VAR:
                val = env.lookup(e.name)
                n += 1
            elif tag == T_CONST:
                val = e.value
                # Copy float literals so object identity over numbers
                # always means dataflow sharing (the reverse sweep relies
                # on this); float() would hand back the same object.
                if type(val) is float:
                    val = val * 1.0
                n += 1
            elif tag == T_APP:
                k = KArg(e.arg, env, k)
                e = e.fn
                n += 1
                continue
            elif tag == T_BINARY:
                k = KBin1(e.op, e.right, env, k)
                e = e.left
                n += 1
                continue
            elif tag == T_IF:
                k = KIf(e.then, e.alt, env, k)
                e = e.cond
                n += 1
                continue
            elif tag == T_UNARY:
                k = KUnary(e.op, k)
                e = e.arg
                n += 1
                continue
            elif tag == T_LAMBDA:
                val = make_closure(e, env)
                n += 1
            elif tag in (T_FORWARD_J, T_REVERSE_J, T_CHECKPOINT_J,
                         T_INTERRUPT):
                k = KAd1(tag, e.e2, e.e3, env, k)
                e = e.e1
                n += 1
                continue
            elif tag == T_RESUME:
                k = KResume(k)
                e = e.arg
                n += 1
                continue
            else:
                raise EvalError(
                    f"the CPS evaluator cannot handle node tag {tag}")
            # ---- deliver val to k
            while True:
                kt = k.TAG
                if kt == 1:  # KArg
                    f2 = val
                    e = k.e
                    env = k.env
                    k = KApply(f2, k.k)
                    break
                if kt == 2:  # KApply
                    f2 = k.f
                    if type(f2) is not Closure or f2.lam.TAG != T_LAMBDA:
                        raise NotAFunctionError(f"not a function: {f2!r}")
                    env = f2.env.extend(f2.lam.param, val)
                    e = f2.lam.body
                    k = k.k
                    break
                if kt == 5:  # KBin1
                    e = k.right
                    env = k.env
                    k = KBin2(k.op, val, k.k)
                    break
                if kt == 6:  # KBin2
                    val = _apply_binary(k.op, k.left, val)
                    k = k.k
                    continue
                if kt == 3:  # KIf
                    if val is True:
                        e = k.then
                    elif val is False:
                        e = k.alt
                    else:
                        raise EvalError(
                            f"if condition must be a boolean, got {val!r}")
                    env = k.env
                    k = k.k
                    break
                if kt == 4:  # KUnary
                    val = _apply_unary(k.op, val)
                    k = k.k
                    continue
                if kt == 7:  # KAd1
                    e = k.e2
                    env = k.env
                    k = KAd2(k.form, val, k.e3, k.env, k.k)
                    break
                if kt == 8:  # KAd2
                    e = k.e3
                    env = k.env
                    k = KAd3(k.form, k.v1, val, k.k)
                    break
                if kt == 9:  # KAd3
                    form = k.form
                    v1 = k.v1
                    v2 = k.v2
                    k = k.k
                    if form == T_INTERRUPT:
                        budget = val
                        if l is INFINITY:
                            # run inline: fresh count, the budget becomes
                            # the limit; an interruption propagates as the
                            # result of this whole run
                            if type(v1) is not Closure \
                                    or v1.lam.TAG != T_LAMBDA:
                                raise NotAFunctionError(
                                    f"not a function: {v1!r}")
                            env = v1.env.extend(v1.lam.param, v2)
                            e = v1.lam.body
                            n = 0
                            l = budget
                            break
                        # finite contextual limit: run nested under that
                        # limit and re-arm the residual budget
                        res = self.run_apply(k, 0, l, v1, v2)
                        if type(res) is Capsule:
                            return Capsule(res.k,
                                           self.make_I(res.f, budget - l))
                        return res
                    val = self._host_ad(form, v1, v2, val)
                    continue
                if kt == 10:  # KResume
                    if type(val) is not Capsule:
                        raise EvalError(f"resume expects a capsule, "
                                        f"got {val!r}")
                    # the current continuation is discarded: control
                    # returns to the capsule's continuation
                    f2 = val.f
                    k = val.k
                    n = 0
                    env = f2.env.extend(f2.lam.param, BOTTOM)
                    e = f2.lam.body
                    break
                # KHost
                return _Done(val, n)

    def _host_ad(self, form, f, x, sensitivity):
        from .values import Pair
        if form == T_FORWARD_J:
            y, yt = forward_j(f, x, sensitivity, self.apply)
            return Pair(y, yt)
        if form == T_REVERSE_J:
            y, xbar = reverse_j(f, x, sensitivity, self.apply)
            return Pair(y, xbar)
        # checkpoint-*j
        from .drivers import run_checkpoint
        y, xbar = run_checkpoint(self, f, x, sensitivity, self.config)
        return Pair(y, xbar)

    # -- host entry points -----------------------------------------------------

    def apply(self, f, x):
        """Apply ``f`` to ``x`` with no limit; the result may be a capsule
        if the computation interrupts itself (an I-wrapped function)."""
        res = self.run_apply(K_HOST, 0, INFINITY, f, x)
        if type(res) is Capsule:
            return res
        return res.v

    def primops(self, f, x) -> int:
        """Number of evaluator steps ``f`` takes on ``x``."""
        res = self.run_apply(K_HOST, 0, INFINITY, f, x)
        if type(res) is Capsule:
            raise EvalError("primops: the computation interrupted itself")
        return res.n

    def interrupt(self, f, x, l: int) -> Capsule:
        """Run ``f`` on ``x`` for exactly ``l`` steps and capture the rest."""
        res = self.run_apply(K_HOST, 0, l, f, x)
        if type(res) is Capsule:
            return res
        raise RanToCompletionError(
            f"computation finished in {res.n} steps, within the budget {l}")

    def resume(self, z: Capsule):
        """Run an interrupted computation to completion."""
        if type(z) is not Capsule:
            raise EvalError(f"resume expects a capsule, got {z!r}")
        res = self.run_apply(z.k, 0, INFINITY, z.f, BOTTOM)
        if type(res) is Capsule:
            raise EvalError("resumed computation interrupted itself")
        return res.v

    def make_I(self, f, l) -> Closure:
        """A closure that runs ``f`` but interrupts after ``l`` steps."""
        return Closure(_I_LAMBDA, Env({"%f": f, "%b": l}, None))

    def make_R(self) -> Closure:
        """The closure that resumes a capsule passed to it."""
        return _R_CLOSURE

    def reverse_base(self, f, x, y_cotangent):
        """Plain (taping) reverse mode through this machine."""
        return reverse_j(f, x, y_cotangent, self.apply)

    # -- whole programs ----------------------------------------------------------

    def install(self, program: Program) -> Env:
        genv = Env({}, None)
        for name, expr in program.defines:
            if expr.TAG == T_LAMBDA:
                genv.frame[name] = Closure(expr, genv)
            else:
                res = self.run_apply(
                    K_HOST, 0, INFINITY,
                    Closure(Lambda(_IGNORED, expr), genv), BOTTOM)
                genv.frame[name] = res.v
        return genv

    def run_program(self, program: Program):
        """Evaluate a program body; returns (value, step_count)."""
        genv = self.install(program)
        if program.body is None:
            raise EvalError("program has no body expression")
        res = self.run_apply(
            K_HOST, 0, INFINITY,
            Closure(Lambda(_IGNORED, program.body), genv), BOTTOM)
        return res.v, res.n
