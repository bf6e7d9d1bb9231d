"""Direct-style evaluator for converted (count/limit-threaded CPS) code.

Converted code is fully tail-structured: operands of an application are
simple (variables, constants, lambdas, primitive operations), and every
transfer of control — applying a three- or four-argument closure, taking
an if branch, entering a limit-check body — is in tail position.  The
evaluator is therefore a flat loop over (environment, expression) states;
it returns when it reaches a terminal operand (the body of a host-level
bottom continuation) or when a limit check packages a capsule.

The machine exposes the same host interface as :class:`ckad.cps.CpsMachine`
(`apply`, `primops`, `interrupt`, `resume`, `make_I`, `make_R`,
`reverse_base`), so the checkpointing drivers run unchanged on either
pipeline.
"""

from __future__ import annotations

from .ast import (Lambda, T_APP3, T_APP4, T_BINARY, T_CONST, T_HOSTOP, T_IF,
                  T_INTERRUPT, T_LAMBDA3, T_LAMBDA4, T_LIMIT, T_RESUME,
                  T_UNARY, T_VAR, Binary, Lambda3, Var)
from .ad import forward_j, reverse_j
from .convert import (I_LAMBDA4, K, L, N, R_LAMBDA4, _Gensym, convert_lambda,
                      convert_top, converted_free_variables)
from .direct import _apply_binary, _apply_unary
from .errors import EvalError, NotAFunctionError, RanToCompletionError
from .parser import Program
from .values import BOTTOM, INFINITY, Capsule, Closure, Env, Pair

# host-level bottom continuations (genuine converted-code values)
K3_VALUE = Closure(Lambda3(N, L, "%v", Var("%v")), Env({}, None))
K3_COUNT = Closure(Lambda3(N, L, "%v", Var(N)), Env({}, None))
K3_PAIR = Closure(Lambda3(N, L, "%v", Binary("cons", Var("%v"), Var(N))),
                  Env({}, None))


def _restrict(env: Env, fvs) -> Env:
    """Close over exactly ``fvs``, keeping the root frame as parent."""
    if env.parent is None:
        return env
    root = env
    while root.parent is not None:
        root = root.parent
    frame = {}
    for name in fvs:
        scope = env
        while scope is not root:
            if name in scope.frame:
                frame[name] = scope.frame[name]
                break
            scope = scope.parent
    return Env(frame, root)


def _canonical(v, memo):
    """Rewrite every closure reachable in a captured value so it closes
    over exactly its free variables (flat frame, sorted names, root kept
    as parent).

    A resumed run's environment chains differ in shape from a straight
    run's (resumption enters through the restart lambda, adding a frame),
    even though they bind the same values.  The reverse sweep pairs flat
    cotangents with capsule leaves by traversal order, so a capsule's
    structure must depend only on the execution point and the values it
    holds — canonicalizing at capture guarantees that.
    """
    t = type(v)
    if t is Closure:
        key = id(v)
        hit = memo.get(key)
        if hit is not None:
            return hit
        lam = v.lam
        if v.env.parent is None:
            # host-made closure: only the interrupt wrapper carries a
            # value that needs canonicalizing
            if lam is I_LAMBDA4:
                frame = v.env.frame
                new = Closure(lam, Env({"%f": _canonical(frame["%f"], memo),
                                        "%b": frame["%b"]}, None))
            else:
                new = v
            memo[key] = new
            return new
        new = Closure(lam, v.env)
        memo[key] = new
        env = _restrict(v.env, converted_free_variables(lam))
        for name in list(env.frame):
            env.frame[name] = _canonical(env.frame[name], memo)
        new.env = env
        return new
    if t is Capsule:
        key = id(v)
        hit = memo.get(key)
        if hit is not None:
            return hit
        new = Capsule(_canonical(v.k, memo), _canonical(v.f, memo))
        memo[key] = new
        return new
    if t is Pair:
        key = id(v)
        hit = memo.get(key)
        if hit is not None:
            return hit
        car = _canonical(v.car, memo)
        cdr = _canonical(v.cdr, memo)
        new = v if car is v.car and cdr is v.cdr else Pair(car, cdr)
        memo[key] = new
        return new
    return v


class ExtendedMachine:
    name = "b"

    def __init__(self, config=None):
        self.config = config

    # -- the evaluator ---------------------------------------------------------

    def _run(self, env: Env, e):
        while True:
            tag = e.TAG
            if tag == T_LIMIT:
                n = self._operand(env, e.n_expr)
                l = self._operand(env, e.l_expr)
                if n == l:
                    k = self._operand(env, e.k_expr)
                    return _canonical(Capsule(k, Closure(e.relam, env)), {})
                e = e.body
                continue
            if tag == T_APP3:
                fn = self._operand(env, e.fn)
                if type(fn) is not Closure or fn.lam.TAG != T_LAMBDA3:
                    raise NotAFunctionError(
                        f"not a continuation: {fn!r}")
                lam = fn.lam
                env = Env({lam.n: self._operand(env, e.n),
                           lam.l: self._operand(env, e.l),
                           lam.x: self._operand(env, e.arg)}, fn.env)
                e = lam.body
                continue
            if tag == T_APP4:
                fn = self._operand(env, e.fn)
                if type(fn) is not Closure or fn.lam.TAG != T_LAMBDA4:
                    raise NotAFunctionError(f"not a function: {fn!r}")
                lam = fn.lam
                env = Env({lam.k: self._operand(env, e.k),
                           lam.n: self._operand(env, e.n) - lam.n_offset,
                           lam.l: self._operand(env, e.l),
                           lam.x: self._operand(env, e.arg)}, fn.env)
                e = lam.body
                continue
            if tag == T_IF:
                c = self._operand(env, e.cond)
                if c is True:
                    e = e.then
                elif c is False:
                    e = e.alt
                else:
                    raise EvalError(
                        f"if condition must be a boolean, got {c!r}")
                continue
            if tag == T_INTERRUPT:
                f = self._operand(env, e.e1)
                v = self._operand(env, e.e2)
                budget = self._operand(env, e.e3)
                k = env.lookup(K)
                l = env.lookup(L)
                if type(f) is not Closure or f.lam.TAG != T_LAMBDA4:
                    raise NotAFunctionError(f"not a function: {f!r}")
                if l is INFINITY:
                    # tail: fresh count, the budget becomes the limit
                    lam = f.lam
                    env = Env({lam.k: k, lam.n: -lam.n_offset,
                               lam.l: budget, lam.x: v}, f.env)
                    e = lam.body
                    continue
                res = self.apply4(f, k, 0, l, v)
                if type(res) is Capsule:
                    return Capsule(res.k, self.make_I(res.f, budget - l))
                return res
            if tag == T_RESUME:
                z = self._operand(env, e.arg)
                if type(z) is not Capsule:
                    raise EvalError(f"resume expects a capsule, got {z!r}")
                l = env.lookup(L)
                lam = z.f.lam
                env = Env({lam.k: z.k, lam.n: -lam.n_offset, lam.l: l,
                           lam.x: BOTTOM}, z.f.env)
                e = lam.body
                continue
            # terminal: a bottom continuation's body is a simple operand
            return self._operand(env, e)

    def _operand(self, env: Env, e):
        tag = e.TAG
        if tag == T_VAR:
            return env.lookup(e.name)
        if tag == T_CONST:
            v = e.value
            # Copy float literals so object identity over numbers always
            # means dataflow sharing (the reverse sweep relies on this);
            # float() would hand back the same object, arithmetic won't.
            return v * 1.0 if type(v) is float else v
        if tag == T_LAMBDA3:
            return Closure(e, env)
        if tag == T_LAMBDA4:
            # Function values may live arbitrarily long; capture only
            # their free variables (keeping the root frame as parent for
            # late-bound top-level names) so transient continuation
            # frames are not retained.
            return Closure(e, _restrict(env, converted_free_variables(e)))
        if tag == T_BINARY:
            a = self._operand(env, e.left)
            b = self._operand(env, e.right)
            if type(a) is int and type(b) is int:
                # count arithmetic stays in machine integers
                if e.op == "+":
                    return a + b
            return _apply_binary(e.op, a, b)
        if tag == T_UNARY:
            return _apply_unary(e.op, self._operand(env, e.arg))
        if tag == T_HOSTOP:
            f = self._operand(env, e.e1)
            x = self._operand(env, e.e2)
            s = self._operand(env, e.e3)
            return self._host_ad(e.which, f, x, s)
        raise EvalError(
            f"unexpected node in operand position: tag {tag}")

    def _host_ad(self, which, f, x, sensitivity):
        if which == "j*":
            y, yt = forward_j(f, x, sensitivity, self.apply)
            return Pair(y, yt)
        if which == "*j":
            y, xbar = reverse_j(f, x, sensitivity, self.apply)
            return Pair(y, xbar)
        from .drivers import run_checkpoint
        y, xbar = run_checkpoint(self, f, x, sensitivity, self.config)
        return Pair(y, xbar)

    # -- host entry points --------------------------------------------------------

    def apply4(self, f, k, n, l, v):
        if type(f) is not Closure or f.lam.TAG != T_LAMBDA4:
            raise NotAFunctionError(f"not a function: {f!r}")
        lam = f.lam
        env = Env({lam.k: k, lam.n: n - lam.n_offset, lam.l: l, lam.x: v},
                  f.env)
        return self._run(env, lam.body)

    def apply(self, f, x):
        return self.apply4(f, K3_VALUE, 0, INFINITY, x)

    def primops(self, f, x) -> int:
        res = self.apply4(f, K3_COUNT, 0, INFINITY, x)
        if type(res) is Capsule:
            raise EvalError("primops: the computation interrupted itself")
        return res

    def interrupt(self, f, x, l: int) -> Capsule:
        res = self.apply4(f, K3_VALUE, 0, l, x)
        if type(res) is Capsule:
            return res
        raise RanToCompletionError(
            f"computation finished within the budget {l}")

    def resume(self, z: Capsule):
        if type(z) is not Capsule:
            raise EvalError(f"resume expects a capsule, got {z!r}")
        lam = z.f.lam
        env = Env({lam.k: z.k, lam.n: -lam.n_offset, lam.l: INFINITY,
                   lam.x: BOTTOM}, z.f.env)
        res = self._run(env, lam.body)
        if type(res) is Capsule:
            raise EvalError("resumed computation interrupted itself")
        return res

    def make_I(self, f, l) -> Closure:
        return Closure(I_LAMBDA4, Env({"%f": f, "%b": l}, None))

    def make_R(self) -> Closure:
        return Closure(R_LAMBDA4, Env({}, None))

    def reverse_base(self, f, x, y_cotangent):
        return reverse_j(f, x, y_cotangent, self.apply)

    # -- whole programs --------------------------------------------------------------

    def install(self, program: Program) -> Env:
        gensym = _Gensym()
        genv = Env({}, None)
        for name, expr in program.defines:
            if expr.TAG == 2:  # T_LAMBDA
                genv.frame[name] = Closure(convert_lambda(expr, gensym), genv)
            else:
                genv.frame[name] = self._run_top(expr, genv, gensym,
                                                 K3_VALUE)
        return genv

    def _run_top(self, expr, genv, gensym, k3):
        converted = convert_top(expr, gensym)
        env = Env({K: k3, N: 0, L: INFINITY}, genv)
        res = self._run(env, converted)
        if type(res) is Capsule:
            raise EvalError("top-level expression interrupted itself")
        return res

    def run_program(self, program: Program):
        """Evaluate a program body; returns (value, step_count)."""
        gensym = _Gensym()
        genv = Env({}, None)
        for name, expr in program.defines:
            if expr.TAG == 2:
                genv.frame[name] = Closure(convert_lambda(expr, gensym), genv)
            else:
                genv.frame[name] = self._run_top(expr, genv, gensym,
                                                 K3_VALUE)
        if program.body is None:
            raise EvalError("program has no body expression")
        pair = self._run_top(program.body, genv, gensym, K3_PAIR)
        return pair.car, pair.cdr

    def convert_function(self, lam: Lambda, env: Env | None = None) -> Closure:
        if env is None:
            env = Env({}, None)
        return Closure(convert_lambda(lam), env)
