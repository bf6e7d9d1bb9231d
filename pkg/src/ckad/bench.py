"""Synthetic benchmark program and run orchestration.

:func:`build_example` generates a source program modelling a physical
system on an adaptive grid: an ``n``-dimensional state vector is
repeatedly transformed by a state-update step that rotates adjacent
odd-even coordinate pairs, then adjacent even-odd pairs, by an angle
proportional to the magnitude of the state.  An outer loop of ``l``
iterations drives an inner loop whose duration

    m(i) = 2^(ilog2(l) - ilog2(1 + (phi * floor(3^x1) * i mod l)))

is small on most outer iterations but O(l) on a few, so the distribution
of work across execution is data-dependent and not visible in the loop
structure.  The output is the sum of the final state's coordinates, and
the program body differentiates it with the checkpointing reverse
operator.

Everything is deterministic: the initial state is a fixed quasi-random
sequence (first coordinate 1.1, the rest spread over [0.3, 0.7)).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .cps import CpsMachine
from .drivers import RunConfig, criterion_name
from .extended import ExtendedMachine
from .metrics import METER, RunMetrics
from .parser import Program, parse_program

_GOLDEN = 0.6180339887498949


@dataclass(frozen=True)
class BenchmarkParams:
    n: int           # state dimension (even)
    l: int           # outer loop iterations
    phi: float = 1013.0  # inner-loop duration hyperparameter

    def __post_init__(self):
        if self.n < 2 or self.n % 2 != 0:
            raise ValueError("state dimension n must be even and >= 2")
        if self.l < 1:
            raise ValueError("outer iteration count l must be >= 1")
        if self.phi < 1.0 or self.phi != int(self.phi):
            raise ValueError("phi must be a positive integer value")


def initial_state(params: BenchmarkParams) -> list[float]:
    xs = [1.1]
    for j in range(2, params.n + 1):
        frac = (j * _GOLDEN) % 1.0
        xs.append(0.3 + 0.4 * frac)
    return xs


def _state_literal(xs: list[float]) -> str:
    out = "nil"
    for v in reversed(xs):
        out = f"(cons {v!r} {out})"
    return out


def build_example(params: BenchmarkParams) -> str:
    """Generate the benchmark source program for ``params``."""
    l = float(params.l)
    src = f"""\
; synthetic adaptive-grid benchmark: n={params.n}, l={params.l}
(define (ilog2 v)
  (if (< v 2.0) 0.0 (+ 1.0 (ilog2 (floor (/ v 2.0))))))
(define (pow2 e)
  (if (<= e 0.0) 1.0 (* 2.0 (pow2 (- e 1.0)))))
(define (imod a b)
  (- a (* b (floor (/ a b)))))
(define (sumsq v)
  (if (null? v) 0.0 (+ (* (car v) (car v)) (sumsq (cdr v)))))
(define (sum v)
  (if (null? v) 0.0 (+ (car v) (sum (cdr v)))))
(define (rotpairs v s c)
  (if (null? v)
      v
      (if (null? (cdr v))
          v
          (cons (- (* c (car v)) (* s (car (cdr v))))
                (cons (+ (* s (car v)) (* c (car (cdr v))))
                      (rotpairs (cdr (cdr v)) s c))))))
(define (update v)
  (let* ((th (* 0.1 (sqrt (sumsq v))))
         (s (sin th))
         (c (cos th))
         (w (rotpairs v s c)))
    (cons (car w) (rotpairs (cdr w) s c))))
(define (inner v m)
  (if (<= m 0.0) v (inner (update v) (- m 1.0))))
(define (duration k i)
  (pow2 (- (ilog2 {l!r})
           (ilog2 (+ 1.0 (imod (* {params.phi!r} (* k i)) {l!r}))))))
(define (outer v k i)
  (if (< {l!r} i)
      v
      (outer (inner v (duration k i)) k (+ i 1.0))))
(define (main v)
  (sum (outer v (floor (exp (* (car v) (log 3.0)))) 1.0)))
(checkpoint-*j main {_state_literal(initial_state(params))} 1.0)
"""
    return src


def build_example_program(params: BenchmarkParams) -> Program:
    return parse_program(build_example(params))


# ---------------------------------------------------------------------------
# run orchestration (shared by the CLI and the tests)
# ---------------------------------------------------------------------------

def make_machine(pipeline: str, config: RunConfig):
    if pipeline == "a":
        return CpsMachine(config)
    if pipeline == "b":
        return ExtendedMachine(config)
    raise ValueError(f"unknown pipeline: {pipeline!r}")


def execute_program(program: Program, config: RunConfig, pipeline: str = "a",
                    n: int = 0, l: int = 0, trace: bool = False):
    """Run a program under ``config``, collecting metrics.

    Returns ``(value, RunMetrics)``.  The global meter is reset, so runs
    must not be concurrent.
    """
    machine = make_machine(pipeline, config)
    METER.reset(trace=trace)
    config.last_length = None
    t0 = time.perf_counter()
    value, _count = machine.run_program(program)
    wall_ms = (time.perf_counter() - t0) * 1e3
    metrics = RunMetrics(
        mode=config.mode,
        algorithm=config.algorithm if config.mode == "checkpoint" else "",
        split=config.split if config.mode == "checkpoint" else "",
        criterion=(criterion_name(config.criterion)
                   if config.mode == "checkpoint" else ""),
        alpha=config.alpha if config.mode == "checkpoint" else 0,
        pipeline=pipeline,
        n=n,
        l=l,
        L=config.last_length or 0,
        peak_tape=METER.tape_peak,
        peak_snapshots=METER.snap_peak,
        recompute_steps=METER.recompute_steps,
        leaves=METER.leaves,
        wall_ms=round(wall_ms, 3),
    )
    return value, metrics


def run_benchmark(params: BenchmarkParams, config: RunConfig,
                  pipeline: str = "a", trace: bool = False):
    program = build_example_program(params)
    return execute_program(program, config, pipeline, n=params.n,
                           l=params.l, trace=trace)
