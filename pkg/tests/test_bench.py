"""The synthetic adaptive-grid benchmark: parameter validation, pinned
program lengths and gradients, and gradient correctness against finite
differences."""

import pytest

from ckad.bench import (BenchmarkParams, build_example,
                        build_example_program, initial_state, run_benchmark)
from ckad.direct import apply_direct, install_program
from ckad.drivers import FixedSpace, Logarithmic, RunConfig
from ckad.values import EMPTY, Pair

from conftest import bitwise_equal, floats_of, rel_err


def test_params_validation():
    with pytest.raises(ValueError):
        BenchmarkParams(3, 8)       # odd dimension
    with pytest.raises(ValueError):
        BenchmarkParams(0, 8)
    with pytest.raises(ValueError):
        BenchmarkParams(2, 0)
    with pytest.raises(ValueError):
        BenchmarkParams(2, 8, phi=2.5)  # non-integer duration parameter


def test_initial_state_is_deterministic_and_bounded():
    xs = initial_state(BenchmarkParams(10, 8))
    assert xs[0] == 1.1
    assert len(xs) == 10
    assert all(0.3 <= v < 0.7 for v in xs[1:])
    assert xs == initial_state(BenchmarkParams(10, 8))


def test_source_is_stable_for_fixed_params():
    assert build_example(BenchmarkParams(2, 8)) == \
        build_example(BenchmarkParams(2, 8))


def test_pinned_program_lengths():
    # primal evaluator-step lengths, frozen
    for (n, l), expected in {(2, 8): 4595, (4, 64): 107004}.items():
        cfg = RunConfig(mode="reverse")
        _value, metrics = run_benchmark(BenchmarkParams(n, l), cfg, "a")
        assert metrics.L == expected, (n, l)


def test_length_grows_superlinearly_in_l():
    # total inner work is O(l log l): doubling l more than doubles L
    Ls = {}
    for l in (8, 16, 32):
        cfg = RunConfig(mode="reverse")
        _v, metrics = run_benchmark(BenchmarkParams(2, l), cfg, "a")
        Ls[l] = metrics.L
    assert Ls[16] > 2 * Ls[8]
    assert Ls[32] > 2 * Ls[16]
    # ... but stays well below quadratic
    assert Ls[32] < (32 / 8) ** 2 * Ls[8]


def test_pinned_value_and_gradient_2_8():
    cfg = RunConfig(mode="reverse")
    value, _metrics = run_benchmark(BenchmarkParams(2, 8), cfg, "a")
    assert value.car == -1.304279076726214
    assert floats_of(value.cdr) == [-3.1458187484444298, -2.0506240457554297]


def test_checkpoint_equals_reverse_bitwise_4_32():
    ref, _ = run_benchmark(BenchmarkParams(4, 32),
                           RunConfig(mode="reverse"), "a")
    for split in ("bisection", "binomial"):
        for crit in (Logarithmic(), FixedSpace(3)):
            cfg = RunConfig(mode="checkpoint", algorithm="binary",
                            split=split, criterion=crit, alpha=64)
            got, _ = run_benchmark(BenchmarkParams(4, 32), cfg, "a")
            assert bitwise_equal(got, ref), (split, crit)


def state_pair(xs):
    out = EMPTY
    for v in reversed(xs):
        out = Pair(v, out)
    return out


def primal_fn(params):
    program = build_example_program(params)
    genv = install_program(program)
    main = genv.lookup("main")

    def f(xs):
        return apply_direct(main, state_pair(xs))
    return f


def test_gradient_matches_central_differences_2_8():
    params = BenchmarkParams(2, 8)
    value, _ = run_benchmark(params, RunConfig(mode="reverse"), "a")
    grads = floats_of(value.cdr)
    f = primal_fn(params)
    xs = initial_state(params)
    h = 1e-6
    for j in range(params.n):
        up = list(xs)
        dn = list(xs)
        up[j] += h
        dn[j] -= h
        fd = (f(up) - f(dn)) / (2 * h)
        assert rel_err(grads[j], fd) < 1e-5, j


def test_metrics_carry_problem_size():
    cfg = RunConfig(mode="checkpoint", algorithm="bisect", alpha=64)
    _v, metrics = run_benchmark(BenchmarkParams(2, 8), cfg, "b")
    assert metrics.n == 2 and metrics.l == 8
    assert metrics.pipeline == "b"
    assert metrics.L == 4595
