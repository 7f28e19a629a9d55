import itertools

import numpy as np
import pytest

from addbo.bench.synthetic import SyntheticSpec, build_fdtilde
from addbo.direct import (
    DirectConfig,
    DirectError,
    DirectSearch,
    Rectangle,
    maximize,
    potentially_optimal,
    trisect,
)


def rect(value, levels, index, center=None):
    center = np.full(len(levels), 0.5) if center is None else np.asarray(center, dtype=float)
    return Rectangle(center, tuple(levels), value, index)


def brute_force_po(rects, f_best, eps):
    """Rectangle j is potentially optimal iff some K > 0 satisfies every Jones inequality."""
    out = []
    thresh = f_best - max(eps * abs(f_best), 1e-8)
    for r in rects:
        lo, hi, ok = 0.0, np.inf, True
        for s in rects:
            if s is r:
                continue
            if s.diameter == r.diameter:
                ok &= r.value <= s.value
            elif s.diameter < r.diameter:
                lo = max(lo, (r.value - s.value) / (r.diameter - s.diameter))
            else:
                hi = min(hi, (s.value - r.value) / (s.diameter - r.diameter))
        if not ok or lo > hi or hi <= 0:
            continue
        if np.isinf(hi) or r.value - hi * r.diameter <= thresh:
            out.append(r)
    return out


class TestPotentiallyOptimal:
    def test_single(self):
        r = rect(1.0, (0, 0), 0)
        assert potentially_optimal([r], 1.0, 1e-4) == [r]

    def test_equal_diameter_better_value(self):
        a, b = rect(2.0, (1, 0), 0), rect(1.0, (0, 1), 1)
        assert potentially_optimal([a, b], 1.0, 1e-4) == [b]

    def test_equal_pair_lowest_index(self):
        a, b = rect(1.0, (1, 0), 5), rect(1.0, (0, 1), 2)
        assert potentially_optimal([a, b], 1.0, 1e-4) == [b]

    def test_crafted_four(self):
        rects = [rect(0.2, (2, 2), 0), rect(0.5, (1, 2), 1), rect(0.6, (1, 1), 2), rect(3.0, (0, 1), 3)]
        got = {r.index for r in potentially_optimal(rects, 0.2, 1e-4)}
        want = {r.index for r in brute_force_po(rects, 0.2, 1e-4)}
        assert got == want == {0, 2, 3}

    def test_epsilon_excludes_tiny_rect(self):
        # the small best rectangle cannot improve by eps*|f| with any admissible slope
        rects = [rect(1.0, (3, 3), 0), rect(1.001, (0, 0), 1)]
        got = {r.index for r in potentially_optimal(rects, 1.0, 0.1)}
        assert got == {1} == {r.index for r in brute_force_po(rects, 1.0, 0.1)}

    def test_random_against_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(1, 25))
            levels = [tuple(int(v) for v in rng.integers(0, 5, size=2)) for _ in range(n)]
            rects = [rect(float(rng.normal()), lv, i) for i, lv in enumerate(levels)]
            f_best = min(r.value for r in rects)
            for eps in (0.0, 1e-4, 0.05):
                got = {r.index for r in potentially_optimal(rects, f_best, eps)}
                want = {r.index for r in brute_force_po(rects, f_best, eps)}
                assert got == want
                assert max(r.diameter for r in rects) in {r.diameter for r in potentially_optimal(rects, f_best, eps)}


class TestTrisect:
    def test_unit_square_columns(self):
        kids = trisect(rect(0.0, (0, 0), 0), lambda x: 0.0, next_index=1)
        np.testing.assert_allclose([k.center[0] for k in kids], [1 / 6, 0.5, 5 / 6])
        for k in kids:
            np.testing.assert_allclose(k.half_widths, [1 / 6, 0.5])
            assert k.center[1] == 0.5

    def test_middle_inherits(self):
        parent = rect(3.5, (1, 0), 4, center=[0.5, 0.5])
        kids = trisect(parent, lambda x: 9.0, next_index=10)
        assert kids[1].value == 3.5 and kids[1].index == 4
        assert [k.index for k in (kids[0], kids[2])] == [10, 11]
        assert kids[0].levels == (1, 1)  # axis 1 is now the widest

    def test_volumes_tile(self):
        parent = rect(0.0, (2, 1, 1), 0)
        kids = trisect(parent, lambda x: 0.0)
        assert sum(k.volume for k in kids) == pytest.approx(parent.volume, rel=1e-14)

    def test_first_iteration_hand_trace(self):
        calls = []
        s = DirectSearch(lambda x: calls.append(x.copy()) or float(np.sum(x)), 2, DirectConfig(100))
        s.iterate()
        assert len(s.rects) == 3 and s.evals == 3 == len(calls)


class TestMaximize:
    def test_constant(self):
        x, v, n = maximize(lambda x: 4.25, 3, DirectConfig(57))
        assert v == 4.25 and n <= 57

    def test_budget_one_is_center(self):
        x, v, n = maximize(lambda x: -np.sum((x - 0.1) ** 2), 4, DirectConfig(1))
        np.testing.assert_array_equal(x, np.full(4, 0.5))
        assert n == 1

    def test_quadratic(self):
        x, v, n = maximize(lambda x: -np.sum((x - 0.5) ** 2), 2, DirectConfig(200))
        assert np.linalg.norm(x - 0.5) <= 0.05 and n <= 200

    def test_f_best_is_f_at_x(self):
        f = lambda x: np.sin(7 * x[0]) * np.cos(3 * x[1])  # noqa: E731
        x, v, _ = maximize(f, 2, DirectConfig(300))
        assert v == f(x)
        assert v >= f(np.full(2, 0.5))

    def test_vectorized_matches_scalar(self):
        f = lambda x: -np.sum((x - np.array([0.2, 0.7, 0.4])) ** 2)  # noqa: E731
        fv = lambda X: -np.sum((X - np.array([0.2, 0.7, 0.4])) ** 2, axis=1)  # noqa: E731
        a = maximize(f, 3, DirectConfig(301))
        b = maximize(fv, 3, DirectConfig(301), vectorized=True)
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1:] == b[1:]

    def test_nonfinite_raises(self):
        with pytest.raises(DirectError, match="0.5"):
            maximize(lambda x: np.nan, 2, DirectConfig(10))

    def test_bumps_against_grid(self):
        f = build_fdtilde(SyntheticSpec(2, 2, 1, seed=3))
        g = (np.arange(400) + 0.5) / 400
        grid_max = f(np.array(list(itertools.product(g, g)))).max()
        x, v, n = maximize(f, 2, DirectConfig(1000), vectorized=True)
        assert n <= 1000
        assert v >= grid_max - 1e-2

    def test_max_depth_retires(self):
        s = DirectSearch(lambda x: float(np.sum((x - 0.3) ** 2)), 1, DirectConfig(500, max_depth=3)).run()
        assert all(r.depth < 3 for r in s.rects)
        assert all(r.depth == 3 for r in s.retired)
        assert s.evals <= 500


class TestInvariants:
    @pytest.mark.parametrize("k", [1, 2, 3, 5])
    def test_budget_monotone_and_tiling(self, k):
        rng = np.random.default_rng(k)
        c = rng.random(k)
        g = lambda x: float(np.sum(np.abs(x - c)) + 0.1 * np.sin(20 * x[0]))  # noqa: E731
        for budget in (1, 2, 3, 50, 333):
            s = DirectSearch(g, k, DirectConfig(budget))
            while s.iterate():
                vols = sum(r.volume for r in s.all_rects)
                assert vols == pytest.approx(1.0, abs=1e-9)
            assert s.evals <= budget
            assert all(b <= a for a, b in zip(s.history, s.history[1:]))
            probes = rng.random((200, k))
            boxes = s.all_rects
            lo = np.array([r.center - r.half_widths for r in boxes])
            hi = np.array([r.center + r.half_widths for r in boxes])
            inside = np.all((probes[:, None, :] > lo[None]) & (probes[:, None, :] < hi[None]), axis=2)
            assert np.all(inside.sum(axis=1) == 1)

    def test_error_decreases_with_budget(self):
        c = np.array([0.31, 0.77])
        errs = []
        for budget in (125, 250, 500, 1000):
            x, v, _ = maximize(lambda x: -np.linalg.norm(x - c), 2, DirectConfig(budget))
            errs.append(-v)
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < errs[0]

    def test_deterministic(self):
        f = lambda x: np.cos(5 * x[0]) + x[1] ** 2  # noqa: E731
        a, b = maximize(f, 2, DirectConfig(200)), maximize(f, 2, DirectConfig(200))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1:] == b[1:]


def test_config_validation():
    with pytest.raises(ValueError):
        DirectConfig(max_evals=0)
    with pytest.raises(ValueError):
        DirectConfig(epsilon=-1.0)
