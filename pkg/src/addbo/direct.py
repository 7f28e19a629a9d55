"""DiRect (dividing rectangles) global optimizer over the unit cube.

Internally minimizes ``g = -f``. Each iteration picks the potentially
optimal rectangles (lower-right convex hull of diameter vs. value, with the
usual epsilon slack) and trisects each along its lowest-indexed widest axis,
costing two evaluations per split.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DirectError(RuntimeError):
    pass


@dataclass(frozen=True)
class DirectConfig:
    max_evals: int = 1000
    epsilon: float = 1e-4
    max_depth: int = 50

    def __post_init__(self):
        if self.max_evals < 1:
            raise ValueError(f"max_evals must be >= 1, got {self.max_evals}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")


@dataclass
class Rectangle:
    """Hyperrectangle with per-axis trisection levels; half width on axis i is 0.5 * 3**-levels[i]."""

    center: np.ndarray
    levels: tuple[int, ...]
    value: float
    index: int
    depth: int = 0
    diameter: float = field(init=False)

    def __post_init__(self):
        # sorted so permuted level tuples give bit-identical diameters
        self.diameter = math.sqrt(sum(0.25 * 9.0 ** (-lv) for lv in sorted(self.levels)))

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * 3.0 ** (-np.asarray(self.levels, dtype=float))

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.half_widths))

    @property
    def split_axis(self) -> int:
        return int(np.argmin(self.levels))


def potentially_optimal(rects: list[Rectangle], f_best: float, epsilon: float) -> list[Rectangle]:
    """Potentially optimal rectangles for minimization.

    ``f_best`` is the smallest value found so far. One rectangle per diameter
    class can qualify (lowest value, then lowest creation index).
    """
    if not rects:
        raise ValueError("no rectangles to select from")
    by_diam: dict[float, Rectangle] = {}
    for r in rects:
        cur = by_diam.get(r.diameter)
        if cur is None or (r.value, r.index) < (cur.value, cur.index):
            by_diam[r.diameter] = r
    pts = sorted(by_diam.values(), key=lambda r: r.diameter)
    gmin = min(r.value for r in pts)
    start = max(i for i, r in enumerate(pts) if r.value == gmin)

    hull: list[Rectangle] = []
    for r in pts[start:]:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (b.diameter - a.diameter) * (r.value - a.value) - (b.value - a.value) * (r.diameter - a.diameter)
            if cross < 0:
                hull.pop()
            else:
                break
        hull.append(r)

    threshold = f_best - max(epsilon * abs(f_best), 1e-8)
    out = []
    for i, r in enumerate(hull):
        if i == len(hull) - 1:
            out.append(r)
            continue
        nxt = hull[i + 1]
        slope = (nxt.value - r.value) / (nxt.diameter - r.diameter)
        if r.value - slope * r.diameter <= threshold:
            out.append(r)
    return out


def _children(r: Rectangle) -> tuple[int, np.ndarray, np.ndarray, tuple[int, ...]]:
    axis = r.split_axis
    step = 2.0 * r.half_widths[axis] / 3.0
    left = r.center.copy()
    left[axis] -= step
    right = r.center.copy()
    right[axis] += step
    levels = tuple(lv + 1 if i == axis else lv for i, lv in enumerate(r.levels))
    return axis, left, right, levels


def trisect(r: Rectangle, f: Callable[[np.ndarray], float], next_index: int = 0) -> list[Rectangle]:
    """Split ``r`` in thirds along its widest axis; ``f`` is evaluated at the two new centers.

    Returns ``[left, middle, right]``; the middle child keeps the parent's
    center, value and creation index.
    """
    _, left, right, levels = _children(r)
    vl, vr = float(f(left)), float(f(right))
    return [
        Rectangle(left, levels, vl, next_index, r.depth + 1),
        Rectangle(r.center.copy(), levels, r.value, r.index, r.depth + 1),
        Rectangle(right, levels, vr, next_index + 1, r.depth + 1),
    ]


class DirectSearch:
    """Stateful minimizer of ``g`` on ``[0, 1]^k``.

    ``g`` takes a k-vector, or with ``vectorized=True`` an ``m x k`` batch
    and returns m values. Active rectangles are kept in one heap per
    diameter class, so selection only looks at each class's best member.
    """

    def __init__(self, g: Callable, k: int, cfg: DirectConfig | None = None, vectorized: bool = False):
        if k < 1:
            raise ValueError(f"dimension must be >= 1, got {k}")
        self.g = g
        self.k = k
        self.cfg = cfg or DirectConfig()
        self.vectorized = vectorized
        self.evals = 0
        self.next_index = 0
        self.retired: list[Rectangle] = []
        self.history: list[float] = []
        self._classes: dict[float, list[tuple[float, int, Rectangle]]] = {}
        center = np.full(k, 0.5)
        value = self._eval(center[None, :])[0]
        root = Rectangle(center, (0,) * k, value, self._new_index())
        self._push(root)
        self.best = root
        self.history.append(self.best.value)

    def _new_index(self) -> int:
        i = self.next_index
        self.next_index += 1
        return i

    def _push(self, r: Rectangle) -> None:
        heapq.heappush(self._classes.setdefault(r.diameter, []), (r.value, r.index, r))

    def _eval(self, P: np.ndarray) -> np.ndarray:
        if self.vectorized:
            vals = np.asarray(self.g(P), dtype=float).reshape(-1)
        else:
            vals = np.array([float(self.g(p)) for p in P])
        for p, v in zip(P, vals):
            if not np.isfinite(v):
                raise DirectError(f"objective is not finite ({v}) at {p.tolist()}")
        self.evals += len(P)
        return vals

    @property
    def rects(self) -> list[Rectangle]:
        """Active rectangles, in no particular order."""
        return [e[2] for heap in self._classes.values() for e in heap]

    @property
    def all_rects(self) -> list[Rectangle]:
        return self.rects + self.retired

    def iterate(self) -> bool:
        """One DiRect iteration. Returns False once nothing more can be done."""
        remaining = (self.cfg.max_evals - self.evals) // 2
        if remaining < 1 or not self._classes:
            return False
        leaders = [heap[0][2] for heap in self._classes.values()]
        chosen = potentially_optimal(leaders, self.best.value, self.cfg.epsilon)
        chosen = sorted(chosen, key=lambda r: (r.value, r.index))[:remaining]
        for r in chosen:
            heap = self._classes[r.diameter]
            heapq.heappop(heap)
            if not heap:
                del self._classes[r.diameter]

        splits = [_children(r) for r in chosen]
        P = np.array([p for _, left, right, _ in splits for p in (left, right)])
        vals = self._eval(P)

        for n, (r, (_, left, right, levels)) in enumerate(zip(chosen, splits)):
            depth = r.depth + 1
            kids = [
                Rectangle(left, levels, float(vals[2 * n]), self._new_index(), depth),
                Rectangle(r.center, levels, r.value, r.index, depth),
                Rectangle(right, levels, float(vals[2 * n + 1]), self._new_index(), depth),
            ]
            for kid in kids:
                if (kid.value, kid.index) < (self.best.value, self.best.index):
                    self.best = kid
                if depth >= self.cfg.max_depth:
                    self.retired.append(kid)
                else:
                    self._push(kid)
        self.history.append(self.best.value)
        return True

    def run(self) -> "DirectSearch":
        while self.iterate():
            pass
        return self


def minimize(g: Callable, k: int, cfg: DirectConfig | None = None, vectorized: bool = False):
    s = DirectSearch(g, k, cfg, vectorized).run()
    return s.best.center.copy(), s.best.value, s.evals


def maximize(f: Callable, k: int, cfg: DirectConfig | None = None, vectorized: bool = False):
    """Maximize ``f`` on ``[0, 1]^k``. Returns ``(x_best, f_best, evals_used)``."""
    if vectorized:
        g = lambda P: -np.asarray(f(P), dtype=float)  # noqa: E731
    else:
        g = lambda p: -float(f(p))  # noqa: E731
    x, val, n = minimize(g, k, cfg, vectorized)
    return x, -val, n
