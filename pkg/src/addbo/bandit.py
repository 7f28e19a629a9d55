"""Sequential query loops: Add-GP-UCB, GP-UCB, sequential baselines, EI and random search.

Every strategy keeps a GP posterior that is refit once per step. Kernel
hyperparameters (and, when learning it, the decomposition) are re-selected
by marginal likelihood every ``n_cyc`` steps; before the first refit the
acquisition kernel uses a tiny bandwidth to force exploration.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import gp
from .acquisition import AcquisitionQuery, BetaSchedule, add_ucb_group, beta, ei, ucb
from .direct import DirectConfig, maximize
from .gp import Dataset, NoiseModel, PosteriorState, SearchSpace
from .kernels import AdditiveKernel, BaseKernel, SeKernel

logger = logging.getLogger(__name__)

STRATEGY_KINDS = ("add_gp_ucb", "gp_ucb", "seq_one_group", "seq_cycle", "ei", "random")
ADDITIVE_KINDS = ("add_gp_ucb", "seq_one_group", "seq_cycle")


class OracleError(RuntimeError):
    """Raised when the objective fails; ``trace`` holds every completed row."""

    def __init__(self, message: str, trace: "Trace"):
        super().__init__(message)
        self.trace = trace


# --------------------------------------------------------------------------
# decompositions


def balanced_sizes(D: int, d: int) -> list[int]:
    """Sizes of ceil(D/d) groups, as equal as possible, larger groups first."""
    if not 1 <= d:
        raise ValueError(f"group size must be positive, got {d}")
    M = -(-D // d)
    base, extra = divmod(D, M)
    return [base + 1] * extra + [base] * (M - extra)


@dataclass(frozen=True)
class Decomposition:
    """Partition of ``range(D)`` into disjoint groups of size at most ``d``."""

    groups: tuple[tuple[int, ...], ...]
    D: int
    d: int | None = None

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        d = max(len(g) for g in groups) if self.d is None else int(self.d)
        flat = [i for g in groups for i in g]
        if any(not g for g in groups):
            raise ValueError("empty group in decomposition")
        if any(list(g) != sorted(set(g)) for g in groups):
            raise ValueError("group indices must be strictly increasing")
        if sorted(flat) != list(range(self.D)):
            raise ValueError(f"groups {groups} do not partition range({self.D})")
        if max(len(g) for g in groups) > d:
            raise ValueError(f"a group exceeds the maximum size {d}")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "d", d)

    @property
    def M(self) -> int:
        return len(self.groups)

    @classmethod
    def full(cls, D: int) -> "Decomposition":
        return cls((tuple(range(D)),), D)

    @classmethod
    def contiguous(cls, D: int, d: int) -> "Decomposition":
        groups, start = [], 0
        for size in balanced_sizes(D, d):
            groups.append(tuple(range(start, start + size)))
            start += size
        return cls(tuple(groups), D, d)

    @classmethod
    def random(cls, D: int, d: int, rng: np.random.Generator) -> "Decomposition":
        perm = rng.permutation(D)
        groups, start = [], 0
        for size in balanced_sizes(D, d):
            groups.append(tuple(sorted(int(i) for i in perm[start : start + size])))
            start += size
        return cls(tuple(groups), D, d)

    def canonical(self) -> tuple[tuple[int, ...], ...]:
        return tuple(sorted(self.groups))

    def kernel(self, base: BaseKernel) -> AdditiveKernel:
        return AdditiveKernel.from_groups(base, self.groups, self.D)


def decomposition_search(
    data: Dataset,
    d: int,
    num_candidates: int,
    rng: np.random.Generator,
    base: BaseKernel | None = None,
    noise: NoiseModel | None = None,
    incumbent: Decomposition | None = None,
    center: bool = True,
) -> Decomposition:
    """Best of the incumbent and ``num_candidates`` random partitions by marginal likelihood.

    All candidates share the base kernel's scale and bandwidth. Ties keep
    the earlier candidate, the incumbent first.
    """
    if data.n == 0:
        raise ValueError("decomposition search needs data")
    D = data.X.shape[1]
    base = base or SeKernel()
    noise = noise or NoiseModel(0.1)
    candidates = [incumbent] if incumbent is not None else []
    candidates += [Decomposition.random(D, d, rng) for _ in range(num_candidates)]
    if not candidates:
        raise ValueError("no incumbent and no candidates to search")
    best, best_ll = candidates[0], -np.inf
    for dec in candidates:
        try:
            ll = gp.log_marginal_likelihood(data, dec.kernel(base), noise, center=center)
        except gp.FactorizationError:
            continue
        if ll > best_ll:
            best, best_ll = dec, ll
    return best


# --------------------------------------------------------------------------
# single steps


def split_budget(total: int, M: int) -> list[int]:
    """Equal integer shares of ``total``; the remainder goes to the leading groups."""
    base, extra = divmod(int(total), M)
    return [max(1, base + (1 if j < extra else 0)) for j in range(M)]


def _note(stats: dict | None, evals: int) -> None:
    if stats is not None:
        stats["acq_evals"] = stats.get("acq_evals", 0) + evals
        stats["acq_calls"] = stats.get("acq_calls", 0) + 1


def _maximize_group(q: AcquisitionQuery, j: int, cfg: DirectConfig, stats: dict | None) -> np.ndarray:
    g = q.state.kernel.groups[j]
    z, _, n = maximize(lambda Z: add_ucb_group(q, j, Z), g.dim, cfg, vectorized=True)
    _note(stats, n)
    return z


def step_add_gp_ucb(
    state: PosteriorState,
    decomp: Decomposition,
    schedule: BetaSchedule,
    direct_cfg: DirectConfig,
    t: int,
    stats: dict | None = None,
) -> np.ndarray:
    """Maximize each group acquisition separately and stitch the maximizers together.

    ``direct_cfg.max_evals`` is the total budget, shared across groups.
    """
    groups = tuple(g.indices for g in state.kernel.groups)
    if tuple(decomp.groups) != groups:
        raise ValueError("state kernel does not match the decomposition")
    q = AcquisitionQuery(state, t, schedule)
    x = np.empty(decomp.D)
    for j, budget in enumerate(split_budget(direct_cfg.max_evals, decomp.M)):
        cfg = replace(direct_cfg, max_evals=budget)
        x[list(groups[j])] = _maximize_group(q, j, cfg, stats)
    return x


def step_gp_ucb(
    state: PosteriorState, schedule: BetaSchedule, direct_cfg: DirectConfig, t: int, stats: dict | None = None
) -> np.ndarray:
    q = AcquisitionQuery(state, t, schedule)
    x, _, n = maximize(lambda X: ucb(q, X), state.kernel.ambient_dim, direct_cfg, vectorized=True)
    _note(stats, n)
    return x


def step_single_group(
    state: PosteriorState,
    j: int,
    x_base: np.ndarray,
    schedule: BetaSchedule,
    direct_cfg: DirectConfig,
    t: int,
    stats: dict | None = None,
) -> np.ndarray:
    """Re-optimize group ``j`` only; every other coordinate is copied from ``x_base``."""
    q = AcquisitionQuery(state, t, schedule)
    x = np.array(x_base, dtype=float, copy=True)
    x[list(state.kernel.groups[j].indices)] = _maximize_group(q, j, direct_cfg, stats)
    return x


def seq_cycle_group(t: int, M: int) -> int:
    """0-based group re-optimized at 1-based step ``t``."""
    return (t - 1) % M


def seq_one_group_schedule(T: int, M: int) -> list[int]:
    """Group for each of the T steps: floor(T/M) steps per group, remainder to the last."""
    per = T // M
    sched = [j for j in range(M) for _ in range(per)]
    return sched + [M - 1] * (T - len(sched))


def step_ei(
    state: PosteriorState, direct_cfg: DirectConfig, incumbent: float | None = None, stats: dict | None = None
) -> np.ndarray:
    if incumbent is None:
        incumbent = float(np.max(state.data.Y)) if state.n else -np.inf
    x, _, n = maximize(lambda X: ei(state, X, incumbent), state.kernel.ambient_dim, direct_cfg, vectorized=True)
    _note(stats, n)
    return x


def step_random(rng: np.random.Generator, D: int) -> np.ndarray:
    return rng.random(D)


def info_gain_increment(state: PosteriorState, x) -> float:
    """0.5 * log(1 + var / eta^2) with the posterior variance before (x, y) is added."""
    _, var = gp.posterior_full(state, np.asarray(x, dtype=float).ravel())
    return 0.5 * math.log1p(var / state.noise.variance)


# --------------------------------------------------------------------------
# full runs


@dataclass
class Oracle:
    """Objective on ``[0, 1]^dim``.

    ``func`` returns the noiseless value; ``run`` adds N(0, eta^2) noise.
    Set ``noisy=True`` when ``func`` already returns observations, in which
    case regret columns are unavailable. ``optimum`` is f(x*) when known.
    """

    func: Callable[[np.ndarray], float]
    dim: int
    eta: float = 0.0
    optimum: float | None = None
    noisy: bool = False

    def observe(self, x: np.ndarray, rng: np.random.Generator) -> tuple[float, float]:
        v = float(self.func(x))
        if self.noisy:
            return v, math.nan
        y = v + (self.eta * rng.standard_normal() if self.eta > 0 else 0.0)
        return y, v

    @property
    def has_regret(self) -> bool:
        return self.optimum is not None and not self.noisy


@dataclass(frozen=True)
class StrategyConfig:
    """One strategy's loop settings.

    ``decomposition`` is used as given; when it is None and ``learn_d`` is
    set, the decomposition is learned with groups of size at most
    ``learn_d``. ``direct`` carries the full acquisition budget;
    ``additive_budget`` (if set) replaces it for the additive kinds.
    """

    kind: str
    beta: BetaSchedule = field(default_factory=BetaSchedule)
    direct: DirectConfig = field(default_factory=DirectConfig)
    decomposition: Decomposition | None = None
    learn_d: int | None = None
    n_init: int = 10
    n_cyc: int = 25
    bandwidth_floor: float = 1e-5
    ml_num_candidates: int | None = None
    additive_budget: int | None = None
    base_kernel: BaseKernel = field(default_factory=lambda: SeKernel(1.0, 0.2))
    search: SearchSpace = field(default_factory=SearchSpace)
    label: str | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.n_init < 1 or self.n_cyc < 1:
            raise ValueError("n_init and n_cyc must be >= 1")
        if not self.bandwidth_floor > 0:
            raise ValueError("bandwidth_floor must be positive")
        if self.kind in ("seq_one_group", "seq_cycle") and self.decomposition is None:
            raise ValueError(f"{self.kind} needs a known decomposition")

    @property
    def name(self) -> str:
        return self.label or self.kind

    @property
    def uses_acquisition(self) -> bool:
        return self.kind != "random"


@dataclass
class TraceRow:
    t: int  # 1-based query index, initialization included
    step: int  # 1-based acquisition step, 0 for initialization rows
    x: np.ndarray
    y: float
    fx: float
    r: float
    R: float
    S: float
    beta: float
    info_gain: float
    info_gain_cum: float
    jitter: float
    n_fits: int
    acq_evals: int
    scale: float
    bandwidth: float
    groups: tuple[tuple[int, ...], ...]
    refit: bool = False
    wall_ms: float = 0.0


@dataclass
class Trace:
    strategy: str
    seed: int
    eta: float
    rows: list[TraceRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def X(self) -> np.ndarray:
        return np.array([r.x for r in self.rows])

    @property
    def Y(self) -> np.ndarray:
        return self.column("y")

    def simple_regret(self) -> float:
        return self.rows[-1].S if self.rows else math.nan

    def cumulative_regret(self) -> float:
        return self.rows[-1].R if self.rows else math.nan


def _model_decomposition(cfg: StrategyConfig, D: int, rng: np.random.Generator) -> Decomposition:
    if cfg.kind in ("gp_ucb", "ei"):
        return Decomposition.full(D)
    if cfg.decomposition is not None:
        return cfg.decomposition
    if cfg.learn_d is not None:
        return Decomposition.random(D, cfg.learn_d, rng)
    if cfg.kind == "random":
        return Decomposition.full(D)
    raise ValueError(f"{cfg.kind} needs a decomposition or learn_d")


def _initial_scale(Y: np.ndarray, M: int) -> float:
    v = float(np.var(Y)) if len(Y) > 1 else 0.0
    return v / M if v > 0 else 1.0


def run(oracle: Oracle, cfg: StrategyConfig, T: int, seed: int, eta: float | None = None, timing: bool = False) -> Trace:
    """Run ``cfg.n_init`` uniform queries and then ``T`` strategy steps.

    ``eta`` is the model's noise level (defaults to the oracle's, floored at
    1e-3 for noiseless oracles). The same seed gives the same
    initialization and noise draws across strategies.
    """
    if T < 1:
        raise ValueError("horizon T must be >= 1")
    D = oracle.dim
    init_rng, noise_rng, strat_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    noise = NoiseModel(eta if eta is not None else max(oracle.eta, 1e-3))
    trace = Trace(cfg.name, seed, noise.eta)
    f_star = oracle.optimum if oracle.has_regret else None

    decomp = _model_decomposition(cfg, D, strat_rng)
    add_budget = cfg.additive_budget if cfg.additive_budget is not None else cfg.direct.max_evals
    full_cfg = cfg.direct
    add_cfg = replace(cfg.direct, max_evals=add_budget)
    if cfg.kind in ADDITIVE_KINDS:
        sched = replace(cfg.beta, D=D, d=decomp.d, M=decomp.M)
    else:
        sched = replace(cfg.beta, D=D, d=D, M=1)
    num_candidates = cfg.ml_num_candidates if cfg.ml_num_candidates is not None else D

    X_rows: list[np.ndarray] = []
    Y_rows: list[float] = []
    state_R, state_S, ig_cum = 0.0, math.inf, 0.0

    def observe(x: np.ndarray) -> tuple[float, float]:
        try:
            return oracle.observe(x, noise_rng)
        except Exception as exc:  # noqa: BLE001
            raise OracleError(f"oracle failed at {x.tolist()}: {exc}", trace) from exc

    def regret(fx: float) -> tuple[float, float, float]:
        nonlocal state_R, state_S
        if f_star is None:
            return math.nan, math.nan, math.nan
        r = f_star - fx
        state_R += r
        state_S = min(state_S, r)
        return r, state_R, state_S

    for i in range(cfg.n_init):
        t0 = time.perf_counter()
        x = init_rng.random(D)
        y, fx = observe(x)
        X_rows.append(x)
        Y_rows.append(y)
        r, R, S = regret(fx)
        trace.rows.append(
            TraceRow(
                t=i + 1, step=0, x=x, y=y, fx=fx, r=r, R=R, S=S, beta=math.nan, info_gain=0.0,
                info_gain_cum=0.0, jitter=0.0, n_fits=0, acq_evals=0, scale=math.nan,
                bandwidth=math.nan, groups=decomp.groups,
                wall_ms=(time.perf_counter() - t0) * 1e3 if timing else 0.0,
            )
        )

    base = cfg.base_kernel.with_params(scale=_initial_scale(np.array(Y_rows), decomp.M))
    kernel = decomp.kernel(base)
    tuned = False
    x_prev = X_rows[-1]
    one_group = seq_one_group_schedule(T, decomp.M) if cfg.kind == "seq_one_group" else None

    for step in range(1, T + 1):
        t0 = time.perf_counter()
        data = Dataset(np.array(X_rows), np.array(Y_rows))
        refit = step % cfg.n_cyc == 0
        if refit:
            kernel = _refit(data, kernel, decomp, noise, cfg, num_candidates, strat_rng, seed, step)
            decomp = Decomposition(tuple(g.indices for g in kernel.groups), D, decomp.d)
            tuned = True
        acq_kernel = kernel
        if cfg.uses_acquisition and not tuned:
            b = kernel.groups[0].base
            acq_kernel = gp.with_shared_params(kernel, b.scale, cfg.bandwidth_floor)

        fits_before = gp.COUNTERS["fit"]
        state = gp.fit(data, acq_kernel, noise, center=True)
        n_fits = gp.COUNTERS["fit"] - fits_before

        stats: dict = {}
        if cfg.kind == "add_gp_ucb":
            x = step_add_gp_ucb(state, decomp, sched, add_cfg, step, stats)
        elif cfg.kind == "gp_ucb":
            x = step_gp_ucb(state, sched, full_cfg, step, stats)
        elif cfg.kind == "seq_cycle":
            j = seq_cycle_group(step, decomp.M)
            cfg_j = replace(add_cfg, max_evals=split_budget(add_budget, decomp.M)[j])
            x = step_single_group(state, j, x_prev, sched, cfg_j, step, stats)
        elif cfg.kind == "seq_one_group":
            j = one_group[step - 1]
            cfg_j = replace(add_cfg, max_evals=split_budget(add_budget, decomp.M)[j])
            x_best = X_rows[int(np.argmax(Y_rows))]
            x = step_single_group(state, j, x_best, sched, cfg_j, step, stats)
        elif cfg.kind == "ei":
            x = step_ei(state, full_cfg, float(np.max(Y_rows)), stats)
        else:
            x = step_random(strat_rng, D)

        gain = info_gain_increment(state, x)
        ig_cum += gain
        y, fx = observe(x)
        r, R, S = regret(fx)
        b = acq_kernel.groups[0].base
        trace.rows.append(
            TraceRow(
                t=cfg.n_init + step, step=step, x=x, y=y, fx=fx, r=r, R=R, S=S,
                beta=beta(sched, step) if cfg.uses_acquisition else math.nan,
                info_gain=gain, info_gain_cum=ig_cum, jitter=state.jitter, n_fits=n_fits,
                acq_evals=stats.get("acq_evals", 0), scale=b.scale, bandwidth=b.bandwidth,
                groups=tuple(g.indices for g in acq_kernel.groups), refit=refit,
                wall_ms=(time.perf_counter() - t0) * 1e3 if timing else 0.0,
            )
        )
        X_rows.append(x)
        Y_rows.append(y)
        x_prev = x
    return trace


def _refit(
    data: Dataset,
    kernel: AdditiveKernel,
    decomp: Decomposition,
    noise: NoiseModel,
    cfg: StrategyConfig,
    num_candidates: int,
    rng: np.random.Generator,
    seed: int,
    step: int,
) -> AdditiveKernel:
    kernel, _ = gp.optimize_hyperparams(data, kernel, noise, cfg.search, seed=seed + step)
    learn = cfg.kind in ADDITIVE_KINDS and cfg.decomposition is None and cfg.learn_d is not None
    if learn:
        b = kernel.groups[0].base
        best = decomposition_search(data, decomp.d, num_candidates, rng, b, noise, incumbent=decomp)
        if best.groups != decomp.groups:
            kernel, _ = gp.optimize_hyperparams(data, best.kernel(b), noise, cfg.search, seed=seed + step)
    logger.debug("refit at step %d: %s", step, kernel.groups[0].base)
    return kernel
