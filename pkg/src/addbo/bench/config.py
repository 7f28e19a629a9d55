"""Experiment configuration: a flat ``dotted.key = value`` document (or JSON).

Example::

    function.D = 10
    function.dtilde = 3
    strategy[0].kind = add_gp_ucb
    strategy[0].decomposition = known
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..acquisition import BETA_KINDS, BetaSchedule
from ..bandit import STRATEGY_KINDS, Decomposition, StrategyConfig
from ..direct import DirectConfig
from ..gp import SearchSpace
from ..kernels import kernel_from_dict
from .synthetic import SyntheticSpec, build_composite


class ConfigError(ValueError):
    pass


_STRATEGY_RE = re.compile(r"^strategy\[(\d+)\]\.(.+)$")

_TOP_KEYS: dict[str, type] = {
    "function.D": int,
    "function.dtilde": int,
    "function.Mtilde": int,
    "function.seed": int,
    "noise.eta": float,
    "loop.T": int,
    "loop.replicates": int,
    "loop.base_seed": int,
    "budget.full": int,
    "budget.additive_fraction": float,
    "direct.max_evals": int,
    "direct.epsilon": float,
    "direct.max_depth": int,
    "hyper.sigma_min": float,
    "hyper.sigma_max": float,
    "hyper.h_min": float,
    "hyper.h_max": float,
    "hyper.grid": int,
    "kernel.kind": str,
    "kernel.smoothness": float,
    "kernel.bandwidth": float,
    "output.dir": str,
    "output.timing": bool,
}

_STRATEGY_KEYS: dict[str, type] = {
    "kind": str,
    "label": str,
    "beta.kind": str,
    "beta.coeff": float,
    "beta.delta": float,
    "decomposition": str,
    "n_init": int,
    "n_cyc": int,
    "bandwidth_floor": float,
    "ml_num_candidates": int,
}


def _parse_value(text: str) -> Any:
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def parse_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(value)
    return out


def flatten(obj: Any, prefix: str = "") -> dict[str, Any]:
    """Nested JSON (with a ``strategy`` list) to dotted keys."""
    out: dict[str, Any] = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(flatten(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(obj, list) and prefix == "strategy":
        for i, v in enumerate(obj):
            out.update(flatten(v, f"strategy[{i}]"))
    else:
        out[prefix] = obj
    return out


def load_flat(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            return flatten(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_text(text)


def _coerce(key: str, value: Any, typ: type) -> Any:
    if typ is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected true/false, got {value!r}")
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    return str(value)


def validate_flat(flat: dict[str, Any]) -> dict[str, Any]:
    """Type-check every key; unknown keys are errors."""
    out: dict[str, Any] = {}
    for key, value in flat.items():
        m = _STRATEGY_RE.match(key)
        if m:
            sub = m.group(2)
            if sub not in _STRATEGY_KEYS:
                raise ConfigError(f"unknown strategy key {key!r}")
            typ = _STRATEGY_KEYS[sub]
            if sub == "decomposition" and isinstance(value, int) and not isinstance(value, bool):
                value = str(value)
            out[key] = _coerce(key, value, typ)
        elif key in _TOP_KEYS:
            out[key] = _coerce(key, value, _TOP_KEYS[key])
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return out


def default_full_budget(D: int) -> int:
    return min(5000, 100 * D)


@dataclass
class ExperimentConfig:
    function: SyntheticSpec
    strategies: list[StrategyConfig]
    T: int
    replicates: int = 1
    base_seed: int = 0
    eta: float = 0.1
    full_budget: int | None = None
    additive_fraction: float = 0.9
    out_dir: str | None = None
    timing: bool = False
    flat: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("loop.replicates must be >= 1")
        if self.T < 1:
            raise ConfigError("loop.T must be >= 1")
        if not self.eta > 0:
            raise ConfigError("noise.eta must be positive")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if self.full_budget is None:
            self.full_budget = default_full_budget(self.function.ambient_dim)
        if self.full_budget < 1 or self.additive_budget < 1:
            raise ConfigError("acquisition budgets must be >= 1")

    @property
    def additive_budget(self) -> int:
        return int(self.additive_fraction * self.full_budget)

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + r for r in range(self.replicates)]

    def config_hash(self) -> str:
        blob = json.dumps(self.flat, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _known_decomposition(spec: SyntheticSpec) -> Decomposition:
    """True groups of the synthetic function; unused coordinates fill extra groups of the same size."""
    f = build_composite(spec)
    d = spec.group_dim
    groups = [tuple(g) for g in f.groups]
    groups += [tuple(f.unused[i : i + d]) for i in range(0, len(f.unused), d)]
    return Decomposition(tuple(groups), spec.ambient_dim, d)


def build(flat: dict[str, Any]) -> ExperimentConfig:
    """Validated flat dictionary to an :class:`ExperimentConfig`."""
    flat = validate_flat(flat)
    get = flat.get
    try:
        spec = SyntheticSpec(
            ambient_dim=get("function.D", 10),
            group_dim=get("function.dtilde", 3),
            num_groups=get("function.Mtilde", 3),
            seed=get("function.seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    D = spec.ambient_dim
    full = get("direct.max_evals", get("budget.full", default_full_budget(D)))
    try:
        search = SearchSpace(
            sigma_min=get("hyper.sigma_min", 0.01),
            sigma_max=get("hyper.sigma_max", 10.0),
            h_min=get("hyper.h_min", 0.01),
            h_max=get("hyper.h_max", 1.0),
            grid=get("hyper.grid", 10),
        )
        direct = DirectConfig(max_evals=full, epsilon=get("direct.epsilon", 1e-4), max_depth=get("direct.max_depth", 50))
        base = kernel_from_dict(
            {
                "kind": get("kernel.kind", "se"),
                "bandwidth": get("kernel.bandwidth", 0.2),
                "smoothness": get("kernel.smoothness", 2.5),
            }
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    additive_fraction = get("budget.additive_fraction", 0.9)
    if not 0 < additive_fraction <= 1:
        raise ConfigError("budget.additive_fraction must lie in (0, 1]")
    indices = sorted({int(_STRATEGY_RE.match(k).group(1)) for k in flat if _STRATEGY_RE.match(k)})
    if indices != list(range(len(indices))):
        raise ConfigError(f"strategy indices must be 0..n-1, got {indices}")

    known: Decomposition | None = None
    strategies = []
    labels: set[str] = set()
    for i in indices:
        s = {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(f"strategy[{i}].")}
        kind = s.get("kind")
        if kind not in STRATEGY_KINDS:
            raise ConfigError(f"strategy[{i}].kind must be one of {STRATEGY_KINDS}, got {kind!r}")
        bkind = s.get("beta.kind", "practical")
        if bkind not in BETA_KINDS:
            raise ConfigError(f"strategy[{i}].beta.kind must be one of {BETA_KINDS}, got {bkind!r}")
        dec_text = s.get("decomposition")
        decomposition, learn_d = None, None
        if dec_text == "known":
            known = known or _known_decomposition(spec)
            decomposition = known
        elif dec_text is not None:
            if not dec_text.isdigit() or int(dec_text) < 1:
                raise ConfigError(f"strategy[{i}].decomposition must be 'known' or a group size, got {dec_text!r}")
            learn_d = int(dec_text)
        elif kind in ("add_gp_ucb", "seq_one_group", "seq_cycle"):
            raise ConfigError(f"strategy[{i}] ({kind}) needs a decomposition")
        label = s.get("label") or kind + (f"-{dec_text}" if dec_text else "")
        if label in labels:
            label = f"{label}-{i}"
        labels.add(label)
        try:
            strategies.append(
                StrategyConfig(
                    kind=kind,
                    beta=BetaSchedule(kind=bkind, coeff=s.get("beta.coeff", 0.2), delta=s.get("beta.delta", 0.1)),
                    direct=direct,
                    decomposition=decomposition,
                    learn_d=learn_d,
                    n_init=s.get("n_init", 10),
                    n_cyc=s.get("n_cyc", 25),
                    bandwidth_floor=s.get("bandwidth_floor", 1e-5),
                    ml_num_candidates=s.get("ml_num_candidates"),
                    additive_budget=int(additive_fraction * full),
                    base_kernel=base,
                    search=search,
                    label=label,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"strategy[{i}]: {exc}") from exc

    return ExperimentConfig(
        function=spec,
        strategies=strategies,
        T=get("loop.T", 100),
        replicates=get("loop.replicates", 1),
        base_seed=get("loop.base_seed", 0),
        eta=get("noise.eta", 0.1),
        full_budget=full,
        additive_fraction=additive_fraction,
        out_dir=get("output.dir"),
        timing=get("output.timing", False),
        flat=flat,
    )


def load(path: str | Path) -> ExperimentConfig:
    return build(load_flat(path))
