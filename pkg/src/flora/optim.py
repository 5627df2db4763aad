"""Optimizer façade: per-parameter state, partitioning and memory accounting.

The base update is plain SGD. A mode decides what sits between the gradient
and the SGD step: nothing, an EMA (momentum), an arithmetic-mean buffer
(accumulation), or LoRA adapters. Only parameters whose policy is
``COMPRESSED`` get projected state; vectors always follow the naive path.

``apply_gradients`` returns *weight deltas* for the effective weights the
model uses. In LoRA mode the base weight is frozen and the delta is the
change of ``B @ A``.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import projector
from .accum import CompressedAccumulator, NaiveAccumulator
from .errors import ConfigError, ShapeError, StateError
from .momentum import DEFAULT_KAPPA, CompressedMomentum, NaiveMomentum
from .projector import ProjectionSpec


class Policy(str, enum.Enum):
    COMPRESSED = "compressed"
    NAIVE = "naive"


class Mode(str, enum.Enum):
    SGD = "sgd"
    SGD_FLORA_MOMENTUM = "sgd_flora_momentum"
    SGD_NAIVE_MOMENTUM = "sgd_naive_momentum"
    ACCUM_FLORA = "accum_flora"
    ACCUM_NAIVE = "accum_naive"
    LORA_ADAPTER = "lora"


FLORA_MODES = (Mode.SGD_FLORA_MOMENTUM, Mode.ACCUM_FLORA)
LORA_STATES = ("none", "momentum", "accum")


@dataclass(frozen=True)
class ParamGroup:
    id: str
    shape: tuple
    policy: Policy = Policy.NAIVE

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.policy is Policy.COMPRESSED and len(self.shape) != 2:
            raise ConfigError(f"{self.id}: only 2-D parameters can be compressed, got shape {self.shape}")

    @property
    def size(self):
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class OptimizerConfig:
    mode: Mode = Mode.SGD
    eta: float = 0.01
    rank: int = 8
    tau: int = 1
    kappa: int = DEFAULT_KAPPA
    beta: float = 0.9
    run_seed: int = 0
    lora_eta: float = None
    lora_freeze_a: bool = False
    lora_state: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.eta > 0:
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if self.kappa is not None and self.kappa < 1:
            raise ConfigError("kappa must be >= 1 or None")
        if self.lora_state not in LORA_STATES:
            raise ConfigError(f"lora_state must be one of {LORA_STATES}")
        if self.lora_eta is not None and not self.lora_eta > 0:
            raise ConfigError("lora_eta must be > 0")

    @property
    def adapter_eta(self):
        return self.eta if self.lora_eta is None else self.lora_eta


@dataclass
class ParamMemory:
    id: str
    shape: tuple
    treatment: str
    params: int
    grads: int
    state: int
    adapter_params: int = 0
    seed_words: int = 0

    @property
    def overhead(self):
        """Scalars held beyond plain SGD on the original parameter."""
        return self.state + self.adapter_params

    @property
    def compression_ratio(self):
        """Naive state size over this parameter's state size (m / r when compressed)."""
        if self.treatment != "compressed" or self.state == 0:
            return 1.0
        return self.params / self.state


@dataclass
class MemoryReport:
    mode: Mode
    rank: int
    entries: list = field(default_factory=list)

    def _sum(self, attr):
        return sum(getattr(e, attr) for e in self.entries)

    @property
    def params(self):
        return self._sum("params")

    @property
    def grads(self):
        return self._sum("grads")

    @property
    def state(self):
        return self._sum("state")

    @property
    def adapter_params(self):
        return self._sum("adapter_params")

    @property
    def seed_words(self):
        return self._sum("seed_words")

    @property
    def overhead(self):
        return self._sum("overhead")

    def by_id(self, pid):
        return next(e for e in self.entries if e.id == pid)


class _Adapter:
    """LoRA patch ``B @ A`` for one weight plus optional naive state."""

    def __init__(self, shape, config, param_index):
        n, m = shape
        r = config.rank
        self.freeze_a = config.lora_freeze_a
        self.eta = config.adapter_eta
        self.a = projector.materialize(ProjectionSpec.derived(config.run_seed, param_index, 0, r, m))
        self.b = np.zeros((n, r))
        self.states = {}
        trainable = {"b": self.b.shape} if self.freeze_a else {"a": self.a.shape, "b": self.b.shape}
        for name, s in trainable.items():
            if config.lora_state == "momentum":
                self.states[name] = NaiveMomentum(s, config.beta)
            elif config.lora_state == "accum":
                self.states[name] = NaiveAccumulator(s, config.tau)

    @property
    def param_size(self):
        return self.a.size + self.b.size

    @property
    def state_size(self):
        return sum(s.state_size for s in self.states.values())

    def product(self):
        return self.b @ self.a

    def step(self, g):
        before = self.product()
        grads = {"b": g @ self.a.T}
        if not self.freeze_a:
            grads["a"] = self.b.T @ g
        dirs = {name: _direction(self.states.get(name), gr) for name, gr in grads.items()}
        if dirs.get("a") is not None:
            self.a = self.a - self.eta * dirs["a"]
        if dirs["b"] is not None:
            self.b = self.b - self.eta * dirs["b"]
        return self.product() - before


def _direction(state, g):
    """Update direction from ``state`` for gradient ``g`` (None: no step yet)."""
    if state is None:
        return g
    if isinstance(state, (NaiveMomentum, CompressedMomentum)):
        return state.step(g)
    state.accumulate(g)
    if state.steps_seen < state.tau:
        return None
    out = state.reconstruct("mean")
    state.reset()
    return out


class FloraOptimizer:
    """Holds per-group state for one :class:`OptimizerConfig`."""

    def __init__(self, groups, config):
        ids = [g.id for g in groups]
        if len(set(ids)) != len(ids):
            raise ConfigError("parameter group ids must be unique")
        self.groups = list(groups)
        self.config = config
        self.slots = {}
        self.adapters = {}
        for index, group in enumerate(self.groups):
            self._allocate(index, group)
        self.steps = 0

    def _compressed(self, group):
        return group.policy is Policy.COMPRESSED and self.config.mode in FLORA_MODES

    def _allocate(self, index, group):
        cfg = self.config
        mode = cfg.mode
        shape = group.shape
        if mode is Mode.LORA_ADAPTER and group.policy is Policy.COMPRESSED:
            self.adapters[group.id] = _Adapter(shape, cfg, index)
            return
        if mode is Mode.LORA_ADAPTER:
            naive = {"none": None, "momentum": "momentum", "accum": "accum"}[cfg.lora_state]
        elif mode in (Mode.SGD_FLORA_MOMENTUM, Mode.SGD_NAIVE_MOMENTUM):
            naive = "momentum"
        elif mode in (Mode.ACCUM_FLORA, Mode.ACCUM_NAIVE):
            naive = "accum"
        else:
            naive = None
        if self._compressed(group):
            n, m = shape
            if mode is Mode.SGD_FLORA_MOMENTUM:
                state = CompressedMomentum(n, m, cfg.rank, cfg.kappa, cfg.beta, cfg.run_seed, index)
            else:
                state = CompressedAccumulator(n, m, cfg.rank, cfg.tau, cfg.run_seed, index)
        elif naive == "momentum":
            state = NaiveMomentum(shape, cfg.beta)
        elif naive == "accum":
            state = NaiveAccumulator(shape, cfg.tau)
        else:
            state = None
        self.slots[group.id] = state

    def apply_gradients(self, grads):
        """Advance every group by one step; returns ``{id: weight delta}``.

        All groups step together: a missing gradient aborts before any state
        is touched.
        """
        for group in self.groups:
            if group.id not in grads:
                raise StateError(f"missing gradient for parameter group {group.id!r}")
            if tuple(np.shape(grads[group.id])) != group.shape:
                raise ShapeError(f"{group.id}: gradient shape {np.shape(grads[group.id])} != {group.shape}")
        eta = self.config.eta
        deltas = {}
        for group in self.groups:
            g = np.asarray(grads[group.id], dtype=np.float64)
            if group.id in self.adapters:
                if g.ndim != 2:
                    raise ShapeError(f"{group.id}: adapters need a 2-D gradient")
                deltas[group.id] = self.adapters[group.id].step(g)
                continue
            d = _direction(self.slots[group.id], g)
            deltas[group.id] = np.zeros(group.shape) if d is None else -eta * d
        self.steps += 1
        return deltas

    def allocated_state_scalars(self):
        """Scalars actually held in optimizer buffers right now."""
        total = sum(s.state_size for s in self.slots.values() if s is not None)
        return total + sum(a.state_size for a in self.adapters.values())

    def allocated_adapter_scalars(self):
        return sum(a.param_size for a in self.adapters.values())

    def memory_report(self):
        """Analytic scalar counts derived from shapes and config alone."""
        return report_for(self.groups, self.config)


def report_for(groups, config):
    """:class:`MemoryReport` for ``groups`` under ``config`` without allocating state."""
    cfg = config
    r = cfg.rank
    report = MemoryReport(cfg.mode, r)
    for group in groups:
        size = group.size
        if cfg.mode is Mode.LORA_ADAPTER and group.policy is Policy.COMPRESSED:
            n, m = group.shape
            adapter = n * r + r * m
            trainable = n * r if cfg.lora_freeze_a else adapter
            state = trainable if cfg.lora_state != "none" else 0
            report.entries.append(
                ParamMemory(group.id, group.shape, "adapter", size, trainable, state, adapter_params=adapter)
            )
            continue
        if cfg.mode is Mode.LORA_ADAPTER:
            has_state = cfg.lora_state != "none"
        else:
            has_state = cfg.mode is not Mode.SGD
        if group.policy is Policy.COMPRESSED and cfg.mode in FLORA_MODES:
            n, _ = group.shape
            entry = ParamMemory(group.id, group.shape, "compressed", size, size, n * r, seed_words=1)
        else:
            entry = ParamMemory(group.id, group.shape, "naive", size, size, size if has_state else 0)
        report.entries.append(entry)
    return report


def make_optimizer(groups, config):
    return FloraOptimizer(groups, config)


def apply_gradients(optimizer, grads):
    return optimizer.apply_gradients(grads)


def memory_report(optimizer):
    return optimizer.memory_report()
