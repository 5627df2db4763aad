"""LoRA's SGD dynamics and the update rules it reduces to.

Two views of the same trajectory are provided:

* direct simulation of the coupled updates ``A <- A - eta B^T G`` and
  ``B <- B - eta G A^T`` (:func:`lora_sgd_step`);
* the closed-form recursion matrices ``f_A`` (m x m) and ``f_B`` (n x m)
  with ``A_T = A_0 + eta A_0 f_A(T)`` and ``B_T = eta f_B(T) A_0^T``
  (:func:`recursion_eval`).

They agree to rounding error for any gradient sequence, which is what the
equivalence tests check. :func:`variant_update` implements the pilot's five
update rules on a single weight matrix.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import projector
from .errors import ConfigError, RegimeError, ShapeError
from .matcore import frobenius_norm
from .projector import ProjectionSpec


@dataclass(frozen=True)
class LoraDynState:
    a0: np.ndarray
    a: np.ndarray
    b: np.ndarray
    f_a: np.ndarray
    f_b: np.ndarray
    eta: float
    grads: tuple = ()
    t: int = 0

    @classmethod
    def start(cls, a0, n, eta):
        """State at t=0: ``B_0 = 0`` and ``f_A(0) = f_B(0) = 0``."""
        a0 = np.asarray(a0, dtype=np.float64)
        m = a0.shape[1]
        return cls(
            a0=a0,
            a=a0.copy(),
            b=np.zeros((n, a0.shape[0])),
            f_a=np.zeros((m, m)),
            f_b=np.zeros((n, m)),
            eta=float(eta),
        )


def lora_sgd_step(state, g):
    """One simultaneous SGD step on both adapters, given ``G = dL/dW``."""
    n, m = state.b.shape[0], state.a.shape[1]
    if g.shape != (n, m):
        raise ShapeError(f"gradient shape {g.shape} does not match {(n, m)}")
    eta = state.eta
    a = state.a - eta * (state.b.T @ g)
    b = state.b - eta * (g @ state.a.T)
    f_a, f_b = _recursion_step(state.f_a, state.f_b, g, eta)
    return replace(state, a=a, b=b, f_a=f_a, f_b=f_b, grads=state.grads + (g,), t=state.t + 1)


def _recursion_step(f_a, f_b, g, eta):
    new_a = f_a - eta * (f_b.T @ g)
    new_b = f_b - g @ (eta * f_a.T + np.eye(f_a.shape[0]))
    return new_a, new_b


def recursion_eval(grads, a0, eta, n=None):
    """Closed-form recursion values ``(f_A(T), f_B(T))`` for ``T = len(grads)``.

    ``a0`` only fixes ``m``; the recursion does not depend on its values.
    ``n`` is needed only when ``grads`` is empty.
    """
    m = np.asarray(a0).shape[1]
    if len(grads) == 0:
        if n is None:
            raise ValueError("n is required for an empty gradient history")
    else:
        n = grads[0].shape[0]
    f_a, f_b = np.zeros((m, m)), np.zeros((n, m))
    for g in grads:
        if g.shape != (n, m):
            raise ShapeError(f"gradient shape {g.shape} does not match {(n, m)}")
        f_a, f_b = _recursion_step(f_a, f_b, g, eta)
    return f_a, f_b


def adapters_from_recursion(a0, f_a, f_b, eta):
    """``(A_T, B_T)`` reconstructed from the recursion matrices."""
    return a0 + eta * (a0 @ f_a), eta * (f_b @ a0.T)


def prefix_sum_bound(grads):
    """Largest Frobenius norm over all prefix sums of ``grads`` (the L constant)."""
    total, best = None, 0.0
    for g in grads:
        total = g.copy() if total is None else total + g
        best = max(best, frobenius_norm(total))
    return best


def fa_bound_check(grads, eta):
    """Compare ``||f_A(t)||_F`` with its geometric bound.

    Returns ``(lhs, rhs, ok)``. ``L`` is measured from the history itself.
    Raises :class:`RegimeError` when ``eta * L >= 1``, where the bound's
    geometric series diverges.
    """
    if len(grads) == 0:
        return 0.0, 0.0, True
    big_l = prefix_sum_bound(grads)
    q = eta * big_l
    if q >= 1.0:
        raise RegimeError(f"eta * L = {q:.4g} >= 1; the bound does not apply")
    t = len(grads)
    m = grads[0].shape[1]
    f_a, _ = recursion_eval(grads, np.zeros((1, m)), eta)
    lhs = frobenius_norm(f_a)
    q2 = q * q
    rhs = eta * big_l**2 * (1.0 - q2**t) / (1.0 - q2) if big_l > 0 else 0.0
    return lhs, rhs, lhs <= rhs


def observation_residual(state):
    """``||dB dA||_F / ||dB A_0||_F``: size of the term LoRA(B) drops."""
    d_a = state.a - state.a0
    main = frobenius_norm(state.b @ state.a0)
    return frobenius_norm(state.b @ d_a) / main if main > 0 else 0.0


class Variant(str, enum.Enum):
    FULL_SGD = "full_sgd"
    LORA = "lora"
    LORA_B = "lora_b"
    RP = "rp"
    RRP = "rrp"


@dataclass(frozen=True)
class UpdateRule:
    variant: Variant
    rank: int = 8
    eta: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.variant is not Variant.FULL_SGD and self.rank < 1:
            raise ConfigError("rank must be >= 1 for projection variants")


@dataclass
class VariantAux:
    """Per-matrix auxiliary state for :func:`variant_update`."""

    seed: int
    param_index: int = 0
    a0: np.ndarray = None
    a: np.ndarray = None
    b: np.ndarray = None
    step: int = 0


def init_variant(rule, shape, seed, param_index=0):
    n, m = shape
    aux = VariantAux(seed=seed, param_index=param_index)
    if rule.variant is Variant.FULL_SGD:
        return aux
    aux.a0 = projector.materialize(ProjectionSpec.derived(seed, param_index, 0, rule.rank, m))
    if rule.variant in (Variant.LORA, Variant.LORA_B):
        aux.a = aux.a0.copy()
        aux.b = np.zeros((n, rule.rank))
    return aux


def effective_weight(rule, w, aux):
    """Weight the forward pass sees: ``W + B A`` for adapter variants."""
    if rule.variant in (Variant.LORA, Variant.LORA_B):
        return w + aux.b @ aux.a
    return w


def variant_update(rule, w, g, aux):
    """Apply one step of ``rule`` given ``g``, the gradient at the effective weight.

    Returns ``(w', aux')``. Adapter variants leave ``w`` untouched and move
    ``aux.a`` / ``aux.b`` instead; ``aux`` is updated in place.
    """
    if g.shape != w.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match weight shape {w.shape}")
    eta = rule.eta
    v = rule.variant
    if v is Variant.FULL_SGD:
        w = w - eta * g
    elif v is Variant.RP:
        w = w - eta * ((g @ aux.a0.T) @ aux.a0)
    elif v is Variant.RRP:
        spec = ProjectionSpec.derived(aux.seed, aux.param_index, aux.step, rule.rank, w.shape[1])
        a = projector.materialize(spec)
        w = w - eta * ((g @ a.T) @ a)
    elif v is Variant.LORA:
        a_next = aux.a - eta * (aux.b.T @ g)
        aux.b = aux.b - eta * (g @ aux.a.T)
        aux.a = a_next
    else:
        aux.b = aux.b - eta * (g @ aux.a0.T)
    aux.step += 1
    return w, aux
