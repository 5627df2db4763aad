"""Property suite behind ``flora verify``.

Each check returns a :class:`CheckResult`. The checks compare the library
against independent oracles: direct simulation, explicitly materialized
recurrences, naive (uncompressed) baselines, Monte Carlo expectations and
finite differences.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import loradyn, projector
from .matcore import GaussStream, derive_seed, frobenius_norm, numerical_rank
from .momentum import CompressedMomentum, NaiveMomentum
from .optim import Mode, OptimizerConfig, ParamGroup, Policy, make_optimizer
from .projector import ProjectionSpec
from .trainer import MlpModel, forward_backward


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seed: int


def _randn(seed, *shape):
    return GaussStream(seed).next(int(np.prod(shape))).reshape(shape)


def _uniform_int(seed, lo, hi):
    """Deterministic integer in [lo, hi] from a seed."""
    return lo + derive_seed(seed, 7) % (hi - lo + 1)


def concentration_rank(m, delta, eps):
    """Rank that makes ``max |A^T A - I| <= eps`` hold w.p. >= 1 - delta."""
    return math.ceil(128.0 * math.log(2.0 * m / delta) / eps**2)


def check_lora_recursion(seed=0, steps=50, configs=100):
    worst = 0.0
    for k in range(configs):
        s = derive_seed(seed, 1, k)
        n = _uniform_int(derive_seed(s, 1), 1, 64)
        m = _uniform_int(derive_seed(s, 2), 1, 64)
        r = _uniform_int(derive_seed(s, 3), 1, 8)
        t_max = _uniform_int(derive_seed(s, 4), 1, steps)
        eta = 1e-2 * (1 + derive_seed(s, 5) % 1000) / 1000.0
        a0 = _randn(derive_seed(s, 6), r, m) / math.sqrt(r)
        state = loradyn.LoraDynState.start(a0, n, eta)
        for t in range(t_max):
            state = loradyn.lora_sgd_step(state, _randn(derive_seed(s, 100 + t), n, m))
        f_a, f_b = loradyn.recursion_eval(list(state.grads), a0, eta)
        a_rec, b_rec = loradyn.adapters_from_recursion(a0, f_a, f_b, eta)
        err_a = frobenius_norm(state.a - a_rec) / max(frobenius_norm(state.a), 1e-300)
        b_norm = frobenius_norm(state.b)
        err_b = frobenius_norm(state.b - b_rec) / b_norm if b_norm > 0 else frobenius_norm(b_rec)
        worst = max(worst, err_a, err_b)
    return CheckResult("theorem1", worst <= 1e-8, f"max relative error {worst:.2e} over {configs} configs", seed)


def bound_history(seed, n, m, t, eta, target):
    """Random gradients rescaled so that ``eta * L == target``."""
    grads = [_randn(derive_seed(seed, i), n, m) for i in range(t)]
    big_l = loradyn.prefix_sum_bound(grads)
    scale = target / (eta * big_l)
    return [g * scale for g in grads]


def check_fa_bound(seed=0, histories=100):
    failures = []
    worst_ratio = 0.0
    for k in range(histories):
        s = derive_seed(seed, 2, k)
        n = _uniform_int(derive_seed(s, 1), 1, 32)
        m = _uniform_int(derive_seed(s, 2), 1, 32)
        t = _uniform_int(derive_seed(s, 3), 1, 50)
        target = 0.1 * (1 + derive_seed(s, 4) % 100) / 100.0
        grads = bound_history(derive_seed(s, 5), n, m, t, 1e-2, target)
        lhs, rhs, ok = loradyn.fa_bound_check(grads, 1e-2)
        worst_ratio = max(worst_ratio, lhs / rhs)
        if not ok:
            failures.append(k)
    detail = f"{histories - len(failures)}/{histories} histories within bound, max lhs/rhs {worst_ratio:.3f}"
    return CheckResult("fa_bound", not failures, detail, seed)


def check_concentration(seed=0, trials=500, m=512, delta=0.01, eps=0.5, mono_trials=100):
    r = concentration_rank(m, delta, eps)
    exceed = sum(
        projector.reconstruction_error(ProjectionSpec(derive_seed(seed, 3, k), r, m)) > eps for k in range(trials)
    )
    rate = exceed / trials
    med = {}
    for rank in (16, 256):
        errs = [projector.reconstruction_error(ProjectionSpec(derive_seed(seed, 4, rank, k), rank, 256)) for k in range(mono_trials)]
        med[rank] = float(np.median(errs))
    ok = rate <= 0.03 and med[256] < med[16]
    detail = f"r={r}: failure rate {rate:.3f} (<= 0.03); median error r=16 {med[16]:.3f} > r=256 {med[256]:.3f}"
    return CheckResult("concentration", ok, detail, seed)


def monte_carlo_reconstruction(g, rank, seeds, root):
    """Per-element mean and standard error of ``g A^T A`` over ``seeds`` projections."""
    total = np.zeros_like(g)
    total_sq = np.zeros_like(g)
    for k in range(seeds):
        spec = ProjectionSpec(derive_seed(root, k), rank, g.shape[1])
        y = projector.up_project(projector.down_project(g, spec), spec)
        total += y
        total_sq += y * y
    mean = total / seeds
    var = (total_sq - seeds * mean * mean) / (seeds - 1)
    return mean, np.sqrt(var / seeds)


def check_unbiased(seed=0, seeds=5000):
    g = _randn(derive_seed(seed, 5), 4, 64)
    mean, se = monte_carlo_reconstruction(g, 16, seeds, derive_seed(seed, 6))
    z = np.abs(mean - g) / se
    return CheckResult("unbiased", bool(np.all(z <= 3.0)), f"max |mean - g| / SE = {z.max():.2f} (<= 3)", seed)


def check_momentum_linearity(seed=0, steps=200, n=6, m=40, rank=5, beta=0.9):
    mom = CompressedMomentum(n, m, rank, kappa=None, beta=beta, seed=seed)
    naive = NaiveMomentum((n, m), beta)
    for t in range(steps):
        g = _randn(derive_seed(seed, 7, t), n, m)
        mom.step(g)
        naive.step(g)
    expected = projector.down_project(naive.m_state, mom.spec)
    err = float(np.max(np.abs(mom.m_state - expected)))
    return CheckResult("momentum_linearity", err <= 1e-10, f"max |M - EMA A^T| = {err:.2e} over {steps} steps", seed)


def explicit_momentum_recurrence(grads, n, m, rank, kappa, beta, seed):
    """Direct evaluation of the compressed-momentum recurrence with explicit matrices."""
    a_mats = [projector.materialize(ProjectionSpec.derived(seed, 0, e, rank, m)) for e in range(len(grads) // kappa + 2)]
    state = np.zeros((n, rank))
    epoch = 0
    for t, g in enumerate(grads):
        if t > 0 and t % kappa == 0:
            state = state @ a_mats[epoch] @ a_mats[epoch + 1].T
            epoch += 1
        state = beta * state + (1 - beta) * g @ a_mats[epoch].T
    return state


def check_momentum_transfer(seed=0, transfer=True, n=5, m=30, rank=4, kappa=3, steps=5, beta=0.8):
    grads = [_randn(derive_seed(seed, 8, t), n, m) for t in range(steps)]
    mom = CompressedMomentum(n, m, rank, kappa=kappa, beta=beta, seed=seed, transfer=transfer)
    for g in grads:
        mom.step(g)
    expected = explicit_momentum_recurrence(grads, n, m, rank, kappa, beta, seed)
    err = float(np.max(np.abs(mom.m_state - expected)))
    return CheckResult("momentum_transfer", err <= 1e-10, f"max deviation from explicit recurrence {err:.2e}", seed)


def check_accum_identity(seed=0, tau=16, n=6, m=10, cycles=2):
    groups = [ParamGroup("w", (n, m), Policy.COMPRESSED), ParamGroup("b", (n,), Policy.NAIVE)]
    with projector.identity_projection():
        flora = make_optimizer(groups, OptimizerConfig(Mode.ACCUM_FLORA, eta=0.1, rank=m, tau=tau, run_seed=seed))
        naive = make_optimizer(groups, OptimizerConfig(Mode.ACCUM_NAIVE, eta=0.1, rank=m, tau=tau, run_seed=seed))
        worst = 0.0
        for t in range(tau * cycles):
            grads = {"w": _randn(derive_seed(seed, 9, t), n, m), "b": _randn(derive_seed(seed, 10, t), n)}
            d_f = flora.apply_gradients(grads)
            d_n = naive.apply_gradients(grads)
            worst = max(worst, *(float(np.max(np.abs(d_f[k] - d_n[k]))) for k in grads))
    return CheckResult("accum_identity", worst <= 1e-10, f"max delta difference {worst:.2e} (tau={tau})", seed)


def low_rank_escape(seed=0, steps=200, rank=8, n=32, m=48, eta=0.01):
    """Numerical ranks of the total weight change under RRP and RP."""
    ranks = {}
    for v in (loradyn.Variant.RRP, loradyn.Variant.RP):
        rule = loradyn.UpdateRule(v, rank, eta)
        w0 = np.zeros((n, m))
        aux = loradyn.init_variant(rule, (n, m), seed)
        w = w0
        for t in range(steps):
            w, aux = loradyn.variant_update(rule, w, _randn(derive_seed(seed, 11, t), n, m), aux)
        ranks[v] = numerical_rank(w - w0)
    return ranks[loradyn.Variant.RRP], ranks[loradyn.Variant.RP]


def check_high_rank(seed=0, steps=200, rank=8):
    rrp, rp = low_rank_escape(seed, steps, rank)
    return CheckResult("high_rank", rrp > rank and rp <= rank, f"rank dW: RRP {rrp} > {rank}, RP {rp} <= {rank}", seed)


def finite_difference_grads(model, x, y, eps=1e-5):
    """Central-difference gradient of the batch loss for every parameter."""
    out = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = forward_backward(model, x, y)
            flat[i] = orig - eps
            down, _ = forward_backward(model, x, y)
            flat[i] = orig
            g.reshape(-1)[i] = (up - down) / (2 * eps)
        out[name] = g
    return out


def gradcheck_error(seed=0, dims=(6, 5, 4), batch=7):
    model = MlpModel(dims, seed=seed)
    for i, name in enumerate(model.params):
        if name.startswith("b"):
            model.params[name] = 0.1 * _randn(derive_seed(seed, 12, i), *model.params[name].shape)
    x = _randn(derive_seed(seed, 13), batch, dims[0])
    y = np.arange(batch) % dims[-1]
    _, grads = forward_backward(model, x, y)
    fd = finite_difference_grads(model, x, y)
    worst = 0.0
    for name in grads:
        scale = max(float(np.max(np.abs(fd[name]))), 1e-8)
        worst = max(worst, float(np.max(np.abs(grads[name] - fd[name]))) / scale)
    return worst


def check_gradcheck(seed=0):
    err = gradcheck_error(seed)
    return CheckResult("gradcheck", err <= 1e-4, f"max relative deviation from finite differences {err:.2e}", seed)


def check_memory(seed=0, n=768, m=768, rank=8):
    groups = [ParamGroup("w", (n, m), Policy.COMPRESSED)]
    flora = make_optimizer(groups, OptimizerConfig(Mode.SGD_FLORA_MOMENTUM, rank=rank, run_seed=seed))
    naive = make_optimizer(groups, OptimizerConfig(Mode.SGD_NAIVE_MOMENTUM, rank=rank, run_seed=seed))
    lora = make_optimizer(groups, OptimizerConfig(Mode.LORA_ADAPTER, rank=rank, run_seed=seed, lora_state="momentum"))
    rf, rn, rl = flora.memory_report(), naive.memory_report(), lora.memory_report()
    ok = (
        rf.state == n * rank == flora.allocated_state_scalars()
        and rn.state == naive.allocated_state_scalars() == n * m
        and rn.state // rf.state == m // rank
        and rl.overhead == lora.allocated_state_scalars() + lora.allocated_adapter_scalars()
        and rl.overhead > rf.overhead
    )
    detail = f"FLORA state {rf.state}, naive {rn.state} ({rn.state / rf.state:.0f}x), LoRA adapters+state {rl.overhead}"
    return CheckResult("memory", ok, detail, seed)


CHECKS = {
    "theorem1": check_lora_recursion,
    "fa_bound": check_fa_bound,
    "concentration": check_concentration,
    "unbiased": check_unbiased,
    "momentum_linearity": check_momentum_linearity,
    "momentum_transfer": check_momentum_transfer,
    "accum_identity": check_accum_identity,
    "high_rank": check_high_rank,
    "gradcheck": check_gradcheck,
    "memory": check_memory,
}


def run_suite(only=None, seed=0, steps=50, fault=None):
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    results = []
    for name in names:
        if name == "theorem1":
            res = check_lora_recursion(seed, steps=steps)
        elif name == "momentum_transfer":
            res = check_momentum_transfer(seed, transfer=fault != "momentum-transfer")
        else:
            res = CHECKS[name](seed)
        results.append(res)
    return results
