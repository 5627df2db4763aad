"""A hand-differentiated ReLU MLP and the training loops built on it."""

from dataclasses import dataclass, field

import numpy as np

from . import loradyn
from .data import seeded_permutation
from .errors import DataError, ShapeError
from .loradyn import UpdateRule, Variant
from .matcore import GaussStream, derive_seed
from .optim import ParamGroup, Policy

DEFAULT_DIMS = (784, 768, 768, 10)
PILOT_VARIANTS = (Variant.FULL_SGD, Variant.LORA, Variant.LORA_B, Variant.RP, Variant.RRP)


class MlpModel:
    """Feed-forward classifier ``x -> ReLU(W0 x + b0) -> ... -> W_L h + b_L``.

    Weights are stored as ``(out, in)`` matrices so a layer's weight gradient
    is ``delta^T x``; parameters live in ``self.params`` under ``W{l}`` and
    ``b{l}``.
    """

    def __init__(self, dims=DEFAULT_DIMS, seed=0, zero=False):
        if len(dims) < 2:
            raise ShapeError("an MLP needs at least input and output dims")
        self.dims = tuple(int(d) for d in dims)
        self.params = {}
        for l, (d_in, d_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            if zero:
                w = np.zeros((d_out, d_in))
            else:
                z = GaussStream(derive_seed(seed, l)).next(d_out * d_in)
                w = z.reshape(d_out, d_in) * np.sqrt(2.0 / d_in)
            self.params[f"W{l}"] = w
            self.params[f"b{l}"] = np.zeros(d_out)

    @property
    def n_layers(self):
        return len(self.dims) - 1

    def copy(self):
        other = MlpModel.__new__(MlpModel)
        other.dims = self.dims
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def param_groups(self, compress=True):
        """Weight matrices COMPRESSED (when ``compress``), biases NAIVE."""
        groups = []
        for name, value in self.params.items():
            policy = Policy.COMPRESSED if compress and value.ndim == 2 else Policy.NAIVE
            groups.append(ParamGroup(name, value.shape, policy))
        return groups

    def logits(self, x):
        h = x
        for l in range(self.n_layers):
            z = h @ self.params[f"W{l}"].T + self.params[f"b{l}"]
            h = np.maximum(z, 0.0) if l < self.n_layers - 1 else z
        return h


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_backward(model, x, y):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError("batch must be a non-empty (B, d) array")
    if x.shape[1] != model.dims[0]:
        raise ShapeError(f"batch feature dim {x.shape[1]} != model input dim {model.dims[0]}")
    acts = [x]
    pre = []
    h = x
    for l in range(model.n_layers):
        with np.errstate(over="ignore", invalid="ignore"):
            z = h @ model.params[f"W{l}"].T + model.params[f"b{l}"]
        if not np.isfinite(z).all():
            raise DataError(f"non-finite activations in layer {l}")
        pre.append(z)
        h = np.maximum(z, 0.0) if l < model.n_layers - 1 else z
        acts.append(h)
    logp = _log_softmax(pre[-1])
    batch = x.shape[0]
    loss = -float(np.mean(logp[np.arange(batch), y]))
    delta = np.exp(logp)
    delta[np.arange(batch), y] -= 1.0
    delta /= batch
    grads = {}
    for l in reversed(range(model.n_layers)):
        grads[f"W{l}"] = delta.T @ acts[l]
        grads[f"b{l}"] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ model.params[f"W{l}"]) * (pre[l - 1] > 0.0)
    return loss, grads


def evaluate(model, dataset, batch_size=2000):
    """``(mean loss, accuracy)`` of ``model`` on ``dataset``."""
    total_loss, correct = 0.0, 0
    for start in range(0, len(dataset), batch_size):
        x = dataset.features[start : start + batch_size]
        y = dataset.labels[start : start + batch_size]
        z = model.logits(x)
        logp = _log_softmax(z)
        total_loss -= float(logp[np.arange(len(y)), y].sum())
        correct += int(np.sum(np.argmax(z, axis=1) == y))
    return total_loss / len(dataset), correct / len(dataset)


def batches(dataset, batch_size, seed, epochs):
    """Yield ``(x, y)`` mini-batches; order per epoch depends only on ``seed``."""
    n_full = len(dataset) // batch_size
    for epoch in range(epochs):
        order = seeded_permutation(len(dataset), derive_seed(seed, epoch))
        for k in range(n_full):
            idx = order[k * batch_size : (k + 1) * batch_size]
            yield dataset.features[idx], dataset.labels[idx]


def _probe(train, size=2000):
    return train.subset(np.arange(min(size, len(train))))


@dataclass
class PilotConfig:
    eta: float = 0.01
    rank: int = 8
    seed: int = 1
    epochs: int = 3
    batch_size: int = 32
    dims: tuple = DEFAULT_DIMS
    patch_layer: int = 1
    eval_every: int = 200
    variants: tuple = PILOT_VARIANTS
    train_other_layers: bool = False
    probe_size: int = 2000


@dataclass
class PilotRecord:
    variant: str
    step: int
    loss: float
    accuracy: float


def run_pilot(config, train, test):
    """Train one copy of the model per update rule on the patched layer.

    Every variant starts from the same initialization and sees the same
    batches. Only ``W{patch_layer}`` changes unless ``train_other_layers``,
    in which case the other parameters get plain SGD in every variant.
    Returns a list of :class:`PilotRecord`, ``eval_every`` steps apart plus
    the final step.
    """
    variants = tuple(Variant(v) for v in config.variants)
    missing = set(PILOT_VARIANTS) - set(variants)
    if missing:
        raise ValueError(f"pilot needs all five variants; missing {sorted(v.value for v in missing)}")
    base = MlpModel(config.dims, seed=derive_seed(config.seed, 101))
    key = f"W{config.patch_layer}"
    if key not in base.params:
        raise ShapeError(f"model has no layer {config.patch_layer}")
    probe = _probe(train, config.probe_size)
    records = []
    for v in variants:
        rule = UpdateRule(v, config.rank, config.eta)
        model = base.copy()
        w = model.params[key].copy()
        aux = loradyn.init_variant(rule, w.shape, derive_seed(config.seed, 202), config.patch_layer)
        step = 0

        def record():
            loss, _ = evaluate(model, probe)
            _, acc = evaluate(model, test)
            records.append(PilotRecord(v.value, step, loss, acc))

        record()
        for x, y in batches(train, config.batch_size, derive_seed(config.seed, 303), config.epochs):
            _, grads = forward_backward(model, x, y)
            w, aux = loradyn.variant_update(rule, w, grads[key], aux)
            model.params[key] = loradyn.effective_weight(rule, w, aux)
            if config.train_other_layers:
                for name, g in grads.items():
                    if name != key:
                        model.params[name] = model.params[name] - config.eta * g
            step += 1
            if step % config.eval_every == 0:
                record()
        if step % config.eval_every != 0:
            record()
    return records


@dataclass
class TrainRecord:
    step: int
    loss: float
    accuracy: float
    wall_ms: float = 0.0


@dataclass
class TrainResult:
    records: list = field(default_factory=list)
    status: str = "ok"

    @property
    def final_accuracy(self):
        return self.records[-1].accuracy if self.records else float("nan")


def train(model, optimizer, train_set, test_set, epochs, batch_size, seed, eval_every=100, clock=None):
    """Generic loop: gradients -> ``optimizer.apply_gradients`` -> add deltas.

    A run whose activations or gradients stop being finite is cut short and
    marked ``"diverged"``; its last record carries loss ``inf`` and accuracy
    0.
    """
    result = TrainResult()
    probe = _probe(train_set)
    step = 0
    t0 = clock() if clock else 0.0

    def record():
        loss, _ = evaluate(model, probe)
        _, acc = evaluate(model, test_set)
        result.records.append(TrainRecord(step, loss, acc, (clock() - t0) * 1000.0 if clock else 0.0))

    record()
    for x, y in batches(train_set, batch_size, seed, epochs):
        try:
            _, grads = forward_backward(model, x, y)
            deltas = optimizer.apply_gradients(grads)
        except DataError:
            result.status = "diverged"
            result.records.append(TrainRecord(step, float("inf"), 0.0))
            return result
        for name, d in deltas.items():
            model.params[name] = model.params[name] + d
        step += 1
        if not all(np.isfinite(p).all() for p in model.params.values()):
            result.status = "diverged"
            result.records.append(TrainRecord(step, float("inf"), 0.0))
            return result
        if step % eval_every == 0:
            record()
    if step % eval_every != 0:
        record()
    return result
