"""Loss, Adam optimizer, training loop, and gradient verification harness.

Training is bit-reproducible for a fixed seed, config and data in
single-threaded mode: batch order comes from a seeded generator and the
optimizer update is deterministic.  With ``threads > 1`` the samples of a
batch run on independent tapes in a pool and their gradients are summed in
sample order, which stays deterministic but may differ from the vectorized
path in the last bits.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, NonFiniteError, ShapeMismatchError
from .model import AdrModel, forward, named_parameters, watch_model
from .tape import Tape, backward, finite_difference_grad, mul, scale, sub, total, value_of


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scheduler: str = "none"          # none | exponential
    gamma: float = 0.999
    seed: int = 0
    threads: int = 1
    stop_below: float | None = None  # convergence tolerance on the train loss

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate > 0, batch_size >= 1, epochs >= 0 required")
        if self.scheduler not in ("none", "exponential"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")

    def lr_at(self, epoch: int) -> float:
        if self.scheduler == "exponential":
            return self.learning_rate * self.gamma ** epoch
        return self.learning_rate


class AdamState:
    """First/second moment buffers per parameter group plus the step counter."""

    def __init__(self, params):
        self.m = {name: np.zeros_like(np.asarray(arr)) for name, arr in params}
        self.v = {name: np.zeros_like(np.asarray(arr)) for name, arr in params}
        self.step = 0


def mse_loss(pred, target):
    """Mean of squared differences over all entries; tape-aware."""
    pv, tv = value_of(pred), value_of(target)
    if pv.shape != tv.shape:
        raise ShapeMismatchError("mse_loss", pv.shape, tv.shape)
    diff = sub(pred, target)
    return scale(total(mul(diff, diff)), 1.0 / pv.size)


def adam_step(params, grads, state: AdamState, lr: float, cfg: TrainConfig):
    """Bias-corrected Adam update, in place on the parameter arrays."""
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, arr in params:
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(np.asarray(arr))
        if not np.all(np.isfinite(g)):
            raise DivergenceError(t, f"non-finite gradient in parameter group {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        arr -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def _loss_and_grads(model: AdrModel, histories, targets):
    tape = Tape()
    watched, pvars = watch_model(tape, model)
    loss = mse_loss(forward(watched, histories), targets)
    grads_by_id = backward(tape, loss)
    grads = {name: grads_by_id.get(var.id) for name, var in pvars.items()}
    return float(loss.value), grads


def _loss_and_grads_threaded(model, histories, targets, threads: int):
    # one tape per sample; gradients summed in sample order for determinism
    n = histories.shape[0]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(
            lambda i: _loss_and_grads(model, histories[i:i + 1], targets[i:i + 1]),
            range(n)))
    loss = sum(r[0] for r in results) / n
    grads: dict[str, np.ndarray] = {}
    for _, g in results:
        for name, arr in g.items():
            if arr is None:
                continue
            grads[name] = grads.get(name, 0.0) + arr
    for name in grads:
        grads[name] = grads[name] / n
    return loss, grads


def batch_gradients(model, histories, targets, threads: int = 1):
    if threads > 1:
        return _loss_and_grads_threaded(model, histories, targets, threads)
    return _loss_and_grads(model, histories, targets)


@dataclass
class TrainResult:
    model: AdrModel
    log: list = field(default_factory=list)  # rows: (epoch, train_loss, val_loss, lr)

    @property
    def final_train_loss(self) -> float:
        return self.log[-1][1] if self.log else float("nan")


def evaluate_loss(model: AdrModel, histories, targets) -> float:
    return float(mse_loss(forward(model, histories), targets))


def train(model: AdrModel, train_data, cfg: TrainConfig, val_data=None,
          epoch_callback=None) -> TrainResult:
    """Run the optimization loop.

    ``train_data`` is ``(histories, targets)`` with shapes (N, j+1, m, H, W)
    and (N, m, H, W).  Raises :class:`DivergenceError` on a non-finite loss,
    carrying the epoch index.  A zero-epoch run returns the model unchanged.
    """
    histories, targets = train_data
    n = histories.shape[0]
    if n == 0:
        raise ValueError("training dataset is empty")
    params = named_parameters(model)
    state = AdamState(params)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(model=model)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = batch_gradients(model, histories[idx], targets[idx],
                                              cfg.threads)
            except NonFiniteError:
                raise DivergenceError(epoch, float("nan")) from None
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            adam_step(params, grads, state, lr, cfg)
            losses.append((loss, len(idx)))
        train_loss = sum(l * k for l, k in losses) / n
        val_loss = (evaluate_loss(model, val_data[0], val_data[1])
                    if val_data is not None else float("nan"))
        result.log.append((epoch, train_loss, val_loss, lr))
        if epoch_callback is not None:
            epoch_callback(epoch, train_loss, val_loss, lr)
        if cfg.stop_below is not None and train_loss < cfg.stop_below:
            break
    return result


def randomize_heads(model: AdrModel, scale: float = 0.3, seed: int = 0) -> AdrModel:
    """Fill the zero-initialized heads with small random values.

    Finite-difference checks need a generic parameter point: with the
    displacement head at exactly zero every push samples on the integer
    lattice, where the bilinear interpolant has kinks and one-sided
    derivatives disagree with central differences; and with the projection
    head at zero, no gradient reaches the upstream parameters at all.
    """
    rng = np.random.default_rng(seed)
    for name, arr in named_parameters(model):
        if "flow.conv_out" in name or name in ("m_out.w2", "m_out.b2"):
            arr[...] = scale * rng.standard_normal(np.asarray(arr).shape)
    return model


def gradcheck_model(model: AdrModel, histories, targets, step: float = 1e-6,
                    rel_floor: float = 1e-6) -> dict[str, float]:
    """Max relative error between tape and central-difference gradients,
    per parameter group.

    The finite-difference side perturbs the live parameter arrays entry by
    entry and re-runs the untracked forward pass, so it shares nothing with
    the tape's gradient rules.
    """
    _, grads = _loss_and_grads(model, histories, targets)

    def loss_now(_ignored):
        return evaluate_loss(model, histories, targets)

    report = {}
    for name, arr in named_parameters(model):
        arr = np.asarray(arr)
        if arr.dtype != np.float64:
            raise ValueError(f"gradcheck requires float64 parameters ({name} is {arr.dtype})")
        fd = finite_difference_grad(loss_now, arr, step)
        an = grads.get(name)
        an = np.zeros_like(arr) if an is None else an
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(an)), rel_floor)
        report[name] = float(np.max(np.abs(fd - an) / denom))
    return report
