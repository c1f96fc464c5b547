"""Stochastic gradient training: per-example graphs, minibatches, schedules.

The update rule is descent, theta <- theta - eta * g_hat, with g_hat the
gradient of the minimized loss.  Minibatches of size m connect the m loss
nodes under an averaging node, so each example contributes 1/m of the
gradient; m=1 degenerates to plain online SGD.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from .autograd import Graph, GraphError
from .model import ParamStore
from .objectives import l2_penalty


@dataclass
class OptimizerConfig:
    lr: float = 0.1
    momentum: float = 0.0
    schedule: str = "constant"        # constant | bottou
    lr_lambda: float = 0.0            # bottou schedule hyperparameter
    clip_threshold: float | None = None
    l2: float = 0.0
    minibatch: int = 1
    epochs: int = 1
    shuffle: bool = True
    seed: int = 0
    patience: int | None = None       # early stop after this many non-improving dev evals

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0,1), got {self.momentum}")
        if self.clip_threshold is not None and self.clip_threshold <= 0.0:
            raise ValueError("clip threshold must be > 0")
        if self.minibatch < 1:
            raise ValueError("minibatch size must be >= 1")


class Grads:
    """Dense per-parameter gradients plus sparse per-row lookup gradients."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.rows: dict[str, dict[int, np.ndarray]] = {}

    def global_norm(self) -> float:
        total = 0.0
        for mat in self.params.values():
            total += float((mat * mat).sum())
        for rows in self.rows.values():
            for vec in rows.values():
                total += float((vec * vec).sum())
        return float(np.sqrt(total))

    def scale(self, factor: float) -> None:
        for mat in self.params.values():
            mat *= factor
        for rows in self.rows.values():
            for vec in rows.values():
                vec *= factor


def collect_grads(g: Graph, store: ParamStore) -> Grads:
    """Pull accumulated gradients off the graph's parameter and lookup nodes."""
    grads = Grads()
    for node in g.nodes:
        if node.grad is None:
            continue
        if node.kind == "parameter-ref":
            ref_store, name = node.extra
            if ref_store is not store or not store.is_trainable(name):
                continue
            if name in grads.params:
                grads.params[name] += node.grad
            else:
                grads.params[name] = node.grad.copy()
        elif node.kind == "lookup-ref":
            ref_store, tname, row = node.extra
            if ref_store is not store or not store.lookups[tname].trainable:
                continue
            table_rows = grads.rows.setdefault(tname, {})
            if row in table_rows:
                table_rows[row] += node.grad[0]
            else:
                table_rows[row] = node.grad[0].copy()
    return grads


def clip(grads: Grads, threshold: float) -> Grads:
    """Jointly rescale all gradients when their global L2 norm exceeds threshold."""
    if threshold <= 0.0:
        raise ValueError("clip threshold must be > 0")
    norm = grads.global_norm()
    if norm > threshold:
        grads.scale(threshold / norm)
    return grads


def lr_at(config: OptimizerConfig, t: int) -> float:
    """Learning rate for the t-th training example (t counts from 0)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if config.schedule == "constant":
        return config.lr
    if config.schedule == "bottou":
        return config.lr / (1.0 + config.lr * config.lr_lambda * t)
    raise ValueError(f"unknown schedule {config.schedule!r}")


def sgd_step(store: ParamStore, grads: Grads, lr: float) -> None:
    """theta <- theta - lr * grad; lookup tables update only touched rows."""
    for name, gmat in grads.params.items():
        if not np.all(np.isfinite(gmat)):
            raise GraphError(f"non-finite gradient for parameter {name!r}")
        store.params[name] -= lr * gmat
    for tname, rows in grads.rows.items():
        table = store.lookups[tname]
        for row, gvec in rows.items():
            if not np.all(np.isfinite(gvec)):
                raise GraphError(f"non-finite gradient for lookup {tname!r} row {row}")
            table.vectors[row] -= lr * gvec


class _Momentum:
    """Classical momentum: v <- mu*v - lr*g; theta <- theta + v."""

    def __init__(self, mu: float):
        self.mu = mu
        self.vel_p: dict[str, np.ndarray] = {}
        self.vel_l: dict[str, np.ndarray] = {}

    def step(self, store: ParamStore, grads: Grads, lr: float) -> None:
        for name, gmat in grads.params.items():
            if not np.all(np.isfinite(gmat)):
                raise GraphError(f"non-finite gradient for parameter {name!r}")
            v = self.vel_p.get(name)
            if v is None:
                v = self.vel_p[name] = np.zeros_like(gmat)
            v *= self.mu
            v -= lr * gmat
            store.params[name] += v
        for tname, rows in grads.rows.items():
            table = store.lookups[tname]
            v = self.vel_l.get(tname)
            if v is None:
                v = self.vel_l[tname] = np.zeros_like(table.vectors)
            v *= self.mu
            for row, gvec in rows.items():
                if not np.all(np.isfinite(gvec)):
                    raise GraphError(f"non-finite gradient for lookup {tname!r} row {row}")
                v[row] -= lr * gvec
            table.vectors += v


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_lrs: list[float] = field(default_factory=list)
    dev_metrics: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False


def train(store: ParamStore, dataset, builder, config: OptimizerConfig,
          dev_eval=None, log=None) -> TrainReport:
    """Run the training recipe: per-minibatch graph build, forward, backward, update.

    ``builder(graph, example)`` returns a scalar loss node.  ``dev_eval()``,
    if given, is called after each epoch and should return a loss-like float
    (lower is better) used for early stopping when ``config.patience`` is set.
    One line per epoch is written to ``log`` (default stdout).
    """
    if log is None:
        log = sys.stdout
    n = len(dataset)
    report = TrainReport()
    order_rng = np.random.default_rng(config.seed)
    momentum = _Momentum(config.momentum) if config.momentum > 0.0 else None
    t = 0
    best_dev = float("inf")
    stale = 0

    for epoch in range(config.epochs):
        order = order_rng.permutation(n) if config.shuffle else np.arange(n)
        total_loss = 0.0
        last_lr = lr_at(config, t)
        for start in range(0, n, config.minibatch):
            batch = order[start:start + config.minibatch]
            g = Graph(seed=config.seed * 1_000_003 + t)
            losses = []
            for i in batch:
                try:
                    losses.append(builder(g, dataset[int(i)]))
                except GraphError as e:
                    raise GraphError(f"example {int(i)}: {e}") from e
            loss = losses[0] if len(losses) == 1 else g.avg_nodes(losses)
            if config.l2 > 0.0:
                loss = g.add(loss, l2_penalty(g, store, config.l2))
            g.forward()
            batch_loss = float(g.nodes[loss].value[0, 0])
            g.backward(loss)
            grads = collect_grads(g, store)
            if config.clip_threshold is not None:
                clip(grads, config.clip_threshold)
            last_lr = lr_at(config, t)
            if momentum is None:
                sgd_step(store, grads, last_lr)
            else:
                momentum.step(store, grads, last_lr)
            t += len(batch)
            total_loss += batch_loss * len(batch)
        mean_loss = total_loss / n
        report.epoch_losses.append(mean_loss)
        report.epoch_lrs.append(last_lr)
        report.epochs_run = epoch + 1
        print(f"epoch {epoch} loss {mean_loss:.6f} lr {last_lr:.6g}", file=log)
        if dev_eval is not None:
            dev = float(dev_eval())
            report.dev_metrics.append(dev)
            if config.patience is not None:
                if dev < best_dev - 1e-12:
                    best_dev = dev
                    stale = 0
                else:
                    stale += 1
                    if stale > config.patience:
                        report.stopped_early = True
                        break
    return report
