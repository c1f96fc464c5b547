"""Loss-node builders: hinge, log, cross-entropy, ranking, multi-task sums, L2."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Graph, GraphError, NodeId

LOG_FLOOR = 1e-300  # keeps -log(p) finite on pathological zero probabilities


@dataclass(frozen=True)
class LossSpec:
    """kind in {hinge-binary, hinge-multiclass, log, cross-entropy}; margin
    applies to the hinge kinds; gold is an index (or +-1 for hinge-binary)."""

    kind: str
    margin: float = 1.0


def _runner_up(scores: np.ndarray, gold: int) -> int:
    """Highest-scoring index != gold; ties by lowest index."""
    order = np.argsort(-scores, kind="stable")
    for idx in order:
        if idx != gold:
            return int(idx)
    raise GraphError("runner-up needs at least two classes")


def loss_node(g: Graph, spec: LossSpec, yhat: NodeId, gold) -> NodeId:
    """Build a scalar loss over the output node ``yhat``.

    The multiclass hinge and log losses need the runner-up class, so they
    evaluate the graph built so far (define-by-run makes this cheap).
    """
    shape = g.nodes[yhat].shape
    if spec.kind == "hinge-binary":
        if shape != (1, 1):
            raise GraphError(f"hinge-binary needs a 1x1 score, got {shape}")
        y = float(gold)
        if y not in (-1.0, 1.0):
            raise GraphError(f"hinge-binary gold must be +-1, got {gold}")
        # max(0, m - y*yhat)
        agreement = g.scalar_mul(yhat, y)
        return g.relu(g.scalar_add(g.negate(agreement), spec.margin))

    if shape[0] != 1:
        raise GraphError(f"loss needs a row-vector output, got {shape}")
    k = shape[1]

    if spec.kind in ("hinge-multiclass", "log"):
        t = int(gold)
        if not 0 <= t < k:
            raise GraphError(f"gold index {t} out of range for {k} classes")
        scores = g.value(yhat)[0]
        r = _runner_up(scores, t)
        diff = g.minus(g.pick(yhat, t), g.pick(yhat, r))  # yhat_t - yhat_k
        if spec.kind == "hinge-multiclass":
            return g.relu(g.scalar_add(g.negate(diff), spec.margin))
        # log(1 + exp(-(yhat_t - yhat_k)))
        return g.log(g.scalar_add(g.exp(g.negate(diff)), 1.0))

    if spec.kind in ("ranking-margin", "ranking-log"):
        raise GraphError("ranking losses pair two scored inputs; use ranking_loss")

    if spec.kind == "cross-entropy":
        probs = g.value(yhat)[0]
        if np.any(probs <= 0.0) or np.any(probs > 1.0 + 1e-12) or abs(probs.sum() - 1.0) > 1e-6:
            raise GraphError("cross-entropy input is not a probability distribution")
        if np.isscalar(gold) or isinstance(gold, (int, np.integer)):
            t = int(gold)
            if not 0 <= t < k:
                raise GraphError(f"gold index {t} out of range for {k} classes")
            return g.negate(g.log(g.pick(yhat, t), floor=LOG_FLOOR))
        dist = np.asarray(gold, dtype=np.float64).reshape(1, -1)
        if dist.shape[1] != k:
            raise GraphError(f"gold distribution length {dist.shape[1]} != {k}")
        weighted = g.cmul(g.constant(dist), g.log(yhat, floor=LOG_FLOOR))
        return g.negate(g.sum_elems(weighted))

    raise GraphError(f"unknown loss kind {spec.kind!r}")


def ranking_loss(g: Graph, kind: str, s_correct: NodeId, s_corrupt: NodeId,
                 margin: float = 1.0) -> NodeId:
    """Score a correct item above a corrupted one.

    margin: max(0, m - (s - s')); log: log(1 + exp(-(s - s'))).
    """
    for nid in (s_correct, s_corrupt):
        if g.nodes[nid].shape != (1, 1):
            raise GraphError(f"ranking loss needs scalar scores, got {g.nodes[nid].shape}")
    diff = g.minus(s_correct, s_corrupt)
    if kind == "margin":
        return g.relu(g.scalar_add(g.negate(diff), margin))
    if kind == "log":
        return g.log(g.scalar_add(g.exp(g.negate(diff)), 1.0))
    raise GraphError(f"unknown ranking loss kind {kind!r}")


def combine_losses(g: Graph, losses: list[NodeId], weights: list[float] | None = None) -> NodeId:
    """Sum task losses into one node (optionally weighted)."""
    if not losses:
        raise GraphError("combine_losses of an empty list")
    for nid in losses:
        if g.nodes[nid].shape != (1, 1):
            raise GraphError("combine_losses needs scalar losses")
    if weights is not None:
        if len(weights) != len(losses):
            raise GraphError("one weight per loss required")
        losses = [g.scalar_mul(l, w) for l, w in zip(losses, weights)]
    if len(losses) == 1:
        return losses[0]
    return g.sum_nodes(losses)


def l2_penalty(g: Graph, store, lam: float, include_lookups: bool = False) -> NodeId:
    """(lam/2) * sum of squared entries over trainable parameters.

    Lookup tables are exempt unless ``include_lookups`` is set.
    """
    if lam < 0.0:
        raise GraphError(f"l2 lambda must be >= 0, got {lam}")
    terms = []
    if lam > 0.0:
        for name in store.params:
            if not store.is_trainable(name):
                continue
            p = g.param(store, name)
            terms.append(g.sum_elems(g.cmul(p, p)))
        if include_lookups:
            for tname, table in store.lookups.items():
                if not table.trainable:
                    continue
                # embed the whole table once; gradients flow into every row
                rows = [g.lookup(store, tname, i) for i in range(table.rows)]
                mat = g.concat(rows, axis=0)
                terms.append(g.sum_elems(g.cmul(mat, mat)))
    if not terms:
        return g.constant([[0.0]])
    return g.scalar_mul(g.sum_nodes(terms) if len(terms) > 1 else terms[0], lam / 2.0)
