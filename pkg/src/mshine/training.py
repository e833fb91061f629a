"""Joint objective, exact gradients and the SGD training loop.

The per-triple loss has two parts. The prediction part scores the true next
node against K same-type negatives through the logistic function,

    loss_pre = -[log sig(s_pos) + (1/K) * sum_i log sig(-s_neg_i)]

(the 1/K factor is kept by default; ``scale_negatives=False`` drops it). The
state-consistency part is the plain L2 norm of the difference between the
decoded stored state of the middle node and the freshly computed state, and
its gradient flows into both sides. A batch contributes the mean over its
triples. All gradients are exact and sparse: only rows actually touched by a
batch appear in the gradient container.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .hin import TypedGraph
from .metapaths import TripleIndex, triple_types_of
from .model import ModelParams, forward_triple, init_params
from .sampling import (NegativeSamplingError, TrainingTriple, TripleSampler,
                       batch_stream, epoch_batch_count, negative_sample)

logger = logging.getLogger(__name__)

_ROW_GROUPS = ("X", "H", "W_hy", "R", "V_x", "V_h", "V_y")
_MAT_GROUPS = ("W_xh", "W_hh", "W_rh")
_NORM_EPS = 1e-12   # below this the state-difference norm uses subgradient 0


class TrainingDiverged(RuntimeError):
    """Non-finite loss or parameter; carries the last finished-epoch params."""

    def __init__(self, msg, epoch=None, last_good=None):
        super().__init__(msg)
        self.epoch = epoch
        self.last_good = last_good


@dataclass
class TrainConfig:
    dim: int = 128
    negative_k: int = 5
    batch_size: int = 30
    epochs: int = 1000
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    seed: int = 0
    neg_distribution: str = "uniform"
    samples_per_type: int | None = None
    checkpoint_every: int = 0
    scale_negatives: bool = True
    workers: int = 1

    def validate(self) -> None:
        if min(self.dim, self.negative_k, self.batch_size, self.workers) < 1:
            raise ValueError("dim, negative_k, batch_size and workers must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not (0 < self.min_learning_rate <= self.learning_rate):
            raise ValueError("need 0 < min_learning_rate <= learning_rate")
        if self.samples_per_type is not None and self.samples_per_type < 1:
            raise ValueError("samples_per_type must be >= 1")
        if self.neg_distribution not in ("uniform", "degree75"):
            raise ValueError(f"unknown neg_distribution {self.neg_distribution!r}")


@dataclass
class LossReport:
    epoch: int
    loss_pre: float
    loss_state: float
    per_path: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.loss_pre + self.loss_state


@dataclass
class BatchGradients:
    """Sparse row gradients plus the three dense transform gradients."""

    rows: dict[str, dict[int, np.ndarray]] = field(
        default_factory=lambda: {g: {} for g in _ROW_GROUPS})
    mats: dict[str, np.ndarray] = field(default_factory=dict)

    def row(self, group: str, i: int, d: int) -> np.ndarray:
        table = self.rows[group]
        if i not in table:
            table[i] = np.zeros(d)
        return table[i]

    def mat(self, group: str, d: int) -> np.ndarray:
        if group not in self.mats:
            self.mats[group] = np.zeros((d, d))
        return self.mats[group]


def log_sigmoid(z):
    """log of the logistic function, stable for large |z|."""
    return -np.logaddexp(0.0, -np.asarray(z, dtype=np.float64))


def loss_pre(p: ModelParams, triple, negatives, scale_negatives: bool = True) -> float:
    """Negated negative-sampling prediction objective for one triple."""
    tr = forward_triple(p, triple, negatives)
    k = len(tr.scores) - 1
    c = 1.0 / k if (scale_negatives and k > 0) else 1.0
    value = -(float(log_sigmoid(tr.scores[0]))
              + c * float(np.sum(log_sigmoid(-tr.scores[1:]))))
    if not math.isfinite(value):
        raise TrainingDiverged("non-finite prediction loss")
    return value


def loss_state(p: ModelParams, triple) -> float:
    """L2 distance between the stored decoded state and the computed state."""
    tr = forward_triple(p, triple, ())
    return float(np.linalg.norm(tr.h_mid - tr.state))


def _backward_triple(p: ModelParams, tr, grads: BatchGradients, w: float,
                     scale_negatives: bool) -> tuple[float, float]:
    """Accumulate the gradients of w * (loss_pre + loss_state) for one trace.

    Returns the triple's (loss_pre, loss_state) values, unweighted.
    """
    d = p.dim
    trip = tr.triple
    m, tid = trip.path_id, trip.triple_id
    k = len(tr.targets) - 1
    c = 1.0 / k if (scale_negatives and k > 0) else 1.0

    l_pre = -(float(log_sigmoid(tr.scores[0]))
              + c * float(np.sum(log_sigmoid(-tr.scores[1:]))))

    gscore = np.empty(k + 1)
    gscore[0] = expit(tr.scores[0]) - 1.0
    gscore[1:] = c * expit(tr.scores[1:])
    gscore *= w

    vy = p.V_y[m]
    why = grads.rows["W_hy"]
    for j, v in enumerate(tr.targets):
        v = int(v)
        contrib = gscore[j] * tr.state * vy
        if v in why:
            why[v] += contrib
        else:
            why[v] = contrib
    grads.row("V_y", m, d)[:] += tr.state * (gscore @ p.W_hy[tr.targets])

    gs = gscore @ tr.target_rows

    diff = tr.h_mid - tr.state
    rho = float(np.linalg.norm(diff))
    l_state = rho
    vh = p.V_h[m]
    if rho > _NORM_EPS:
        u = diff / rho
        grads.row("H", trip.mid, d)[:] += w * u * vh
        grads.row("V_h", m, d)[:] += w * u * p.H[trip.mid]
        gs = gs - w * u

    ga = gs * (1.0 - tr.state * tr.state)
    grads.mat("W_xh", d)[:] += np.outer(ga, tr.x_mid)
    grads.mat("W_hh", d)[:] += np.outer(ga, tr.h_prev)
    grads.mat("W_rh", d)[:] += np.outer(ga, tr.r)

    gx = p.W_xh.T @ ga
    grads.row("X", trip.mid, d)[:] += gx * p.V_x[m]
    grads.row("V_x", m, d)[:] += gx * p.X[trip.mid]
    gh = p.W_hh.T @ ga
    grads.row("H", trip.prev, d)[:] += gh * vh
    grads.row("V_h", m, d)[:] += gh * p.H[trip.prev]
    grads.row("R", tid, d)[:] += p.W_rh.T @ ga
    return l_pre, l_state


def batch_objective(p: ModelParams, batch, negatives,
                    scale_negatives: bool = True):
    """Mean loss over a batch plus exact gradients for every touched parameter.

    ``negatives`` holds one negative-id sequence per batch triple. Returns
    (loss, BatchGradients, (mean_loss_pre, mean_loss_state)).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if len(negatives) != len(batch):
        raise ValueError("need one negative list per triple")
    grads = BatchGradients()
    w = 1.0 / len(batch)
    sum_pre = 0.0
    sum_state = 0.0
    for trip, negs in zip(batch, negatives):
        tr = forward_triple(p, trip, negs)
        l_pre, l_state = _backward_triple(p, tr, grads, w, scale_negatives)
        sum_pre += l_pre
        sum_state += l_state
    mean_pre = w * sum_pre
    mean_state = w * sum_state
    loss = mean_pre + mean_state
    if not math.isfinite(loss):
        raise TrainingDiverged("non-finite batch loss")
    return loss, grads, (mean_pre, mean_state)


def sgd_step(p: ModelParams, grads: BatchGradients, lr: float) -> None:
    """In-place theta <- theta - lr * grad; raises on a non-finite result."""
    for group, table in grads.rows.items():
        arr = getattr(p, group)
        for i, g in table.items():
            arr[i] -= lr * g
            if not np.isfinite(arr[i]).all():
                raise TrainingDiverged(f"non-finite row {group}[{i}] after update")
    for group, g in grads.mats.items():
        arr = getattr(p, group)
        arr -= lr * g
        if not np.isfinite(arr).all():
            raise TrainingDiverged(f"non-finite transform {group} after update")


def _lr_at(config: TrainConfig, batch_idx: int, total_batches: int) -> float:
    frac = batch_idx / max(total_batches, 1)
    return max(config.min_learning_rate, config.learning_rate * (1.0 - frac))


def train(graph: TypedGraph, paths, config: TrainConfig, *,
          checkpoint_cb=None, report_cb=None):
    """Run the full training loop.

    ``paths`` is a meta-path list or a prebuilt TripleIndex. ``checkpoint_cb``
    (params, epoch) fires every ``checkpoint_every`` finished epochs;
    ``report_cb`` receives each epoch's LossReport. Returns
    (ModelParams, list[LossReport]). With ``workers == 1`` the result is a
    pure function of (graph, config); more workers opt into lock-free
    row updates and give up determinism.
    """
    config.validate()
    index = paths if isinstance(paths, TripleIndex) else triple_types_of(list(paths))
    if index.n_paths == 0:
        raise ValueError("empty meta-path set")
    rng_init = np.random.default_rng(config.seed)
    params = init_params(graph.n_nodes, config.dim, index.n_triples,
                         index.n_paths, rng_init)
    if config.epochs == 0:
        return params, []

    sampler = TripleSampler(graph, index)
    per_epoch = epoch_batch_count(sampler, config.batch_size, config.samples_per_type)
    if per_epoch == 0:
        raise ValueError("no feasible triple types on this graph; nothing to train")
    total_batches = per_epoch * config.epochs

    if config.workers > 1:
        return _train_hogwild(graph, index, sampler, params, config,
                              total_batches, checkpoint_cb, report_cb)

    rng_walk = np.random.default_rng(config.seed + 1)
    rng_neg = np.random.default_rng(config.seed + 2)
    warned: set = set()
    reports: list[LossReport] = []
    last_good = params.copy()
    batch_idx = 0
    for epoch in range(config.epochs):
        acc: dict[int, list[float]] = {}
        try:
            for batch in batch_stream(sampler, rng_walk,
                                      batch_size=config.batch_size,
                                      samples_per_type=config.samples_per_type,
                                      warned=warned):
                kept, negs = _draw_negatives(graph, batch, config, rng_neg, warned)
                lr = _lr_at(config, batch_idx, total_batches)
                batch_idx += 1
                if not kept:
                    continue
                loss, grads, (mp, ms) = batch_objective(
                    params, kept, negs, config.scale_negatives)
                sgd_step(params, grads, lr)
                stat = acc.setdefault(kept[0].path_id, [0.0, 0.0, 0])
                stat[0] += mp
                stat[1] += ms
                stat[2] += 1
        except TrainingDiverged as exc:
            raise TrainingDiverged(str(exc), epoch=epoch, last_good=last_good) from None
        reports.append(_make_report(index, epoch, acc))
        if report_cb is not None:
            report_cb(reports[-1])
        if checkpoint_cb is not None and config.checkpoint_every > 0 \
                and (epoch + 1) % config.checkpoint_every == 0:
            checkpoint_cb(params, epoch)
        last_good = params.copy()
    return params, reports


def _draw_negatives(graph, batch, config, rng_neg, warned):
    kept, negs = [], []
    for trip in batch:
        try:
            negs.append(negative_sample(graph, trip.nxt, config.negative_k,
                                        rng_neg, config.neg_distribution))
            kept.append(trip)
        except NegativeSamplingError:
            key = ("neg", graph.type_of(trip.nxt))
            if key not in warned:
                warned.add(key)
                logger.warning("cannot draw negatives for node type %s; "
                               "skipping its triples",
                               graph.type_name_of(trip.nxt))
    return kept, negs


def _make_report(index, epoch, acc) -> LossReport:
    per_path = {}
    tot_pre = tot_state = 0.0
    n = 0
    for pid, (sp, ss, cnt) in sorted(acc.items()):
        per_path[index.paths[pid].id] = (sp / cnt, ss / cnt)
        tot_pre += sp
        tot_state += ss
        n += cnt
    if n == 0:
        raise ValueError(
            "no batch survived this epoch; negative sampling failed for every "
            "drawn triple (a node type with a single member cannot be trained)")
    return LossReport(epoch, tot_pre / n, tot_state / n, per_path)


def _train_hogwild(graph, index, sampler, params, config, total_batches,
                   checkpoint_cb, report_cb):
    """Lock-free data-parallel epochs: row updates race by design, the dense
    transforms are updated under a mutex. Non-deterministic."""
    jobs: list[int] = []
    for pid in range(index.n_paths):
        for tid in index.path_triples[pid]:
            if not sampler.feasible(tid):
                continue
            spt = config.samples_per_type or sampler.default_samples_per_type(tid)
            jobs.extend([_pack(pid, tid)] * math.ceil(spt / config.batch_size))

    mat_lock = threading.Lock()
    counter_lock = threading.Lock()
    state = {"batch_idx": 0, "error": None}
    reports: list[LossReport] = []
    last_good = params.copy()

    def worker(widx, epoch, acc, acc_lock):
        rng_walk = np.random.default_rng(config.seed + 1 + 1000 * (widx + 1))
        rng_neg = np.random.default_rng(config.seed + 2 + 1000 * (widx + 1))
        warned: set = set()
        while True:
            with counter_lock:
                if state["error"] is not None:
                    return
                pos = state["batch_idx"] - epoch * len(jobs)
                if pos >= len(jobs):
                    return
                my_idx = state["batch_idx"]
                state["batch_idx"] += 1
            pid, tid = _unpack(jobs[pos])
            batch = []
            for _ in range(config.batch_size):
                drawn = sampler.sample(tid, rng_walk)
                if drawn is None:
                    break
                from .sampling import TrainingTriple
                batch.append(TrainingTriple(*drawn, tid, pid))
            kept, negs = _draw_negatives(graph, batch, config, rng_neg, warned)
            if not kept:
                continue
            try:
                loss, grads, (mp, ms) = batch_objective(
                    params, kept, negs, config.scale_negatives)
                lr = _lr_at(config, my_idx, total_batches)
                mats = grads.mats
                grads.mats = {}
                sgd_step(params, grads, lr)
                with mat_lock:
                    grads.mats = mats
                    grads.rows = {g: {} for g in _ROW_GROUPS}
                    sgd_step(params, grads, lr)
            except TrainingDiverged as exc:
                with counter_lock:
                    state["error"] = exc
                return
            with acc_lock:
                stat = acc.setdefault(pid, [0.0, 0.0, 0])
                stat[0] += mp
                stat[1] += ms
                stat[2] += 1

    for epoch in range(config.epochs):
        acc: dict[int, list[float]] = {}
        acc_lock = threading.Lock()
        threads = [threading.Thread(target=worker, args=(w, epoch, acc, acc_lock))
                   for w in range(config.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if state["error"] is not None:
            raise TrainingDiverged(str(state["error"]), epoch=epoch,
                                   last_good=last_good)
        reports.append(_make_report(index, epoch, acc))
        if report_cb is not None:
            report_cb(reports[-1])
        if checkpoint_cb is not None and config.checkpoint_every > 0 \
                and (epoch + 1) % config.checkpoint_every == 0:
            checkpoint_cb(params, epoch)
        last_good = params.copy()
    return params, reports


def _pack(pid: int, tid: int) -> int:
    return pid * 1_000_000 + tid


def _unpack(job: int) -> tuple[int, int]:
    return divmod(job, 1_000_000)
