"""Local training and the three server strategies.

Every payload that crosses the client/server boundary is built as one of the
types in ``fedsim.payloads`` and recorded in the ledger as it moves. Clients
are always visited, and their contributions reduced, in ascending id order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..data import Dataset, LabelPrior, estimate_label_prior
from ..metrics import CommLedger, Direction
from ..models import (
    DenseLayer,
    GeneratorParams,
    ModelParams,
    TaskMode,
    activate,
    ensemble_logits,
    forward_features,
    generate_latent,
    model_proba,
    predict_logits,
    predict_proba,
    task_loss,
)
from ..numerics import PROB_CLAMP, Tensor, backward, clip, kl_divergence, log, mean, sgd_step, stream
from ..payloads import FullModel, LabelHistogram, LogitMatrix, PredictorOnly
from .config import RoundConfig


@dataclass
class ClientState:
    client_id: int
    data: Dataset
    params: ModelParams
    seed: int

    @property
    def num_examples(self) -> int:
        return len(self.data)


def _descend(params, loss_fn: Callable, lr: float):
    """One SGD step on ``loss_fn(params)``; returns (new params, loss value)."""
    leaves = [Tensor(a, requires_grad=True) for a in params.arrays()]
    loss = loss_fn(params.with_arrays(leaves))
    return sgd_step(params, backward(loss, leaves), lr), loss.item()


@dataclass(frozen=True)
class _Layers:
    """Adapter so a bare layer tuple can go through ``_descend``."""

    layers: tuple[DenseLayer, ...]

    def arrays(self):
        return [a for l in self.layers for a in (l.weight, l.bias)]

    def with_arrays(self, arrays):
        return _Layers(tuple(DenseLayer(arrays[2 * i], arrays[2 * i + 1]) for i in range(len(self.layers))))


def local_train(
    state: ClientState,
    init: ModelParams,
    cfg: RoundConfig,
    round_idx: int = 0,
    history: list[float] | None = None,
) -> ModelParams:
    """Mini-batch SGD on the client's private data, starting from ``init``.

    Appends the mean training loss of each epoch to ``history`` if given.
    """
    data = state.data
    n = len(data)
    if n == 0:
        raise ValueError(f"client {state.client_id} has no data")
    rng = stream(state.seed, "local-train", round_idx, state.client_id)
    mode = data.mode
    params = init
    for _ in range(cfg.local_epochs):
        perm = rng.permutation(n)
        losses, sizes = [], []
        for start in range(0, n, cfg.local_batch_size):
            idx = perm[start : start + cfg.local_batch_size]
            x, y = data.features[idx], data.labels[idx]
            params, loss = _descend(params, lambda p: task_loss(model_proba(x, p, mode), y, mode), cfg.local_lr)
            losses.append(loss)
            sizes.append(len(idx))
        if history is not None:
            history.append(float(np.average(losses, weights=sizes)))
    return params


def weighted_average(items: Sequence[tuple[int, Sequence[np.ndarray], float]]) -> list[np.ndarray]:
    """Sum of ``weight * arrays`` over (client id, arrays, weight), ascending id."""
    if not items:
        raise ValueError("nothing to average")
    total = None
    for _, arrays, w in sorted(items, key=lambda t: t[0]):
        scaled = [w * np.asarray(a) for a in arrays]
        total = scaled if total is None else [t + s for t, s in zip(total, scaled)]
    return total


def _weights(clients: Sequence[ClientState], uniform: bool = False) -> dict[int, float]:
    if uniform:
        return {c.client_id: 1.0 / len(clients) for c in clients}
    n = sum(c.num_examples for c in clients)
    return {c.client_id: c.num_examples / n for c in clients}


def _ordered(clients: Sequence[ClientState]) -> list[ClientState]:
    if not clients:
        raise ValueError("a round needs at least one client")
    return sorted(clients, key=lambda c: c.client_id)


def fedavg_round(
    clients: Sequence[ClientState],
    global_params: ModelParams,
    cfg: RoundConfig,
    round_idx: int = 0,
    ledger: CommLedger | None = None,
    history: list[float] | None = None,
) -> ModelParams:
    clients = _ordered(clients)
    ledger = ledger if ledger is not None else CommLedger()
    uploads = {}
    for c in clients:
        ledger.record(round_idx, c.client_id, Direction.DOWN, FullModel(global_params))
        c.params = local_train(c, global_params, cfg, round_idx, history)
        uploads[c.client_id] = FullModel(c.params)
        ledger.record(round_idx, c.client_id, Direction.UP, uploads[c.client_id])
    w = _weights(clients)
    avg = weighted_average([(cid, p.params.arrays(), w[cid]) for cid, p in uploads.items()])
    return global_params.with_arrays(avg)


def _proxy_logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return predict_logits(forward_features(x, params.feature_extractor), params.predictor).data


def distill_loss(teacher_proba: np.ndarray, student_logits, mode: TaskMode) -> Tensor:
    """Mean KL(teacher || student); per-class Bernoulli KL in multilabel mode."""
    if TaskMode(mode) is TaskMode.MULTICLASS:
        return kl_divergence(teacher_proba, activate(student_logits, mode), check=False)
    t = np.clip(teacher_proba, PROB_CLAMP, 1 - PROB_CLAMP)
    s = clip(activate(student_logits, mode), PROB_CLAMP, 1 - PROB_CLAMP)
    const = t * np.log(t) + (1 - t) * np.log(1 - t)
    return mean(const - (log(s) * t + log(1.0 - s) * (1 - t)))


def _distill(params: ModelParams, x: np.ndarray, teacher: np.ndarray, steps: int, batch: int,
             lr: float, rng: np.random.Generator, mode: TaskMode, trace: list[float] | None) -> ModelParams:
    m = len(x)
    for _ in range(steps):
        idx = rng.choice(m, size=min(batch, m), replace=False) if batch < m else np.arange(m)
        xb, tb = x[idx], teacher[idx]

        def loss_fn(p):
            logits = predict_logits(forward_features(xb, p.feature_extractor), p.predictor)
            return distill_loss(tb, logits, mode)

        params, loss = _descend(params, loss_fn, lr)
        if trace is not None:
            trace.append(loss)
    return params


def fedkd_round(
    clients: Sequence[ClientState],
    global_params: ModelParams,
    proxy: Dataset,
    cfg: RoundConfig,
    round_idx: int = 0,
    ledger: CommLedger | None = None,
    seed: int = 0,
    history: list[float] | None = None,
    diag: dict | None = None,
) -> ModelParams:
    """Proxy-set distillation round.

    Only ``proxy.features`` is read; proxy labels never enter any objective.
    """
    clients = _ordered(clients)
    if len(proxy) == 0:
        raise ValueError("empty proxy set")
    ledger = ledger if ledger is not None else CommLedger()
    mode = clients[0].data.mode
    x = proxy.features
    uploads: dict[int, LogitMatrix] = {}
    for c in clients:
        c.params = local_train(c, c.params, cfg, round_idx, history)
        uploads[c.client_id] = LogitMatrix(_proxy_logits(c.params, x))
        ledger.record(round_idx, c.client_id, Direction.UP, uploads[c.client_id])

    # teacher: activation of the unweighted mean of client logits
    mean_logits = weighted_average([(cid, [u.logits], 1.0) for cid, u in uploads.items()])[0] / len(uploads)
    teacher = activate(mean_logits, mode).data
    trace = [] if diag is not None else None
    student = _distill(global_params, x, teacher, cfg.server_steps, cfg.server_batch_size, cfg.server_lr,
                       stream(seed, "server-distill", round_idx), mode, trace)
    if diag is not None:
        diag["teacher"] = teacher
        diag["server_distill_loss"] = trace

    download = LogitMatrix(_proxy_logits(student, x))
    student_proba = activate(download.logits, mode).data
    for c in clients:
        ledger.record(round_idx, c.client_id, Direction.DOWN, download)
        c.params = _distill(c.params, x, student_proba, cfg.client_distill_steps, cfg.server_batch_size,
                            cfg.local_lr, stream(seed, "client-distill", round_idx, c.client_id), mode, None)
    return student


def generator_objective(generator: GeneratorParams, predictors, y: np.ndarray, noise: np.ndarray,
                        mode: TaskMode) -> Tensor:
    """Task loss of the predictor ensemble on generated latents."""
    z = generate_latent(y, noise, generator)
    return task_loss(activate(ensemble_logits(z, predictors), mode), y, mode)


def fedkdf_round(
    clients: Sequence[ClientState],
    global_predictor: Sequence[DenseLayer],
    generator: GeneratorParams,
    prior: LabelPrior | None,
    cfg: RoundConfig,
    round_idx: int = 0,
    ledger: CommLedger | None = None,
    seed: int = 0,
    history: list[float] | None = None,
    diag: dict | None = None,
    probe: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[tuple[DenseLayer, ...], GeneratorParams, LabelPrior]:
    """Data-free distillation round; returns (predictor, generator, prior).

    Clients keep their own feature extractors; only predictor heads travel.
    On round 0 (``prior is None``) clients also upload label histograms and
    the server estimates p(y) from them.
    """
    clients = _ordered(clients)
    ledger = ledger if ledger is not None else CommLedger()
    mode = clients[0].data.mode
    global_predictor = tuple(global_predictor)
    uploads: dict[int, PredictorOnly] = {}
    histograms: dict[int, LabelHistogram] = {}
    for c in clients:
        ledger.record(round_idx, c.client_id, Direction.DOWN, PredictorOnly(global_predictor))
        c.params = local_train(c, c.params.with_predictor(global_predictor), cfg, round_idx, history)
        uploads[c.client_id] = PredictorOnly(c.params.predictor)
        ledger.record(round_idx, c.client_id, Direction.UP, uploads[c.client_id])
        if prior is None:
            histograms[c.client_id] = LabelHistogram(c.data.label_histogram())
            ledger.record(round_idx, c.client_id, Direction.UP, histograms[c.client_id])

    if prior is None:
        if not histograms:
            raise ValueError("label prior was never estimated")
        ids = sorted(histograms)
        prior = estimate_label_prior(
            [histograms[i].counts for i in ids], mode, totals=[c.num_examples for c in clients]
        )

    w = _weights(clients, cfg.uniform_predictor_weights)
    stacked = weighted_average([(cid, _Layers(u.layers).arrays(), w[cid]) for cid, u in uploads.items()])
    predictor = _Layers(global_predictor).with_arrays(stacked).layers
    teachers = {cid: u.layers for cid, u in uploads.items()}
    if diag is not None:
        diag["aggregated_predictor"] = predictor

    # generator: make latents the client ensemble labels as y
    rng = stream(seed, "generator", round_idx)
    bs = cfg.server_batch_size
    if diag is not None and probe is not None:
        diag["probe_before"] = generator_objective(generator, teachers, *probe, mode).item()
    gen_trace = []
    for _ in range(cfg.generator_steps):
        y = prior.sample(rng, bs)
        noise = rng.normal(size=(bs, generator.noise_dim))
        generator, loss = _descend(generator, lambda g: generator_objective(g, teachers, y, noise, mode),
                                   cfg.generator_lr)
        gen_trace.append(loss)
    if diag is not None:
        diag["generator_loss"] = gen_trace
        if probe is not None:
            diag["probe_after"] = generator_objective(generator, teachers, *probe, mode).item()

    # predictor fine-tune on generated latents, generator frozen
    rng = stream(seed, "predictor-finetune", round_idx)
    head = _Layers(predictor)
    ft_trace = []
    for _ in range(cfg.server_steps):
        y = prior.sample(rng, bs)
        noise = rng.normal(size=(bs, generator.noise_dim))
        z = generate_latent(y, noise, generator).data
        head, loss = _descend(head, lambda h: task_loss(predict_proba(z, h.layers, mode), y, mode), cfg.server_lr)
        ft_trace.append(loss)
    if diag is not None:
        diag["finetune_loss"] = ft_trace
    return head.layers, generator, prior
