"""Run one method end to end and collect per-round reports."""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from ..data import Dataset, LabelPrior, concat_datasets
from ..metrics import AucReport, CommLedger, average_reports, evaluate_auc, ledger_totals
from ..models import GeneratorParams, ModelParams, init_generator, init_model, layers_to_bytes, model_proba
from ..numerics import stream
from .config import RunSettings
from .rounds import ClientState, fedavg_round, fedkd_round, fedkdf_round, generator_objective, local_train

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    CENTRALIZED = "Centralized"
    STANDALONE = "Standalone"
    FEDAVG = "FedAvg"
    FEDKD = "FedKD"
    FEDKDF = "FedKDF"

    @classmethod
    def parse(cls, name: str) -> "Method":
        for m in cls:
            if m.value.lower() == str(name).lower():
                return m
        raise ValueError(f"unknown method {name!r}; expected one of {[m.value for m in cls]}")


METHOD_ORDER = [m.value for m in Method]


@dataclass
class RoundReport:
    round: int
    method: str
    test: AucReport
    val_mauc: float
    train_loss: float
    cum_bytes_up: int
    cum_bytes_down: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def cum_bytes(self) -> int:
        return self.cum_bytes_up + self.cum_bytes_down


@dataclass
class ExperimentResult:
    method: str
    seed: int
    reports: list[RoundReport]
    ledger: CommLedger
    final_params: dict = field(default_factory=dict)

    @property
    def final(self) -> RoundReport:
        return self.reports[-1]

    @property
    def convergence_round(self) -> int:
        """First round whose validation mAUC is within tolerance of the run's best."""
        tol = self.final_params.get("convergence_tolerance", 0.005)
        best = max(r.val_mauc for r in self.reports)
        for r in self.reports:
            if r.val_mauc >= best - tol:
                return r.round
        return self.reports[-1].round

    def bytes_to_convergence(self) -> int:
        return ledger_totals(self.ledger, self.convergence_round).total

    def summary(self) -> dict:
        conv = self.convergence_round
        to_conv = ledger_totals(self.ledger, conv)
        return {
            "method": self.method,
            "seed": self.seed,
            "rounds": len(self.reports),
            "final": self.final.test.to_dict(),
            "final_val_mauc": self.final.val_mauc,
            "convergence_round": conv,
            "bytes_to_convergence": to_conv.total,
            "mb_to_convergence": to_conv.megabytes,
            "ledger_totals": ledger_totals(self.ledger).to_dict(),
            "val_mauc_curve": [r.val_mauc for r in self.reports],
            "test_mauc_curve": [r.test.mauc for r in self.reports],
        }


Partitions = Union[Mapping[int, Dataset], Sequence[Dataset]]


def _as_mapping(partitions: Partitions) -> dict[int, Dataset]:
    if isinstance(partitions, Mapping):
        parts = {int(k): v for k, v in partitions.items()}
    else:
        parts = dict(enumerate(partitions))
    if not parts:
        raise ValueError("no client partitions")
    return {k: parts[k] for k in sorted(parts)}


def _scores(params: ModelParams, ds: Dataset) -> np.ndarray:
    return model_proba(ds.features, params, ds.mode).data


def _evaluate(models: Sequence[ModelParams], ds: Dataset, resamples: int, settings: RunSettings, seed: int) -> AucReport:
    reports = [
        evaluate_auc(_scores(m, ds), ds.labels, resamples=resamples, level=settings.ci_level, seed=seed)
        for m in models
    ]
    return reports[0] if len(reports) == 1 else average_reports(reports)


def write_checkpoint(directory: Path, method: str, round_idx: int, params: ModelParams | None,
                     generator: GeneratorParams | None = None) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    if params is not None:
        (directory / f"{method}_round{round_idx:03d}_model.bin").write_bytes(params.to_bytes())
    if generator is not None:
        (directory / f"{method}_round{round_idx:03d}_generator.bin").write_bytes(generator.to_bytes())


def run_experiment(
    method: Union[Method, str],
    partitions: Partitions,
    settings: RunSettings,
    seed: int,
    *,
    val: Dataset,
    test: Dataset,
    proxy: Dataset | None = None,
    checkpoint_dir: Path | None = None,
) -> ExperimentResult:
    method = Method.parse(method.value if isinstance(method, Method) else method)
    parts = _as_mapping(partitions)
    cfg = settings.rounds
    arch = settings.arch
    first = next(iter(parts.values()))
    dim, num_classes = first.dim, first.num_classes
    init = init_model(dim, num_classes, stream(seed, "init-model"), arch.latent_dim, arch.hidden,
                      arch.predictor_hidden)
    ledger = CommLedger(settings.wire_bytes, method.value)
    clients = [ClientState(cid, ds, init, seed) for cid, ds in parts.items()]
    if method is Method.CENTRALIZED:
        clients = [ClientState(0, concat_datasets(list(parts.values())), init, seed)]
    if method is Method.FEDKD and proxy is None:
        raise ValueError("FedKD needs a proxy dataset")

    global_params = init
    predictor = init.predictor
    generator = init_generator(num_classes, arch.latent_dim, stream(seed, "init-generator"), arch.noise_dim,
                               arch.generator_hidden)
    prior: LabelPrior | None = None
    probe = None
    reports: list[RoundReport] = []
    eval_seed = int(stream(seed, "eval-seed").integers(0, 2**63 - 1))

    for r in range(cfg.total_rounds):
        history: list[float] = []
        diag: dict = {}
        if method in (Method.CENTRALIZED, Method.STANDALONE):
            for c in clients:
                c.params = local_train(c, c.params, cfg, r, history)
            models = [c.params for c in clients]
        elif method is Method.FEDAVG:
            global_params = fedavg_round(clients, global_params, cfg, r, ledger, history)
            models = [global_params]
        elif method is Method.FEDKD:
            global_params = fedkd_round(clients, global_params, proxy, cfg, r, ledger, seed, history, diag)
            models = [global_params]
        else:
            predictor, generator, prior = fedkdf_round(
                clients, predictor, generator, prior, cfg, r, ledger, seed, history, diag, probe
            )
            if probe is None:
                # fixed held-out probe for the generator objective, drawn once p(y) is known
                prng = stream(seed, "generator-probe")
                probe = (prior.sample(prng, 256), prng.normal(size=(256, generator.noise_dim)))
                diag["probe_before"] = generator_objective(
                    init_generator(num_classes, arch.latent_dim, stream(seed, "init-generator"),
                                   arch.noise_dim, arch.generator_hidden),
                    {c.client_id: c.params.predictor for c in clients}, *probe, first.mode).item()
                diag["probe_after"] = generator_objective(
                    generator, {c.client_id: c.params.predictor for c in clients}, *probe, first.mode).item()
            agg = diag.pop("aggregated_predictor")
            diag["val_mauc_pre_finetune"] = _evaluate(
                [c.params.with_predictor(agg) for c in clients], val, 0, settings, eval_seed).mauc
            models = [c.params.with_predictor(predictor) for c in clients]
        last = r == cfg.total_rounds - 1
        resamples = settings.ci_resamples if (last or settings.ci_every_round) else 0
        up, down = ledger.cumulative(r)
        val_mauc = _evaluate(models, val, 0, settings, eval_seed).mauc
        diag.pop("teacher", None)
        reports.append(
            RoundReport(
                round=r,
                method=method.value,
                test=_evaluate(models, test, resamples, settings, eval_seed),
                val_mauc=val_mauc,
                train_loss=float(np.mean(history)) if history else math.nan,
                cum_bytes_up=up,
                cum_bytes_down=down,
                diagnostics=diag,
            )
        )
        log.info("%s round %d: val mAUC %.4f, bytes %d", method.value, r, val_mauc, up + down)
        if checkpoint_dir is not None:
            if method is Method.FEDKDF:
                write_checkpoint(checkpoint_dir, method.value, r, None, generator)
                (checkpoint_dir / f"{method.value}_round{r:03d}_predictor.bin").write_bytes(layers_to_bytes(predictor))
            else:
                write_checkpoint(checkpoint_dir, method.value, r, models[0])

    result = ExperimentResult(method.value, seed, reports, ledger)
    result.final_params = {
        "models": models,
        "generator": generator,
        "prior": prior,
        "convergence_tolerance": settings.convergence_tolerance,
    }
    return result


ROUND_CSV_HEADER = ["round", "method", "class", "auc", "ci_low", "ci_high", "mauc", "cum_bytes_up", "cum_bytes_down"]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def write_round_csv(results: Sequence[ExperimentResult], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUND_CSV_HEADER)
        for res in results:
            for rep in res.reports:
                t = rep.test
                for c, auc in enumerate(t.per_class):
                    lo = t.ci_low[c] if t.ci_low is not None else None
                    hi = t.ci_high[c] if t.ci_high is not None else None
                    w.writerow([rep.round, rep.method, c, _fmt(auc), _fmt(lo), _fmt(hi), _fmt(t.mauc),
                                rep.cum_bytes_up, rep.cum_bytes_down])
