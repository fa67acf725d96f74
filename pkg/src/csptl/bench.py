"""Incremental-calibration benchmark over the seven strategies.

Each subject in turn becomes the target; the rest are sources. Per
repetition a class-balanced pool of ``pool_size`` epochs is reserved for
calibration and the remaining epochs form the test set. The number of
labeled calibration epochs m sweeps 0, m_step, ..., m_max, growing by a
prefix of one shuffled class-interleaved pool order (so training sets are
nested), and every strategy is scored on the test set at every m.

Strategies:

* ``BL1`` - target labeled epochs only (chance 0.5 at m = 0).
* ``BL2`` - all source epochs only.
* ``BL3`` - source and target epochs pooled.
* ``CM1`` - covariance fusion weighted by inverse KL divergence.
* ``CM2`` - covariance fusion over greedily selected source subjects.
* ``MA``  - ensemble of per-source models with optimized simplex weights.
* ``IA``  - source epochs reweighted by kernel mean matching, then pooled.

Cells (target x repetition) are independent; per-cell RNG streams are
seeded from (base_seed, subject index, repetition), so results do not
depend on the worker count.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import kernels
from .covariance_tl import (
    CHANCE_ACCURACY,
    SourceAffinity,
    cm1_affinities,
    cm1_combine,
    cm2_combine,
    cm2_lambda,
    cm2_select_subjects,
)
from .csp import DEFAULT_FILTERS_PER_CLASS, feature_matrix
from .data import SpatialCovariance, SubjectDataset, _mean_cov_from_stack
from .errors import ConfigError
from .instance_tl import KmmConfig, _vectorize_covs, kmm_weights
from .lda import loo_accuracy
from .model_tl import (
    SourceModelBank,
    _sign_matrix,
    optimize_weights,
    train_source_models,
    uniform_weights,
)
from .pipeline import (
    accuracy as _accuracy,
    class_means_from_stack,
    normalized_covariances,
    train_from_means,
    train_weighted,
)


class StrategyId(str, Enum):
    BL1 = "BL1"
    BL2 = "BL2"
    BL3 = "BL3"
    CM1 = "CM1"
    CM2 = "CM2"
    MA = "MA"
    IA = "IA"


ALL_STRATEGIES = tuple(StrategyId)

#: Below this many labeled epochs (two per class) CM2 cannot run
#: leave-one-out validation; it then uses lambda = 1 and all sources.
_CM2_MIN_LABELED = 4


@dataclass(frozen=True)
class BenchConfig:
    pool_size: int = 40
    m_step: int = 2
    m_max: int = 40
    repetitions: int = 30
    filters_per_class: int = DEFAULT_FILTERS_PER_CLASS
    base_seed: int = 0
    strategies: tuple[StrategyId, ...] = ALL_STRATEGIES
    cm1_lambda: float = 0.5

    def __post_init__(self):
        if self.pool_size < 2 or self.pool_size % 2:
            raise ConfigError("pool_size must be even and positive")
        if self.m_step < 2 or self.m_step % 2:
            raise ConfigError("m_step must be even and positive")
        if self.m_max > self.pool_size:
            raise ConfigError("m_max cannot exceed pool_size")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not 0.0 <= self.cm1_lambda <= 1.0:
            raise ConfigError("cm1_lambda must be in [0, 1]")
        strategies = tuple(StrategyId(s) for s in self.strategies)
        if not strategies:
            raise ConfigError("need at least one strategy")
        if len(set(strategies)) != len(strategies):
            raise ConfigError("duplicate strategy in config")
        object.__setattr__(self, "strategies", strategies)

    @property
    def m_values(self) -> tuple[int, ...]:
        return tuple(range(0, self.m_max + 1, self.m_step))


@dataclass(frozen=True)
class ResultRecord:
    subject: str
    strategy: str
    m: int
    rep: int
    accuracy: float


@dataclass(frozen=True)
class ResultTable:
    records: tuple[ResultRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class SummaryRow:
    strategy: str
    m: int
    mean: float
    std: float
    count: int


# ---------------------------------------------------------------------------
# per-target context (caches shared across one cell's m sweep)
# ---------------------------------------------------------------------------


@dataclass
class _TargetContext:
    """Precomputed source-side quantities for one target subject."""

    sources: list[SubjectDataset]
    filters_per_class: int
    source_data: np.ndarray = field(init=False)
    source_labels: np.ndarray = field(init=False)
    source_covs: np.ndarray = field(init=False)
    source_reps: np.ndarray = field(init=False)
    source_sq_dists: np.ndarray = field(init=False)
    per_subject_covs: list[np.ndarray] = field(init=False)
    per_subject_class_means: list[tuple[SpatialCovariance, SpatialCovariance]] = field(init=False)
    per_subject_pooled: list[SpatialCovariance] = field(init=False)
    bl2: tuple = field(init=False)
    model_bank: SourceModelBank = field(init=False)

    def __post_init__(self):
        self.source_data = np.concatenate([s.data for s in self.sources])
        self.source_labels = np.concatenate([s.labels for s in self.sources])
        self.source_covs = normalized_covariances(self.source_data)
        self.source_reps = _vectorize_covs(self.source_covs)
        self.source_sq_dists = kernels.pairwise_sq_dists(
            self.source_reps, self.source_reps
        )
        self.per_subject_covs = []
        self.per_subject_class_means = []
        self.per_subject_pooled = []
        offset = 0
        for s in self.sources:
            covs = self.source_covs[offset : offset + len(s)]
            offset += len(s)
            self.per_subject_covs.append(covs)
            self.per_subject_class_means.append(
                class_means_from_stack(covs, s.labels, np.ones(len(s)))
            )
            self.per_subject_pooled.append(
                SpatialCovariance(
                    _mean_cov_from_stack(covs, np.ones(len(s))), normalized=True
                )
            )
        self.bl2 = train_weighted(
            self.source_data,
            self.source_labels,
            np.ones(len(self.source_labels)),
            self.filters_per_class,
            cov_stack=self.source_covs,
        )
        self.model_bank = train_source_models(self.sources, self.filters_per_class)


def _target_epochs(dataset: SubjectDataset, indices: np.ndarray):
    return [dataset.epochs[i] for i in indices]


# ---------------------------------------------------------------------------
# strategy implementations
# ---------------------------------------------------------------------------


def _labeled_stack(dataset: SubjectDataset, indices: np.ndarray):
    return dataset.data[indices], dataset.labels[indices]


def _strategy_bl1(ctx, target, lab_idx, cfg, lab_covs=None):
    data, labels = _labeled_stack(target, lab_idx)
    return train_weighted(
        data, labels, np.ones(len(labels)), cfg.filters_per_class, cov_stack=lab_covs
    )


def _strategy_bl3_weights(ctx, target, lab_idx, cfg, beta, lab_covs=None):
    data_t, labels_t = _labeled_stack(target, lab_idx)
    data = np.concatenate([data_t, ctx.source_data])
    labels = np.concatenate([labels_t, ctx.source_labels])
    weights = np.concatenate([np.ones(len(labels_t)), beta])
    cov_stack = None
    if lab_covs is not None:
        cov_stack = np.concatenate([lab_covs, ctx.source_covs])
    return train_weighted(
        data, labels, weights, cfg.filters_per_class, cov_stack=cov_stack
    )


def _strategy_ia(ctx, target, lab_idx, cfg, lab_covs=None):
    n = len(ctx.source_labels)
    if len(lab_idx) == 0:
        beta = np.ones(n)
    else:
        if lab_covs is None:
            lab_covs = normalized_covariances(target.data[lab_idx])
        target_reps = _vectorize_covs(lab_covs)
        weights = kmm_weights(
            ctx.source_reps,
            target_reps,
            KmmConfig(),
            precomputed_source_sq_dists=ctx.source_sq_dists,
        )
        beta = weights.beta
    return _strategy_bl3_weights(ctx, target, lab_idx, cfg, beta, lab_covs=lab_covs)


def _target_class_means(target, lab_idx, cfg, lab_covs=None):
    data, labels = _labeled_stack(target, lab_idx)
    covs = lab_covs if lab_covs is not None else normalized_covariances(data)
    return class_means_from_stack(covs, labels, np.ones(len(labels))), (data, labels, covs)


def _strategy_cm1(ctx, target, lab_idx, cfg, lab_covs=None):
    z = len(ctx.sources)
    m = len(lab_idx)
    if m == 0:
        # No target data to compute divergences from: pure source fusion
        # (lambda = 1) with uniform affinities. The target slot of the
        # blend carries weight zero, so any same-shaped matrix serves.
        affinity = SourceAffinity(np.full(z, 1.0 / z), np.full(z, np.nan))
        fused = [
            cm1_combine(
                ctx.per_subject_class_means[0][c],
                [ms[c] for ms in ctx.per_subject_class_means],
                affinity,
                1.0,
            )
            for c in (0, 1)
        ]
        data = ctx.source_data
        labels = ctx.source_labels
    else:
        (sigma_t0, sigma_t1), (data_t, labels_t, covs_t) = _target_class_means(
            target, lab_idx, cfg, lab_covs
        )
        target_pooled = SpatialCovariance(
            _mean_cov_from_stack(covs_t, np.ones(len(labels_t))), normalized=True
        )
        affinity = cm1_affinities(ctx.per_subject_pooled, target_pooled)
        lam = cfg.cm1_lambda
        fused = [
            cm1_combine(sig_t, [ms[c] for ms in ctx.per_subject_class_means], affinity, lam)
            for c, sig_t in ((0, sigma_t0), (1, sigma_t1))
        ]
        data = np.concatenate([data_t, ctx.source_data])
        labels = np.concatenate([labels_t, ctx.source_labels])
    return train_from_means(fused[0], fused[1], data, labels, cfg.filters_per_class)


def _strategy_cm2(ctx, target, lab_idx, cfg, lab_covs=None):
    m = len(lab_idx)
    if m < _CM2_MIN_LABELED:
        lam = 1.0
        selected = list(range(len(ctx.sources)))
    else:
        target_subset = SubjectDataset(
            target.subject_id, tuple(_target_epochs(target, lab_idx))
        )
        selected = cm2_select_subjects(
            target_subset,
            ctx.sources,
            cfg.filters_per_class,
            precomputed_covs=ctx.per_subject_covs,
        )
        data_t, labels_t = _labeled_stack(target, lab_idx)
        covs_t = lab_covs if lab_covs is not None else normalized_covariances(data_t)
        bank_t, model_t = train_weighted(
            data_t, labels_t, np.ones(m), cfg.filters_per_class, cov_stack=covs_t
        )
        target_acc = loo_accuracy(feature_matrix(bank_t, data_t), labels_t)
        sel_data = np.concatenate([ctx.sources[i].data for i in selected])
        sel_labels = np.concatenate([ctx.sources[i].labels for i in selected])
        sel_covs = np.concatenate([ctx.per_subject_covs[i] for i in selected])
        bank_s, model_s = train_weighted(
            sel_data, sel_labels, np.ones(len(sel_labels)),
            cfg.filters_per_class, cov_stack=sel_covs,
        )
        selected_acc = _accuracy(bank_s, model_s, data_t, labels_t)
        lam = cm2_lambda(target_acc, selected_acc, CHANCE_ACCURACY)

    if m == 0:
        sel_means = [
            [ctx.per_subject_class_means[i][c] for i in selected] for c in (0, 1)
        ]
        fused = [
            cm2_combine(sel_means[c][0], sel_means[c], 1.0) for c in (0, 1)
        ]
        data = ctx.source_data
        labels = ctx.source_labels
    else:
        (sigma_t0, sigma_t1), (data_t, labels_t, _) = _target_class_means(
            target, lab_idx, cfg, lab_covs
        )
        fused = [
            cm2_combine(
                sig_t, [ctx.per_subject_class_means[i][c] for i in selected], lam
            )
            for c, sig_t in ((0, sigma_t0), (1, sigma_t1))
        ]
        data = np.concatenate(
            [data_t] + [ctx.sources[i].data for i in selected]
        )
        labels = np.concatenate(
            [labels_t] + [ctx.sources[i].labels for i in selected]
        )
    return train_from_means(fused[0], fused[1], data, labels, cfg.filters_per_class)


def _ma_weights(ctx, target, lab_idx, cfg, pool_signs=None):
    if len(lab_idx) == 0:
        return uniform_weights(ctx.model_bank.size)
    if pool_signs is None:
        p = _sign_matrix(ctx.model_bank, target.data[lab_idx])
    else:
        p = pool_signs[: len(lab_idx)]
    y = np.where(target.labels[lab_idx] == 1, 1.0, -1.0)
    return optimize_weights(p, y)


def _evaluate(pair, test_data, test_labels) -> float:
    bank, model = pair
    return _accuracy(bank, model, test_data, test_labels)


def run_strategy(
    strategy: StrategyId,
    target_labeled,
    target_test,
    sources: Sequence[SubjectDataset],
    cfg: BenchConfig,
) -> float:
    """Train one strategy on the given calibration data and score it.

    ``target_labeled`` and ``target_test`` are sequences of LabeledEpoch;
    the test sequence must be nonempty and, except for BL1, at least one
    source dataset is required.
    """
    strategy = StrategyId(strategy)
    target_labeled = list(target_labeled)
    target_test = list(target_test)
    if not target_test:
        raise ConfigError("test set must be nonempty")
    if strategy is not StrategyId.BL1 and not sources:
        raise ConfigError(f"{strategy.value} requires source subjects")

    test_data = np.stack([le.epoch.data for le in target_test])
    test_labels = np.array([le.label for le in target_test], dtype=np.int64)

    if strategy is StrategyId.BL1:
        if not target_labeled:
            return CHANCE_ACCURACY
        data = np.stack([le.epoch.data for le in target_labeled])
        labels = np.array([le.label for le in target_labeled], dtype=np.int64)
        pair = train_weighted(data, labels, np.ones(len(labels)), cfg.filters_per_class)
        return _evaluate(pair, test_data, test_labels)

    # Wrap the inputs in a throwaway dataset/context so this path runs the
    # exact computations the batch sweep runs.
    tmp_target = SubjectDataset(
        "__target__", tuple(list(target_labeled) + list(target_test))
    )
    lab_idx = np.arange(len(target_labeled))
    ctx = _TargetContext(list(sources), cfg.filters_per_class)

    if strategy is StrategyId.MA:
        weights = _ma_weights(ctx, tmp_target, lab_idx, cfg)
        signs = _sign_matrix(ctx.model_bank, test_data)
        scores = signs @ weights.w
        preds = (scores > 0.0).astype(np.int64)
        return float(np.mean(preds == test_labels))

    if strategy is StrategyId.BL2:
        pair = ctx.bl2
    elif strategy is StrategyId.BL3:
        pair = _strategy_bl3_weights(
            ctx, tmp_target, lab_idx, cfg, np.ones(len(ctx.source_labels))
        )
    elif strategy is StrategyId.IA:
        pair = _strategy_ia(ctx, tmp_target, lab_idx, cfg)
    elif strategy is StrategyId.CM1:
        pair = _strategy_cm1(ctx, tmp_target, lab_idx, cfg)
    elif strategy is StrategyId.CM2:
        pair = _strategy_cm2(ctx, tmp_target, lab_idx, cfg)
    else:  # pragma: no cover
        raise ConfigError(f"unknown strategy {strategy!r}")
    return _evaluate(pair, test_data, test_labels)


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------


def _draw_pool(labels: np.ndarray, cfg: BenchConfig, subject_index: int, rep: int):
    """Class-interleaved pool order and the sorted test indices."""
    rng = np.random.default_rng((cfg.base_seed, subject_index, rep))
    half = cfg.pool_size // 2
    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    if len(idx0) < half or len(idx1) < half or len(labels) <= cfg.pool_size:
        raise ConfigError(
            f"subject needs more than {cfg.pool_size} class-balanced epochs "
            f"to reserve the pool, has {len(idx0)}+{len(idx1)}"
        )
    pool0 = rng.permutation(idx0)[:half]
    pool1 = rng.permutation(idx1)[:half]
    pool = np.empty(cfg.pool_size, dtype=np.int64)
    pool[0::2] = pool0
    pool[1::2] = pool1
    test = np.setdiff1d(np.arange(len(labels)), pool)
    return pool, test


def _check_datasets(datasets: Sequence[SubjectDataset], cfg: BenchConfig):
    if len(datasets) < 2:
        raise ConfigError("benchmark needs at least two subjects")
    half = cfg.pool_size // 2
    for ds in datasets:
        n0 = int(np.sum(ds.labels == 0))
        n1 = int(np.sum(ds.labels == 1))
        if n0 < half or n1 < half or len(ds) <= cfg.pool_size:
            raise ConfigError(
                f"subject {ds.subject_id!r} needs more than {cfg.pool_size} epochs "
                f"with at least {half} per class, has {n0}+{n1}"
            )


def _sweep_cell(datasets, cfg: BenchConfig, target_index: int, rep: int):
    """All (strategy, m) accuracies for one (target, repetition) cell."""
    target = datasets[target_index]
    sources = [d for i, d in enumerate(datasets) if i != target_index]
    pool, test_idx = _draw_pool(target.labels, cfg, target_index, rep)
    test_data = target.data[test_idx]
    test_labels = target.labels[test_idx]

    need_sources = any(s is not StrategyId.BL1 for s in cfg.strategies)
    ctx = _TargetContext(sources, cfg.filters_per_class) if need_sources else None

    # Per-epoch covariances are independent per epoch, so slicing this
    # cache is bit-identical to recomputing them per m.
    pool_covs = normalized_covariances(target.data[pool]) if cfg.m_max > 0 else None

    bl2_acc = None
    test_signs = None
    pool_signs = None
    if ctx is not None and StrategyId.MA in cfg.strategies:
        test_signs = _sign_matrix(ctx.model_bank, test_data)
        pool_signs = _sign_matrix(ctx.model_bank, target.data[pool])

    out = {}
    for m in cfg.m_values:
        lab_idx = pool[:m]
        lab_covs = pool_covs[:m] if pool_covs is not None else None
        for strategy in cfg.strategies:
            if strategy is StrategyId.BL1:
                if m == 0:
                    acc = CHANCE_ACCURACY
                else:
                    acc = _evaluate(
                        _strategy_bl1(ctx, target, lab_idx, cfg, lab_covs),
                        test_data,
                        test_labels,
                    )
            elif strategy is StrategyId.BL2:
                if bl2_acc is None:
                    bl2_acc = _evaluate(ctx.bl2, test_data, test_labels)
                acc = bl2_acc
            elif strategy is StrategyId.BL3:
                acc = _evaluate(
                    _strategy_bl3_weights(
                        ctx, target, lab_idx, cfg,
                        np.ones(len(ctx.source_labels)), lab_covs,
                    ),
                    test_data,
                    test_labels,
                )
            elif strategy is StrategyId.IA:
                acc = _evaluate(
                    _strategy_ia(ctx, target, lab_idx, cfg, lab_covs),
                    test_data,
                    test_labels,
                )
            elif strategy is StrategyId.CM1:
                acc = _evaluate(
                    _strategy_cm1(ctx, target, lab_idx, cfg, lab_covs),
                    test_data,
                    test_labels,
                )
            elif strategy is StrategyId.CM2:
                acc = _evaluate(
                    _strategy_cm2(ctx, target, lab_idx, cfg, lab_covs),
                    test_data,
                    test_labels,
                )
            elif strategy is StrategyId.MA:
                weights = _ma_weights(ctx, target, lab_idx, cfg, pool_signs)
                preds = (test_signs @ weights.w > 0.0).astype(np.int64)
                acc = float(np.mean(preds == test_labels))
            out[(strategy.value, m)] = acc
    return out


_WORKER_STATE: dict = {}


def _init_worker(datasets, cfg):
    _WORKER_STATE["datasets"] = datasets
    _WORKER_STATE["cfg"] = cfg


def _worker_task(args):
    target_index, rep = args
    return target_index, rep, _sweep_cell(
        _WORKER_STATE["datasets"], _WORKER_STATE["cfg"], target_index, rep
    )


def run_benchmark(
    datasets: Sequence[SubjectDataset], cfg: BenchConfig, workers: int = 1
) -> ResultTable:
    """Full protocol sweep; deterministic for a given config at any worker count."""
    datasets = list(datasets)
    _check_datasets(datasets, cfg)
    tasks = [(t, r) for t in range(len(datasets)) for r in range(cfg.repetitions)]

    cells = {}
    if workers <= 1:
        for t, r in tasks:
            cells[(t, r)] = _sweep_cell(datasets, cfg, t, r)
    else:
        mp_ctx = multiprocessing.get_context("spawn")
        with mp_ctx.Pool(
            workers, initializer=_init_worker, initargs=(datasets, cfg)
        ) as pool:
            for t, r, out in pool.imap_unordered(_worker_task, tasks):
                cells[(t, r)] = out

    records = []
    for t, ds in enumerate(datasets):
        for strategy in cfg.strategies:
            for m in cfg.m_values:
                for rep in range(cfg.repetitions):
                    records.append(
                        ResultRecord(
                            ds.subject_id,
                            strategy.value,
                            m,
                            rep,
                            cells[(t, rep)][(strategy.value, m)],
                        )
                    )
    return ResultTable(tuple(records))


def summarize(table: ResultTable) -> list[SummaryRow]:
    """Mean and sample std of accuracy per (strategy, m) over subjects and reps."""
    if not table.records:
        raise ConfigError("cannot summarize an empty table")
    groups: dict[tuple[str, int], list[float]] = {}
    order = []
    for rec in table.records:
        key = (rec.strategy, rec.m)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec.accuracy)
    rows = []
    for strategy, m in sorted(order, key=lambda k: (_strategy_rank(k[0]), k[1])):
        vals = np.array(groups[(strategy, m)])
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        rows.append(SummaryRow(strategy, m, float(np.mean(vals)), std, len(vals)))
    return rows


def _strategy_rank(name: str) -> int:
    try:
        return list(StrategyId).index(StrategyId(name))
    except ValueError:
        return len(StrategyId)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

RESULTS_HEADER = "subject,strategy,m,rep,accuracy"
SUMMARY_HEADER = "strategy,m,mean,std,count"


def _results_csv_text(table: ResultTable) -> str:
    lines = [RESULTS_HEADER]
    for r in table.records:
        lines.append(f"{r.subject},{r.strategy},{r.m},{r.rep},{r.accuracy:.6f}")
    return "\n".join(lines) + "\n"


def _summary_csv_text(rows: Sequence[SummaryRow]) -> str:
    lines = [SUMMARY_HEADER]
    for r in rows:
        lines.append(f"{r.strategy},{r.m},{r.mean:.6f},{r.std:.6f},{r.count}")
    return "\n".join(lines) + "\n"


def emit_csv(table_or_summary, path) -> None:
    """Write a result table or summary rows as UTF-8, LF-terminated CSV."""
    if isinstance(table_or_summary, ResultTable):
        text = _results_csv_text(table_or_summary)
    else:
        text = _summary_csv_text(list(table_or_summary))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_results_csv(path) -> ResultTable:
    """Parse a results CSV produced by :func:`emit_csv`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER.split(","):
            raise ConfigError(f"unexpected results header in {path}: {header}")
        records = []
        for row in reader:
            if len(row) != 5:
                raise ConfigError(f"malformed results row in {path}: {row}")
            records.append(
                ResultRecord(row[0], row[1], int(row[2]), int(row[3]), float(row[4]))
            )
    return ResultTable(tuple(records))
