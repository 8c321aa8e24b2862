"""End-to-end benchmark: simulate a fleet, train everything, emit reports.

One run produces, from a single world: inter-arrival family fits
(table 1 shape), the raw status channel and the gap detector scored as
standalone classifiers (table 2 shape), the resampling ablation
(table 3 shape), the full model comparison (table 8 shape), a feature
correlation matrix, and fleet KPIs. Reports are plain CSV plus a JSON
manifest; a fixed config yields byte-identical bundles, so the manifest
records content hashes rather than timestamps.
"""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from . import txstat
from .balance import SmoteConfig, smote
from .config import ExperimentConfig, config_hash, to_dict
from .features import (
    STATUS_FILE,
    TX_STATUS,
    CorrelationResult,
    Dataset,
    build_dataset,
    correlation_matrix,
    split_train_test,
)
from .fusion import (
    PoolSpec,
    build_dsel,
    dcs_la_predict_batch,
    fit_stacking,
    knora_e_predict_batch,
    nearest_neighbors,
    split_for_selection,
)
from .journal import StatusTimeline, extract_truth, journal_from_world
from .learners import (
    train_bagging,
    train_cat_like,
    train_lgbm_like,
    train_logreg,
    train_random_forest,
    train_svm,
    train_tree,
)
from .metrics import (
    ConfusionMatrix,
    KpiReport,
    MetricsReport,
    false_alarm_rate,
    kpis,
    metrics,
    missed_alarm_rate,
)
from .simnet import World, simulate

BASELINE_SOURCES = ("status_file", "tx_status")
ABLATION_MODELS = ("svm", "random_forest", "leafwise_gbdt")
COMPARISON_MODELS = (
    "svm",
    "tree",
    "bagging",
    "random_forest",
    "leafwise_gbdt",
    "oblivious_gbdt",
    "logreg",
    "dcs_la",
    "knora_e",
    "stacking",
)
REPORT_FILES = (
    "table1_ks.csv",
    "table2_baselines.csv",
    "table3_smote.csv",
    "table8_models.csv",
    "correlation.csv",
    "kpis.csv",
)
METRIC_COLUMNS = (
    "accuracy",
    "precision_down",
    "recall_down",
    "f1_down",
    "precision_up",
    "recall_up",
    "f1_up",
    "macro_precision",
    "macro_recall",
    "macro_f1",
)
RELIABILITY_HORIZON_S = 86400.0


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclasses.dataclass(frozen=True)
class EvaluatedModel:
    report: MetricsReport
    false_alarm_rate: float | None
    missed_alarm_rate: float | None


@dataclasses.dataclass
class ExperimentResult:
    config: ExperimentConfig
    config_hash: str
    ks_atm: str
    ks_table: list[tuple[str, float]]
    baselines: dict[str, EvaluatedModel]
    ablation: dict[str, dict[str, EvaluatedModel]]
    models: dict[str, EvaluatedModel]
    correlation: CorrelationResult
    atm_kpis: list[tuple[str, KpiReport]]
    fleet_kpi: KpiReport
    counts: dict[str, int]
    skipped_atms: list[str]


def evaluate_labels(predicted, truth) -> EvaluatedModel:
    cm = ConfusionMatrix.from_labels(predicted, truth)
    return EvaluatedModel(
        report=metrics(cm),
        false_alarm_rate=false_alarm_rate(cm),
        missed_alarm_rate=missed_alarm_rate(cm),
    )


def _fleet_kpi(timelines: list[StatusTimeline]) -> KpiReport:
    up = sum(t.up_seconds() for t in timelines)
    down = sum(t.down_seconds() for t in timelines)
    n = sum(t.n_outages() for t in timelines)
    horizon = sum(t.horizon[1] - t.horizon[0] for t in timelines)
    if n == 0:
        return KpiReport(availability=up / horizon, mttf_s=float("inf"), mttr_s=None)
    return KpiReport(availability=up / horizon, mttf_s=up / n, mttr_s=down / n)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    sim = config.sim

    with _stage("simulate"):
        world: World = simulate(sim)
        atm_ids = world.atm_ids

    with _stage("label"):
        events = journal_from_world(world)
        truth = extract_truth(
            events, (float(sim.start_epoch_s), float(sim.end_epoch_s)), atm_ids=atm_ids
        )

    with _stage("txstat"):
        txs = {a: world.transactions[i].ts for i, a in enumerate(atm_ids)}
        t_split = sim.start_epoch_s + config.train_ratio * sim.horizon_s
        train_window = (float(sim.start_epoch_s), float(t_split))
        gap_states = txstat.fit_per_atm(
            txs, truth, window=train_window, confidence=config.gap_confidence
        )
        skipped = [a for a in atm_ids if not gap_states[a].fittable]

    with _stage("features"):
        snaps = {a: world.snapshots[i] for i, a in enumerate(atm_ids)}
        dataset = build_dataset(snaps, txs, gap_states, truth, sim.calendar())
        corr = correlation_matrix(dataset)
        train, test = split_train_test(dataset, config.train_ratio)

    with _stage("balance"):
        balanced, _ = smote(
            train, SmoteConfig(config.smote_k, config.smote_ratio, seed=sim.seed)
        )

    with _stage("train"):
        before = {
            "svm": train_svm(train.X, train.y),
            "random_forest": train_random_forest(train.X, train.y, seed=config.rf_seed),
            "leafwise_gbdt": train_lgbm_like(train.X, train.y),
        }
        singles = {
            "svm": train_svm(balanced.X, balanced.y),
            "tree": train_tree(balanced.X, balanced.y),
            "bagging": train_bagging(balanced.X, balanced.y, n_trees=3, seed=sim.seed),
            "random_forest": train_random_forest(
                balanced.X, balanced.y, seed=config.rf_seed
            ),
            "leafwise_gbdt": train_lgbm_like(balanced.X, balanced.y),
            "oblivious_gbdt": train_cat_like(balanced.X, balanced.y),
            "logreg": train_logreg(balanced.X, balanced.y),
        }

    with _stage("fuse"):
        pool_part, dsel_part = split_for_selection(
            train, config.dsel_fraction, seed=sim.seed
        )
        pool_bal, _ = smote(
            pool_part, SmoteConfig(config.smote_k, config.smote_ratio, seed=sim.seed)
        )
        dcs_members = [
            train_tree(pool_bal.X, pool_bal.y),
            train_svm(pool_bal.X, pool_bal.y),
        ]
        des_members = train_bagging(
            pool_bal.X, pool_bal.y, n_trees=config.des_pool_size, seed=sim.seed
        ).trees
        neighbors = nearest_neighbors(dsel_part.X, test.X, config.knn_k)
        dcs_pred = dcs_la_predict_batch(
            PoolSpec(dcs_members, config.knn_k),
            build_dsel(dcs_members, dsel_part),
            test.X,
            neighbors=neighbors,
        )
        knora_pred = knora_e_predict_batch(
            PoolSpec(des_members, config.knn_k),
            build_dsel(des_members, dsel_part),
            test.X,
            neighbors=neighbors,
        )
        stack = fit_stacking(balanced.X, balanced.y, rf_seed=config.rf_seed)

    with _stage("eval"):
        y_test = test.y
        baselines = {
            "status_file": evaluate_labels(
                test.X[:, STATUS_FILE].astype(np.int8), y_test
            ),
            "tx_status": evaluate_labels(test.X[:, TX_STATUS].astype(np.int8), y_test),
        }
        ablation = {
            name: {
                "before": evaluate_labels(before[name].predict_label(test.X), y_test),
                "after": evaluate_labels(singles[name].predict_label(test.X), y_test),
            }
            for name in ABLATION_MODELS
        }
        models = {
            name: evaluate_labels(model.predict_label(test.X), y_test)
            for name, model in singles.items()
        }
        models["dcs_la"] = evaluate_labels(dcs_pred, y_test)
        models["knora_e"] = evaluate_labels(knora_pred, y_test)
        models["stacking"] = evaluate_labels(stack.predict_label(test.X), y_test)

        fittable = [a for a in atm_ids if gap_states[a].fittable]
        tx_counts = {
            a: int(np.sum((txs[a] >= train_window[0]) & (txs[a] < train_window[1])))
            for a in fittable
        }
        ks_atm = min(fittable, key=lambda a: (-tx_counts[a], a))
        gaps = txstat.clean_gaps(txs[ks_atm], truth[ks_atm], train_window)
        ks_table = txstat.rank_families(gaps).entries

        atm_kpis = [(a, kpis(truth[a])) for a in atm_ids]
        fleet = _fleet_kpi([truth[a] for a in atm_ids])

    return ExperimentResult(
        config=config,
        config_hash=config_hash(config),
        ks_atm=ks_atm,
        ks_table=ks_table,
        baselines=baselines,
        ablation=ablation,
        models=models,
        correlation=corr,
        atm_kpis=atm_kpis,
        fleet_kpi=fleet,
        counts={
            "instances": len(dataset),
            "train": len(train),
            "test": len(test),
            "train_balanced": len(balanced),
            "selection_set": len(dsel_part),
        },
        skipped_atms=skipped,
    )


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _metric_cells(ev: EvaluatedModel) -> str:
    vals = [getattr(ev.report, c) for c in METRIC_COLUMNS]
    vals += [ev.false_alarm_rate, ev.missed_alarm_rate]
    return ",".join(_fmt(v) for v in vals)


_METRIC_HEADER = ",".join(METRIC_COLUMNS) + ",false_alarm_rate,missed_alarm_rate"


def render_reports(result: ExperimentResult) -> dict[str, str]:
    """All report files as name -> content; writing is separate for testability."""
    out: dict[str, str] = {}

    lines = ["family,d_statistic"]
    lines += [f"{fam},{_fmt(d)}" for fam, d in result.ks_table]
    out["table1_ks.csv"] = "\n".join(lines) + "\n"

    lines = ["source," + _METRIC_HEADER]
    lines += [f"{s},{_metric_cells(result.baselines[s])}" for s in BASELINE_SOURCES]
    out["table2_baselines.csv"] = "\n".join(lines) + "\n"

    lines = ["model,phase," + _METRIC_HEADER]
    for name in ABLATION_MODELS:
        for phase in ("before", "after"):
            lines.append(f"{name},{phase},{_metric_cells(result.ablation[name][phase])}")
    out["table3_smote.csv"] = "\n".join(lines) + "\n"

    lines = ["model," + _METRIC_HEADER]
    lines += [f"{m},{_metric_cells(result.models[m])}" for m in COMPARISON_MODELS]
    out["table8_models.csv"] = "\n".join(lines) + "\n"

    labels = result.correlation.labels
    lines = ["," + ",".join(labels)]
    for i, label in enumerate(labels):
        row = ",".join(_fmt(v) for v in result.correlation.matrix[i])
        lines.append(f"{label},{row}")
    out["correlation.csv"] = "\n".join(lines) + "\n"

    lines = ["atm_id,availability,mttf_s,mttr_s,reliability_24h"]
    rows = result.atm_kpis + [("fleet", result.fleet_kpi)]
    for atm_id, k in rows:
        lines.append(
            f"{atm_id},{_fmt(k.availability)},{_fmt(k.mttf_s)},{_fmt(k.mttr_s)},"
            f"{_fmt(k.reliability_at(RELIABILITY_HORIZON_S))}"
        )
    out["kpis.csv"] = "\n".join(lines) + "\n"

    return out


def write_reports(result: ExperimentResult, out_dir: str | Path) -> Path:
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    rendered = render_reports(result)
    hashes = {}
    for name in REPORT_FILES:
        content = rendered[name]
        with open(out_path / name, "w", newline="\n") as fh:
            fh.write(content)
        hashes[name] = hashlib.sha256(content.encode()).hexdigest()

    manifest = {
        "config": to_dict(result.config),
        "config_hash": result.config_hash,
        "seed": result.config.sim.seed,
        "counts": result.counts,
        "skipped_atms": result.skipped_atms,
        "ks_atm": result.ks_atm,
        "files": hashes,
    }
    content = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    with open(out_path / "manifest.json", "w", newline="\n") as fh:
        fh.write(content)
    return out_path


def run_and_write(config: ExperimentConfig, out_dir: str | Path) -> ExperimentResult:
    result = run_experiment(config)
    write_reports(result, out_dir)
    return result
