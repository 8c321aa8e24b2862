"""Command-line front end: each pipeline stage as a subcommand.

Stages compose through files (JSONL event streams, CSV datasets, JSON
model dumps), so any step can be rerun or swapped in isolation. Exit
codes: 0 on success, 1 for configuration problems, 2 for stage
failures, 3 when ``pipeline --check`` finds a broken bundle.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import txstat
from .balance import SmoteConfig, smote
from .config import ConfigError, load_config, profile
from .experiment import (
    REPORT_FILES,
    StageError,
    _fleet_kpi,
    _metric_cells,
    _METRIC_HEADER,
    evaluate_labels,
    render_reports,
    run_and_write,
)
from .features import Dataset, build_dataset, correlation_matrix, split_train_test
from .fusion import (
    PoolSpec,
    build_dsel,
    dcs_la_predict_batch,
    fit_stacking,
    knora_e_predict_batch,
    knora_e_select,
    nearest_neighbors,
    split_for_selection,
)
from .journal import (
    extract_truth,
    journal_from_world,
    read_journal,
    read_truth,
    write_journal,
    write_truth,
)
from .learners import (
    load_model,
    save_model,
    train_bagging,
    train_cat_like,
    train_lgbm_like,
    train_logreg,
    train_random_forest,
    train_svm,
    train_tree,
)
from .metrics import kpis
from .simnet import SimConfig, config_from_dict, read_world, simulate, write_world


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@contextlib.contextmanager
def _handled():
    """Map package exceptions onto the documented exit codes."""
    try:
        yield
    except ConfigError as exc:
        _fail(1, str(exc))
    except StageError as exc:
        _fail(2, str(exc))
    except (OSError, ValueError, KeyError) as exc:
        _fail(2, f"{type(exc).__name__}: {exc}")


def _parse_span(text: str, flag: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"{flag} expects 'start,end', got {text!r}")
    try:
        a, b = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"{flag} bounds must be numbers, got {text!r}") from None
    if not a < b:
        raise ConfigError(f"{flag} start must precede end")
    return a, b


def _ts_text(ts: float) -> str:
    return repr(int(ts)) if float(ts).is_integer() else repr(float(ts))


@click.group()
def main():
    """Out-of-service detection toolkit for simulated ATM fleets."""


# ---------------------------------------------------------------- simulate


def _load_sim_config(path) -> SimConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read sim config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"sim config is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("sim config root must be an object")
    if "sim" in payload and isinstance(payload["sim"], dict):
        payload = payload["sim"]  # full experiment configs work too
    try:
        return config_from_dict(payload)
    except Exception as exc:
        raise ConfigError(f"invalid sim config: {exc}") from exc


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON file mirroring the world settings (defaults apply when omitted).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def simulate_cmd(config_path, out_dir):
    """Generate a fleet and write its event streams."""
    with _handled():
        config = _load_sim_config(config_path) if config_path else SimConfig()
        world = simulate(config)
        write_world(world, out_dir)
        write_journal(journal_from_world(world), Path(out_dir) / "journal.jsonl")
        n_tx = sum(len(b) for b in world.transactions)
        n_snap = sum(len(b) for b in world.snapshots)
        click.echo(f"{len(world.atm_ids)} ATMs, {n_tx} transactions, "
                   f"{n_snap} snapshots -> {out_dir}")


main.add_command(simulate_cmd, name="simulate")


# ------------------------------------------------------------------- label


@main.command()
@click.option("--journal", "journal_path", type=click.Path(), required=True)
@click.option("--horizon", required=True, help="start,end epoch seconds")
@click.option("--out", "out_path", type=click.Path(), required=True)
def label(journal_path, horizon, out_path):
    """Fold an event journal into per-ATM up/down timelines."""
    with _handled():
        span = _parse_span(horizon, "--horizon")
        truth = extract_truth(read_journal(journal_path), span)
        write_truth(truth, out_path)
        n_out = sum(t.n_outages() for t in truth.values())
        click.echo(f"{len(truth)} ATMs, {n_out} outages -> {out_path}")


# ----------------------------------------------------------------- txstat


@main.group()
def txstat_group():
    """Transaction-gap statistics: detector fitting and family ranking."""


main.add_command(txstat_group, name="txstat")


def _read_transactions(path) -> dict[str, np.ndarray]:
    per_atm: dict[str, list[float]] = {}
    for line in Path(path).read_text().splitlines():
        d = json.loads(line)
        per_atm.setdefault(d["atm_id"], []).append(float(d["ts"]))
    return {a: np.sort(np.array(ts)) for a, ts in per_atm.items()}


def _num(v: float):
    return None if not math.isfinite(v) else v


def write_gap_states(states: dict, path, confidence: float, window) -> None:
    payload = {
        "confidence": confidence,
        "window": list(window) if window else None,
        "atms": {
            a: {
                "mean_interarrival_s": _num(s.mean_interarrival_s),
                "threshold_s": _num(s.threshold_s),
                "last_tx_ts": s.last_tx_ts,
                "fittable": s.fittable,
            }
            for a, s in sorted(states.items())
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_gap_states(path) -> dict[str, txstat.GapDetectorState]:
    payload = json.loads(Path(path).read_text())
    out = {}
    for atm_id, d in payload["atms"].items():
        out[atm_id] = txstat.GapDetectorState(
            atm_id=atm_id,
            mean_interarrival_s=d["mean_interarrival_s"] if d["mean_interarrival_s"] is not None else math.nan,
            threshold_s=d["threshold_s"] if d["threshold_s"] is not None else math.nan,
            last_tx_ts=d["last_tx_ts"],
            fittable=d["fittable"],
        )
    return out


@txstat_group.command("fit")
@click.option("--transactions", "tx_path", type=click.Path(), required=True)
@click.option("--truth", "truth_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--window", default=None, help="start,end fit window (default: whole horizon)")
@click.option("--confidence", default=0.99, show_default=True)
def txstat_fit(tx_path, truth_path, out_path, window, confidence):
    """Fit one inactivity detector per ATM from clean in-service gaps."""
    with _handled():
        span = _parse_span(window, "--window") if window else None
        truth = read_truth(truth_path)
        txs = _read_transactions(tx_path)
        for atm_id in truth:
            txs.setdefault(atm_id, np.empty(0))
        states = txstat.fit_per_atm(txs, truth, window=span, confidence=confidence)
        write_gap_states(states, out_path, confidence, span)
        n_unfit = sum(1 for s in states.values() if not s.fittable)
        click.echo(f"{len(states)} detectors ({n_unfit} unfittable) -> {out_path}")


@txstat_group.command("ks")
@click.option("--samples", "samples_path", type=click.Path(), required=True,
              help="gap lengths, comma or newline separated")
def txstat_ks(samples_path, **_):
    """Rank candidate inter-arrival families by KS distance (best first)."""
    with _handled():
        text = Path(samples_path).read_text()
        values = [float(v) for v in text.replace(",", "\n").split()]
        ranking = txstat.rank_families(values)
        click.echo("family,d_statistic")
        for family, d in ranking.entries:
            click.echo(f"{family},{d!r}")
        for family, reason in ranking.skipped.items():
            click.echo(f"note: {family} skipped: {reason}", err=True)


# --------------------------------------------------------------- features


@main.group()
def features_group():
    """Feature extraction: dataset assembly, correlation, selection split."""


main.add_command(features_group, name="features")


@features_group.command("build")
@click.option("--world", "world_dir", type=click.Path(), required=True)
@click.option("--gapstate", "gap_path", type=click.Path(), required=True)
@click.option("--truth", "truth_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--train", "train_path", type=click.Path(), default=None,
              help="also write the chronological train split here")
@click.option("--test", "test_path", type=click.Path(), default=None)
@click.option("--ratio", default=0.7, show_default=True)
def features_build(world_dir, gap_path, truth_path, out_path, train_path, test_path, ratio):
    """Assemble the labeled snapshot dataset from a simulated world."""
    with _handled():
        if (train_path is None) != (test_path is None):
            raise ConfigError("--train and --test must be given together")
        world = read_world(world_dir)
        snaps = {a: world.snapshots[i] for i, a in enumerate(world.atm_ids)}
        txs = {a: world.transactions[i].ts for i, a in enumerate(world.atm_ids)}
        states = read_gap_states(gap_path)
        truth = read_truth(truth_path)
        dataset = build_dataset(snaps, txs, states, truth, world.config.calendar())
        dataset.to_csv(out_path)
        msg = f"{len(dataset)} instances -> {out_path}"
        if train_path:
            train, test = split_train_test(dataset, ratio)
            train.to_csv(train_path)
            test.to_csv(test_path)
            msg += f" (train {len(train)}, test {len(test)})"
        click.echo(msg)


@features_group.command("corr")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="write here instead of stdout")
def features_corr(in_path, out_path):
    """Pearson correlation matrix over the feature columns."""
    with _handled():
        result = correlation_matrix(Dataset.from_csv(in_path))
        lines = ["," + ",".join(result.labels)]
        for i, lab in enumerate(result.labels):
            lines.append(lab + "," + ",".join(repr(float(v)) for v in result.matrix[i]))
        text = "\n".join(lines) + "\n"
        if out_path:
            Path(out_path).write_text(text)
            click.echo(f"{len(result.labels)} columns -> {out_path}")
        else:
            click.echo(text, nl=False)


@features_group.command("split")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--pool", "pool_path", type=click.Path(), required=True,
              help="member-training part")
@click.option("--dsel", "dsel_path", type=click.Path(), required=True,
              help="selection part")
@click.option("--fraction", default=0.33, show_default=True)
@click.option("--seed", default=0, show_default=True)
def features_split(in_path, pool_path, dsel_path, fraction, seed):
    """Stratified holdout of real rows for dynamic-selection methods."""
    with _handled():
        data = Dataset.from_csv(in_path)
        pool_part, dsel_part = split_for_selection(data, fraction, seed=seed)
        pool_part.to_csv(pool_path)
        dsel_part.to_csv(dsel_path)
        click.echo(f"pool {len(pool_part)} -> {pool_path}; dsel {len(dsel_part)} -> {dsel_path}")


# ---------------------------------------------------------------- balance


@main.command()
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--k", default=3, show_default=True)
@click.option("--ratio", default=1.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
def balance(in_path, out_path, k, ratio, seed):
    """Oversample the minority class; synthetic rows carry a flag column."""
    with _handled():
        data = Dataset.from_csv(in_path)
        balanced, origins = smote(data, SmoteConfig(k, ratio, seed=seed))
        balanced.to_csv(out_path, synthetic_column=True)
        click.echo(f"{len(data)} -> {len(balanced)} rows "
                   f"({len(origins)} synthetic) -> {out_path}")


# ------------------------------------------------------------------ train


_TRAINERS = {
    "svm": lambda X, y, seed, trees: train_svm(X, y),
    "tree": lambda X, y, seed, trees: train_tree(X, y),
    "bagging": lambda X, y, seed, trees: train_bagging(
        X, y, seed=seed, **({"n_trees": trees} if trees else {})),
    "rf": lambda X, y, seed, trees: train_random_forest(
        X, y, seed=seed, **({"n_trees": trees} if trees else {})),
    "lgbm": lambda X, y, seed, trees: train_lgbm_like(X, y),
    "cat": lambda X, y, seed, trees: train_cat_like(X, y),
    "logreg": lambda X, y, seed, trees: train_logreg(X, y),
}


@main.command()
@click.option("--model", "model_name", type=click.Choice(sorted(_TRAINERS)), required=True)
@click.option("--train", "train_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--seed", default=0, show_default=True,
              help="resampling seed for the randomized models")
@click.option("--trees", default=None, type=int,
              help="ensemble size for bagging/rf (defaults: 3 and 100)")
def train(model_name, train_path, out_path, seed, trees):
    """Fit one classifier on a dataset CSV and dump it as JSON."""
    with _handled():
        data = Dataset.from_csv(train_path)
        model = _TRAINERS[model_name](data.X, data.y, seed, trees)
        save_model(model, out_path)
        click.echo(f"{model_name} on {len(data)} rows -> {out_path}")


# ------------------------------------------------------------------- fuse


@main.command()
@click.option("--method", type=click.Choice(["dcs", "knorae", "stacking"]), required=True)
@click.option("--pool", "pool_paths", type=click.Path(), multiple=True,
              help="member model JSON (repeatable; unused by stacking)")
@click.option("--dsel", "dsel_path", type=click.Path(), required=True,
              help="selection set CSV; stacking trains its bases on these rows")
@click.option("--test", "test_path", type=click.Path(), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--k", default=7, show_default=True, help="selection neighborhood size")
@click.option("--seed", default=1, show_default=True, help="forest seed for stacking")
@click.option("--expand", is_flag=True,
              help="use each tree inside a bagged/forest model as its own member")
def fuse(method, pool_paths, dsel_path, test_path, out_path, k, seed, expand):
    """Combine classifiers on a test set and write per-row predictions."""
    with _handled():
        dsel_data = Dataset.from_csv(dsel_path)
        test = Dataset.from_csv(test_path)

        if method == "stacking":
            if pool_paths:
                click.echo("note: stacking refits its own bases; --pool ignored", err=True)
            stack = fit_stacking(dsel_data.X, dsel_data.y, rf_seed=seed)
            proba = stack.predict_proba(test.X)
            labels = (proba >= 0.5).astype(np.int8)
        else:
            if not pool_paths:
                raise ConfigError(f"{method} fusion needs at least one --pool model")
            members = []
            for p in pool_paths:
                model = load_model(p)
                inner = getattr(model, "trees", None)
                if expand and inner:
                    members.extend(inner)
                else:
                    members.append(model)
            pool = PoolSpec(members, k)
            dsel = build_dsel(members, dsel_data)
            neigh = nearest_neighbors(dsel.data.X, test.X, k)
            member_proba = np.column_stack([m.predict_proba(test.X) for m in members])
            if method == "dcs":
                labels = dcs_la_predict_batch(pool, dsel, test.X, neighbors=neigh)
                local = dsel.correctness[neigh, :].mean(axis=1)
                choice = np.argmax(local, axis=1)
                proba = member_proba[np.arange(len(test)), choice]
            else:
                labels = knora_e_predict_batch(pool, dsel, test.X, neighbors=neigh)
                sel = knora_e_select(pool, dsel, test.X, neighbors=neigh)
                member_up = np.column_stack([m.predict_label(test.X) for m in members]) == 1
                # vote share, so the written proba agrees with the majority label
                proba = (sel & member_up).sum(axis=1) / sel.sum(axis=1)

        with open(out_path, "w") as fh:
            fh.write("atm_id,ts,proba,label,truth\n")
            for i in range(len(test)):
                atm = "" if test.synthetic[i] else test.atm_id[i]
                ts = "" if test.synthetic[i] else _ts_text(test.ts[i])
                fh.write(f"{atm},{ts},{float(proba[i])!r},{int(labels[i])},{int(test.y[i])}\n")
        click.echo(f"{method} on {len(test)} rows -> {out_path}")


# ------------------------------------------------------------------- eval


def _read_predictions(path) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "atm_id,ts,proba,label,truth":
        raise ValueError(f"unexpected predictions header in {path}")
    labels = np.empty(len(lines) - 1, dtype=np.int8)
    truth = np.empty(len(lines) - 1, dtype=np.int8)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != 5:
            raise ValueError(f"malformed predictions row {i + 2} in {path}")
        labels[i] = int(parts[3])
        truth[i] = int(parts[4])
    return labels, truth


@main.command("eval")
@click.option("--pred", "pred_path", type=click.Path(), default=None,
              help="predictions CSV: classification metrics")
@click.option("--truth", "truth_path", type=click.Path(), default=None,
              help="truth timelines: availability/MTTF/MTTR table")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(pred_path, truth_path, out_path):
    """Score predictions, or compute service KPIs from truth timelines."""
    with _handled():
        if (pred_path is None) == (truth_path is None):
            raise ConfigError("give exactly one of --pred or --truth")
        if pred_path:
            labels, truth = _read_predictions(pred_path)
            ev = evaluate_labels(labels, truth)
            text = _METRIC_HEADER + "\n" + _metric_cells(ev) + "\n"
        else:
            timelines = read_truth(truth_path)
            lines = ["atm_id,availability,mttf_s,mttr_s,reliability_24h"]
            rows = [(a, kpis(t)) for a, t in sorted(timelines.items())]
            rows.append(("fleet", _fleet_kpi(list(timelines.values()))))
            for atm_id, k in rows:
                cells = [k.availability, k.mttf_s, k.mttr_s, k.reliability_at(86400.0)]
                lines.append(atm_id + "," + ",".join(
                    "" if v is None else repr(float(v)) for v in cells))
            text = "\n".join(lines) + "\n"
        if out_path:
            Path(out_path).write_text(text)
            click.echo(f"-> {out_path}")
        else:
            click.echo(text, nl=False)


# --------------------------------------------------------------- pipeline


def _check_bundle(result, out_dir: Path) -> list[str]:
    """Cheap self-checks on a freshly written report bundle."""
    problems = []
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.exists():
        return ["manifest.json missing"]
    manifest = json.loads(manifest_path.read_text())

    for name in REPORT_FILES:
        path = out_dir / name
        if not path.exists():
            problems.append(f"{name} missing")
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        if digest != manifest["files"].get(name):
            problems.append(f"{name}: content does not match its manifest hash")

    if render_reports(result) != render_reports(result):
        problems.append("report rendering is not deterministic")

    for name, ev in result.models.items():
        r = ev.report
        per_class = [v for v in (r.f1_down, r.f1_up) if v is not None]
        if per_class and abs(r.macro_f1 - sum(per_class) / len(per_class)) > 1e-12:
            problems.append(f"{name}: macro F1 is not the mean of per-class F1")

    for atm_id, k in result.atm_kpis + [("fleet", result.fleet_kpi)]:
        if k.mttr_s is None or not math.isfinite(k.mttf_s):
            continue
        identity = k.mttf_s / (k.mttf_s + k.mttr_s)
        if abs(k.availability - identity) > 1e-9:
            problems.append(f"kpi({atm_id}): availability breaks the MTTF/MTTR identity")

    return problems


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--profile", "profile_name", default=None,
              help="named preset ('default' or 'ci') instead of a config file")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--check", is_flag=True, help="verify the written bundle and exit 3 on failure")
def pipeline(config_path, profile_name, out_dir, check):
    """Run the whole experiment and write the report bundle."""
    with _handled():
        if config_path and profile_name:
            raise ConfigError("give either --config or --profile, not both")
        if config_path:
            config = load_config(config_path)
        else:
            config = profile(profile_name or "default")
        result = run_and_write(config, out_dir)
        click.echo(f"report bundle -> {out_dir} (config {result.config_hash[:12]})")
        if check:
            problems = _check_bundle(result, Path(out_dir))
            if problems:
                for p in problems:
                    click.echo(f"check failed: {p}", err=True)
                sys.exit(3)
            click.echo("check: ok")


if __name__ == "__main__":
    main()
