"""Versioned JSON persistence for trained models.

Every file carries ``format_version``, a ``kind`` tag, the
hyperparameters, and the fitted state with arrays as plain lists. Key
order is fixed so files diff cleanly; floats go through repr, so a
save/load cycle reproduces predictions exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .boosting import (
    LeafwiseGbdtModel,
    ObliviousGbdtModel,
    ObliviousStage,
    StageTree,
)
from .linear import LogisticModel, SvmModel
from .trees import BaggingModel, ForestModel, TreeModel

FORMAT_VERSION = 1


def _tree_state(t: TreeModel) -> dict:
    return {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
    }


def _tree_from_state(s: dict, n_features: int) -> TreeModel:
    return TreeModel(
        feature=np.asarray(s["feature"], dtype=np.int32),
        threshold=np.asarray(s["threshold"], dtype=np.float64),
        left=np.asarray(s["left"], dtype=np.int32),
        right=np.asarray(s["right"], dtype=np.int32),
        value=np.asarray(s["value"], dtype=np.float64),
        n_features=n_features,
    )


def model_to_dict(model) -> dict:
    if isinstance(model, SvmModel):
        kind = "svm"
        hyper = {"C": model.C}
        state = {
            "w": model.w.tolist(),
            "b": model.b,
            "n_features": model.n_features,
            "objective_path": model.objective_path.tolist(),
        }
    elif isinstance(model, LogisticModel):
        kind = "logreg"
        hyper = {"C": model.C}
        state = {"w": model.w.tolist(), "b": model.b, "n_features": model.n_features}
    elif isinstance(model, TreeModel):
        kind = "tree"
        hyper = {}
        state = dict(_tree_state(model), n_features=model.n_features)
    elif isinstance(model, BaggingModel):
        kind = "bagging"
        hyper = {"n_trees": len(model.trees)}
        state = {
            "trees": [_tree_state(t) for t in model.trees],
            "n_features": model.n_features,
        }
    elif isinstance(model, ForestModel):
        kind = "random_forest"
        hyper = {"n_trees": len(model.trees), "max_features": model.max_features}
        state = {
            "trees": [_tree_state(t) for t in model.trees],
            "n_features": model.n_features,
        }
    elif isinstance(model, LeafwiseGbdtModel):
        kind = "leafwise_gbdt"
        hyper = {"lr": model.lr, "n_rounds": len(model.stages)}
        state = {
            "base_score": model.base_score,
            "stages": [
                {
                    "feature": s.feature.tolist(),
                    "threshold": s.threshold.tolist(),
                    "left": s.left.tolist(),
                    "right": s.right.tolist(),
                    "value": s.value.tolist(),
                }
                for s in model.stages
            ],
            "train_loss": model.train_loss.tolist(),
            "n_features": model.n_features,
        }
    elif isinstance(model, ObliviousGbdtModel):
        kind = "oblivious_gbdt"
        hyper = {"lr": model.lr, "depth": model.depth, "n_iters": len(model.stages)}
        state = {
            "base_score": model.base_score,
            "stages": [
                {
                    "features": s.features.tolist(),
                    "thresholds": s.thresholds.tolist(),
                    "values": s.values.tolist(),
                }
                for s in model.stages
            ],
            "train_loss": model.train_loss.tolist(),
            "n_features": model.n_features,
        }
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, "kind": kind, "hyperparameters": hyper, "state": state}


def model_from_dict(payload: dict):
    if not isinstance(payload, dict) or "kind" not in payload:
        raise ValueError("not a model payload")
    if payload.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version: {payload.get('format_version')!r}")
    kind = payload["kind"]
    hyper = payload.get("hyperparameters", {})
    state = payload["state"]

    if kind == "svm":
        return SvmModel(
            w=np.asarray(state["w"], dtype=np.float64),
            b=float(state["b"]),
            C=float(hyper["C"]),
            n_features=int(state["n_features"]),
            objective_path=np.asarray(state.get("objective_path", []), dtype=np.float64),
        )
    if kind == "logreg":
        return LogisticModel(
            w=np.asarray(state["w"], dtype=np.float64),
            b=float(state["b"]),
            C=float(hyper["C"]),
            n_features=int(state["n_features"]),
        )
    if kind == "tree":
        return _tree_from_state(state, int(state["n_features"]))
    if kind == "bagging":
        n_features = int(state["n_features"])
        return BaggingModel(
            trees=[_tree_from_state(s, n_features) for s in state["trees"]],
            n_features=n_features,
        )
    if kind == "random_forest":
        n_features = int(state["n_features"])
        return ForestModel(
            trees=[_tree_from_state(s, n_features) for s in state["trees"]],
            n_features=n_features,
            max_features=int(hyper["max_features"]),
        )
    if kind == "leafwise_gbdt":
        stages = [
            StageTree(
                feature=np.asarray(s["feature"], dtype=np.int32),
                threshold=np.asarray(s["threshold"], dtype=np.float64),
                left=np.asarray(s["left"], dtype=np.int32),
                right=np.asarray(s["right"], dtype=np.int32),
                value=np.asarray(s["value"], dtype=np.float64),
            )
            for s in state["stages"]
        ]
        return LeafwiseGbdtModel(
            base_score=float(state["base_score"]),
            stages=stages,
            train_loss=np.asarray(state["train_loss"], dtype=np.float64),
            n_features=int(state["n_features"]),
            lr=float(hyper["lr"]),
        )
    if kind == "oblivious_gbdt":
        stages = [
            ObliviousStage(
                features=np.asarray(s["features"], dtype=np.int64),
                thresholds=np.asarray(s["thresholds"], dtype=np.float64),
                values=np.asarray(s["values"], dtype=np.float64),
            )
            for s in state["stages"]
        ]
        return ObliviousGbdtModel(
            base_score=float(state["base_score"]),
            depth=int(hyper["depth"]),
            stages=stages,
            train_loss=np.asarray(state["train_loss"], dtype=np.float64),
            n_features=int(state["n_features"]),
            lr=float(hyper["lr"]),
        )
    raise ValueError(f"unknown model kind: {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, separators=(",", ":"))
        f.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as f:
        return model_from_dict(json.load(f))
