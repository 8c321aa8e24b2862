"""From-scratch classifiers sharing one predict interface.

Every model exposes ``predict_proba`` (probability of the in-service class)
and ``predict_label`` (1 at probability >= 0.5; the margin classifier uses
the sign of its decision value, which agrees with its squashed probability).
"""

from .boosting import (
    LeafwiseGbdtModel,
    ObliviousGbdtModel,
    train_cat_like,
    train_lgbm_like,
)
from .io import load_model, model_from_dict, model_to_dict, save_model
from .linear import (
    LogisticModel,
    SvmModel,
    logreg_gradient,
    logreg_objective,
    svm_gradient,
    svm_objective,
    train_logreg,
    train_svm,
)
from .trees import (
    BaggingModel,
    ForestModel,
    TreeModel,
    train_bagging,
    train_random_forest,
    train_tree,
)

__all__ = [
    "BaggingModel",
    "ForestModel",
    "LeafwiseGbdtModel",
    "LogisticModel",
    "ObliviousGbdtModel",
    "SvmModel",
    "TreeModel",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict_label",
    "predict_proba",
    "save_model",
    "train_bagging",
    "train_cat_like",
    "train_lgbm_like",
    "train_logreg",
    "train_random_forest",
    "train_svm",
    "train_tree",
    "logreg_gradient",
    "logreg_objective",
    "svm_gradient",
    "svm_objective",
]


def predict_proba(model, X):
    """Probability of the in-service class for each row of ``X``."""
    return model.predict_proba(X)


def predict_label(model, X):
    """Hard 0/1 labels for each row of ``X``."""
    return model.predict_label(X)
