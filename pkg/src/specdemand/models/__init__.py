"""White-box and black-box regressors plus validation helpers."""

import json

from .evaluation import DataSet, Metrics, Split, evaluate, holdout_windows, season_matched_window, temporal_split
from .linear import LinearModel, fit_lasso, fit_ols, lambda_max, lasso_objective, soft_threshold
from .trees import Tree, TreeEnsemble, best_split, fit_forest, fit_gbm, fit_tree


def model_to_json(model):
    return json.dumps(model.to_dict(), indent=2, sort_keys=True)


def model_from_dict(d):
    if d.get("type") == "linear":
        return LinearModel.from_dict(d)
    if d.get("type") == "tree_ensemble":
        return TreeEnsemble.from_dict(d)
    raise ValueError(f"unknown model type {d.get('type')!r}")


__all__ = [
    "DataSet", "LinearModel", "Metrics", "Split", "Tree", "TreeEnsemble", "best_split",
    "evaluate", "fit_forest", "holdout_windows", "fit_gbm", "fit_lasso", "fit_ols", "fit_tree", "lambda_max",
    "lasso_objective", "model_from_dict", "model_to_json", "season_matched_window",
    "soft_threshold", "temporal_split",
]
