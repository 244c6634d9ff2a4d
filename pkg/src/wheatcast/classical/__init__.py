"""Baseline forecasters: bagged regression trees, Gaussian process regression, ARIMA."""

from .arima import ArimaModel, arima_fit, arima_forecast, arima_forecast_from, arima_select_order
from .gpr import GprHyper, GprModel, gpr_fit, gpr_fit_windows, gpr_optimize, gpr_predict, gpr_predict_window
from .trees import BaggedTreesModel, TreeNode, bagged_fit, bagged_predict, tree_fit, tree_predict

__all__ = [
    "ArimaModel",
    "arima_fit",
    "arima_forecast",
    "arima_forecast_from",
    "arima_select_order",
    "GprHyper",
    "GprModel",
    "gpr_fit",
    "gpr_fit_windows",
    "gpr_optimize",
    "gpr_predict",
    "gpr_predict_window",
    "BaggedTreesModel",
    "TreeNode",
    "bagged_fit",
    "bagged_predict",
    "tree_fit",
    "tree_predict",
]
