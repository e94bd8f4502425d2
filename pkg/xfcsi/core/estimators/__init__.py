from __future__ import annotations

from typing import Callable, Dict

from .base import ChannelEstimator, EstimateContext, EstimateResult
from .flow import make_estimator as _flow
from .knn import make_estimator as _knn
from .lasso import make_estimator as _lasso
from .ls import make_estimator as _ls


_FACTORIES: Dict[str, Callable[..., ChannelEstimator]] = {
    "flow": _flow,
    "ls": _ls,
    "lasso": _lasso,
    "knn": _knn,
}

_DISPLAY = {
    "flow": "Cross-modal flow",
    "ls": "Least squares",
    "lasso": "LASSO (ISTA)",
    "knn": "IDW KNN (location)",
}


def get_estimator(method_id: str, **kwargs) -> ChannelEstimator:
    """
    Build an estimator; keyword arguments a factory does not use are ignored,
    so callers can pass one shared bag (bundle, db, k, ...).
    """
    if method_id not in _FACTORIES:
        raise KeyError(f"Unknown method_id: {method_id}")
    return _FACTORIES[method_id](**kwargs)


def list_estimators() -> Dict[str, str]:
    """method_id -> display_name"""
    return dict(_DISPLAY)


__all__ = [
    "ChannelEstimator",
    "EstimateContext",
    "EstimateResult",
    "get_estimator",
    "list_estimators",
]
