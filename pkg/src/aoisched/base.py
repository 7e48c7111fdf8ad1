"""Estimator-style base class for schedulers."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_scenario, check_zeta


class BaseScheduler(BaseEstimator):
    """Schedulers follow the scikit-learn estimator conventions.

    ``fit(scenario)`` solves (or trains on) a scenario and stores the
    outcome in ``result_``; constructor arguments are exposed through
    ``get_params``/``set_params`` so schedulers can be cloned and swept.
    """

    def _validate(self, scenario):
        check_zeta(self.zeta)
        return check_scenario(scenario)

    def fit(self, scenario, y=None):
        raise NotImplementedError

    def fit_predict(self, scenario, y=None):
        """Fit and return the (T, V) assignment schedule."""
        return self.fit(scenario).schedule_

    @property
    def schedule_(self):
        check_is_fitted(self, "result_")
        return self.result_.schedule

    @property
    def powers_(self):
        check_is_fitted(self, "result_")
        return self.result_.powers

    @property
    def objective_(self) -> float:
        check_is_fitted(self, "result_")
        return self.result_.objective

    def score(self, scenario, y=None) -> float:
        """Negated objective of the fitted schedule (higher is better)."""
        return -self.fit(scenario).objective_
