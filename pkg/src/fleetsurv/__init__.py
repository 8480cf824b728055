"""Predictive-maintenance toolkit for bike-share fleets.

Converts trip and maintenance logs into censored survival datasets, fits and
tunes four survival model families, evaluates day-valued lifetime predictions
and explains them with Shapley attributions. A synthetic-fleet generator with
known ground-truth hazards backs the verification suite.
"""

__version__ = "0.1.0"

from .curves import SurvivalCurve, kaplan_meier, point_predict

__all__ = ["SurvivalCurve", "kaplan_meier", "point_predict", "__version__"]
