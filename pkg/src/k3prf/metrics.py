"""Out-of-sample R-squared anchored at the training mean."""

import numpy as np

from .errors import InvalidInputError


def oos_r2(actual, forecast, train_mean) -> float:
    actual = np.asarray(actual, dtype=float).ravel()
    forecast = np.asarray(forecast, dtype=float).ravel()
    if actual.size == 0 or actual.shape != forecast.shape:
        raise InvalidInputError("actual and forecast must have equal nonzero length")
    sst = float(((actual - train_mean) ** 2).sum())
    if sst == 0.0:
        raise InvalidInputError("zero denominator: actual equals the training mean everywhere")
    return 1.0 - float(((actual - forecast) ** 2).sum()) / sst
