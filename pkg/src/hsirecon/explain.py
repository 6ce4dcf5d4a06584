"""Exact Shapley attributions for affine regression models."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix


def _coefficients(model):
    coef = getattr(model, "coef_", None)
    if coef is None:
        raise ValueError("model has no coef_; fit it first")
    return np.asarray(coef, dtype=np.float64).ravel()


def _check_background(background, n_features):
    background = check_matrix(background, n_features, "background")
    if background.shape[0] == 0:
        raise ValueError("background set is empty")
    return background


def linear_shap(model, background, x):
    """Shapley values of an affine model: ``coef * (x - background.mean(0))``.

    With independent features the value function of a coalition is linear in
    the features it fixes, so this closed form is exact. ``x`` may be one
    sample (returns a vector) or a matrix (returns one row per sample).
    """
    coef = _coefficients(model)
    background = _check_background(background, coef.size)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = check_matrix(np.atleast_2d(x), coef.size, "x")
    phi = coef * (x - background.mean(axis=0))
    return phi[0] if single else phi


def base_value(model, background):
    """Expected model output over the background rows."""
    background = _check_background(background, _coefficients(model).size)
    return float(np.mean(model.predict(background)))


def rank_importance(importance, wavelengths):
    """Indices sorted by importance descending, ties by wavelength ascending."""
    importance = np.asarray(importance, dtype=np.float64)
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    return np.lexsort((wavelengths, -importance))


@dataclass
class ShapReport:
    wavelengths: np.ndarray
    values: np.ndarray
    base_value: float
    importance: np.ndarray
    ranking: np.ndarray

    def ranked(self):
        """``(wavelength, mean |phi|)`` pairs, most important first."""
        return [(float(self.wavelengths[i]), float(self.importance[i])) for i in self.ranking]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rank", "wavelength", "mean_abs_shap"])
            for r, (wl, imp) in enumerate(self.ranked(), start=1):
                writer.writerow([r, repr(wl), repr(imp)])

    def write_svg(self, path, top=None):
        from .viz import bar_chart_svg

        pairs = self.ranked()[:top] if top else self.ranked()
        labels = [f"{wl:g} nm" for wl, _ in pairs]
        bar_chart_svg(labels, [imp for _, imp in pairs], path, title="mean |SHAP|")


def mean_abs_shap(model, background, eval_set, wavelengths=None):
    """Attributions for ``eval_set`` and their mean-|phi| ranking."""
    eval_set = np.atleast_2d(np.asarray(eval_set, dtype=np.float64))
    if eval_set.shape[0] == 0:
        raise ValueError("evaluation set is empty")
    phi = linear_shap(model, background, eval_set)
    if wavelengths is None:
        wavelengths = np.arange(phi.shape[1], dtype=np.float64)
    importance = np.abs(phi).mean(axis=0)
    return ShapReport(
        wavelengths=np.asarray(wavelengths, dtype=np.float64),
        values=phi,
        base_value=base_value(model, background),
        importance=importance,
        ranking=rank_importance(importance, wavelengths),
    )


class LinearShapExplainer(BaseEstimator):
    """``fit`` stores the background mean; ``shap_values`` explains new rows.

    ``model`` is any fitted affine regressor exposing ``coef_`` and
    ``predict`` (for instance :class:`~hsirecon.chemometrics.PLSRegression`).
    """

    def __init__(self, model=None):
        self.model = model

    def fit(self, X, y=None):
        X = _check_background(X, _coefficients(self.model).size)
        self.background_ = X
        self.background_mean_ = X.mean(axis=0)
        self.expected_value_ = base_value(self.model, X)
        return self

    def shap_values(self, X):
        check_is_fitted(self, "background_")
        return linear_shap(self.model, self.background_, X)

    def explain(self, X, wavelengths=None):
        check_is_fitted(self, "background_")
        return mean_abs_shap(self.model, self.background_, X, wavelengths)
