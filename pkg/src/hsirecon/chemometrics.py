"""Reference values, dataset splits, NIPALS PLS regression and its metrics."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y

from ._validation import check_matrix


@dataclass(eq=False)
class SpectraTable:
    """N samples x B wavelengths with ids and reference values."""

    ids: list
    X: np.ndarray
    y: np.ndarray
    wavelengths: np.ndarray

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.X = check_matrix(self.X)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64).ravel()
        n = self.X.shape[0]
        if len(self.ids) != n or self.y.size != n:
            raise ValueError(
                f"row counts disagree: {len(self.ids)} ids, {n} spectra, {self.y.size} values"
            )
        if self.wavelengths.size != self.X.shape[1]:
            raise ValueError(
                f"{self.wavelengths.size} wavelengths for {self.X.shape[1]} columns"
            )
        if not np.all(np.isfinite(self.y)):
            raise ValueError("reference values contain NaN")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_bands(self):
        return self.X.shape[1]

    def subset(self, rows=None, columns=None):
        rows = np.arange(len(self)) if rows is None else np.asarray(rows)
        columns = np.arange(self.n_bands) if columns is None else np.asarray(columns)
        return SpectraTable(
            [self.ids[i] for i in rows],
            self.X[np.ix_(rows, columns)],
            self.y[rows],
            self.wavelengths[columns],
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "y"] + [repr(float(w)) for w in self.wavelengths])
            for sid, yv, row in zip(self.ids, self.y, self.X):
                writer.writerow([sid, repr(float(yv))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["id", "y"]:
            raise ValueError(f"{path}: expected header starting with 'id,y'")
        wavelengths = [float(v) for v in rows[0][2:]]
        body = rows[1:]
        X = np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), len(wavelengths))
        return cls([r[0] for r in body], X, [float(r[1]) for r in body], wavelengths)


def dry_matter_percent(w_dry, w_total):
    """Dry matter content in percent: ``100 * w_dry / w_total``."""
    if w_total <= 0:
        raise ValueError(f"total weight must be positive, got {w_total}")
    if not 0 <= w_dry <= w_total:
        raise ValueError(f"dry weight {w_dry} outside [0, {w_total}]")
    return 100.0 * w_dry / w_total


@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    @property
    def sizes(self):
        return len(self.train), len(self.validation), len(self.test)


def largest_remainder(n, ratios):
    """Integer sizes summing to ``n``, proportional to ``ratios`` (Hamilton rounding)."""
    quotas = np.asarray(ratios, dtype=np.float64) * n
    sizes = np.floor(quotas).astype(int)
    remainder = quotas - sizes
    # stable sort keeps earlier parts first on equal remainders
    order = np.argsort(-remainder, kind="stable")
    for i in order[: n - sizes.sum()]:
        sizes[i] += 1
    return tuple(int(s) for s in sizes)


def random_split(n, ratios=(0.6, 0.2, 0.2), seed=0):
    """Seeded random train/validation/test partition of ``range(n)``."""
    if n < 3:
        raise ValueError(f"need at least 3 samples to split, got {n}")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three fractions summing to 1, got {ratios}")
    n_train, n_val, _ = largest_remainder(n, ratios)
    perm = np.random.default_rng(seed).permutation(n)
    return SplitAssignment(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
    )


class PLSRegression(RegressorMixin, BaseEstimator):
    """Single-response PLS regression fitted with NIPALS.

    Parameters
    ----------
    n_components : int
        Number of latent variables requested.
    scale : bool
        Autoscale columns to unit variance before fitting (centering is always done).
    tol : float
        Convergence tolerance on the change of the X weight vector.
    max_iter : int
        Inner NIPALS iterations allowed per component.

    Attributes
    ----------
    x_mean_, x_scale_ : ndarray of shape (n_features,)
    y_mean_ : float
    coef_ : ndarray of shape (n_features,)
        Coefficients in the original (unscaled) X units.
    coef_path_ : ndarray of shape (n_components_, n_features)
        ``coef_path_[a - 1]`` holds the coefficients using the first ``a`` LVs.
    n_components_ : int
        Latent variables actually extracted; lower than requested when X or y
        is exhausted before ``n_components``.
    x_weights_, x_loadings_, x_scores_, y_loadings_
        NIPALS diagnostics (W, P, T, q).
    """

    def __init__(self, n_components=2, scale=False, tol=1e-10, max_iter=500):
        self.n_components = n_components
        self.scale = scale
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        n, p = X.shape
        limit = min(n - 1, p)
        if not 1 <= self.n_components <= limit:
            raise ValueError(
                f"n_components={self.n_components} must lie in [1, min(N-1, B)={limit}]"
            )
        self.x_mean_ = X.mean(axis=0)
        self.y_mean_ = float(y.mean())
        if self.scale:
            sd = X.std(axis=0, ddof=1)
            self.x_scale_ = np.where(sd > 0, sd, 1.0)
        else:
            self.x_scale_ = np.ones(p)
        Xa = (X - self.x_mean_) / self.x_scale_
        ya = y - self.y_mean_

        x_norm0 = np.linalg.norm(Xa)
        y_norm0 = np.linalg.norm(ya)
        W, P, T, q = [], [], [], []
        for _ in range(self.n_components):
            if np.linalg.norm(Xa) <= 1e-12 * max(x_norm0, 1e-300):
                break
            if np.linalg.norm(ya) <= 1e-12 * max(y_norm0, 1e-300):
                break
            u = ya.copy()
            w_old = None
            for _ in range(self.max_iter):
                w = Xa.T @ u
                w_norm = np.linalg.norm(w)
                if w_norm <= 1e-12 * max(x_norm0 * y_norm0, 1e-300):
                    w = None
                    break
                w /= w_norm
                t = Xa @ w
                qa = float(ya @ t) / float(t @ t)
                u = ya * (1.0 / qa) if qa != 0 else ya
                if w_old is not None and np.linalg.norm(w - w_old) < self.tol:
                    break
                w_old = w
            if w is None:
                break
            t = Xa @ w
            tt = float(t @ t)
            p_load = Xa.T @ t / tt
            qa = float(ya @ t) / tt
            Xa = Xa - np.outer(t, p_load)
            ya = ya - qa * t
            W.append(w)
            P.append(p_load)
            T.append(t)
            q.append(qa)

        self.n_components_ = len(W)
        if self.n_components_ < self.n_components:
            warnings.warn(
                f"PLS stopped after {self.n_components_} of {self.n_components} "
                "latent variables (rank exhausted)",
                RuntimeWarning,
                stacklevel=2,
            )
        self.x_weights_ = np.array(W).T.reshape(p, -1)
        self.x_loadings_ = np.array(P).T.reshape(p, -1)
        self.x_scores_ = np.array(T).T.reshape(n, -1)
        self.y_loadings_ = np.array(q)
        self.coef_path_ = self._coefficient_path()
        self.coef_ = self.coef_path_[-1] if self.n_components_ else np.zeros(p)
        return self

    def _coefficient_path(self):
        W, P, q = self.x_weights_, self.x_loadings_, self.y_loadings_
        path = []
        for a in range(1, self.n_components_ + 1):
            R = W[:, :a] @ np.linalg.inv(P[:, :a].T @ W[:, :a])
            path.append((R @ q[:a]) / self.x_scale_)
        return np.array(path).reshape(self.n_components_, W.shape[0])

    def predict(self, X, n_components=None):
        """Predict ``y_mean + (X - x_mean) @ coef``; optionally with fewer LVs."""
        check_is_fitted(self, "coef_")
        X = check_matrix(X, self.x_mean_.size)
        coef = self.coef_
        if n_components is not None and self.n_components_:
            coef = self.coef_path_[min(n_components, self.n_components_) - 1]
        return self.y_mean_ + (X - self.x_mean_) @ coef

    def predict_path(self, X):
        """Predictions for every LV count, shape ``(n_components_, n_samples)``."""
        check_is_fitted(self, "coef_")
        X = check_matrix(X, self.x_mean_.size)
        return self.y_mean_ + self.coef_path_ @ (X - self.x_mean_).T

    # plain-text persistence

    def save(self, path):
        check_is_fitted(self, "coef_")
        vec = lambda a: " ".join(repr(float(v)) for v in np.ravel(a))  # noqa: E731
        lines = [
            "model = plsr",
            f"n_components = {self.n_components}",
            f"n_components_ = {self.n_components_}",
            f"scale = {int(bool(self.scale))}",
            f"n_features = {self.x_mean_.size}",
            f"y_mean = {self.y_mean_!r}",
            f"x_mean = {vec(self.x_mean_)}",
            f"x_scale = {vec(self.x_scale_)}",
            f"coef = {vec(self.coef_)}",
        ]
        for a, row in enumerate(self.coef_path_, start=1):
            lines.append(f"coef_lv{a} = {vec(row)}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        fields = {}
        for line in Path(path).read_text().splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                fields[k.strip()] = v.strip()
        if fields.get("model") != "plsr":
            raise ValueError(f"{path}: not a PLSR model file")
        vec = lambda s: np.array([float(v) for v in s.split()])  # noqa: E731
        model = cls(n_components=int(fields["n_components"]), scale=bool(int(fields["scale"])))
        model.n_components_ = int(fields["n_components_"])
        model.y_mean_ = float(fields["y_mean"])
        model.x_mean_ = vec(fields["x_mean"])
        model.x_scale_ = vec(fields["x_scale"])
        model.coef_ = vec(fields["coef"])
        model.coef_path_ = np.array(
            [vec(fields[f"coef_lv{a}"]) for a in range(1, model.n_components_ + 1)]
        ).reshape(model.n_components_, -1)
        return model


def fit_plsr(table, n_lv, scale=False):
    """Fit a :class:`PLSRegression` with ``n_lv`` latent variables on a table."""
    return PLSRegression(n_components=n_lv, scale=scale).fit(table.X, table.y)


def predict_plsr(model, X):
    return model.predict(X)


def _check_max_lv(max_lv, n_train, n_features):
    limit = min(n_train - 1, n_features)
    if not 1 <= max_lv <= limit:
        raise ValueError(f"max_lv={max_lv} outside [1, {limit}]")


def cv_rmse_path(X, y, folds, max_lv, scale=False):
    """RMSE of held-out predictions for LV counts 1..max_lv over given folds.

    ``folds`` is a sequence of held-out index arrays. LV counts beyond what a
    fold's model could extract reuse its last available coefficients.
    """
    n = len(y)
    pred = np.zeros((max_lv, n))
    for held in folds:
        keep = np.setdiff1d(np.arange(n), held)
        lv = min(max_lv, len(keep) - 1, X.shape[1])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            model = PLSRegression(n_components=lv, scale=scale).fit(X[keep], y[keep])
        path = model.predict_path(X[held]) if model.n_components_ else None
        for a in range(max_lv):
            if path is None:
                pred[a, held] = model.y_mean_
            else:
                pred[a, held] = path[min(a, model.n_components_ - 1)]
    return np.sqrt(np.mean((pred - y) ** 2, axis=1))


def select_lv_loocv(table, max_lv, scale=False):
    """Leave-one-out RMSECV for 1..max_lv latent variables.

    Returns ``(best_lv, rmsecv)`` where ``rmsecv[a - 1]`` belongs to ``a`` LVs and
    ``best_lv`` is the smallest LV count within 1e-12 of the minimum.
    """
    n = len(table)
    if n < 3:
        raise ValueError(f"LOOCV needs at least 3 samples, got {n}")
    _check_max_lv(max_lv, n - 1, table.n_bands)
    folds = [np.array([i]) for i in range(n)]
    rmsecv = cv_rmse_path(table.X, table.y, folds, max_lv, scale=scale)
    best = int(np.flatnonzero(rmsecv <= rmsecv.min() + 1e-12)[0]) + 1
    return best, rmsecv


def regression_metrics(y, y_hat):
    """Coefficient of determination and RMSE."""
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.size != y_hat.size or y.size < 2:
        raise ValueError("y and y_hat must have equal length >= 2")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("reference values have zero variance; R^2 is undefined")
    ss_res = float(np.sum((y - y_hat) ** 2))
    return {"r2": 1.0 - ss_res / ss_tot, "rmse": float(np.sqrt(ss_res / y.size))}


def rpd(y_test, rmsep):
    """Ratio of performance to deviation: sample SD of ``y_test`` over RMSEP."""
    if rmsep <= 0:
        raise ValueError(f"rmsep must be positive, got {rmsep}")
    return float(np.std(np.asarray(y_test, dtype=np.float64), ddof=1) / rmsep)


TABLE_COLUMNS = ("LV", "R2c", "RMSEC", "R2v", "RMSEV", "R2p", "RMSEP", "RPD")


def evaluate_splits(model, table, split):
    """Table-1-style row: LV count, R2/RMSE on each split and RPD on the test split."""
    row = {"LV": model.n_components_}
    for tag, idx in (("c", split.train), ("v", split.validation), ("p", split.test)):
        m = regression_metrics(table.y[idx], model.predict(table.X[idx]))
        row["R2" + tag] = m["r2"]
        row["RMSE" + tag.upper()] = m["rmse"]
    row["RPD"] = rpd(table.y[split.test], row["RMSEP"])
    return row
