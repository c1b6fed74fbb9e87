"""Weibull model of lost-packet recovery delay.

``P[X < x] = 1 - exp(-(x / scale) ** shape)`` where the scale follows a power
law ``a_lambda / dR ** b_lambda`` and the shape a line ``a_kappa * dR + b_kappa``
in the redundancy margin ``dR = R - p``. The coefficients depend on the loss
pattern and on ``n``; they are calibrated from simulation and stored in a
plain-text table (see :class:`CalibrationTable`).
"""

import logging
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

log = logging.getLogger(__name__)

CALIBRATION_ENV = "TETRYS_CALIBRATION"
TABLE_COLUMNS = ("p", "b", "n", "a_lambda", "b_lambda", "a_kappa", "b_kappa")


class ModelInapplicable(ValueError):
    """Raised for a non-positive redundancy margin, where the model is undefined."""


@dataclass(frozen=True)
class WeibullParams:
    lam: float  # scale, ms
    kappa: float  # shape

    def __post_init__(self):
        if not (self.lam > 0 and self.kappa > 0):
            raise ValueError(f"Weibull parameters must be positive, got {self}")


@dataclass(frozen=True)
class CoefficientEntry:
    p: float
    b: float
    n: int
    a_lambda: float
    b_lambda: float
    a_kappa: float
    b_kappa: float


def weibull_cdf(x, params):
    if x <= 0:
        return 0.0
    return 1.0 - math.exp(-((x / params.lam) ** params.kappa))


def params_for(delta_r, entry, min_shape=0.05):
    """Weibull parameters at margin ``delta_r`` for one calibrated entry.

    The linear shape law can cross zero when extrapolated far outside the
    calibrated margins; the shape is floored at ``min_shape`` there.
    """
    if delta_r <= 0:
        raise ModelInapplicable(f"redundancy margin {delta_r:.4f} <= 0")
    lam = entry.a_lambda / delta_r ** entry.b_lambda
    kappa = max(entry.a_kappa * delta_r + entry.b_kappa, min_shape)
    return WeibullParams(lam, kappa)


def _shape_equation(k, lx, mean_lx):
    # d/dk of the profile log-likelihood, divided by n; increasing in k
    w = np.exp(k * (lx - lx.max()))
    s = w.sum()
    return (w * lx).sum() / s - 1.0 / k - mean_lx


class WeibullFitter(BaseEstimator):
    """Maximum-likelihood two-parameter Weibull fit.

    The shape solves the profile-likelihood equation by safeguarded Newton
    iteration (bisection fallback inside a sign-changing bracket); the scale
    then follows in closed form.

    Parameters
    ----------
    tol : float
        Convergence tolerance on the shape.
    max_iter : int
        Iteration cap for the shape solve.
    """

    def __init__(self, tol=1e-10, max_iter=200):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        x = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=2).ravel()
        if np.any(x <= 0):
            raise ValueError("Weibull samples must be strictly positive")
        # scale-free solve on x / median keeps exponentials in range
        ref = float(np.median(x))
        lx = np.log(x / ref)
        if np.ptp(lx) == 0:
            raise ValueError("all samples are identical; shape is unbounded")
        mean_lx = lx.mean()
        lo, hi = 1e-3, 1.0
        while _shape_equation(hi, lx, mean_lx) < 0:
            lo, hi = hi, hi * 2
            if hi > 1e6:
                raise ValueError("shape diverged")
        k = 0.5 * (lo + hi)
        for _ in range(self.max_iter):
            f = _shape_equation(k, lx, mean_lx)
            if f > 0:
                hi = k
            else:
                lo = k
            w = np.exp(k * (lx - lx.max()))
            s = w.sum()
            m1 = (w * lx).sum() / s
            m2 = (w * lx * lx).sum() / s
            fp = m2 - m1 * m1 + 1.0 / (k * k)
            step = k - f / fp
            k_new = step if lo < step < hi else 0.5 * (lo + hi)
            if abs(k_new - k) < self.tol * max(1.0, k):
                k = k_new
                break
            k = k_new
        self.shape_ = float(k)
        self.scale_ = float(ref * np.mean(np.exp(k * lx)) ** (1.0 / k))
        self.n_samples_ = x.size
        return self

    @property
    def params_(self):
        check_is_fitted(self, "shape_")
        return WeibullParams(self.scale_, self.shape_)

    def cdf(self, x):
        check_is_fitted(self, "shape_")
        x = np.clip(np.asarray(x, dtype=float), 0, None)
        return 1.0 - np.exp(-((x / self.scale_) ** self.shape_))

    def ks_distance(self, X):
        """Kolmogorov-Smirnov distance between the fit and the samples ``X``."""
        x = np.sort(np.asarray(X, dtype=float).ravel())
        n = x.size
        f = self.cdf(x)
        d_plus = np.max(np.arange(1, n + 1) / n - f)
        d_minus = np.max(f - np.arange(0, n) / n)
        return float(max(d_plus, d_minus))

    def score(self, X, y=None):
        """Mean log-likelihood of ``X`` under the fitted distribution."""
        x = np.asarray(X, dtype=float).ravel()
        k, lam = self.shape_, self.scale_
        z = x / lam
        return float(np.mean(np.log(k / lam) + (k - 1) * np.log(z) - z ** k))


class MarginCurveRegressor(BaseEstimator):
    """Fits the scale power law and the shape line across redundancy margins.

    ``fit(X, y)`` takes margins ``X`` of shape (n, 1) and targets ``y`` of
    shape (n, 2) holding (scale, shape) per margin; the power law is a
    least-squares line in log-log space, the shape law an ordinary one.
    """

    def fit(self, X, y):
        X = check_array(X, ensure_min_samples=1)
        y = check_array(y, ensure_min_samples=1)
        dr = X[:, 0]
        if np.any(dr <= 0):
            raise ValueError("margins must be positive")
        lam, kappa = y[:, 0], y[:, 1]
        if dr.size == 1 or np.ptp(dr) == 0:
            # a single margin pins the level only; keep the inverse-proportional default
            self.b_lambda_ = 1.0
            self.a_lambda_ = float(np.exp(np.mean(np.log(lam) + np.log(dr))))
            self.a_kappa_ = 0.0
            self.b_kappa_ = float(np.mean(kappa))
            return self
        slope, icpt = np.polyfit(np.log(dr), np.log(lam), 1)
        self.b_lambda_ = float(-slope)
        self.a_lambda_ = float(np.exp(icpt))
        a_k, b_k = np.polyfit(dr, kappa, 1)
        self.a_kappa_ = float(a_k)
        self.b_kappa_ = float(b_k)
        return self

    def predict(self, X):
        check_is_fitted(self, "a_lambda_")
        dr = check_array(X)[:, 0]
        return np.column_stack([self.a_lambda_ / dr ** self.b_lambda_,
                                self.a_kappa_ * dr + self.b_kappa_])


class CalibrationTable:
    """Calibrated coefficient entries with nearest-neighbour lookup.

    ``t_ms`` is the source inter-packet time of the calibration runs; the
    runtime rescales the delay scale by ``T_observed / t_ms``.
    """

    def __init__(self, entries, t_ms=None):
        self.entries = list(entries)
        self.t_ms = t_ms

    def __len__(self):
        return len(self.entries)

    def lookup(self, p, b, n):
        cands = [e for e in self.entries if e.n == n]
        if not cands:
            raise KeyError(f"no calibration entry for n={n}")
        # p in percent points against b in packets: comparable units
        return min(cands, key=lambda e: ((e.p - p) * 100) ** 2 + (e.b - b) ** 2)

    def dumps(self):
        lines = ["# " + " ".join(TABLE_COLUMNS)]
        if self.t_ms is not None:
            lines.append(f"# t_ms={self.t_ms!r}")
        for e in self.entries:
            lines.append(f"{e.p!r} {e.b!r} {e.n} {e.a_lambda!r} {e.b_lambda!r} "
                         f"{e.a_kappa!r} {e.b_kappa!r}")
        return "\n".join(lines) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text):
        entries, t_ms = [], None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("t_ms="):
                    t_ms = float(body[5:])
                continue
            parts = line.split()
            if len(parts) != len(TABLE_COLUMNS):
                raise ValueError(f"line {lineno}: expected {len(TABLE_COLUMNS)} fields")
            p, b, n, *coef = parts
            entries.append(CoefficientEntry(float(p), float(b), int(n), *map(float, coef)))
        return cls(entries, t_ms)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read())

    @classmethod
    def default(cls):
        path = os.environ.get(CALIBRATION_ENV)
        if path:
            return cls.load(path)
        text = resources.files("tetrys.data").joinpath("calibration.txt").read_text()
        return cls.loads(text)
