"""Fits for logical failure rate data: sub-threshold ansatz, cross thresholds,
finite-size extrapolation, long-term threshold and basis bias.

Sub-threshold ansatz (per round)::

    pfail / T = alpha * (p / p_star) ** (beta * (d - d0) + eta)

so that ``log(pfail / T) = G(d) log p + C(d)`` with
``G(d) = beta (d - d0) + eta`` and
``C(d) = -beta log(p_star) (d - d0) + log(alpha) - eta log(p_star)``.

Long-term threshold::

    px(T) = px_LT * (1 - (1 - px(1) / px_LT) * T ** -gamma)
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.optimize import brentq, least_squares

__all__ = [
    "FitError",
    "NoCrossingError",
    "LinearFit",
    "AnsatzFit",
    "ThresholdEstimate",
    "linear_fit",
    "fit_subthreshold",
    "find_crossing",
    "extrapolate_threshold",
    "longterm_model",
    "fit_longterm",
    "bias",
    "bias_interval",
    "fit_report",
]

CONFIDENCE = 0.95
LM_TOL = 1e-12
LM_MAX_EVAL = 10**4


class FitError(ValueError):
    """Input is insufficient or degenerate for the requested fit."""


class NoCrossingError(FitError):
    pass


@dataclass(frozen=True)
class LinearFit:
    """OLS line ``y = slope * x + intercept`` with t-interval half-widths."""

    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    n: int
    confidence: float = CONFIDENCE

    @property
    def _t(self) -> float:
        return float(stats.t.ppf(0.5 + self.confidence / 2, self.n - 2)) if self.n > 2 else math.inf

    @property
    def slope_ci(self) -> tuple[float, float]:
        h = self._t * self.slope_se if self.slope_se else 0.0
        return self.slope - h, self.slope + h

    @property
    def intercept_ci(self) -> tuple[float, float]:
        h = self._t * self.intercept_se if self.intercept_se else 0.0
        return self.intercept - h, self.intercept + h

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def linear_fit(x, y, confidence: float = CONFIDENCE) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.ptp(x) == 0:
        raise FitError("a line needs at least two distinct x values")
    r = stats.linregress(x, y)
    if len(x) > 2:
        slope_se, icpt_se = float(r.stderr), float(r.intercept_stderr)
    else:
        slope_se = icpt_se = math.nan
    return LinearFit(float(r.slope), float(r.intercept), slope_se, icpt_se, len(x), confidence)


# -- sub-threshold ansatz --------------------------------------------------------------


@dataclass(frozen=True)
class AnsatzFit:
    """Two-step regression result.

    ``per_d[d]`` is the line ``log(pfail/T)`` vs ``log p``; ``g_fit`` and
    ``c_fit`` regress its slope and intercept on ``d - d0``.
    """

    per_d: dict
    g_fit: LinearFit
    c_fit: LinearFit
    d0: int
    p_star: float
    alpha: float
    beta: float
    eta: float
    degenerate: bool = False
    cis: dict = field(default_factory=dict)

    def G(self, d):
        return self.beta * (np.asarray(d, dtype=float) - self.d0) + self.eta

    def C(self, d):
        x = np.asarray(d, dtype=float) - self.d0
        return -self.beta * math.log(self.p_star) * x + math.log(self.alpha) - self.eta * math.log(self.p_star)

    def predict(self, d, p):
        """``pfail / T`` from the ansatz."""
        return self.alpha * (np.asarray(p, dtype=float) / self.p_star) ** self.G(d)

    def to_dict(self) -> dict:
        return {
            "d0": self.d0,
            "p_star": self.p_star,
            "alpha": self.alpha,
            "beta": self.beta,
            "eta": self.eta,
            "degenerate": self.degenerate,
            "ci": {k: list(v) for k, v in self.cis.items()},
            "per_d": {str(d): {"G": f.slope, "C": f.intercept, "G_ci": list(f.slope_ci), "C_ci": list(f.intercept_ci)} for d, f in sorted(self.per_d.items())},
        }


def fit_subthreshold(points, d0: int | None = None, confidence: float = CONFIDENCE) -> AnsatzFit:
    """Fit the sub-threshold ansatz to ``(d, p, pfail_per_round)`` points.

    Parameters
    ----------
    points : iterable of (d, p, y)
        ``y`` is the failure rate per round, ``pfail / T``; must be positive.
    d0 : int, optional
        Reference distance.  By default the integer in ``[min d, max d]``
        minimizing the standard errors of the stage-two intercepts.

    Raises
    ------
    FitError
        Fewer than three distinct distances or fewer than three points for
        some distance.
    """
    groups: dict[int, list] = defaultdict(list)
    for d, p, y in points:
        if not (p > 0 and y > 0):
            raise FitError("p and pfail must be positive for a log-log fit")
        groups[int(d)].append((math.log(p), math.log(y)))
    if len(groups) < 3:
        raise FitError("need at least three distinct distances")
    per_d = {}
    for d in sorted(groups):
        pts = sorted(groups[d])
        if len(pts) < 3:
            raise FitError(f"need at least three points for d={d}")
        per_d[d] = linear_fit([a for a, _ in pts], [b for _, b in pts], confidence)
    ds = np.array(sorted(per_d), dtype=float)
    G = np.array([per_d[d].slope for d in sorted(per_d)])
    C = np.array([per_d[d].intercept for d in sorted(per_d)])
    if d0 is None:
        # both intercept standard errors scale as sqrt(1/n + (mean - d0)^2 / Sxx),
        # so the G and C minimizers coincide at the integer nearest the mean
        d0 = min(range(int(ds.min()), int(ds.max()) + 1), key=lambda k: (abs(k - ds.mean()), k))
    g_fit = linear_fit(ds - d0, G, confidence)
    c_fit = linear_fit(ds - d0, C, confidence)
    beta, eta = g_fit.slope, g_fit.intercept
    degenerate = abs(beta) < 1e-12
    if degenerate:
        p_star = alpha = math.nan
    else:
        log_ps = -c_fit.slope / beta
        p_star = math.exp(log_ps)
        alpha = math.exp(c_fit.intercept + eta * log_ps)
    cis = {"beta": g_fit.slope_ci, "eta": g_fit.intercept_ci}
    if not degenerate and np.isfinite(g_fit.slope_se):
        # delta method for log p_star = -s_C / beta, ignoring the G/C covariance
        se = math.hypot(c_fit.slope_se / beta, c_fit.slope * g_fit.slope_se / beta**2)
        t = g_fit._t
        cis["p_star"] = (math.exp(log_ps - t * se), math.exp(log_ps + t * se))
    return AnsatzFit(per_d, g_fit, c_fit, int(d0), p_star, alpha, beta, eta, degenerate, cis)


# -- crossings -------------------------------------------------------------------------


def _local_linear(x: np.ndarray, y: np.ndarray, frac: float):
    """Tricube-weighted local linear smoother (no robustness iterations)."""
    n = len(x)
    k = min(n, max(3, int(math.ceil(frac * n))))

    def f(x0: float) -> float:
        if n <= 2:
            return float(np.polyval(np.polyfit(x, y, 1), x0))
        dist = np.abs(x - x0)
        h = np.sort(dist)[k - 1] * (1 + 1e-9)
        if h == 0:
            h = 1.0
        w = np.clip(1 - (dist / h) ** 3, 0, None) ** 3
        sw = np.sqrt(w)
        A = np.stack([np.ones(n), x - x0], axis=1) * sw[:, None]
        coef, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
        return float(coef[0])

    return f


def _curve(points):
    pts = sorted((float(p), float(y)) for p, y in points if p > 0 and y > 0)
    if len(pts) < 2:
        raise FitError("a curve needs at least two points with positive p and pfail")
    return np.log([p for p, _ in pts]), np.log([y for _, y in pts])


def find_crossing(curve_a, curve_b, frac: float = 2 / 3, grid: int = 401) -> float:
    """Noise strength where two ``(p, pfail)`` curves cross.

    Each curve is smoothed by a local linear fit in log-log space; the
    crossing is the first sign change of their difference on the common
    p range, refined by root finding.

    Raises
    ------
    NoCrossingError
        If the smoothed curves do not cross inside the sampled range.
    """
    xa, ya = _curve(curve_a)
    xb, yb = _curve(curve_b)
    fa, fb = _local_linear(xa, ya, frac), _local_linear(xb, yb, frac)
    lo, hi = max(xa[0], xb[0]), min(xa[-1], xb[-1])
    if not lo < hi:
        raise NoCrossingError("the curves share no p range")
    xs = np.linspace(lo, hi, grid)
    diff = np.array([fa(x) - fb(x) for x in xs])
    zero = np.flatnonzero(diff == 0)
    if len(zero):
        return float(math.exp(xs[zero[0]]))
    change = np.flatnonzero(np.sign(diff[:-1]) != np.sign(diff[1:]))
    if not len(change):
        raise NoCrossingError("no crossing inside the sampled range")
    i = change[0]
    root = brentq(lambda x: fa(x) - fb(x), xs[i], xs[i + 1], xtol=1e-14, rtol=1e-14)
    return float(math.exp(root))


@dataclass(frozen=True)
class ThresholdEstimate:
    """Crossings, their finite-size extrapolation and the fit line."""

    crossings: tuple
    threshold: float
    A: float
    fit: LinearFit

    def to_dict(self) -> dict:
        return {
            "crossings": [list(c) for c in self.crossings],
            "threshold": self.threshold,
            "threshold_ci": list(self.fit.intercept_ci),
            "A": self.A,
        }


def extrapolate_threshold(crossings, confidence: float = CONFIDENCE) -> ThresholdEstimate:
    """Regress crossings ``p(d1)`` on ``1/d1``; the intercept is the threshold."""
    pts = sorted((int(d), float(p)) for d, p in crossings)
    if len(pts) < 2:
        raise FitError("need at least two crossings")
    fit = linear_fit([1 / d for d, _ in pts], [p for _, p in pts], confidence)
    return ThresholdEstimate(tuple(pts), fit.intercept, fit.slope, fit)


# -- long-term threshold ---------------------------------------------------------------


def longterm_model(T, p_lt: float, gamma: float, p1: float):
    T = np.asarray(T, dtype=float)
    return p_lt * (1 - (1 - p1 / p_lt) * T ** (-gamma))


def fit_longterm(thresholds, x0: tuple[float, float] | None = None) -> tuple[float, float]:
    """Fit ``(px_LT, gamma)`` to ``(T, px(T))`` data; ``px(1)`` is the T=1 point.

    Levenberg-Marquardt on relative residuals, tolerances 1e-12 and at most
    1e4 function evaluations.

    Raises
    ------
    FitError
        Without a T=1 point or with fewer than three points in total.
    """
    pts = sorted((float(T), float(p)) for T, p in thresholds)
    if len(pts) < 3:
        raise FitError("need at least three (T, threshold) points")
    ones = [p for T, p in pts if T == 1]
    if not ones:
        raise FitError("the T=1 threshold is required")
    p1 = ones[0]
    Ts = np.array([T for T, _ in pts])
    ps = np.array([p for _, p in pts])
    if np.any(ps <= 0):
        raise FitError("thresholds must be positive")
    if x0 is None:
        x0 = (float(ps.max()) * 1.05, 1.0)

    def resid(v):
        return longterm_model(Ts, v[0], v[1], p1) / ps - 1

    res = least_squares(resid, x0, method="lm", xtol=LM_TOL, ftol=LM_TOL, gtol=LM_TOL, max_nfev=LM_MAX_EVAL)
    p_lt, gamma = (float(v) for v in res.x)
    if not (np.isfinite(p_lt) and p_lt > 0):
        raise FitError("long-term fit did not converge to a positive threshold")
    return p_lt, gamma


# -- bias ------------------------------------------------------------------------------


def bias(p_z: float, p_x: float) -> float:
    """``log10(p_z / p_x)``."""
    if p_z <= 0 or p_x <= 0:
        raise FitError("bias needs positive failure rates")
    return math.log10(p_z / p_x)


def bias_interval(est_z, est_x) -> tuple[float, float]:
    """Interval for the bias from the two estimates' confidence intervals."""
    lo = math.log10(est_z.ci_lo / est_x.ci_hi) if est_z.ci_lo > 0 else -math.inf
    hi = math.log10(est_z.ci_hi / est_x.ci_lo) if est_x.ci_lo > 0 else math.inf
    return lo, hi


# -- report ----------------------------------------------------------------------------


def fit_report(rows) -> dict:
    """Every fit that the rows support, as a JSON-ready dict.

    Rows are montecarlo CSV records.  When a point has several bases the
    ``sum`` row is used.  Fits that cannot run are reported under
    ``errors``.
    """
    points: dict[tuple, dict] = {}
    for r in rows:
        key = (int(r["d"]), int(r.get("T") or 1), float(r["p"]))
        basis = r.get("basis", "sum") or "sum"
        if key not in points or basis == "sum":
            points[key] = r
    report: dict = {"errors": {}}
    by_T: dict[int, list] = defaultdict(list)
    for (d, T, p), r in sorted(points.items()):
        by_T[T].append((d, p, float(r["pfail"])))

    sub = [(d, p, y / T) for T, pts in by_T.items() for d, p, y in pts if y > 0]
    try:
        report["subthreshold"] = fit_subthreshold(sub).to_dict()
    except FitError as e:
        report["errors"]["subthreshold"] = str(e)

    thresholds = {}
    report["crossings"] = {}
    for T, pts in sorted(by_T.items()):
        curves = defaultdict(list)
        for d, p, y in pts:
            curves[d].append((p, y))
        ds = sorted(curves)
        found = []
        for d1, d2 in zip(ds, ds[1:]):
            try:
                found.append((d1, find_crossing(curves[d1], curves[d2])))
            except FitError as e:
                report["errors"][f"crossing T={T} d={d1},{d2}"] = str(e)
        report["crossings"][str(T)] = [list(c) for c in found]
        if len(found) >= 2:
            est = extrapolate_threshold(found)
            report.setdefault("threshold", {})[str(T)] = est.to_dict()
            thresholds[T] = est.threshold
        elif len(found) == 1:
            thresholds[T] = found[0][1]
    try:
        p_lt, gamma = fit_longterm(thresholds.items())
        report["longterm"] = {"p_lt": p_lt, "gamma": gamma}
    except FitError as e:
        report["errors"]["longterm"] = str(e)
    return report
