"""Threshold times, log-slope fits, the exponential law for t~ and robustness verdicts."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FitFailure, InvalidArgument

LN4 = math.log(4.0)
TWO_LN4 = 2.0 * LN4
TWO_LN2 = 2.0 * math.log(2.0)
DEFAULT_R_TH = 0.17
DEFAULT_T_LO = 10.0
CROSSING_RULE = "mean-1sigma>=r_th,first"
MARGINAL_TOL = 1e-12


@dataclass(frozen=True)
class ThresholdResult:
    t_tilde: float | None
    r_th: float
    crossing_rule: str = CROSSING_RULE
    index: int | None = None


def detect_threshold_time(times, Ir, Ir_err=None, r_th: float = DEFAULT_R_TH,
                          n_sigma: float = 1.0) -> ThresholdResult:
    """First grid time with ``Ir - n_sigma * err >= r_th``; undefined Ir never counts."""
    times = np.asarray(times, dtype=np.float64)
    Ir = np.asarray(Ir, dtype=np.float64)
    err = np.zeros_like(Ir) if Ir_err is None else np.nan_to_num(np.asarray(Ir_err, float), nan=np.inf)
    if times.shape != Ir.shape or err.shape != Ir.shape:
        raise InvalidArgument("times, Ir and errors must share a shape")
    if np.any(np.diff(times) <= 0):
        raise InvalidArgument("times must be ascending")
    rule = CROSSING_RULE if n_sigma == 1.0 else f"mean-{n_sigma:g}sigma>=r_th,first"
    with np.errstate(invalid="ignore"):
        hit = np.nonzero(np.isfinite(Ir) & (Ir - n_sigma * err >= r_th))[0]
    if hit.size == 0:
        return ThresholdResult(None, r_th, rule)
    k = int(hit[0])
    return ThresholdResult(float(times[k]), r_th, rule, k)


@dataclass(frozen=True)
class SlopeFit:
    A: float
    intercept: float
    A_err: float
    intercept_err: float
    t_lo: float
    t_hi: float
    r2: float
    n_points: int

    @property
    def one_over_A(self) -> float:
        return 1.0 / self.A if self.A != 0 else math.inf


def _wls(x, y, w):
    """Weighted straight-line fit; returns slope, intercept, their errors and R^2."""
    X = np.column_stack([x, np.ones_like(x)])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    resid = y - X @ coef
    dof = x.size - 2
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    chi2 = float((w * resid**2).sum())
    scale = chi2 / dof if dof > 0 else 0.0
    errs = np.sqrt(np.diag(cov) * scale)
    ybar = (w * y).sum() / w.sum()
    ss_tot = float((w * (y - ybar) ** 2).sum())
    r2 = 1.0 - chi2 / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), float(errs[0]), float(errs[1]), r2


def fit_log_slope(times, h, h_err=None, window=None, resample: int | None = 20,
                  min_points: int = 5) -> SlopeFit:
    """Weighted least squares of h against ln t inside ``window``.

    With ``resample`` set, h is first interpolated (in ln t) onto that many
    log-uniform points per decade so dense late-time sampling does not dominate.
    """
    times = np.asarray(times, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    err = None if h_err is None else np.asarray(h_err, dtype=np.float64)
    if window is None:
        window = (DEFAULT_T_LO, times[-1])
    t_lo, t_hi = float(window[0]), float(window[1])
    if not 0 < t_lo < t_hi:
        raise InvalidArgument("fit window must satisfy 0 < t_lo < t_hi")
    ok = (times >= t_lo * (1 - 1e-12)) & (times <= t_hi * (1 + 1e-12)) & np.isfinite(h)
    if err is not None:
        ok &= np.isfinite(err)
    x, y = np.log(times[ok]), h[ok]
    e = None if err is None else err[ok]
    if x.size < min_points:
        raise FitFailure(f"only {x.size} defined points in [{t_lo:g}, {t_hi:g}]")
    if resample:
        n = max(min_points, int(math.ceil((x[-1] - x[0]) / math.log(10) * resample)) + 1)
        xs = np.linspace(x[0], x[-1], n)
        y = np.interp(xs, x, y)
        e = None if e is None else np.interp(xs, x, e)
        x = xs
    if e is not None and np.all(e > 0):
        w = 1.0 / e**2
    else:
        w = np.ones_like(x)
    A, b, A_err, b_err, r2 = _wls(x, y, w)
    return SlopeFit(A, b, A_err, b_err, float(math.exp(x[0])), float(math.exp(x[-1])), r2, x.size)


@dataclass(frozen=True)
class AlphaFit:
    alpha: float
    beta: float
    alpha_err: float
    beta_err: float
    points: tuple

    @property
    def W_tilde(self) -> float:
        return TWO_LN2 / self.alpha


def fit_alpha(points) -> AlphaFit:
    """Least squares of ln t~ on L*W over (L, W, t~) triples with finite t~."""
    pts = [(int(L), float(W), float(t)) for L, W, t in points
           if t is not None and np.isfinite(t) and t > 0]
    if len(pts) < 3:
        raise FitFailure(f"alpha fit needs >= 3 points with finite t~, got {len(pts)}")
    x = np.array([L * W for L, W, _ in pts])
    y = np.log([t for *_, t in pts])
    if np.ptp(x) == 0:
        raise FitFailure("all points share the same L*W")
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = len(pts) - 2
    cov = np.linalg.inv(X.T @ X) * ((resid @ resid) / dof if dof > 0 else 0.0)
    if not np.all(np.linalg.eigvalsh(X.T @ X) > 0):
        raise FitFailure("normal matrix is not positive definite")
    return AlphaFit(float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0])),
                    float(math.sqrt(cov[1, 1])), tuple(pts))


@dataclass(frozen=True)
class RobustnessReport:
    A: float
    one_over_A: float
    criterion_log: bool
    log_margin: float  # 1/A - 2 ln 4
    t_star_exponent: float  # 1/(2A), compared with ln 4
    kappa: float  # t* ~ kappa^L
    alpha: float | None = None
    W_tilde: float | None = None
    W_star: float | None = None
    verdict: str = ""

    def recompute(self) -> "RobustnessReport":
        return robustness_from_slope(self.A, self.alpha, W_star=self.W_star)


def robustness_from_slope(A: float, alpha: float | None = None, W_star=None) -> RobustnessReport:
    if not A > 0:
        raise InvalidArgument("slope A must be positive")
    inv = 1.0 / A
    margin = inv - TWO_LN4
    if abs(margin) <= MARGINAL_TOL:
        verdict = "marginal"
    elif margin > 0:
        verdict = "robust"
    else:
        verdict = "inconclusive"
    exponent = inv / 2.0
    W_tilde = None if alpha is None else TWO_LN2 / alpha
    return RobustnessReport(A, inv, bool(margin > MARGINAL_TOL), margin, exponent,
                            math.exp(min(exponent, 700.0)), alpha, W_tilde, W_star, verdict)


def estimate_w_star(Ws, one_over_A):
    """Smallest W where 1/A(W) crosses above 2 ln 4, linearly interpolated.

    Returns the first sweep point if it is already above, None if none is.
    """
    Ws = np.asarray(Ws, dtype=np.float64)
    y = np.asarray(one_over_A, dtype=np.float64) - TWO_LN4
    order = np.argsort(Ws)
    Ws, y = Ws[order], y[order]
    for k in range(Ws.size):
        if y[k] > 0:
            if k == 0:
                return float(Ws[0])
            w0, w1, y0, y1 = Ws[k - 1], Ws[k], y[k - 1], y[k]
            return float(w0 + (w1 - w0) * (-y0) / (y1 - y0))
    return None


@dataclass(frozen=True)
class AvalancheVerdict:
    verdict: str  # "propagates", "halts" or "marginal"
    margin: float  # ln kappa - ln 4
    log_ts: float  # Delta r * ln kappa
    log_inverse_delta: float  # (r0 + 2 r + 2 Delta r) ln 2
    finite_size_halts: bool


def check_avalanche(kappa: float, r0: float, r: float, delta_r: float) -> AvalancheVerdict:
    """Compare the growth t_s = kappa^delta_r with the inverse level spacing 2^(r0+2r+2 delta_r).

    The asymptotic verdict (delta_r much larger than r) depends only on kappa vs 4.
    """
    if not kappa > 0:
        raise InvalidArgument("kappa must be positive")
    if min(r0, r, delta_r) < 0:
        raise InvalidArgument("lengths must be non-negative")
    log_ts = delta_r * math.log(kappa)
    log_inv_delta = (r0 + 2 * r + 2 * delta_r) * math.log(2.0)
    margin = math.log(kappa) - LN4
    if abs(margin) <= MARGINAL_TOL:
        verdict = "marginal"
    else:
        verdict = "halts" if margin > 0 else "propagates"
    return AvalancheVerdict(verdict, margin, log_ts, log_inv_delta, bool(log_ts > log_inv_delta))


def collapse_check(curves, window=None, n_grid: int = 40) -> float:
    """Largest pairwise deviation of L*I_r(t) between system sizes, in combined errors.

    ``curves`` maps L to (times, Ir, Ir_err).  Curves are interpolated in ln t
    onto a shared grid covering the overlap of their defined ranges (clipped
    to ``window``).
    """
    if len(curves) < 2:
        raise InvalidArgument("collapse check needs at least two system sizes")
    prepared = {}
    lo, hi = -math.inf, math.inf
    for L, (t, ir, err) in curves.items():
        t, ir = np.asarray(t, float), np.asarray(ir, float)
        err = np.zeros_like(ir) if err is None else np.asarray(err, float)
        ok = (t > 0) & np.isfinite(ir) & np.isfinite(err)
        if ok.sum() < 2:
            raise InvalidArgument(f"curve for L={L} has fewer than two defined points")
        x = np.log(t[ok])
        prepared[L] = (x, L * ir[ok], L * err[ok])
        lo, hi = max(lo, x[0]), min(hi, x[-1])
    if window is not None:
        lo, hi = max(lo, math.log(window[0])), min(hi, math.log(window[1]))
    if not lo < hi:
        raise InvalidArgument("curves do not overlap in time")
    grid = np.linspace(lo, hi, n_grid)
    vals = {L: (np.interp(grid, x, y), np.interp(grid, x, e)) for L, (x, y, e) in prepared.items()}
    worst = 0.0
    keys = sorted(vals)
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            diff = np.abs(vals[a][0] - vals[b][0])
            comb = np.hypot(vals[a][1], vals[b][1])
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(comb > 0, diff / comb, np.where(diff > 0, np.inf, 0.0))
            worst = max(worst, float(z.max()))
    return worst


@dataclass
class AnalysisReport:
    thresholds: list = field(default_factory=list)
    slopes: list = field(default_factory=list)
    alpha: dict | None = None
    robustness: list = field(default_factory=list)
    w_star: dict = field(default_factory=dict)
    collapse: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    constants: dict = field(default_factory=lambda: {"two_ln4": TWO_LN4, "two_ln2": TWO_LN2})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def verify_report(report: dict) -> list:
    """Recompute every verdict from the stored numbers; returns a list of mismatches."""
    bad = []
    for entry in report.get("robustness", []):
        fresh = asdict(robustness_from_slope(entry["A"], entry.get("alpha"), entry.get("W_star")))
        for key in ("one_over_A", "criterion_log", "log_margin", "t_star_exponent", "kappa",
                    "W_tilde", "verdict"):
            a, b = fresh[key], entry.get(key)
            if a != b:
                bad.append(f"robustness[{entry.get('label', '?')}].{key}: stored {b!r}, recomputed {a!r}")
    alpha = report.get("alpha")
    if alpha:
        if alpha.get("W_tilde") != TWO_LN2 / alpha["alpha"]:
            bad.append("alpha.W_tilde does not equal 2 ln 2 / alpha")
    for entry in report.get("w_star", {}).values() if isinstance(report.get("w_star"), dict) else []:
        fresh = estimate_w_star(entry["W"], entry["one_over_A"])
        if fresh != entry["W_star"]:
            bad.append(f"W_star: stored {entry['W_star']!r}, recomputed {fresh!r}")
    return bad
