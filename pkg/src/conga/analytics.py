"""Analytic predictions and reference quadratures for the Gaussian fields.

Spatial derivatives of the scaled field are Wiener integrals

    d^m u_t(x) = int_0^1 G_m(x, s) dW_s,
    G_m(x, s) = (sigma_t sqrt s)^{-m} (-1)^m He_{m-1}(w) phi(w),

so every covariance is ``int_0^1 G_m(x, s) G_n(y, s) ds``.  These integrals are
evaluated with a fine composite Gauss-Legendre rule spanning the kernels'
support; the order-0 variance of the unscaled field uses adaptive quadrature.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, ParameterError
from .special import hermite_all, norm_pdf, norm_sf

__all__ = [
    "CertifiedRegimeWarning",
    "CovarianceReport",
    "IntensityCurve",
    "sigma_of",
    "variance_u",
    "cutoff_location",
    "calibrated_location",
    "variance_cutoff_scan",
    "derivative_kernel",
    "derivative_covariance",
    "cov_first",
    "var_second",
    "cov_mixed",
    "det_sigma",
    "covariance_report",
    "first_intensity",
    "intensity_curve",
    "expected_critical_points",
    "second_intensity",
    "second_factorial_moment",
    "expected_length",
    "bivariate_abs_moment",
    "write_scan_csv",
    "CERTIFIED_X_MIN",
]

CERTIFIED_X_MIN = 0.05
_GL_ORDER = 8
_SD_SPAN = 14.0


class CertifiedRegimeWarning(UserWarning):
    """Evaluation outside the range where the asymptotic forms are certified."""


def sigma_of(alpha: float) -> float:
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0,1), got {alpha}")
    return math.sqrt(alpha * (1.0 - alpha))


def _flag(x):
    if np.any(np.asarray(x) < CERTIFIED_X_MIN):
        warnings.warn(f"x below {CERTIFIED_X_MIN} is outside the certified regime", CertifiedRegimeWarning, stacklevel=3)


# --- variance of the unscaled field ---------------------------------------

def variance_u(x: float, t: float, alpha: float) -> float:
    """``Var u(x, t) = int_0^t Phibar((x - alpha y)/(sigma sqrt y))^2 dy`` (relative tol 1e-8)."""
    if x < 0 or t <= 0:
        raise DomainError("need x >= 0 and t > 0")
    sig = sigma_of(alpha)

    def f(y):
        if y <= 0:
            return 0.0 if x > 0 else 0.25
        return float(norm_sf((x - alpha * y) / (sig * math.sqrt(y)))) ** 2

    c = x / alpha
    sd = sig * math.sqrt(max(c, 1e-300)) / alpha
    pts = sorted({p for p in (c - 12 * sd, c - 4 * sd, c, c + 4 * sd, c + 12 * sd) if 0 < p < t})
    edges = [0.0] + pts + [t]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-10, limit=400)
        total += val
    return total


def cutoff_location(t: float, lam: float, alpha: float) -> float:
    """``alpha t + sigma sqrt(lambda t log t)``."""
    return alpha * t + sigma_of(alpha) * math.sqrt(lam * t * math.log(t))


def calibrated_location(t: float, delta: float, alpha: float) -> float:
    """Location where the variance is asymptotically of order ``delta``:
    ``alpha t + sigma sqrt(t (log t / 2 - 3/2 log log t - log delta))``."""
    inner = 0.5 * math.log(t) - 1.5 * math.log(math.log(t)) - math.log(delta)
    if inner <= 0:
        raise DomainError("t too small for this delta")
    return alpha * t + sigma_of(alpha) * math.sqrt(t * inner)


def cutoff_constant(lam: float, alpha: float) -> float:
    """Leading constant ``(sigma/alpha) / (4 pi lambda^{3/2})`` of the shifted variance.

    Substituting ``z = (x - alpha y)/(sigma sqrt t)`` near ``y = t`` and using
    ``Phibar(z) ~ phi(z)/z`` gives ``Var ~ (sigma sqrt t / alpha) e^{-a^2} / (4 pi a^3)``
    with ``a^2 = lambda log t``.
    """
    return sigma_of(alpha) / alpha / (4 * math.pi * lam**1.5)


def variance_cutoff_scan(t: float, lambda_grid, alpha: float) -> list[dict]:
    """Variance at ``alpha t + sigma sqrt(lambda t log t)`` against ``t^{1/2-lambda}/(log t)^{3/2}``."""
    rows = []
    for lam in lambda_grid:
        if lam <= 0:
            raise DomainError("lambda must be positive")
        x = cutoff_location(t, lam, alpha)
        var = variance_u(x, t, alpha)
        pred = t ** (0.5 - lam) / math.log(t) ** 1.5
        rows.append({
            "lambda": float(lam), "t": float(t), "x": x, "variance": var, "prediction": pred,
            "ratio": var / pred, "asymptotic_constant": cutoff_constant(lam, alpha),
        })
    return rows


# --- derivative kernels and covariances ------------------------------------

def derivative_kernel(m: int, x, s, t: float, alpha: float):
    """``G_m(x, s)``, the Wiener-integral kernel of ``d^m u_t(x)`` (``m >= 1``)."""
    if m < 1:
        raise DomainError("kernel defined for derivative order >= 1")
    sig_t = sigma_of(alpha) / math.sqrt(t)
    s = np.asarray(s, dtype=float)
    ss = sig_t * np.sqrt(s)
    w = (np.asarray(x, dtype=float) - alpha * s) / ss
    he = hermite_all(m - 1, w)[m - 1]
    sign = -1.0 if m % 2 else 1.0
    return sign * ss ** (-m) * he * norm_pdf(w)


def _cov_nodes(xs, t: float, alpha: float, panels_per_sd: float = 4.0):
    """Gauss nodes covering the union of the kernels' supports in ``s``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    sig_t = sigma_of(alpha) / math.sqrt(t)
    c = xs / alpha
    sd = sig_t * np.sqrt(c) / alpha
    lo = max(float(np.min(c - _SD_SPAN * sd)), 0.0)
    hi = min(float(np.max(c + _SD_SPAN * sd)), 1.0)
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    n_pan = int(math.ceil((hi - lo) / (float(np.min(sd)) / panels_per_sd)))
    n_pan = max(n_pan, 64)
    xi, wi = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(lo, hi, n_pan + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xi).ravel()
    weights = (half[:, None] * wi).ravel()
    return nodes, weights


def derivative_covariance(m: int, x: float, n: int, y: float, t: float, alpha: float, refine: int = 1) -> float:
    """``Cov(d^m u_t(x), d^n u_t(y))`` by quadrature (``refine`` multiplies the panel count)."""
    nodes, weights = _cov_nodes([x, y], t, alpha, 4.0 * refine)
    if nodes.size == 0:
        return 0.0
    ga = derivative_kernel(m, x, nodes, t, alpha)
    gb = ga if (m == n and x == y) else derivative_kernel(n, y, nodes, t, alpha)
    return float(np.sum(weights * ga * gb))


def cov_first(x: float, y: float, t: float, alpha: float, closed_form: bool = False) -> float:
    """``Cov(u_t'(x), u_t'(y))``; the closed form is the Laplace approximation

    ``exp{-(2 alpha t/sigma^2)(eta - (x+y)/2)} sqrt t / (2 sqrt(pi alpha) sigma eta^{1/2})``,
    ``eta = sqrt((x^2+y^2)/2)``.
    """
    if not (0 < x <= 1 and 0 < y <= 1):
        raise DomainError("cov_first needs x, y in (0, 1]")
    _flag([x, y])
    if closed_form:
        sig = sigma_of(alpha)
        eta = math.sqrt((x * x + y * y) / 2)
        return math.exp(-(2 * alpha * t / sig**2) * (eta - (x + y) / 2)) * math.sqrt(t) / (
            2 * math.sqrt(math.pi * alpha) * sig * math.sqrt(eta)
        )
    if x > y:
        x, y = y, x  # canonical order makes the quadrature exactly symmetric
    return derivative_covariance(1, x, 1, y, t, alpha)


def var_second(x: float, t: float, alpha: float, closed_form: bool = False) -> float:
    """``Var u_t''(x)``; closed form ``sqrt(alpha) t^{3/2} / (4 sqrt(pi) sigma^3 x^{3/2})``."""
    if not (0 < x <= 1):
        raise DomainError("x must lie in (0, 1]")
    _flag(x)
    if closed_form:
        sig = sigma_of(alpha)
        return math.sqrt(alpha) * t**1.5 / (4 * math.sqrt(math.pi) * sig**3 * x**1.5)
    return derivative_covariance(2, x, 2, x, t, alpha)


def cov_mixed(x: float, t: float, alpha: float, part: str = "full") -> float:
    """``Cov(u_t'(x), u_t''(x)) = -int (sigma_t sqrt s)^{-3} w phi(w)^2 ds``.

    ``part="leading"`` keeps only the symmetric part obtained by freezing
    ``1/(x + alpha s)`` at ``1/(2x)`` (it integrates to nearly 0);
    ``part="correction"`` is the remainder carrying ``f_t = 2x/(x+alpha s) - 1``.
    """
    if not (0 < x <= 1):
        raise DomainError("x must lie in (0, 1]")
    if part == "full":
        return derivative_covariance(1, x, 2, x, t, alpha)
    sig_t = sigma_of(alpha) / math.sqrt(t)
    nodes, weights = _cov_nodes([x], t, alpha)
    s = nodes
    w = (x - alpha * s) / (sig_t * np.sqrt(s))
    base = -(1.0 / math.pi) * (x + alpha * s) / (2 * sig_t * s**1.5) / (2 * sig_t**2 * x) * w * np.exp(-w * w)
    if part == "leading":
        return float(np.sum(weights * base))
    if part == "correction":
        ft = 2 * x / (x + alpha * s) - 1
        return float(np.sum(weights * base * ft))
    raise ParameterError("part must be 'full', 'leading' or 'correction'")


def det_sigma(x: float, y: float, t: float, alpha: float) -> float:
    """Determinant of the covariance matrix of ``(u_t'(x), u_t'(y))``."""
    if x == y:
        return 0.0
    vx = cov_first(x, x, t, alpha)
    vy = cov_first(y, y, t, alpha)
    c = cov_first(x, y, t, alpha)
    # Gram form: (1/2) sum_jk w_j w_k (g_x(j) g_y(k) - g_x(k) g_y(j))^2 avoids cancellation
    nodes, weights = _cov_nodes([x, y], t, alpha)
    d = abs(y - x)
    sd_scale = sigma_of(alpha) / math.sqrt(t)
    if d < 0.05 * sd_scale:
        a, b = (x, y) if x < y else (y, x)
        ga = derivative_kernel(1, a, nodes, t, alpha)
        gd = (derivative_kernel(1, b, nodes, t, alpha) - ga) / (b - a)
        va = np.sum(weights * ga * ga)
        vd = np.sum(weights * gd * gd)
        cad = np.sum(weights * ga * gd)
        return float(max(va * vd - cad * cad, 0.0) * (b - a) ** 2)
    return float(max(vx * vy - c * c, 0.0))


@dataclass(frozen=True)
class CovarianceReport:
    x: float
    y: float
    t: float
    cov_first: float
    var_second: float
    cov_mixed: float
    det_sigma: float
    correlation: float


def covariance_report(x: float, y: float, t: float, alpha: float) -> CovarianceReport:
    c = cov_first(x, y, t, alpha)
    corr = c / math.sqrt(cov_first(x, x, t, alpha) * cov_first(y, y, t, alpha))
    return CovarianceReport(x, y, t, c, var_second(x, t, alpha), cov_mixed(x, t, alpha), det_sigma(x, y, t, alpha), corr)


# --- Kac-Rice intensities ----------------------------------------------------

def first_intensity(x, t: float, alpha: float, mode: str = "exact"):
    """Expected density of zeros of ``u_t'`` at ``x``.

    exact:  ``sqrt(2/pi) sqrt((V'' V' - C^2)/V') (2 pi V')^{-1/2}``
    closed: ``sqrt(alpha t) / (pi sigma sqrt(2x))``
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise DomainError("x must be positive")
    _flag(xs)
    sig = sigma_of(alpha)
    if mode == "closed":
        out = math.sqrt(alpha * t) / (math.pi * sig * np.sqrt(2 * xs))
    elif mode == "exact":
        out = np.empty_like(xs)
        for i, xi in enumerate(xs):
            v1 = derivative_covariance(1, xi, 1, xi, t, alpha)
            v2 = derivative_covariance(2, xi, 2, xi, t, alpha)
            c = derivative_covariance(1, xi, 2, xi, t, alpha)
            out[i] = math.sqrt(2 / math.pi) * math.sqrt(max(v2 * v1 - c * c, 0.0) / v1) / math.sqrt(2 * math.pi * v1)
    else:
        raise ParameterError("mode must be 'exact' or 'closed'")
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class IntensityCurve:
    t: float
    grid: np.ndarray
    exact: np.ndarray
    closed_form: np.ndarray


def intensity_curve(t: float, grid, alpha: float) -> IntensityCurve:
    grid = np.asarray(grid, dtype=float)
    return IntensityCurve(t, grid, first_intensity(grid, t, alpha, "exact"), first_intensity(grid, t, alpha, "closed"))


def expected_critical_points(interval, t: float, alpha: float, mode: str = "closed", panels: int = 48) -> float:
    """``E N_t([a, b])``; closed mode ``sqrt(2 alpha t)/(pi sigma) (sqrt b - sqrt a)``."""
    a, b = map(float, interval)
    if b <= a:
        return 0.0
    sig = sigma_of(alpha)
    if mode == "closed":
        if a <= 0:
            raise DomainError("interval must lie in (0, 1]")
        return math.sqrt(alpha * t) * math.sqrt(2) / (math.pi * sig) * (math.sqrt(b) - math.sqrt(a))
    xi, wi = np.polynomial.legendre.leggauss(_GL_ORDER)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xi).ravel()
    weights = (half[:, None] * wi).ravel()
    return float(np.sum(weights * first_intensity(nodes, t, alpha, mode)))


def bivariate_abs_moment(s11: float, s22: float, s12: float) -> float:
    """``E|X||Y|`` for a centred Gaussian pair: ``(2/pi) sqrt(s11 s22) (r arcsin r + sqrt(1 - r^2))``."""
    if s11 <= 0 or s22 <= 0:
        return 0.0
    r = max(-1.0, min(1.0, s12 / math.sqrt(s11 * s22)))
    return 2 / math.pi * math.sqrt(s11 * s22) * (r * math.asin(r) + math.sqrt(max(1 - r * r, 0.0)))


def second_intensity(y: float, z: float, t: float, alpha: float) -> float:
    """Pair density ``E(|u''_y||u''_z| | u'_y = u'_z = 0) p_{y,z}(0, 0)``.

    The conditioning uses the divided difference ``(u'_z - u'_y)/(z - y)`` in
    place of ``u'_z`` so nearby pairs do not suffer cancellation.
    """
    if y == z:
        return 0.0
    a, b = (y, z) if y < z else (z, y)
    d = b - a
    nodes, weights = _cov_nodes([a, b], t, alpha)
    g1a = derivative_kernel(1, a, nodes, t, alpha)
    g1d = (derivative_kernel(1, b, nodes, t, alpha) - g1a) / d
    g2a = derivative_kernel(2, a, nodes, t, alpha)
    g2b = derivative_kernel(2, b, nodes, t, alpha)
    K = np.stack([g1a, g1d, g2a, g2b])
    S = (K * weights) @ K.T
    S22 = S[:2, :2]
    S12 = S[2:, :2]
    S11 = S[2:, 2:]
    star = S11 - S12 @ np.linalg.solve(S22, S12.T)
    det22 = max(float(np.linalg.det(S22)), 0.0) * d * d
    if det22 <= 0:
        return 0.0
    moment = bivariate_abs_moment(star[0, 0], star[1, 1], star[0, 1])
    return moment / (2 * math.pi * math.sqrt(det22))


def second_factorial_moment(interval, t: float, alpha: float, order: int = 16) -> tuple[float, float]:
    """``E N(N-1)`` on ``interval`` and the bound ``C h^3 t^{3/2}``.

    ``C`` is taken as ``sup rho_2(y,z) / (|y - z| t^{3/2})`` over the quadrature
    pairs divided by 3, since ``int int_{I^2} |y - z| = h^3/3``; the returned
    bound therefore holds whenever the pair density grows at most linearly off
    the diagonal, which is the content being checked.
    """
    a, b = map(float, interval)
    h = b - a
    if h <= 0:
        return 0.0, 0.0
    xi, wi = np.polynomial.legendre.leggauss(order)
    ys = a + (xi + 1) * h / 2
    wy = wi * h / 2
    total = 0.0
    ratio = 0.0
    for yv, wyv in zip(ys, wy):
        # inner integral over z in (y, b]; symmetric half doubled
        zs = yv + (xi + 1) * (b - yv) / 2
        wz = wi * (b - yv) / 2
        for zv, wzv in zip(zs, wz):
            if zv - yv <= np.finfo(float).eps * max(1.0, abs(yv)):
                continue
            r2 = second_intensity(yv, zv, t, alpha)
            total += 2 * wyv * wzv * r2
            ratio = max(ratio, r2 / ((zv - yv) * t**1.5))
    C = ratio / 3.0 * 2.0  # both orderings of the pair
    return total, C * h**3 * t**1.5


def expected_length(delta: float, alpha: float, t: float, mode: str = "closed") -> float:
    """Expected length of the planar curve ``u_t`` on ``[delta, alpha]``.

    closed: ``2 pi^{1/4} t^{1/4} / (3 sigma^{1/2} alpha^{1/4}) (alpha^{3/4} - delta^{3/4})``;
    quadrature: ``int sqrt(pi/2) sqrt(Var u_t'(x)) dx`` (mean of a Rayleigh variable).
    """
    if delta > alpha:
        raise DomainError("need delta <= alpha")
    sig = sigma_of(alpha)
    if mode == "closed":
        return 2 * math.pi**0.25 * t**0.25 / (3 * sig**0.5 * alpha**0.25) * (alpha**0.75 - delta**0.75)
    if mode != "quadrature":
        raise ParameterError("mode must be 'closed' or 'quadrature'")
    if delta == alpha:
        return 0.0
    # the variance has a boundary layer of width ~ t^{-1/2} at x = alpha
    bl = min(alpha - delta, 10 * sig / math.sqrt(t))
    xi, wi = np.polynomial.legendre.leggauss(_GL_ORDER)
    total = 0.0
    for lo_, hi_, npan in ((delta, alpha - bl, 64), (alpha - bl, alpha, 32)):
        if hi_ <= lo_:
            continue
        edges = np.linspace(lo_, hi_, npan + 1)
        for e0, e1 in zip(edges[:-1], edges[1:]):
            for xn, wn in zip((e0 + e1) / 2 + (e1 - e0) / 2 * xi, (e1 - e0) / 2 * wi):
                total += wn * math.sqrt(math.pi / 2) * math.sqrt(derivative_covariance(1, xn, 1, xn, t, alpha))
    return total


def write_scan_csv(path_out, rows, key: str, params: dict) -> None:
    """Columns ``key, exact, closed_form, ratio`` preceded by ``#`` parameter lines."""
    with open(path_out, "w", encoding="utf-8", newline="") as fh:
        for k, v in params.items():
            fh.write(f"# {k}={v!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key, "exact", "closed_form", "ratio"])
        for r in rows:
            w.writerow([format(float(r[key]), ".17g"), format(float(r["exact"]), ".17g"),
                        format(float(r["closed_form"]), ".17g"), format(float(r["exact"]) / float(r["closed_form"]), ".17g")])
