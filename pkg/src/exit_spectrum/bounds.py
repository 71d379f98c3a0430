"""Two-sided bounds on the principal Dirichlet eigenvalue from exit-time moments.

Upper bounds come from the moments alone; the lower bound needs the mass
``mu(phi0)^2`` of the principal eigenfunction.  The module also evaluates the
closed-form example bounds for stable processes (volume bound), time-changed
stable processes (``delta_plus``) and radial diffusions (``delta_r``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    AlphaOutOfRange,
    BetaAtOrAboveLambda0,
    DivergentTail,
    ExpressionOverflow,
    InsufficientOrders,
    InvalidDimension,
    InvalidRange,
    NonpositiveMass,
    OrderOutOfRange,
)
from .moments import MomentTable, exp_moment_series
from .quadrature import (
    DEFAULT_QC,
    QuadratureConfig,
    adaptive_simpson,
    golden_max,
    integrate_log,
    integrate_to_infinity,
)

SLACK = 1e-9
SUP_GRID = 512


def _log_T(mt: MomentTable, k: int) -> float:
    if mt.log_T is not None:
        return float(mt.log_T[k])
    return math.log(float(mt.T[k]))


def _need(mt: MomentTable, top: int, what: str):
    if top > mt.K:
        raise OrderOutOfRange(f"{what} needs moments up to order {top}, table has K={mt.K}")


# --------------------------------------------------------------------------
# moment bounds


def upper_bound_odd(mt: MomentTable, k: int, mu_total: Optional[float] = None) -> float:
    """``(k!)^2 / (2k-1)! * T_{2k-1} / T_k^2 * mu(Omega)``."""
    if k < 1:
        raise OrderOutOfRange(f"k must be >= 1, got {k}")
    _need(mt, 2 * k - 1, "upper_bound_odd")
    mu_total = mt.mu_total if mu_total is None else mu_total
    log_b = 2 * math.lgamma(k + 1) - math.lgamma(2 * k) + _log_T(mt, 2 * k - 1) - 2 * _log_T(mt, k)
    return math.exp(log_b) * mu_total


def upper_bound_ratio(mt: MomentTable, k: int) -> float:
    """``k T_{k-1} / T_k``."""
    if k < 1:
        raise OrderOutOfRange(f"k must be >= 1, got {k}")
    _need(mt, k, "upper_bound_ratio")
    return k * math.exp(_log_T(mt, k - 1) - _log_T(mt, k))


def proof_bounds(mt: MomentTable, k: int):
    """``(2k T_{2k-1}/T_{2k}, (2k-1) T_{2k-2}/T_{2k-1})``: the even and odd ratio bounds."""
    if k < 1:
        raise OrderOutOfRange(f"k must be >= 1, got {k}")
    _need(mt, 2 * k, "proof_bounds")
    return upper_bound_ratio(mt, 2 * k), upper_bound_ratio(mt, 2 * k - 1)


def lower_bound(mt: MomentTable, mass0_sq: float, k: int) -> float:
    """``(k! mu(phi0)^2 / T_k)^{1/k}``."""
    if k < 1:
        raise OrderOutOfRange(f"k must be >= 1, got {k}")
    _need(mt, k, "lower_bound")
    if not mass0_sq > 0:
        raise NonpositiveMass(f"mu(phi0)^2 must be positive, got {mass0_sq}")
    return math.exp((math.lgamma(k + 1) + math.log(mass0_sq) - _log_T(mt, k)) / k)


def moment_cap(mt: MomentTable, lambda0: float, k: int) -> float:
    """``k! mu(Omega) / lambda0^k``, the upper bound on ``T_k``."""
    return math.exp(math.lgamma(k + 1) - k * math.log(lambda0)) * mt.mu_total


def estimate_lambda0(mt: MomentTable):
    """Extrapolate ``lambda0`` from the ratios ``r_k = k T_{k-1} / T_k``.

    The ratios decrease to ``lambda0`` geometrically (rate ``lambda0 /
    lambda1`` for the first mode with nonzero mass), so Aitken's delta-squared
    on the last three ratios is applied.  The correction is skipped once the
    differences reach rounding level or stop contracting; the estimate never
    exceeds ``r_K``.

    Returns
    -------
    estimate : float
    diagnostics : dict
        ``ratios`` (``r_1..r_K``), ``products`` (``estimate^k T_k / k!`` for
        ``k = 0..K``, which converge to ``mu(phi0)^2``) and ``aitken_applied``.
    """
    if mt.K < 3:
        raise InsufficientOrders(f"need K >= 3 moments, have K={mt.K}")
    r = np.array([upper_bound_ratio(mt, k) for k in range(1, mt.K + 1)])
    r0, r1, r2 = r[-3:]
    d1, d2 = r1 - r0, r2 - r1
    est = float(r2)
    applied = False
    if d1 * d2 > 0 and abs(d2) < abs(d1) and abs(d2) > 64 * np.finfo(float).eps * abs(r2):
        cand = r2 - d2 * d2 / (d2 - d1)
        if math.isfinite(cand) and cand > 0:
            est = min(float(cand), float(r2))
            applied = True
    products = [
        math.exp(k * math.log(est) + _log_T(mt, k) - math.lgamma(k + 1)) for k in range(mt.K + 1)
    ]
    diagnostics = {
        "ratios": r.tolist(),
        "products": products,
        "products_limit": "mu(phi0)^2",
        "aitken_applied": applied,
    }
    return est, diagnostics


def exp_moment_bounds(lambda0: float, beta: float, mu_total: float, mass0_sq: float):
    """``(1 + beta/(lambda0 - beta))`` times ``mu(phi0)^2`` (lower) and ``mu(Omega)`` (upper)."""
    if not 0 < beta < lambda0:
        raise BetaAtOrAboveLambda0(f"beta = {beta} must lie in (0, lambda0 = {lambda0})")
    factor = 1.0 + beta / (lambda0 - beta)
    return factor * mass0_sq, factor * mu_total


def moment_upper_from_lambda_lower(lambda_lower: float, k: int, mu_total: float) -> float:
    """``k! mu(Omega) / lambda_lower^k`` for any lower bound on ``lambda0``."""
    return math.exp(math.lgamma(k + 1) - k * math.log(lambda_lower)) * mu_total


def exp_upper_from_lambda_lower(lambda_lower: float, beta: float, mu_total: float) -> float:
    """``(1 + beta/(lambda_lower - beta)) mu(Omega)`` for ``0 < beta < lambda_lower``."""
    if not 0 < beta < lambda_lower:
        raise BetaAtOrAboveLambda0(f"beta = {beta} must lie in (0, {lambda_lower})")
    return (1.0 + beta / (lambda_lower - beta)) * mu_total


# --------------------------------------------------------------------------
# stable processes


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def blm_stable_bounds(d: int, alpha: float, vol: float, lambda0_brownian: Optional[float] = None):
    """Volume lower bound and Brownian upper bound for the stable Dirichlet eigenvalue.

    ``lower = gamma_d^{alpha/d} 2^alpha Gamma(1 + alpha/2) Gamma((d + alpha)/2)
    / (Gamma(d/2) vol^{alpha/d})`` with ``gamma_d`` the unit-ball volume; the
    upper bound ``lambda0_brownian^{alpha/2}`` is returned only when the
    eigenvalue of ``-Delta`` on the same domain is supplied, else ``None``.
    """
    if int(d) != d or d < 1:
        raise InvalidDimension(f"dimension must be a positive integer, got {d}")
    if not 0 < alpha <= 2:
        raise AlphaOutOfRange(f"alpha must lie in (0, 2], got {alpha}")
    if not vol > 0:
        raise InvalidRange(f"domain volume must be positive, got {vol}")
    lower = (
        unit_ball_volume(d) ** (alpha / d)
        * 2.0**alpha
        * math.gamma(1 + alpha / 2)
        * math.gamma((d + alpha) / 2)
        / (math.gamma(d / 2) * vol ** (alpha / d))
    )
    upper = None if lambda0_brownian is None else lambda0_brownian ** (alpha / 2)
    return lower, upper


def blm_moment_bounds(k: int, d: int, alpha: float, vol: float, mass0_sq: float, lambda0_brownian: float):
    """Sandwich on ``T_k`` for the killed stable process implied by the eigenvalue bounds."""
    lower_eig, upper_eig = blm_stable_bounds(d, alpha, vol, lambda0_brownian)
    lk = math.lgamma(k + 1)
    lo = math.exp(lk + math.log(mass0_sq) - k * math.log(upper_eig))
    hi = math.exp(lk + math.log(vol) - k * math.log(lower_eig))
    return lo, hi


def exit_mean_ball_stable(alpha: float, d: int = 1) -> float:
    """``T_1`` of the unit ball for the stable process with generator ``-(-Delta)^{alpha/2}``.

    Integrates the closed-form mean exit time
    ``Gamma(d/2) (1 - |x|^2)^{alpha/2} / (2^alpha Gamma(1 + alpha/2) Gamma((d + alpha)/2))``.
    """
    c = math.gamma(d / 2) / (2**alpha * math.gamma(1 + alpha / 2) * math.gamma((d + alpha) / 2))
    # int_{|x|<1} (1 - |x|^2)^{a/2} dx = pi^{d/2} Gamma(a/2 + 1) / Gamma(a/2 + d/2 + 1)
    integral = math.pi ** (d / 2) * math.gamma(alpha / 2 + 1) / math.gamma(alpha / 2 + d / 2 + 1)
    return c * integral


# --------------------------------------------------------------------------
# Hardy-type quantities


class DeltaPlus(NamedTuple):
    delta_plus: float
    eigen_lower: float
    x_star: float
    at_boundary: bool


def _safe(fn: Callable[[float], float]) -> Callable[[float], float]:
    def wrapped(z):
        try:
            v = float(fn(z))
        except (OverflowError, ExpressionOverflow):
            return math.inf
        return v

    return wrapped


def delta_plus(
    sigma: Callable[[float], float],
    alpha: float,
    qc: QuadratureConfig = DEFAULT_QC,
    x_range=(1e-6, 1e6),
    grid: int = SUP_GRID,
) -> DeltaPlus:
    """``sup_{x>0} x^{alpha-1} int_x^inf sigma(z)^{-alpha} dz`` and the eigenvalue bound.

    The tail integral is accumulated downward over a log-spaced grid of ``x``
    (each piece by adaptive Simpson in ``log z``, the part beyond the top grid
    point by :func:`~exit_spectrum.quadrature.integrate_to_infinity`), the grid
    maximum is refined by golden-section search, and
    ``eigen_lower = (alpha - 1) Gamma(alpha/2)^2 / (4 delta_plus)``.
    ``at_boundary`` flags a supremum approached at an end of ``x_range``.
    """
    if not 1 < alpha < 2:
        raise AlphaOutOfRange(f"alpha must lie in (1, 2), got {alpha}")
    sig = _safe(sigma)

    def dens(z):
        s = sig(z)
        if not s > 0:
            raise DivergentTail(f"sigma({z!r}) = {s!r} is not positive")
        if math.isinf(s):
            return 0.0
        return math.exp(-alpha * math.log(s))

    xs = np.geomspace(x_range[0], x_range[1], grid)
    top = integrate_to_infinity(dens, xs[-1], qc)
    I = np.empty(grid)
    I[-1] = top
    for j in range(grid - 2, -1, -1):
        I[j] = I[j + 1] + integrate_log(dens, xs[j], xs[j + 1], qc)
    P = xs ** (alpha - 1) * I
    j = int(np.argmax(P))
    x_star, best = float(xs[j]), float(P[j])
    at_boundary = j in (0, grid - 1)
    if not at_boundary:
        lo, hi = xs[j - 1], xs[j + 1]
        I_hi = I[j + 1]

        def prod(s):
            x = math.exp(s)
            return x ** (alpha - 1) * (I_hi + integrate_log(dens, x, hi, qc))

        s_star, val = golden_max(prod, math.log(lo), math.log(hi), tol=1e-10)
        if val > best:
            x_star, best = math.exp(s_star), val
    lower = (alpha - 1) * math.gamma(alpha / 2) ** 2 / (4.0 * best)
    return DeltaPlus(float(best), float(lower), float(x_star), at_boundary)


class DeltaR(NamedTuple):
    delta_r: float
    eigen_lower: float
    moment_upper: Callable[[int, float], float]
    exp_upper: Callable[[float, float], float]
    t_star: float
    note: str


def delta_r(
    gamma_fn: Callable[[float], float],
    D: float,
    r: float,
    qc: QuadratureConfig = DEFAULT_QC,
    grid: int = SUP_GRID,
) -> DeltaR:
    """``sup_{r<=t<=D} int_r^t exp(-C(l)) dl * int_t^D exp(C(s)) ds`` with ``C(l) = int_1^l gamma``.

    Both outer integrals are accumulated over a uniform ``t``-grid; ``C`` is
    itself integrated adaptively inside each grid cell.  The grid maximum is
    refined by golden-section search.

    ``moment_upper(k, mu_B) = k! mu_B (4 delta_r)^k`` and
    ``exp_upper(beta, mu_B) = (1 + 4 beta delta_r / (1 - 4 beta delta_r)) mu_B``
    follow from ``lambda0 >= 1 / (4 delta_r)``.
    """
    if not (math.isfinite(D) and math.isfinite(r)) or not r < D:
        raise InvalidRange(f"need finite r < D, got r={r}, D={D}")
    g = _safe(gamma_fn)
    ts = np.linspace(r, D, grid)
    C = np.empty(grid)
    C[0] = adaptive_simpson(g, 1.0, ts[0], qc)
    for j in range(1, grid):
        C[j] = C[j - 1] + adaptive_simpson(g, ts[j - 1], ts[j], qc)

    def C_at(l, j):
        return C[j] + adaptive_simpson(g, ts[j], l, qc)

    def piece(sign, j, lo, hi):
        return adaptive_simpson(lambda l: math.exp(sign * C_at(l, j)), lo, hi, qc)

    F1 = np.zeros(grid)
    for j in range(1, grid):
        F1[j] = F1[j - 1] + piece(-1.0, j - 1, ts[j - 1], ts[j])
    F2 = np.zeros(grid)
    for j in range(grid - 2, -1, -1):
        F2[j] = F2[j + 1] + piece(1.0, j, ts[j], ts[j + 1])
    P = F1 * F2
    if not np.all(np.isfinite(P)):
        raise DivergentTail("delta_r integrals are not finite")
    j = int(np.argmax(P))
    t_star, best = float(ts[j]), float(P[j])
    if 0 < j < grid - 1:

        def prod(t):
            a = F1[j - 1] + piece(-1.0, j - 1, ts[j - 1], t)
            b = F2[j + 1] + piece(1.0, j - 1, t, ts[j + 1])
            return a * b

        t_opt, val = golden_max(prod, ts[j - 1], ts[j + 1], tol=1e-12)
        if val > best:
            t_star, best = t_opt, val

    note = ""
    if best <= 0.0:
        lower = np.finfo(float).max
        note = "domain has shrunk to nothing; eigenvalue bound is unbounded"
    else:
        lower = 1.0 / (4.0 * best)
        if best < 1e-12 * max(1.0, D * D):
            note = "shrinking domain: delta_r is tiny and the eigenvalue bound very large"

    def moment_upper(k: int, mu_B: float) -> float:
        return math.exp(math.lgamma(k + 1) + k * math.log(4.0 * best)) * mu_B

    def exp_upper(beta: float, mu_B: float) -> float:
        x = 4.0 * beta * best
        if not 0 < x < 1:
            raise BetaAtOrAboveLambda0(f"need 0 < beta < 1/(4 delta_r) = {lower}")
        return (1.0 + x / (1.0 - x)) * mu_B

    return DeltaR(float(best), float(lower), moment_upper, exp_upper, float(t_star), note)


# --------------------------------------------------------------------------
# report


@dataclass
class Check:
    name: str
    lhs: float
    rhs: float
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "passed": self.passed}


@dataclass
class BoundsReport:
    """Every bound evaluated from one moment table and one eigenvalue reference.

    ``rows`` holds one dict per order ``k = 1..K`` with keys ``k``, ``T_k``,
    ``upper_odd``, ``upper_ratio``, ``upper_even_ratio``, ``upper_odd_ratio``,
    ``lower_moment`` and ``moment_cap``; a bound that needs orders beyond ``K``
    is ``None``.  ``exp_rows`` holds one dict per ``beta``.
    """

    K: int
    mu_total: float
    lambda0_ref: float
    mass0_sq: float
    rows: List[dict]
    estimate: float
    diagnostics: dict
    exp_rows: List[dict] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)

    CSV_COLUMNS = ("k", "T_k", "upper_odd", "upper_ratio", "lower_moment")
    ALL_COLUMNS = (
        "k",
        "T_k",
        "upper_odd",
        "upper_ratio",
        "upper_even_ratio",
        "upper_odd_ratio",
        "lower_moment",
        "moment_cap",
    )

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "mu_total": self.mu_total,
            "lambda0_ref": self.lambda0_ref,
            "mass0_sq": self.mass0_sq,
            "estimate": self.estimate,
            "diagnostics": self.diagnostics,
            "rows": self.rows,
            "exp_rows": self.exp_rows,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_csv(self, columns: Sequence[str] = CSV_COLUMNS) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in self.rows:
            w.writerow(["" if row.get(c) is None else row[c] for c in columns])
        return buf.getvalue()


def _within(a: float, b: float, slack: float = SLACK) -> bool:
    """``a <= b`` up to relative slack."""
    return a - b <= slack * max(abs(a), abs(b))


def sandwich_check(report: BoundsReport, slack: float = SLACK) -> List[Check]:
    """Evaluate every ordering the bounds must satisfy against ``lambda0_ref``.

    Failures are returned as data (``passed=False``) with both sides of the
    violated inequality; nothing is raised.
    """
    lam = report.lambda0_ref
    checks = []
    for row in report.rows:
        k = row["k"]
        v = row.get("lower_moment")
        if v is not None:
            checks.append(Check(f"lower_moment({k}) <= lambda0", v, lam, _within(v, lam, slack)))
        for key in ("upper_odd", "upper_ratio", "upper_even_ratio", "upper_odd_ratio"):
            v = row.get(key)
            if v is not None:
                checks.append(Check(f"lambda0 <= {key}({k})", lam, v, _within(lam, v, slack)))
        cap = row.get("moment_cap")
        if cap is not None:
            checks.append(Check(f"T_{k} <= k! mu(Omega) / lambda0^k", row["T_k"], cap, _within(row["T_k"], cap, slack)))
    for e in report.exp_rows:
        b = e["beta"]
        lo, hi = e["lower"], e["upper"]
        mid = e.get("exact")
        if mid is None and e.get("series") is not None and e["series_last_term"] <= 1e-12 * e["series"]:
            mid = e["series"]
        if mid is not None:
            checks.append(Check(f"exp_lower(beta={b:.6g}) <= E[exp(beta tau)]", lo, mid, _within(lo, mid, slack)))
            checks.append(Check(f"E[exp(beta tau)] <= exp_upper(beta={b:.6g})", mid, hi, _within(mid, hi, slack)))
        else:
            checks.append(Check(f"exp_lower(beta={b:.6g}) <= exp_upper", lo, hi, _within(lo, hi, slack)))
    return checks


def build_report(
    mt: MomentTable,
    lambda0: float,
    mass0_sq: float,
    betas: Sequence[float] = (),
    spectrum=None,
) -> BoundsReport:
    """Assemble a :class:`BoundsReport` and run :func:`sandwich_check` on it.

    ``spectrum`` (a :class:`~exit_spectrum.spectral.Spectrum`), when given,
    supplies the exact exponential moments for the ``betas``.
    """
    from .spectral import exp_moment_exact

    K = mt.K
    rows = []
    for k in range(1, K + 1):
        row = {
            "k": k,
            "T_k": float(mt.T[k]),
            "upper_odd": upper_bound_odd(mt, k) if 2 * k - 1 <= K else None,
            "upper_ratio": upper_bound_ratio(mt, k),
            "upper_even_ratio": upper_bound_ratio(mt, 2 * k) if 2 * k <= K else None,
            "upper_odd_ratio": upper_bound_ratio(mt, 2 * k - 1) if 2 * k - 1 <= K else None,
            "lower_moment": lower_bound(mt, mass0_sq, k) if mass0_sq > 0 else None,
            "moment_cap": moment_cap(mt, lambda0, k),
        }
        rows.append(row)

    if K >= 3:
        est, diag = estimate_lambda0(mt)
    else:
        est, diag = upper_bound_ratio(mt, K), {"ratios": [upper_bound_ratio(mt, k) for k in range(1, K + 1)]}

    exp_rows = []
    for b in betas:
        lo, hi = exp_moment_bounds(lambda0, b, mt.mu_total, mass0_sq)
        series, trunc = exp_moment_series(mt, b)
        entry = {"beta": float(b), "lower": lo, "upper": hi, "series": series, "series_last_term": trunc}
        entry["exact"] = exp_moment_exact(spectrum, mt.mu_total, b) if spectrum is not None else None
        exp_rows.append(entry)

    report = BoundsReport(
        K=K,
        mu_total=mt.mu_total,
        lambda0_ref=float(lambda0),
        mass0_sq=float(mass0_sq),
        rows=rows,
        estimate=float(est),
        diagnostics=diag,
        exp_rows=exp_rows,
    )
    report.checks = sandwich_check(report)
    return report
