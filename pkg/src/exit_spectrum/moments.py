"""Exit-time moments by recursive Green solves.

``u_0 = 1`` and ``u_k = k G u_{k-1}``, where ``G`` is the Green operator of the
killed generator; then ``u_k(x) = E_x[tau^k]`` and ``T_k = sum_i mu_i u_k(i)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DegenerateTrial, OrderOutOfRange, OverflowRisk
from .killed import KilledGenerator, dirichlet_energy, green_apply

DEFAULT_K = 20
DIRECT_LIMIT = 30


@dataclass(frozen=True)
class MomentTable:
    """Moment vectors ``u[k]`` and integrated moments ``T[k]`` for ``k = 0..K``."""

    K: int
    u: np.ndarray  # shape (K + 1, n)
    T: np.ndarray  # shape (K + 1,)
    mu: np.ndarray
    scale_rate: Optional[float] = None
    log_T: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def mu_total(self) -> float:
        return float(self.T[0])

    @cached_property
    def gram(self) -> np.ndarray:
        """``gram[j, k] = <u_j, u_k>_mu``."""
        W = self.u * self.mu[None, :]
        G = W @ self.u.T
        return 0.5 * (G + G.T)

    def ratios(self) -> np.ndarray:
        """``r_k = k T_{k-1} / T_k`` for ``k = 1..K`` (index 0 is NaN)."""
        r = np.full(self.K + 1, np.nan)
        k = np.arange(1, self.K + 1)
        r[1:] = k * self.T[:-1] / self.T[1:]
        return r

    def to_dict(self, include_u: bool = True) -> dict:
        d = {"K": int(self.K), "T": [float(t) for t in self.T]}
        if include_u:
            d["u"] = self.u.tolist()
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "T_k"])
        for k, t in enumerate(self.T):
            w.writerow([k, repr(float(t))])
        return buf.getvalue()


def _check_order(mt: MomentTable, *orders):
    for k in orders:
        if int(k) != k or k < 0 or k > mt.K:
            raise OrderOutOfRange(f"order {k} outside 0..{mt.K}")


def exit_moments(kg: KilledGenerator, K: int = DEFAULT_K) -> MomentTable:
    """Moment table up to order ``K``.

    Orders up to 30 are computed directly.  Beyond that the recursion runs on
    ``v_k = u_k * r^k / k!`` with ``r`` the ratio estimate ``30 T_29 / T_30``,
    which keeps the vectors of order one; the table is materialized at the end.
    """
    if int(K) != K or K < 1:
        raise OrderOutOfRange(f"K must be a positive integer, got {K}")
    K = int(K)
    mu = kg.mu_omega
    n = kg.n
    u = np.empty((K + 1, n))
    u[0] = 1.0
    direct = min(K, DIRECT_LIMIT)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, direct + 1):
            u[k] = green_apply(kg, k * u[k - 1])
            if not np.all(np.isfinite(u[k])):
                raise OverflowRisk(k)
    log_T = np.empty(K + 1)
    T_direct = u[: direct + 1] @ mu
    log_T[: direct + 1] = np.log(T_direct)

    rate = None
    if K > DIRECT_LIMIT:
        rate = DIRECT_LIMIT * T_direct[-2] / T_direct[-1]
        v = u[DIRECT_LIMIT] * math.exp(DIRECT_LIMIT * math.log(rate) - math.lgamma(DIRECT_LIMIT + 1))
        for k in range(DIRECT_LIMIT + 1, K + 1):
            v = rate * green_apply(kg, v)
            log_scale = math.lgamma(k + 1) - k * math.log(rate)
            log_T[k] = math.log(float(v @ mu)) + log_scale
            if log_scale > 709.0:
                raise OverflowRisk(k, f"moment of order {k} exceeds the float64 range (log T_k = {log_T[k]:.1f})")
            with np.errstate(over="ignore"):
                u[k] = v * math.exp(log_scale)
            if not np.all(np.isfinite(u[k])):
                raise OverflowRisk(k)

    T = u @ mu
    if not np.all(np.isfinite(T)):
        raise OverflowRisk(int(np.argmin(np.isfinite(T))))
    u.setflags(write=False)
    T.setflags(write=False)
    return MomentTable(K=K, u=u, T=T, mu=mu, scale_rate=rate, log_T=log_T)


def cross_moment(mt: MomentTable, j: int, k: int) -> float:
    """``<u_j, u_k>_mu``."""
    _check_order(mt, j, k)
    return float(mt.gram[j, k])


def verify_iterate_identity(mt: MomentTable, k: int):
    """Relative residuals of the two pairing identities at order ``k``.

    Compares ``k <u_{k-1}, u_k>`` with ``(k!)^2 / (2k-1)! * T_{2k-1}`` and
    ``<u_k, u_k>`` with ``(k!)^2 / (2k)! * T_{2k}``.
    """
    if k < 1 or 2 * k > mt.K:
        raise OrderOutOfRange(f"need 1 <= k and 2k <= K={mt.K}, got k={k}")
    lf = math.lgamma(k + 1)
    c_odd = math.exp(2 * lf - math.lgamma(2 * k))
    c_even = math.exp(2 * lf - math.lgamma(2 * k + 1))
    lhs1 = k * mt.gram[k - 1, k]
    rhs1 = c_odd * mt.T[2 * k - 1]
    lhs2 = mt.gram[k, k]
    rhs2 = c_even * mt.T[2 * k]
    return abs(lhs1 - rhs1) / abs(rhs1), abs(lhs2 - rhs2) / abs(rhs2)


def variational_gap(kg: KilledGenerator, mt: MomentTable, k: int, f) -> float:
    """Energy excess of the trial ``f`` over the minimum ``1 / (k <u_{k-1}, u_k>)``.

    ``f`` is first rescaled onto the constraint set ``k <u_{k-1}, f> = 1``.  The
    result is nonnegative up to rounding and vanishes when ``f`` is a multiple
    of ``u_k``.
    """
    if k < 1:
        raise OrderOutOfRange(f"k must be >= 1, got {k}")
    _check_order(mt, k)
    f = np.asarray(f, dtype=float)
    w = mt.u[k - 1]
    pairing = float(np.dot(mt.mu * w, f))
    norm = math.sqrt(float(np.dot(mt.mu * w, w)) * float(np.dot(mt.mu * f, f)))
    if norm == 0 or abs(pairing) <= 1e-14 * norm:
        raise DegenerateTrial(f"trial function is orthogonal to u_{k - 1}")
    f = f / (k * pairing)
    return dirichlet_energy(kg, f, f) - 1.0 / (k * mt.gram[k - 1, k])


def exp_moment_series(mt: MomentTable, beta: float):
    """Partial sum of ``E_mu[exp(beta tau)] = sum_k beta^k T_k / k!``.

    Returns ``(value, last_term)``; a last term that is not small means the
    truncation at ``K`` is unreliable (e.g. ``beta >= lambda_0``).
    """
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    if beta == 0:
        return float(mt.T[0]), 0.0
    k = np.arange(mt.K + 1)
    logs = np.array([math.lgamma(i + 1) for i in k])
    log_T = mt.log_T if mt.log_T is not None else np.log(mt.T)
    terms = np.exp(k * math.log(beta) + log_T - logs)
    return float(terms.sum()), float(terms[-1])
