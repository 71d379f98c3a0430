"""Adaptive Simpson quadrature, improper tails and a golden-section maximizer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import DivergentTail

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class QuadratureConfig:
    method: str = "adaptive-simpson"
    abs_tol: float = 1e-13
    rel_tol: float = 1e-11
    max_depth: int = 50
    infinity_cutoff: float = 1e8

    def __post_init__(self):
        if self.method != "adaptive-simpson":
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_depth > 0 and self.infinity_cutoff > 0):
            raise ValueError("quadrature tolerances, depth and cutoff must be positive")


DEFAULT_QC = QuadratureConfig()


def _simpson(fa, fm, fb, a, b):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, qc: QuadratureConfig = DEFAULT_QC) -> float:
    """Integrate ``f`` over ``[a, b]`` by adaptive Simpson with Richardson correction."""
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, qc)
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = _simpson(fa, fm, fb, a, b)
    # seed the relative tolerance from a five-point estimate
    l1, l3 = f(0.5 * (a + m)), f(0.5 * (m + b))
    coarse = abs(_simpson(fa, l1, fm, a, m)) + abs(_simpson(fm, l3, fb, m, b))
    tol = max(qc.abs_tol, qc.rel_tol * coarse)

    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, fa0, fm0, fb0, est, eps, depth = stack.pop()
        m0 = 0.5 * (a0 + b0)
        lm, rm = 0.5 * (a0 + m0), 0.5 * (m0 + b0)
        flm, frm = f(lm), f(rm)
        left = _simpson(fa0, flm, fm0, a0, m0)
        right = _simpson(fm0, frm, fb0, m0, b0)
        delta = left + right - est
        if depth >= qc.max_depth or abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        else:
            stack.append((a0, m0, fa0, flm, fm0, left, 0.5 * eps, depth + 1))
            stack.append((m0, b0, fm0, frm, fb0, right, 0.5 * eps, depth + 1))
    return total


def integrate_log(f: Callable[[float], float], lo: float, hi: float, qc: QuadratureConfig = DEFAULT_QC) -> float:
    """``int_lo^hi f(z) dz`` for ``0 < lo < hi`` in the variable ``s = log z``."""
    if not 0 < lo <= hi:
        raise ValueError(f"need 0 < lo <= hi, got {lo}, {hi}")
    return adaptive_simpson(lambda s: f(math.exp(s)) * math.exp(s), math.log(lo), math.log(hi), qc)


def power_tail(f: Callable[[float], float], z: float) -> float:
    """Estimate ``int_z^inf f`` from a power-law fit of ``f`` around ``z``.

    The decay exponent is probed on ``[z/2, z]`` and ``[z, 2z]``; the tail is
    integrable only if both exceed one.
    """
    f_lo, f_mid, f_hi = f(0.5 * z), f(z), f(2.0 * z)
    if f_mid == 0.0 and f_hi == 0.0:
        return 0.0
    if f_lo <= 0 or f_mid <= 0 or f_hi <= 0:
        if f_hi == 0.0:
            return 0.0
        raise DivergentTail(f"integrand is not positive near the cutoff z = {z:g}")
    p1 = math.log(f_lo / f_mid) / math.log(2.0)
    p2 = math.log(f_mid / f_hi) / math.log(2.0)
    p = min(p1, p2)
    if p <= 1.0 + 1e-6:
        raise DivergentTail(f"integrand decays like z^-{p:.4g} near z = {z:g}; the tail is not integrable")
    return f_mid * z / (p - 1.0)


def integrate_to_infinity(f: Callable[[float], float], lo: float, qc: QuadratureConfig = DEFAULT_QC) -> float:
    """``int_lo^inf f`` for a positive, eventually power-law or faster decaying ``f``."""
    cut = max(qc.infinity_cutoff, 1e3 * lo)
    tail = power_tail(f, cut)
    return integrate_log(f, lo, cut, qc) + tail


def golden_max(g: Callable[[float], float], a: float, b: float, tol: float = 1e-12, max_iter: int = 200):
    """Maximize a unimodal ``g`` on ``[a, b]``; returns ``(argmax, max)``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + GOLDEN * (b - a)
            gd = g(d)
    return (c, gc) if gc >= gd else (d, gd)
