"""Finite symmetric Markov generators.

A generator is a rate matrix ``L`` on ``n`` states together with positive
measure weights ``mu`` such that ``mu_i * L_ij == mu_j * L_ji`` (detailed
balance).  Row sums that fall below zero encode killing: the missing rate is
the intensity of jumping to the cemetery.

Four builders are provided:

* :func:`build_chain` -- an explicit reversible chain,
* :func:`build_diffusion_1d` -- ``L = d^2/dx^2 + V'(x) d/dx`` on an interval,
  discretized by midpoint conductances with Dirichlet ends,
* :func:`build_fractional_1d` -- the restricted fractional Laplacian
  ``-(-Delta)^{alpha/2}`` killed outside an interval,
* :func:`build_time_changed_1d` -- ``sigma^alpha * Delta^{alpha/2}``, the
  generator of a time-changed stable process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import gamma as gamma_fn

from .errors import (
    AlphaOutOfRange,
    DetailedBalanceViolation,
    DimensionMismatch,
    InvalidGrid,
    NegativeOffDiagonal,
    NonFinitePotential,
    NonpositiveWeight,
    SigmaNonpositive,
)

BALANCE_TOL = 1e-12

KINDS = ("chain", "diffusion1d", "fractional1d", "timechanged1d")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridSpec:
    """``n`` equally spaced interior points of the open interval ``(a, b)``."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or self.a >= self.b:
            raise InvalidGrid(f"need finite a < b, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidGrid(f"need n >= 1 interior points, got {self.n}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n + 1)

    @property
    def points(self) -> np.ndarray:
        return self.a + self.h * np.arange(1, self.n + 1)

    @property
    def length(self) -> float:
        return self.b - self.a


@dataclass(frozen=True)
class Generator:
    """Rate matrix ``L`` symmetric with respect to the weights ``mu``.

    Attributes
    ----------
    n : int
        Number of states.
    x : ndarray or None
        Grid coordinates for grid-based builders.
    mu : ndarray, shape (n,)
        Strictly positive measure weights.
    L : ndarray, shape (n, n)
        Rate matrix; off-diagonal entries are jump rates, the diagonal is minus
        the total outflow (jumps plus killing).
    kind : str
        One of ``chain``, ``diffusion1d``, ``fractional1d``, ``timechanged1d``.
    """

    n: int
    x: Optional[np.ndarray]
    mu: np.ndarray
    L: np.ndarray
    kind: str = "chain"

    @property
    def killing(self) -> np.ndarray:
        """Per-state killing rate, ``-sum_j L_ij`` (zero for conservative rows)."""
        return -self.L.sum(axis=1)

    @property
    def mu_total(self) -> float:
        return float(self.mu.sum())

    @property
    def absorbing(self) -> np.ndarray:
        """Mask of states with an all-zero row; they act as part of the cemetery."""
        return ~np.any(self.L != 0, axis=1)

    def detailed_balance_residual(self) -> float:
        """Largest relative mismatch ``|mu_i L_ij - mu_j L_ji|`` over pairs of non-absorbing states."""
        return float(_balance_matrix(self.mu, self.L).max()) if self.n > 1 else 0.0

    def normalized(self) -> "Generator":
        """Same generator with ``mu`` rescaled to a probability vector."""
        return Generator(self.n, self.x, _frozen(self.mu / self.mu.sum()), self.L, self.kind)

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n": int(self.n),
            "mu_total": self.mu_total,
            "balance_residual": self.detailed_balance_residual(),
            "min_killing": float(self.killing.min()),
            "max_killing": float(self.killing.max()),
        }


def _balance_matrix(mu: np.ndarray, L: np.ndarray) -> np.ndarray:
    P = mu[:, None] * L
    scale = np.maximum(np.maximum(np.abs(P), np.abs(P.T)), 1.0)
    R = np.abs(P - P.T) / scale
    np.fill_diagonal(R, 0.0)
    # jumps into an absorbing state are killing, not reversible transitions
    dead = ~np.any(L != 0, axis=1)
    R[:, dead] = 0.0
    R[dead, :] = 0.0
    return R


def validate(gen: Generator, tol: float = BALANCE_TOL) -> Generator:
    """Check the generator invariants, raising on the first violation."""
    L, mu = gen.L, gen.mu
    n = gen.n
    if L.shape != (n, n) or mu.shape != (n,):
        raise DimensionMismatch(f"L has shape {L.shape} and mu {mu.shape}; expected n={n}")
    if not (np.all(np.isfinite(L)) and np.all(np.isfinite(mu))):
        raise NonFinitePotential("generator has non-finite entries")
    if np.any(mu <= 0):
        i = int(np.argmin(mu))
        raise NonpositiveWeight(f"mu[{i}] = {mu[i]!r} is not strictly positive")

    off = L - np.diag(np.diag(L))
    if np.any(off < 0):
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise NegativeOffDiagonal(f"L[{i},{j}] = {L[i, j]!r} < 0")

    row = L.sum(axis=1)
    outflow = np.maximum(off.sum(axis=1), 1.0)
    if np.any(row > tol * outflow):
        i = int(np.argmax(row / outflow))
        raise NegativeOffDiagonal(
            f"row {i} of L sums to {row[i]!r} > 0; diagonal must be at most minus the outflow"
        )

    P = mu[:, None] * L
    R = _balance_matrix(mu, L)
    if n > 1 and R.max() > tol:
        i, j = np.unravel_index(np.argmax(R), R.shape)
        raise DetailedBalanceViolation(int(i), int(j), float(P[i, j]), float(P[j, i]))
    return gen


def build_chain(L_rows, mu, normalize: bool = False) -> Generator:
    """Generator from an explicit rate matrix.

    The diagonal is taken as given; a row sum below zero is a killing rate.

    Examples
    --------
    >>> g = build_chain([[-1, 1, 0], [1, -2, 1], [0, 1, -1]], [1, 1, 1])
    >>> g.n
    3
    """
    L = np.atleast_2d(np.asarray(L_rows, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] != mu.shape[0]:
        raise DimensionMismatch(f"rate matrix {L.shape} does not match {mu.shape[0]} weights")
    if np.any(mu <= 0):
        i = int(np.argmin(mu))
        raise NonpositiveWeight(f"mu[{i}] = {mu[i]!r} is not strictly positive")
    if normalize:
        mu = mu / mu.sum()
    gen = Generator(L.shape[0], None, _frozen(mu), _frozen(L), "chain")
    return validate(gen)


def _evaluate(fn, x, what, exc):
    try:
        val = np.asarray(fn(x), dtype=float)
        if val.shape != x.shape:
            val = np.broadcast_to(val, x.shape).astype(float)
    except (TypeError, ValueError):
        val = np.array([float(fn(float(xi))) for xi in x])
    if not np.all(np.isfinite(val)):
        bad = int(np.argmin(np.isfinite(val)))
        raise exc(f"{what} is not finite at x = {x[bad]!r}")
    return val


def build_diffusion_1d(grid: GridSpec, V: Callable, normalize: bool = False) -> Generator:
    """Dirichlet generator of ``f'' + V' f'`` on ``(grid.a, grid.b)``.

    Finite-volume discretization: node weights ``exp(V(x_i)) * h`` and edge
    conductances ``exp(V(midpoint)) / h``, including the two boundary edges,
    whose flux leaves the domain.  Detailed balance holds at any resolution.
    """
    h = grid.h
    x = grid.points
    mids = grid.a + h * (np.arange(grid.n + 1) + 0.5)
    Vx = _evaluate(V, x, "potential V", NonFinitePotential)
    Vm = _evaluate(V, mids, "potential V", NonFinitePotential)

    mu = np.exp(Vx) * h
    c = np.exp(Vm) / h
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(c)) and np.all(mu > 0)):
        raise NonFinitePotential("exp(V) overflows or underflows on the grid")

    n = grid.n
    L = np.zeros((n, n))
    idx = np.arange(n)
    L[idx, idx] = -(c[:-1] + c[1:]) / mu
    L[idx[:-1], idx[:-1] + 1] = c[1:-1] / mu[:-1]
    L[idx[1:], idx[1:] - 1] = c[1:-1] / mu[1:]
    if normalize:
        mu = mu / mu.sum()
    return validate(Generator(n, _frozen(x), _frozen(mu), _frozen(L), "diffusion1d"))


def fractional_constant(alpha: float) -> float:
    """Normalizing constant of ``(-Delta)^{alpha/2}`` in one dimension."""
    return (
        alpha
        * 2.0 ** (alpha - 1)
        * gamma_fn((1 + alpha) / 2)
        / (math.sqrt(math.pi) * gamma_fn(1 - alpha / 2))
    )


def fractional_matrix(grid: GridSpec, alpha: float) -> np.ndarray:
    """Symmetric Toeplitz matrix approximating ``(-Delta)^{alpha/2}`` with zero exterior.

    Writes the operator as ``C * int_0^inf (2u(x) - u(x-t) - u(x+t)) t^{-1-alpha} dt``,
    splits the integrand as ``psi(t) * t^{1-alpha}`` with
    ``psi = (2u(x) - u(x-t) - u(x+t)) / t^2`` and integrates the piecewise-linear
    interpolant of ``psi`` exactly against ``t^{1-alpha}``.  On the first cell
    ``psi`` is held at its value at ``t = h`` (the second difference).  Beyond
    ``t = b - a`` both shifted points lie outside and the tail is integrated in
    closed form, so the exterior mass lands on the diagonal.
    """
    if not 0 < alpha < 2:
        raise AlphaOutOfRange(f"alpha must lie in (0, 2), got {alpha}")
    n, h = grid.n, grid.h
    m = n + 1  # t_m = b - a
    p = 1.0 - alpha
    t = h * np.arange(m + 1)
    I0 = (t[1:] ** (p + 1) - t[:-1] ** (p + 1)) / (p + 1)
    I1 = (t[1:] ** (p + 2) - t[:-1] ** (p + 2)) / (p + 2)
    right = (I1 - t[:-1] * I0) / h
    left = (t[1:] * I0 - I1) / h
    right[0] = I0[0]
    w = right
    w[:-1] += left[1:]
    coef = w / t[1:] ** 2

    diag = 2.0 * coef.sum() + 2.0 * t[m] ** (-alpha) / alpha
    col = np.empty(n)
    col[0] = diag
    col[1:] = -coef[: n - 1]
    return fractional_constant(alpha) * toeplitz(col)


def build_fractional_1d(grid: GridSpec, alpha: float, normalize: bool = False):
    """Symmetric alpha-stable process killed on leaving ``(grid.a, grid.b)``.

    Returns a :class:`~exit_spectrum.killed.KilledGenerator` over every grid
    point; the exterior is the cemetery.  Weights are Lebesgue, ``mu_i = h``.
    """
    from .killed import kill

    F = fractional_matrix(grid, alpha)
    mu = np.full(grid.n, grid.h)
    if normalize:
        mu = mu / mu.sum()
    gen = validate(Generator(grid.n, _frozen(grid.points), _frozen(mu), _frozen(-F), "fractional1d"))
    return kill(gen, "all")


def build_time_changed_1d(grid: GridSpec, alpha: float, sigma: Callable, normalize: bool = False):
    """Killed generator of ``dX = sigma(X-) dZ`` for a symmetric alpha-stable ``Z``.

    The generator is ``sigma^alpha * Delta^{alpha/2}``, symmetric for
    ``mu(dx) = sigma(x)^{-alpha} dx``.  The grid is normally ``(0, R)``, a
    truncation of the half-line; the process is also killed beyond ``R``.
    """
    from .killed import kill

    if not 1 < alpha < 2:
        raise AlphaOutOfRange(f"time-changed builder needs 1 < alpha < 2, got {alpha}")
    x = grid.points
    s = _evaluate(sigma, x, "sigma", SigmaNonpositive)
    if np.any(s <= 0):
        i = int(np.argmin(s))
        raise SigmaNonpositive(f"sigma({x[i]!r}) = {s[i]!r} is not strictly positive")
    F = fractional_matrix(grid, alpha)
    speed = s**alpha
    mu = grid.h / speed
    if normalize:
        mu = mu / mu.sum()
    L = -(speed[:, None] * F)
    gen = validate(Generator(grid.n, _frozen(x), _frozen(mu), _frozen(L), "timechanged1d"))
    return kill(gen, "all")
