"""Generators killed on leaving a domain, their Green operator and energy form."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cho_solve_banded, cholesky_banded

from .errors import DimensionMismatch, EmptyDomain, NotPositiveDefinite, SolveFailure

if TYPE_CHECKING:
    from .generator import Generator

RESIDUAL_TOL = 1e-12


def _is_tridiagonal(A: np.ndarray) -> bool:
    n = A.shape[0]
    if n < 3:
        return True
    return not np.any(np.triu(A, 2)) and not np.any(np.tril(A, -2))


@dataclass(frozen=True)
class KilledGenerator:
    """``A = -L`` restricted to the states in ``omega``.

    ``A`` is symmetric for the weights ``mu_omega`` and positive definite; the
    factorization of its symmetrized form ``S = M^{1/2} A M^{-1/2}`` is computed
    once at construction and reused by every Green solve.
    """

    parent: "Generator"
    omega: np.ndarray
    A: np.ndarray
    mu_omega: np.ndarray
    mu_total: float
    banded: bool = field(default=False)
    _sqrt_mu: np.ndarray = field(default=None, repr=False, compare=False)
    _factor: tuple = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def x(self):
        if self.parent.x is None:
            return None
        return self.parent.x[self.omega]

    def symmetrized(self) -> np.ndarray:
        """``M^{1/2} A M^{-1/2}``, exactly symmetric."""
        s = self._sqrt_mu
        S = s[:, None] * self.A / s[None, :]
        return 0.5 * (S + S.T)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A u = rhs`` with the stored factorization (no refinement)."""
        s = self._sqrt_mu
        y = s * rhs
        if self.banded:
            z = cho_solve_banded(self._factor, y, check_finite=False)
        else:
            z = cho_solve(self._factor, y, check_finite=False)
        return z / s


def _factorize(S: np.ndarray, banded: bool):
    try:
        if banded:
            n = S.shape[0]
            ab = np.zeros((2, n))
            ab[0, 1:] = np.diag(S, 1)
            ab[1] = np.diag(S)
            return (cholesky_banded(ab, lower=False, check_finite=False), False)
        return cho_factor(S, lower=False, check_finite=False)
    except LinAlgError as exc:
        raise NotPositiveDefinite(
            "killed generator is not positive definite: some state cannot reach the cemetery"
        ) from exc


def kill(gen: "Generator", omega: Union[str, np.ndarray, list] = "all") -> KilledGenerator:
    """Restrict ``gen`` to the states ``omega`` with absorption everywhere else.

    Parameters
    ----------
    gen : Generator
    omega : "all" or sequence of int
        Interior states.  Builders that already encode the exterior as killing
        (fractional and time-changed) only accept the full index set.

    Raises
    ------
    EmptyDomain
        ``omega`` is empty or refers to missing states.
    NotPositiveDefinite
        ``-L`` restricted to ``omega`` is singular or indefinite, i.e. the
        principal Dirichlet eigenvalue is not positive.
    """
    n = gen.n
    if isinstance(omega, str):
        if omega != "all":
            raise EmptyDomain(f"omega must be 'all' or an index list, got {omega!r}")
        idx = np.arange(n)
    else:
        idx = np.unique(np.asarray(omega, dtype=int).ravel())
    if idx.size == 0:
        raise EmptyDomain("omega is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise EmptyDomain(f"omega indices must lie in [0, {n - 1}]")
    if gen.kind in ("fractional1d", "timechanged1d") and idx.size != n:
        raise EmptyDomain(f"{gen.kind} generators are already killed; omega must be all states")

    A = -gen.L[np.ix_(idx, idx)]
    A.setflags(write=False)
    mu = gen.mu[idx].copy()
    mu.setflags(write=False)
    sqrt_mu = np.sqrt(mu)
    banded = _is_tridiagonal(A)

    S = sqrt_mu[:, None] * A / sqrt_mu[None, :]
    S = 0.5 * (S + S.T)
    factor = _factorize(S, banded)
    return KilledGenerator(
        parent=gen,
        omega=idx,
        A=A,
        mu_omega=mu,
        mu_total=float(mu.sum()),
        banded=banded,
        _sqrt_mu=sqrt_mu,
        _factor=factor,
    )


def _as_vector(kg: KilledGenerator, f, name="f") -> np.ndarray:
    v = np.asarray(f, dtype=float)
    if v.shape != (kg.n,):
        raise DimensionMismatch(f"{name} has shape {v.shape}; expected ({kg.n},)")
    return v


def green_apply(kg: KilledGenerator, xi) -> np.ndarray:
    """Return ``u`` with ``A u = xi``, i.e. ``u(x) = E_x int_0^tau xi(X_t) dt``.

    One step of iterative refinement is taken if the relative residual exceeds
    ``1e-12``.
    """
    xi = _as_vector(kg, xi, "xi")
    if not np.all(np.isfinite(xi)):
        raise SolveFailure("source term has non-finite entries")
    u = kg.solve(xi)
    scale = np.linalg.norm(xi)
    if scale == 0:
        return np.zeros_like(xi)
    r = xi - kg.A @ u
    if np.linalg.norm(r) > RESIDUAL_TOL * scale:
        u = u + kg.solve(r)
    if not np.all(np.isfinite(u)):
        raise SolveFailure("Green solve produced non-finite values")
    return u


def dirichlet_energy(kg: KilledGenerator, f, g) -> float:
    """``E(f, g) = sum_i mu_i f_i (A g)_i`` for functions vanishing off ``omega``."""
    f = _as_vector(kg, f, "f")
    g = _as_vector(kg, g, "g")
    return float(np.dot(kg.mu_omega * f, kg.A @ g))


def rayleigh_quotient(kg: KilledGenerator, f) -> float:
    f = _as_vector(kg, f, "f")
    return dirichlet_energy(kg, f, f) / float(np.dot(kg.mu_omega, f * f))
