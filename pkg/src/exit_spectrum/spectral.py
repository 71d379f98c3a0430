"""Dirichlet spectrum of a killed generator and the spectral moment formula."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh, eigh_tridiagonal

from .errors import BetaAtOrAboveLambda0, ConvergenceFailure, TooLargeForDense
from .killed import KilledGenerator, rayleigh_quotient

DENSE_CAP = 4000
CLUSTER_GAP = 1e-9


@dataclass(frozen=True)
class Spectrum:
    """Eigenpairs of ``A`` in ascending order.

    ``phi[i]`` is the ``i``-th eigenfunction, orthonormal in ``L^2(mu)``;
    ``mass[i] = sum_j mu_j phi[i, j]``.  ``cluster[i]`` labels numerically
    degenerate groups of eigenvalues (equal labels share an eigenspace).
    """

    lam: np.ndarray
    phi: np.ndarray
    mass: np.ndarray
    mu: np.ndarray
    cluster: np.ndarray

    @property
    def lambda0(self) -> float:
        return float(self.lam[0])

    @property
    def mass0_sq(self) -> float:
        return float(self.mass[0] ** 2)

    @property
    def mu_total(self) -> float:
        return float(self.mu.sum())

    def cluster_sums(self):
        """Cluster eigenvalues (mean) and summed squared masses.

        Masses inside a degenerate cluster depend on the chosen basis; only
        their squared sum is meaningful.
        """
        labels = np.unique(self.cluster)
        lam = np.array([self.lam[self.cluster == c].mean() for c in labels])
        m2 = np.array([np.sum(self.mass[self.cluster == c] ** 2) for c in labels])
        return lam, m2

    def to_dict(self, include_phi: bool = False) -> dict:
        d = {"lambda": self.lam.tolist(), "mass": self.mass.tolist()}
        if include_phi:
            d["phi"] = self.phi.tolist()
        return d


def _tridiagonal_parts(kg: KilledGenerator):
    S = kg.symmetrized()
    return np.diag(S).copy(), np.diag(S, 1).copy()


def principal_pair(kg: KilledGenerator):
    """Smallest Dirichlet eigenvalue and its ``mu``-normalized eigenfunction.

    The returned eigenvalue is the Rayleigh quotient of the returned vector,
    which for a symmetric problem is the more accurate of the two estimates.
    The sign is fixed so that ``mu(phi0) >= 0``.
    """
    s = np.sqrt(kg.mu_omega)
    try:
        if kg.banded and kg.n > 1:
            d, e = _tridiagonal_parts(kg)
            w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
        else:
            w, v = eigh(kg.symmetrized(), subset_by_index=[0, 0])
    except (LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"eigensolver failed: {exc}") from exc
    phi = v[:, 0] / s
    if np.dot(kg.mu_omega, phi) < 0:
        phi = -phi
    lam = rayleigh_quotient(kg, phi)
    if not abs(lam - w[0]) <= 1e-8 * max(1.0, abs(w[0])):
        raise ConvergenceFailure(f"eigenvalue {w[0]!r} disagrees with its Rayleigh quotient {lam!r}")
    return lam, phi


def _clusters(lam: np.ndarray) -> np.ndarray:
    tol = CLUSTER_GAP * max(abs(lam[-1]), 1e-300)
    labels = np.zeros(lam.size, dtype=int)
    if lam.size > 1:
        labels[1:] = np.cumsum(np.diff(lam) > tol)
    return labels


def full_spectrum(kg: KilledGenerator, dense_cap: int = DENSE_CAP) -> Spectrum:
    """All Dirichlet eigenpairs of ``kg``.

    Raises
    ------
    TooLargeForDense
        ``kg`` has more than ``dense_cap`` states.
    """
    if kg.n > dense_cap:
        raise TooLargeForDense(f"{kg.n} states exceed the dense cap {dense_cap}")
    try:
        if kg.banded and kg.n > 1:
            d, e = _tridiagonal_parts(kg)
            w, V = eigh_tridiagonal(d, e)
        else:
            w, V = eigh(kg.symmetrized())
    except (LinAlgError, ValueError) as exc:
        raise ConvergenceFailure(f"eigensolver failed: {exc}") from exc

    labels = _clusters(w)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size > 1:
            V[:, idx], _ = np.linalg.qr(V[:, idx])

    # largest-magnitude entry positive
    pos = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pos, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    V = V * signs[None, :]

    s = np.sqrt(kg.mu_omega)
    phi = (V / s[:, None]).T
    mass = phi @ kg.mu_omega
    if mass[0] < 0:
        phi[0] = -phi[0]
        mass[0] = -mass[0]
    for a in (w, phi, mass, labels):
        a.setflags(write=False)
    return Spectrum(lam=w, phi=phi, mass=mass, mu=kg.mu_omega, cluster=labels)


def spectral_moments(spec: Spectrum, k: int) -> float:
    """``T_k = k! * sum_i mu(phi_i)^2 / lambda_i^k``."""
    if k < 1:
        raise ValueError(f"order must be >= 1, got {k}")
    lam, m2 = spec.cluster_sums()
    keep = m2 > 0
    logs = np.log(m2[keep]) - k * np.log(lam[keep])
    top = logs.max()
    return math.exp(math.lgamma(k + 1) + top) * float(np.exp(logs - top).sum())


def exp_moment_exact(spec: Spectrum, mu_total: float, beta: float) -> float:
    """``E_mu[exp(beta tau)] = mu(Omega) + beta * sum_i mu(phi_i)^2 / (lambda_i - beta)``."""
    if beta < 0 or beta >= spec.lambda0:
        raise BetaAtOrAboveLambda0(f"beta = {beta} must lie in [0, lambda0 = {spec.lambda0})")
    lam, m2 = spec.cluster_sums()
    return float(mu_total + beta * np.sum(m2 / (lam - beta)))
