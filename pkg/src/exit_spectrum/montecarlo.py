"""Monte Carlo estimates of exit-time moments.

Three schemes:

* ``exact-jump`` samples a finite killed chain exactly (exponential holding
  times, jump or killing at the end of each holding period); unbiased.
* ``euler-maruyama`` integrates ``dX = V'(X) dt + sqrt(2) dW`` on an interval
  and detects exit at grid times; biased by ``O(sqrt(dt))``.
* ``stable-increment`` adds ``dt^{1/alpha}``-scaled symmetric stable
  increments (Chambers-Mallows-Stuck); exit is detected at grid times.

Reproducibility: paths are processed in fixed blocks of ``block_size``;
block ``b`` draws from ``Philox`` seeded by ``SeedSequence(seed,
spawn_key=(b,))``.  The samples are concatenated in block order before any
reduction, so the result does not depend on ``threads``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import AlphaOutOfRange, ConventionMismatch, NoKillingReachable, NotPositiveDefinite, StepTooLarge
from .killed import KilledGenerator, kill

SCHEMES = ("exact-jump", "euler-maruyama", "stable-increment")
BLOCK_SIZE = 1 << 16


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    seed: int = 0
    kmax: int = 2
    scheme: str = "exact-jump"
    dt: Optional[float] = None
    start: Union[str, int, float] = "mu"
    threads: int = 1
    block_size: int = BLOCK_SIZE
    max_steps: int = 100_000_000

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.kmax < 1:
            raise ValueError("kmax must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme != "exact-jump" and not (self.dt and self.dt > 0):
            raise ValueError(f"scheme {self.scheme} needs dt > 0")
        if self.block_size < 1 or self.threads < 1:
            raise ValueError("block_size and threads must be positive")


@dataclass(frozen=True)
class McEstimate:
    """Sample moments of the exit time.

    ``mean[k]`` estimates ``T_k``: with ``start == "mu"`` the sample mean of
    ``tau^k`` is multiplied by ``mu_total`` so it matches the integrated
    (unnormalized) moments; with a fixed start it estimates ``E_x[tau^k]``.
    """

    kmax: int
    mean: np.ndarray
    se: np.ndarray
    n_paths: int
    max_tau: float
    scheme: str
    start: Union[str, int, float]
    mu_total: float
    dt: Optional[float] = None
    tau: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "kmax": self.kmax,
            "T_hat": self.mean.tolist(),
            "se": self.se.tolist(),
            "n_paths": self.n_paths,
            "max_tau": self.max_tau,
            "scheme": self.scheme,
            "start": self.start,
            "mu_total": self.mu_total,
            "dt": self.dt,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "T_hat", "se", "n_paths"])
        for k in range(self.kmax + 1):
            w.writerow([k, repr(float(self.mean[k])), repr(float(self.se[k])), self.n_paths])
        return buf.getvalue()


def block_rng(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _run_blocks(cfg: McConfig, worker: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
    sizes = []
    left = cfg.n_paths
    while left > 0:
        sizes.append(min(cfg.block_size, left))
        left -= sizes[-1]

    def job(b):
        return worker(block_rng(cfg.seed, b), sizes[b])

    if cfg.threads == 1:
        parts = [job(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    return np.concatenate(parts)


def _estimate(tau: np.ndarray, cfg: McConfig, mu_total: float, scale: float) -> McEstimate:
    if not np.all(tau > 0) or not np.all(np.isfinite(tau)):
        raise StepTooLarge("sampled exit times must be positive and finite")
    n = tau.size
    mean = np.empty(cfg.kmax + 1)
    se = np.empty(cfg.kmax + 1)
    for k in range(cfg.kmax + 1):
        p = tau**k
        mean[k] = scale * p.mean()
        se[k] = scale * p.std(ddof=1) / math.sqrt(n) if n > 1 else math.inf
    return McEstimate(
        kmax=cfg.kmax,
        mean=mean,
        se=se,
        n_paths=n,
        max_tau=float(tau.max()),
        scheme=cfg.scheme,
        start=cfg.start,
        mu_total=mu_total,
        dt=cfg.dt,
        tau=tau,
    )


# --------------------------------------------------------------------------
# exact jump chains


def simulate_killed_exit(kg: KilledGenerator, cfg: McConfig) -> McEstimate:
    """Exact simulation of the exit time of a killed chain."""
    if cfg.scheme != "exact-jump":
        raise ValueError("finite chains are simulated with scheme='exact-jump'")
    A = kg.A
    n = kg.n
    q = np.diag(A).copy()
    if np.any(q <= 0):
        raise NoKillingReachable("a state has zero total outflow and can never exit")
    P = -A / q[:, None]
    np.fill_diagonal(P, 0.0)
    P = np.maximum(P, 0.0)
    cum = np.cumsum(P, axis=1)  # cemetery is everything past cum[:, -1]

    if cfg.start == "mu":
        p0 = kg.mu_omega / kg.mu_total
        scale = kg.mu_total
    else:
        i0 = int(cfg.start)
        if not 0 <= i0 < n:
            raise ValueError(f"start state {i0} outside 0..{n - 1}")
        p0 = None
        scale = 1.0

    def worker(rng, size):
        if p0 is None:
            state = np.full(size, int(cfg.start))
        else:
            state = rng.choice(n, size=size, p=p0)
        tau = np.zeros(size)
        alive = np.arange(size)
        steps = 0
        while alive.size:
            s = state[alive]
            tau[alive] += rng.standard_exponential(alive.size) / q[s]
            u = rng.random(alive.size)
            nxt = (cum[s] <= u[:, None]).sum(axis=1)
            keep = nxt < n
            state[alive[keep]] = nxt[keep]
            alive = alive[keep]
            steps += 1
            if steps > cfg.max_steps:
                raise NoKillingReachable("paths did not exit within max_steps jumps")
        return tau

    return _estimate(_run_blocks(cfg, worker), cfg, kg.mu_total, scale)


def simulate_chain_exit(gen, omega, cfg: McConfig) -> McEstimate:
    """Exit time of ``gen`` from the states ``omega`` by exact jump simulation.

    Raises
    ------
    NoKillingReachable
        The restricted generator is not positive definite, so some paths
        would never leave ``omega``.
    """
    try:
        kg = kill(gen, omega)
    except NotPositiveDefinite as exc:
        raise NoKillingReachable(str(exc)) from exc
    return simulate_killed_exit(kg, cfg)


# --------------------------------------------------------------------------
# continuous-space schemes


def _sample_start(rng, size, a, b, density, cfg):
    if cfg.start != "mu":
        x0 = float(cfg.start)
        if not a < x0 < b:
            raise ValueError(f"start point {x0} outside ({a}, {b})")
        return np.full(size, x0)
    if density is None:
        return a + (b - a) * rng.random(size)
    xs, cdf = density
    return np.interp(rng.random(size), cdf, xs)


def _density_table(V, a, b, m=8193):
    xs = np.linspace(a, b, m)
    w = np.exp(np.asarray(V(xs), dtype=float) * np.ones_like(xs))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(xs))])
    mass = float(cdf[-1])
    return (xs, cdf / mass), mass


def _numeric_derivative(V, h=1e-6):
    def dV(x):
        step = h * np.maximum(1.0, np.abs(x))
        return (np.asarray(V(x + step), dtype=float) - np.asarray(V(x - step), dtype=float)) / (2 * step)

    return dV


def simulate_diffusion_exit(a: float, b: float, V: Callable, cfg: McConfig, dV: Optional[Callable] = None) -> McEstimate:
    """Euler-Maruyama for ``dX = V'(X) dt + sqrt(2) dW`` killed on leaving ``(a, b)``.

    ``V`` and ``dV`` must accept numpy arrays.  The default start samples
    ``exp(V) dx`` restricted to the interval, and moments are scaled by its
    total mass.

    Raises
    ------
    StepTooLarge
        More than half of the paths exit on the first step.
    """
    if cfg.scheme != "euler-maruyama":
        raise ValueError("diffusions are simulated with scheme='euler-maruyama'")
    if not a < b:
        raise ValueError("need a < b")
    drift = dV if dV is not None else _numeric_derivative(V)
    density, mass = _density_table(V, a, b)
    dt = cfg.dt
    sq = math.sqrt(2.0 * dt)

    def worker(rng, size):
        x = _sample_start(rng, size, a, b, density, cfg)
        tau = np.zeros(size)
        alive = np.arange(size)
        step = 0
        while alive.size:
            xa = x[alive]
            xa = xa + np.asarray(drift(xa), dtype=float) * dt + sq * rng.standard_normal(alive.size)
            step += 1
            out = (xa <= a) | (xa >= b)
            if step == 1 and out.mean() > 0.5:
                raise StepTooLarge(f"{out.mean():.0%} of paths exit on the first step; reduce dt")
            tau[alive[out]] = step * dt
            x[alive] = xa
            alive = alive[~out]
            if step > cfg.max_steps:
                raise StepTooLarge("paths did not exit within max_steps steps")
        return tau

    scale = mass if cfg.start == "mu" else 1.0
    return _estimate(_run_blocks(cfg, worker), cfg, mass, scale)


def stable_increments(rng: np.random.Generator, alpha: float, size) -> np.ndarray:
    """Standard symmetric alpha-stable samples, ``E exp(i t X) = exp(-|t|^alpha)``.

    Chambers-Mallows-Stuck transform of a uniform angle and a unit exponential.
    """
    V = math.pi * (rng.random(size) - 0.5)
    W = rng.standard_exponential(size)
    if alpha == 1.0:
        return np.tan(V)
    return np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha) * (np.cos(V - alpha * V) / W) ** ((1.0 - alpha) / alpha)


def simulate_stable_exit(a: float, b: float, alpha: float, cfg: McConfig) -> McEstimate:
    """Exit time of the symmetric alpha-stable process (generator ``-(-Delta)^{alpha/2}``) from ``(a, b)``.

    The default start is uniform (Lebesgue measure), with moments scaled by
    ``b - a``.
    """
    if cfg.scheme != "stable-increment":
        raise ValueError("stable processes are simulated with scheme='stable-increment'")
    if not 0 < alpha < 2:
        raise AlphaOutOfRange(f"alpha must lie in (0, 2), got {alpha}")
    if not a < b:
        raise ValueError("need a < b")
    dt = cfg.dt
    c = dt ** (1.0 / alpha)

    def worker(rng, size):
        x = _sample_start(rng, size, a, b, None, cfg)
        tau = np.zeros(size)
        alive = np.arange(size)
        step = 0
        while alive.size:
            xa = x[alive] + c * stable_increments(rng, alpha, alive.size)
            step += 1
            out = (xa <= a) | (xa >= b)
            if step == 1 and out.mean() > 0.5:
                raise StepTooLarge(f"{out.mean():.0%} of paths exit on the first step; reduce dt")
            tau[alive[out]] = step * dt
            x[alive] = xa
            alive = alive[~out]
            if step > cfg.max_steps:
                raise StepTooLarge("paths did not exit within max_steps steps")
        return tau

    scale = (b - a) if cfg.start == "mu" else 1.0
    return _estimate(_run_blocks(cfg, worker), cfg, b - a, scale)


def refine_dt(simulate: Callable[[McConfig], McEstimate], cfg: McConfig) -> dict:
    """Run a discretized scheme at ``dt`` and ``dt/2`` and extrapolate.

    Exit detection at grid times biases moments by ``O(sqrt(dt))``; the
    extrapolation removes that leading term.
    """
    from dataclasses import replace

    coarse = simulate(cfg)
    fine = simulate(replace(cfg, dt=cfg.dt / 2))
    r = math.sqrt(2.0)
    extrap = (r * fine.mean - coarse.mean) / (r - 1.0)
    return {
        "dt": cfg.dt,
        "coarse": coarse.mean.tolist(),
        "fine": fine.mean.tolist(),
        "extrapolated": extrap.tolist(),
        "trend": (fine.mean - coarse.mean).tolist(),
        "estimates": (coarse, fine),
    }


def survival_slope(tau: np.ndarray, t_lo: float, t_hi: float) -> float:
    """Least-squares slope of ``log P(tau > t)`` over ``[t_lo, t_hi]``.

    Approaches ``-lambda0`` when ``t_lo`` is large enough that the principal
    mode dominates.
    """
    ts = np.linspace(t_lo, t_hi, 32)
    srt = np.sort(tau)
    surv = 1.0 - np.searchsorted(srt, ts, side="right") / tau.size
    ok = surv > 0
    if ok.sum() < 2:
        raise ValueError("too few survivors in the requested window")
    slope, _ = np.polyfit(ts[ok], np.log(surv[ok]), 1)
    return float(slope)


def empirical_vs_solver(mc: McEstimate, mt, kmax: Optional[int] = None, bias_band: float = 0.0, threshold: float = 3.0):
    """z-scores of the Monte Carlo moments against a solver moment table.

    For discretized schemes pass ``bias_band`` (a relative half-width) to
    widen the error bar by ``bias_band * T_k`` in quadrature.

    Raises
    ------
    ConventionMismatch
        The estimate and the table integrate different measures, use a start
        the table cannot match, or ``kmax`` exceeds the orders available.
    """
    if mc.start == "mu":
        if abs(mc.mu_total - mt.mu_total) > 1e-9 * max(abs(mc.mu_total), abs(mt.mu_total)):
            raise ConventionMismatch(
                f"Monte Carlo measure mass {mc.mu_total} differs from the solver's {mt.mu_total}"
            )
        ref = np.asarray(mt.T, dtype=float)
    else:
        if not (isinstance(mc.start, (int, np.integer)) and 0 <= mc.start < mt.u.shape[1]):
            raise ConventionMismatch(f"start {mc.start!r} does not index a solver state")
        ref = np.asarray(mt.u[:, int(mc.start)], dtype=float)
    if kmax is None:
        kmax = min(mc.kmax, mt.K)
    if kmax > mc.kmax or kmax > mt.K:
        raise ConventionMismatch(f"order {kmax} exceeds simulated kmax={mc.kmax} or solver K={mt.K}")
    rows = []
    for k in range(1, kmax + 1):
        err = math.sqrt(mc.se[k] ** 2 + (bias_band * ref[k]) ** 2)
        z = (mc.mean[k] - ref[k]) / err if err > 0 else math.inf
        rows.append({"k": k, "T_hat": float(mc.mean[k]), "se": float(mc.se[k]), "T": float(ref[k]), "z": float(z), "flagged": bool(abs(z) > threshold)})
    return rows
