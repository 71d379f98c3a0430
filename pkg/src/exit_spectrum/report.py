"""Pipeline orchestration and report rendering.

``run`` executes build, kill, moments, spectrum, bounds and (optionally)
Monte Carlo for one :class:`~exit_spectrum.config.RunConfig` and returns a
:class:`RunReport`.  The text and CSV renderings are produced from the report
dictionary alone, so a report reloaded from JSON renders identically.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bounds import (
    BoundsReport,
    Check,
    blm_stable_bounds,
    build_report,
    delta_plus,
    delta_r,
)
from .config import RunConfig
from .errors import ConfigParseError
from .expr import Expression
from .generator import (
    GridSpec,
    build_chain,
    build_diffusion_1d,
    build_fractional_1d,
    build_time_changed_1d,
)
from .killed import KilledGenerator, kill
from .moments import exit_moments
from .montecarlo import (
    empirical_vs_solver,
    refine_dt,
    simulate_diffusion_exit,
    simulate_killed_exit,
    simulate_stable_exit,
)
from .spectral import full_spectrum, principal_pair

CSV_COLUMNS = BoundsReport.CSV_COLUMNS
SPECTRUM_HEAD = 10
# relative bias allowance for schemes with grid-time exit detection
DEFAULT_BIAS_BAND = {"exact-jump": 0.0, "euler-maruyama": 0.05, "stable-increment": 0.05}


def _finite(obj, path: str, bad: list):
    """Copy ``obj`` with non-finite floats replaced by ``None``; their paths go to ``bad``."""
    if isinstance(obj, dict):
        return {k: _finite(v, f"{path}.{k}", bad) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v, f"{path}[{i}]", bad) for i, v in enumerate(obj)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            bad.append(path)
            return None
        return v
    return obj


@dataclass
class RunReport:
    config: dict
    generator: dict
    spectrum: dict
    moments: dict
    bounds: dict
    normalized: dict
    extras: dict
    mc: Optional[dict]
    checks: list
    timings: dict
    nonfinite: list = field(default_factory=list)
    bounds_report: Optional[BoundsReport] = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def failures(self) -> list:
        return [c for c in self.checks if not c["passed"]]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "generator": self.generator,
            "spectrum": self.spectrum,
            "moments": self.moments,
            "bounds": self.bounds,
            "normalized": self.normalized,
            "extras": self.extras,
            "mc": self.mc,
            "checks": self.checks,
            "passed": self.passed,
            "failures": [c["name"] for c in self.failures()],
            "nonfinite": self.nonfinite,
            "timings": self.timings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    def to_text(self) -> str:
        return render_text(self.to_dict())

    def to_csv(self) -> str:
        return render_csv(self.to_dict())

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json() + "\n"
        if fmt == "csv":
            return self.to_csv()
        if fmt == "text":
            return self.to_text()
        raise ConfigParseError(f"unknown output format {fmt!r}")


# --------------------------------------------------------------------------
# pipeline stages


def _load_chain(cfg: RunConfig):
    block = cfg.model
    if "file" in block:
        path = block["file"]
        if not os.path.isabs(path):
            path = os.path.join(cfg.base_dir, path)
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigParseError(f"cannot read chain file {path!r}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigParseError(f"chain file {path!r} is not valid JSON: {exc}") from None
        if not isinstance(data, dict) or "mu" not in data or "L" not in data:
            raise ConfigParseError(f"chain file {path!r} needs fields 'mu' and 'L'")
    else:
        data = block
    return build_chain(data["L"], data["mu"], normalize=cfg.normalize)


def build_model(cfg: RunConfig) -> KilledGenerator:
    """Build and kill the configured model."""
    m = cfg.model
    kind = cfg.model_kind
    if kind in ("fractional", "timechanged") and cfg.omega != "all":
        raise ConfigParseError(f"{kind} models are killed on the whole grid; omega must be \"all\"")
    if kind == "chain":
        return kill(_load_chain(cfg), cfg.omega)
    if kind == "diffusion":
        gen = build_diffusion_1d(GridSpec(m["a"], m["b"], m["n"]), Expression(m["V"]), normalize=cfg.normalize)
        return kill(gen, cfg.omega)
    if kind == "fractional":
        return build_fractional_1d(GridSpec(m["a"], m["b"], m["n"]), m["alpha"], normalize=cfg.normalize)
    return build_time_changed_1d(GridSpec(0.0, m["R"], m["n"]), m["alpha"], Expression(m["sigma"]), normalize=cfg.normalize)


def _spectrum_stage(kg: KilledGenerator, dense_cap: int):
    if kg.n <= dense_cap:
        spec = full_spectrum(kg, dense_cap)
        lam = spec.lam
        summary = {
            "mode": "dense",
            "lambda0": spec.lambda0,
            "mass0_sq": spec.mass0_sq,
            "lambda1": float(lam[1]) if lam.size > 1 else None,
            "n_eigen": int(lam.size),
            "lambda_head": lam[:SPECTRUM_HEAD].tolist(),
            "mass_sq_head": (spec.mass[:SPECTRUM_HEAD] ** 2).tolist(),
        }
        return spec, spec.lambda0, spec.mass0_sq, summary
    lam0, phi = principal_pair(kg)
    m0 = float(np.dot(kg.mu_omega, phi)) ** 2
    summary = {
        "mode": "principal",
        "lambda0": lam0,
        "mass0_sq": m0,
        "lambda1": None,
        "n_eigen": 1,
        "lambda_head": [lam0],
        "mass_sq_head": [m0],
    }
    return None, lam0, m0, summary


def _betas(cfg: RunConfig, lambda0: float):
    return sorted(set(cfg.betas) | {f * lambda0 for f in cfg.beta_fractions})


def _normalized_block(br: BoundsReport, mu_E: float, mt) -> dict:
    s = 1.0 / mu_E
    return {
        "mu_E": mu_E,
        "scale": s,
        "mu_total": br.mu_total * s,
        "mass0_sq": br.mass0_sq * s,
        "T": [float(t) * s for t in mt.T],
        "exp_rows": [
            {
                "beta": e["beta"],
                "lower": e["lower"] * s,
                "upper": e["upper"] * s,
                "exact": None if e["exact"] is None else e["exact"] * s,
            }
            for e in br.exp_rows
        ],
        "note": "eigenvalue bounds are invariant under rescaling the measure",
    }


def _fractional_extras(cfg: RunConfig, lambda0: float, mass0_sq: float):
    m = cfg.model
    length = m["b"] - m["a"]
    brownian = (math.pi / length) ** 2
    lower, upper = blm_stable_bounds(1, m["alpha"], length, brownian)
    extras = {"blm": {"volume": length, "lower": lower, "upper": upper, "lambda0_brownian": brownian}}
    checks = [
        Check("blm_lower <= lambda0", lower, lambda0, lower <= lambda0 * (1 + 1e-9)),
        Check("lambda0 <= lambda0_brownian^(alpha/2)", lambda0, upper, lambda0 <= upper * (1 + 1e-9)),
    ]
    return extras, checks


def _timechanged_extras(cfg: RunConfig, lambda0: float):
    m = cfg.model
    dp = delta_plus(Expression(m["sigma"]), m["alpha"], cfg.quadrature)
    extras = {
        "delta_plus": {
            "delta_plus": dp.delta_plus,
            "eigen_lower": dp.eigen_lower,
            "x_star": dp.x_star,
            "at_boundary": dp.at_boundary,
        }
    }
    checks = [Check("delta_plus eigen_lower <= lambda0", dp.eigen_lower, lambda0, dp.eigen_lower <= lambda0 * (1 + 1e-9))]
    if m.get("check_doubling"):
        n2 = 2 * m["n"] + 1  # keeps the mesh width
        kg2 = build_time_changed_1d(GridSpec(0.0, 2 * m["R"], n2), m["alpha"], Expression(m["sigma"]), normalize=cfg.normalize)
        lam2, _ = principal_pair(kg2)
        rel = abs(lam2 - lambda0) / lambda0
        extras["truncation"] = {
            "R": m["R"],
            "lambda0": lambda0,
            "R_doubled": 2 * m["R"],
            "lambda0_doubled": lam2,
            "relative_change": rel,
            "within_1pct": rel < 0.01,
        }
    return extras, checks


def _delta_r_extras(spec: dict, qc):
    dr = delta_r(Expression(str(spec["gamma"])), float(spec["D"]), float(spec["r"]), qc)
    return {"delta_r": {"delta_r": dr.delta_r, "eigen_lower": dr.eigen_lower, "t_star": dr.t_star, "note": dr.note}}


def _mc_stage(cfg: RunConfig, kg: KilledGenerator, mt):
    mcfg = cfg.mc
    m = cfg.model
    scheme = mcfg.scheme
    if scheme == "exact-jump":
        simulate = lambda c: simulate_killed_exit(kg, c)  # noqa: E731
    elif scheme == "euler-maruyama":
        if cfg.model_kind != "diffusion":
            raise ConfigParseError("euler-maruyama applies to diffusion models only")
        V = Expression(m["V"])
        simulate = lambda c: simulate_diffusion_exit(m["a"], m["b"], V, c)  # noqa: E731
    else:
        if cfg.model_kind != "fractional":
            raise ConfigParseError("stable-increment applies to fractional models only")
        simulate = lambda c: simulate_stable_exit(m["a"], m["b"], m["alpha"], c)  # noqa: E731

    est = simulate(mcfg)
    block = est.to_dict()
    compare = est
    if scheme != "exact-jump" and mcfg.start == "mu":
        # continuum estimate against the grid discretization: masses differ by O(h)
        block["continuum_mu_total"] = est.mu_total
        compare = replace(est, mu_total=mt.mu_total)
    band = cfg.mc_bias_band if cfg.mc_bias_band is not None else DEFAULT_BIAS_BAND[scheme]
    block["bias_band"] = band
    block["z_table"] = empirical_vs_solver(compare, mt, kmax=min(mcfg.kmax, mt.K), bias_band=band)
    if cfg.mc_refine_dt and scheme != "exact-jump":
        ref = refine_dt(simulate, mcfg)
        block["refine_dt"] = {k: ref[k] for k in ("dt", "coarse", "fine", "extrapolated", "trend")}
    return block


def run(cfg: RunConfig) -> RunReport:
    """Execute the pipeline; library errors propagate with their ``module``."""
    timings = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        out = fn()
        timings[name] = time.perf_counter() - t0
        return out

    kg = stage("build", lambda: build_model(cfg))
    gen_summary = kg.parent.summary()
    gen_summary["n_omega"] = int(kg.n)
    gen_summary["mu_omega"] = float(kg.mu_omega.sum())

    mt = stage("moments", lambda: exit_moments(kg, cfg.K))
    spec, lambda0, mass0_sq, spec_summary = stage("spectrum", lambda: _spectrum_stage(kg, cfg.dense_cap))

    betas = _betas(cfg, lambda0)
    br = stage("bounds", lambda: build_report(mt, lambda0, mass0_sq, betas, spec))
    checks = list(br.checks)

    extras = {}
    t0 = time.perf_counter()
    if cfg.model_kind == "fractional":
        ex, ck = _fractional_extras(cfg, lambda0, mass0_sq)
        extras.update(ex)
        checks += ck
    elif cfg.model_kind == "timechanged":
        ex, ck = _timechanged_extras(cfg, lambda0)
        extras.update(ex)
        checks += ck
    if cfg.delta_r is not None:
        extras.update(_delta_r_extras(cfg.delta_r, cfg.quadrature))
    timings["extras"] = time.perf_counter() - t0

    mc = stage("mc", lambda: _mc_stage(cfg, kg, mt)) if cfg.mc is not None else None

    moments = {"K": mt.K, "T": [float(t) for t in mt.T], "ratios": br.diagnostics.get("ratios")}
    normalized = _normalized_block(br, kg.parent.mu_total, mt)

    raw = {
        "config": cfg.raw,
        "generator": gen_summary,
        "spectrum": spec_summary,
        "moments": moments,
        "bounds": br.to_dict(),
        "normalized": normalized,
        "extras": extras,
        "mc": mc,
        "checks": [c.to_dict() for c in checks],
    }
    bad = []
    clean = _finite(raw, "report", bad)
    return RunReport(
        config=clean["config"],
        generator=clean["generator"],
        spectrum=clean["spectrum"],
        moments=clean["moments"],
        bounds=clean["bounds"],
        normalized=clean["normalized"],
        extras=clean["extras"],
        mc=clean["mc"],
        checks=clean["checks"],
        timings=timings,
        nonfinite=bad,
        bounds_report=br,
    )


def write_report(report: RunReport, fmt: str, path: Optional[str]) -> str:
    text = report.render(fmt)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


# --------------------------------------------------------------------------
# rendering from the report dictionary


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _table(header, rows) -> list:
    cells = [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    out = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    out.append("  ".join("-" * w for w in widths))
    out += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return out


def render_text(d: dict) -> str:
    """Human-readable report; depends only on the report dictionary."""
    g, s, b = d["generator"], d["spectrum"], d["bounds"]
    lines = [f"model: {g['kind']}  states: {g['n']}  killed domain: {g['n_omega']}"]
    lines.append(f"mu(E) = {_fmt(g['mu_total'])}  mu(Omega) = {_fmt(g['mu_omega'])}  balance residual = {_fmt(g['balance_residual'])}")
    lines.append("")
    lines.append(f"lambda0 = {_fmt(s['lambda0'])}  mu(phi0)^2 = {_fmt(s['mass0_sq'])}  lambda1 = {_fmt(s['lambda1'])}  ({s['mode']})")
    lines.append(f"moment-ratio estimate = {_fmt(b['estimate'])}")
    lines.append("")
    lines += _table(CSV_COLUMNS, [[r.get(c) for c in CSV_COLUMNS] for r in b["rows"]])
    if b["exp_rows"]:
        lines.append("")
        lines += _table(
            ("beta", "exp_lower", "exact", "exp_upper", "series"),
            [[e["beta"], e["lower"], e["exact"], e["upper"], e["series"]] for e in b["exp_rows"]],
        )
    n = d["normalized"]
    lines.append("")
    lines.append(f"normalized measure (divide by mu(E) = {_fmt(n['mu_E'])}): T_1 = {_fmt(n['T'][1])}  mu(phi0)^2 = {_fmt(n['mass0_sq'])}")
    ex = d["extras"]
    if "blm" in ex:
        e = ex["blm"]
        lines.append(f"volume bound: {_fmt(e['lower'])} <= lambda0 <= {_fmt(e['upper'])}")
    if "delta_plus" in ex:
        e = ex["delta_plus"]
        lines.append(f"delta_plus = {_fmt(e['delta_plus'])} at x = {_fmt(e['x_star'])}; lambda0 >= {_fmt(e['eigen_lower'])}")
    if "truncation" in ex:
        e = ex["truncation"]
        lines.append(
            f"truncation: R = {_fmt(e['R'])} -> {_fmt(e['lambda0'])}, R = {_fmt(e['R_doubled'])} -> "
            f"{_fmt(e['lambda0_doubled'])} (relative change {_fmt(e['relative_change'])})"
        )
    if "delta_r" in ex:
        e = ex["delta_r"]
        lines.append(f"delta_r = {_fmt(e['delta_r'])} at t = {_fmt(e['t_star'])}; lambda0 >= {_fmt(e['eigen_lower'])}")
    if d.get("mc"):
        m = d["mc"]
        lines.append("")
        lines.append(f"Monte Carlo: {m['n_paths']} paths, scheme {m['scheme']}, bias band {_fmt(m['bias_band'])}")
        lines += _table(("k", "T_hat", "se", "T", "z", "flagged"), [[r["k"], r["T_hat"], r["se"], r["T"], r["z"], r["flagged"]] for r in m["z_table"]])
    lines.append("")
    fails = [c for c in d["checks"] if not c["passed"]]
    lines.append(f"checks: {len(d['checks']) - len(fails)}/{len(d['checks'])} passed")
    for c in fails:
        lines.append(f"  FAIL {c['name']}: {_fmt(c['lhs'])} vs {_fmt(c['rhs'])}")
    if d.get("nonfinite"):
        lines.append(f"non-finite values omitted: {', '.join(d['nonfinite'])}")
    lines.append("timings: " + "  ".join(f"{k} {v:.3f}s" for k, v in d["timings"].items()))
    return "\n".join(lines) + "\n"


def render_csv(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in d["bounds"]["rows"]:
        w.writerow(["" if row.get(c) is None else repr(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()
