"""Run configuration: one JSON document describing model, domain, analysis and output.

Example::

    {
      "model": {"diffusion": {"a": 0, "b": 1, "n": 999, "V": "0"}},
      "omega": "all",
      "analysis": {"K": 20, "beta_fractions": [0.25, 0.5, 0.75]},
      "output": {"format": "text"}
    }

Model blocks (exactly one):

* ``chain``: ``{"file": "chain.json"}`` or inline ``{"mu": [...], "L": [[...]]}``
* ``diffusion``: ``{"a", "b", "n", "V"}`` with ``V`` an expression in ``x``
* ``fractional``: ``{"a", "b", "n", "alpha"}``
* ``timechanged``: ``{"R", "n", "alpha", "sigma", "check_doubling"}``
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, List, Optional, Union

from .errors import ConfigParseError
from .montecarlo import SCHEMES, McConfig
from .quadrature import QuadratureConfig

MODEL_KINDS = ("chain", "diffusion", "fractional", "timechanged")
FORMATS = ("json", "csv", "text")

_MODEL_KEYS = {
    "chain": {"file", "mu", "L"},
    "diffusion": {"a", "b", "n", "V"},
    "fractional": {"a", "b", "n", "alpha"},
    "timechanged": {"R", "n", "alpha", "sigma", "check_doubling"},
}
_ANALYSIS_KEYS = {"K", "beta", "beta_fractions", "normalize", "mc", "dense_cap", "delta_r", "quadrature"}
_MC_KEYS = {"paths", "seed", "kmax", "scheme", "dt", "start", "threads", "bias_band", "refine_dt"}


@dataclass
class RunConfig:
    model_kind: str
    model: dict
    omega: Union[str, List[int]] = "all"
    K: int = 20
    betas: List[float] = field(default_factory=list)
    beta_fractions: List[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    normalize: bool = False
    dense_cap: int = 4000
    mc: Optional[McConfig] = None
    mc_bias_band: Optional[float] = None
    mc_refine_dt: bool = False
    delta_r: Optional[dict] = None
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    output_format: str = "json"
    output_path: Optional[str] = None
    base_dir: str = "."
    raw: dict = field(default_factory=dict)


def _req(block: dict, key: str, kind: str, typ=float):
    if key not in block:
        raise ConfigParseError(f"model block '{kind}' is missing '{key}'")
    try:
        return typ(block[key])
    except (TypeError, ValueError):
        raise ConfigParseError(f"'{kind}.{key}' must be {typ.__name__}, got {block[key]!r}") from None


def _check_keys(block: dict, allowed: set, where: str):
    extra = set(block) - allowed
    if extra:
        raise ConfigParseError(f"unknown keys in {where}: {sorted(extra)}")


def _parse_model(model: Any) -> tuple:
    if not isinstance(model, dict) or len(model) != 1:
        raise ConfigParseError(f"'model' must hold exactly one of {MODEL_KINDS}")
    (kind, block), = model.items()
    if kind not in MODEL_KINDS:
        raise ConfigParseError(f"unknown model {kind!r}; expected one of {MODEL_KINDS}")
    if not isinstance(block, dict):
        raise ConfigParseError(f"model block '{kind}' must be an object")
    _check_keys(block, _MODEL_KEYS[kind], f"model.{kind}")
    out = dict(block)
    if kind == "chain":
        if "file" not in block and not ("mu" in block and "L" in block):
            raise ConfigParseError("chain model needs 'file' or both 'mu' and 'L'")
    elif kind in ("diffusion", "fractional"):
        out["a"] = _req(block, "a", kind)
        out["b"] = _req(block, "b", kind)
        out["n"] = _req(block, "n", kind, int)
        if kind == "diffusion":
            out["V"] = str(block.get("V", "0"))
        else:
            out["alpha"] = _req(block, "alpha", kind)
    else:
        out["R"] = _req(block, "R", kind)
        out["n"] = _req(block, "n", kind, int)
        out["alpha"] = _req(block, "alpha", kind)
        out["sigma"] = str(_req(block, "sigma", kind, str))
        out["check_doubling"] = bool(block.get("check_doubling", False))
    return kind, out


def _parse_mc(block: Any, model_kind: str) -> tuple:
    if not isinstance(block, dict):
        raise ConfigParseError("'analysis.mc' must be an object")
    _check_keys(block, _MC_KEYS, "analysis.mc")
    default_scheme = {
        "chain": "exact-jump",
        "diffusion": "euler-maruyama",
        "fractional": "stable-increment",
        "timechanged": "exact-jump",
    }[model_kind]
    scheme = block.get("scheme", default_scheme)
    if scheme not in SCHEMES:
        raise ConfigParseError(f"unknown Monte Carlo scheme {scheme!r}")
    try:
        cfg = McConfig(
            n_paths=int(block.get("paths", 100_000)),
            seed=int(block.get("seed", 0)),
            kmax=int(block.get("kmax", 2)),
            scheme=scheme,
            dt=None if block.get("dt") is None else float(block["dt"]),
            start=block.get("start", "mu"),
            threads=int(block.get("threads", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid Monte Carlo settings: {exc}") from None
    band = block.get("bias_band")
    return cfg, None if band is None else float(band), bool(block.get("refine_dt", False))


def parse_config(doc: Union[dict, str, os.PathLike], base_dir: Optional[str] = None) -> RunConfig:
    """Validate a configuration given as a dict or a path to a JSON file."""
    if not isinstance(doc, dict):
        path = os.fspath(doc)
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigParseError(f"cannot read config {path!r}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigParseError(f"config {path!r} is not valid JSON: {exc}") from None
        base_dir = base_dir or os.path.dirname(os.path.abspath(path))
    if not isinstance(doc, dict):
        raise ConfigParseError("config must be a JSON object")
    _check_keys(doc, {"model", "omega", "analysis", "output"}, "config")
    if "model" not in doc:
        raise ConfigParseError("config is missing the 'model' block")
    kind, model = _parse_model(doc["model"])

    omega = doc.get("omega", "all")
    if omega != "all":
        if not isinstance(omega, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in omega):
            raise ConfigParseError("'omega' must be \"all\" or a list of state indices")

    analysis = doc.get("analysis", {})
    if not isinstance(analysis, dict):
        raise ConfigParseError("'analysis' must be an object")
    _check_keys(analysis, _ANALYSIS_KEYS, "analysis")
    try:
        K = int(analysis.get("K", 20))
        betas = [float(b) for b in analysis.get("beta", [])]
        fractions = [float(f) for f in analysis.get("beta_fractions", [0.25, 0.5, 0.75])]
        dense_cap = int(analysis.get("dense_cap", 4000))
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid analysis settings: {exc}") from None
    if K < 1:
        raise ConfigParseError(f"K must be >= 1, got {K}")
    if any(not 0 < f < 1 for f in fractions):
        raise ConfigParseError("beta_fractions must lie in (0, 1)")
    if any(b <= 0 for b in betas):
        raise ConfigParseError("beta values must be positive")

    mc = band = None
    refine = False
    if analysis.get("mc") is not None:
        mc, band, refine = _parse_mc(analysis["mc"], kind)

    delta_r = analysis.get("delta_r")
    if delta_r is not None:
        if not isinstance(delta_r, dict) or not {"gamma", "D", "r"} <= set(delta_r):
            raise ConfigParseError("'analysis.delta_r' needs 'gamma', 'D' and 'r'")

    qblock = analysis.get("quadrature", {})
    if not isinstance(qblock, dict):
        raise ConfigParseError("'analysis.quadrature' must be an object")
    _check_keys(qblock, {"method", "abs_tol", "rel_tol", "max_depth", "infinity_cutoff"}, "analysis.quadrature")
    try:
        quadrature = QuadratureConfig(**qblock)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid quadrature settings: {exc}") from None

    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ConfigParseError("'output' must be an object")
    _check_keys(output, {"format", "path"}, "output")
    fmt = output.get("format", "json")
    if fmt not in FORMATS:
        raise ConfigParseError(f"output format must be one of {FORMATS}, got {fmt!r}")

    return RunConfig(
        model_kind=kind,
        model=model,
        omega=omega,
        K=K,
        betas=betas,
        beta_fractions=fractions,
        normalize=bool(analysis.get("normalize", False)),
        dense_cap=dense_cap,
        mc=mc,
        mc_bias_band=band,
        mc_refine_dt=refine,
        delta_r=delta_r,
        quadrature=quadrature,
        output_format=fmt,
        output_path=output.get("path"),
        base_dir=base_dir or ".",
        raw=doc,
    )
