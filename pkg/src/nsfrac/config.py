"""JSON run configurations: loading, schema validation and object construction."""
from __future__ import annotations

import json
from importlib import resources

import jsonschema
import numpy as np

from .core import BaseOperator, BaseScheme, Partition, SampledFunction, ScalingScheme
from .engine import FractalSpec
from .errors import ConfigInvalid
from .fractal_operator import OperatorConfig
from .sampling import builtin_germ
from .set_ifs import ContractionMap2D, IfsLevel
from .spaces import ThetaFunction

DEFAULTS = {
    "seed": 0,
    "tol": 1e-10,
    "k_range": [4, 10],
    "space": "bv",
    "samples": 20,
}


def load_schema() -> dict:
    text = resources.files("nsfrac").joinpath("data/config.schema.json").read_text()
    return json.loads(text)


def _path(error) -> str:
    parts = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
    return "$" + parts


def validate_config(cfg: dict) -> dict:
    """Validate against the schema; all violations are reported with field paths."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        problems = [{"path": _path(e), "message": e.message} for e in errors]
        summary = "; ".join(f"{p['path']}: {p['message']}" for p in problems[:5])
        raise ConfigInvalid(f"configuration does not match the schema: {summary}", problems=problems)
    out = dict(DEFAULTS)
    out.update(cfg)
    k_min, k_max = out["k_range"]
    if k_max - k_min < 4:
        raise ConfigInvalid("k_range must span at least 4 levels",
                            problems=[{"path": "$.k_range", "message": "k_max - k_min < 4"}])
    return out


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})",
                            problems=[{"path": "$", "message": str(exc)}]) from None
    return validate_config(raw)


# ---------------------------------------------------------------------------
# builders


def _table(spec) -> SampledFunction:
    x, y = spec["x"], spec["y"]
    if len(x) != len(y):
        raise ConfigInvalid("table x and y differ in length",
                            problems=[{"path": "table", "message": "len(x) != len(y)"}])
    return SampledFunction(x, y)


def build_knots(spec):
    if isinstance(spec, dict):
        a, b = spec.get("domain", [0.0, 1.0])
        return np.linspace(a, b, spec["uniform"] + 1)
    return np.asarray(spec, dtype=float)


def build_germ(spec, domain) -> SampledFunction:
    if isinstance(spec, str):
        return builtin_germ(spec, domain)
    return _table(spec["table"])


def build_base_entry(spec):
    if spec in ("chord", "knot_pl"):
        return BaseOperator(spec)
    if "blend" in spec:
        return BaseOperator("blend", spec["blend"])
    return _table(spec["table"])


def build_scaling(spec, domain) -> ScalingScheme:
    return ScalingScheme(spec["levels"], domain=domain, tail=spec.get("tail", "repeat-last"),
                         **({"max_levels": spec["max_levels"]} if "max_levels" in spec else {}))


def build_spec(cfg: dict, require_distinct_base: bool = True) -> FractalSpec:
    fr = _require(cfg, "fractal")
    p = Partition(build_knots(fr["knots"]))
    germ = build_germ(fr["germ"], p.domain)
    scaling = build_scaling(fr["scaling"], p.domain)
    base = BaseScheme([build_base_entry(e) for e in fr["base"]])
    return FractalSpec(germ, p, scaling, base, require_distinct_base)


def build_operator_config(cfg: dict) -> OperatorConfig:
    fr = _require(cfg, "fractal")
    ops = [build_base_entry(e) for e in fr["base"]]
    if not all(isinstance(o, BaseOperator) for o in ops):
        raise ConfigInvalid("operator experiments need operator bases (chord, knot_pl, blend)",
                            problems=[{"path": "$.fractal.base", "message": "table base given"}])
    p = Partition(build_knots(fr["knots"]))
    c_l = cfg.get("operator", {}).get("c_l", 2.0)
    return OperatorConfig(p, build_scaling(fr["scaling"], p.domain), tuple(ops), c_l)


def build_theta(cfg: dict):
    spec = cfg.get("theta")
    if spec is None:
        return None
    if spec["kind"] == "power":
        return ThetaFunction.power(spec["eps"])
    return ThetaFunction.slog()


def build_ifs_levels(cfg: dict):
    spec = _require(cfg, "ifs")
    return [IfsLevel([ContractionMap2D(w["matrix"], w["translation"]) for w in level])
            for level in spec["levels"]]


def _require(cfg, key):
    if key not in cfg:
        raise ConfigInvalid(f"configuration needs a '{key}' section",
                            problems=[{"path": f"$.{key}", "message": "missing"}])
    return cfg[key]
