"""Experiment configuration: a flat ``key = value`` file with dotted keys.

Blank lines and ``#`` comments are ignored. Unknown keys, malformed values
and failed validations raise :class:`ConfigError` citing the line number.
The full key list lives in ``SCHEMA``; ``docs/formats.md`` documents it.
"""
import dataclasses
import importlib.resources
import os
from dataclasses import dataclass

__all__ = ["ConfigError", "ExperimentSpec", "SCHEMA", "load_config",
           "parse_config", "dump_config", "PINNED"]

PINNED = ("duffing-n10", "duffing-n60", "memory-n25", "duffing-n20-ci")


class ConfigError(ValueError):
    def __init__(self, msg, line=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + msg)
        self.line = line


def _floats(s):
    return tuple(float(v) for v in s.split(","))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class ExperimentSpec:
    """Everything needed to rebuild an experiment from scratch."""

    seed: int = 0
    model: str = "duffing"
    N: int = 10
    epsilon: float = 0.8
    patterns: str = "HTL"
    alpha_range: tuple = (10.0, 20.0)
    beta_range: tuple = (1.0, 2.0)
    gamma_range: tuple = (1.0, 2.0)
    scheme: str = "TI"
    h: float = 1e-4
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    T: int = 10
    x0_policy: str = "steady-state-from-random"
    x0_values: tuple = None
    x0_low: float = 0.0
    x0_high: float = 0.5
    x0_pattern: str = "H"
    x0_noise: float = 1.0
    settle_scheme: str = "TI"
    settle_h: float = 1e-2
    settle_tol: float = 1e-7
    settle_max_steps: int = 1000000
    xd_policy: str = "uniform"
    xd_values: tuple = None
    xd_low: float = 0.0
    xd_high: float = 0.5
    xd_pattern: str = "T"
    M_max: int = None
    fraction: float = None
    mode: str = "exactly"
    inner_iters: int = 100
    inner_tol: float = 1e-6
    tol_grad: float = 1e-8
    max_iter: int = 1000
    max_poll_rounds: int = 50
    rel_improve: float = 1e-8
    relax_alpha_init: float = 0.5
    relax_tol: float = 1e-6
    relax_max_iter: int = 1000
    baseline_method: str = "auto"
    baseline_count: int = 1000
    baseline_cap: int = 1000000
    bins: int = 30
    sim_scheme: str = None
    sim_h: float = 1e-2
    sim_T: int = 1500
    gradcheck_instances: int = 3
    gradcheck_fd_step: float = 1e-6

    @property
    def budget(self):
        """Node budget ``M_max`` (from the explicit value or the fraction)."""
        if self.M_max is not None:
            return self.M_max
        if self.fraction is not None:
            return int(round(self.fraction * self.N))
        return self.N

    def validate(self):
        """Raise ConfigError(field, message) style errors; returns the key of
        the first offending field or None."""
        checks = [
            ("model.kind", self.model in ("duffing", "memory"), "must be duffing or memory"),
            ("model.N", self.N >= 2 if self.model == "duffing" else self.N >= 1, "too small"),
            ("scheme.kind", self.scheme in ("FE", "TI"), "must be FE or TI"),
            ("scheme.h", self.h > 0, "must be positive"),
            ("scheme.newton_tol", self.newton_tol > 0, "must be positive"),
            ("scheme.newton_max_iter", self.newton_max_iter >= 1, "must be at least 1"),
            ("horizon.T", self.T >= 1, "must be at least 1"),
            ("x0.policy", self.x0_policy in ("steady-state-from-random", "explicit",
                                             "pattern-noise-settled", "random"),
             "unknown policy"),
            ("x0.settle_scheme", self.settle_scheme in ("FE", "TI"), "must be FE or TI"),
            ("x0.settle_h", self.settle_h > 0, "must be positive"),
            ("xd.policy", self.xd_policy in ("uniform", "explicit", "pattern"), "unknown policy"),
            ("budget.mode", self.mode in ("at-most", "exactly"), "must be at-most or exactly"),
            ("budget.M_max", self.M_max is None or 0 <= self.M_max <= self.N,
             "must lie in 0..N"),
            ("budget.fraction", self.fraction is None or 0 <= self.fraction <= 1,
             "must lie in [0, 1]"),
            ("solver.inner_iters", self.inner_iters >= 1, "must be at least 1"),
            ("solver.max_iter", self.max_iter >= 1, "must be at least 1"),
            ("relax.alpha_init", 0 <= self.relax_alpha_init <= 1, "must lie in [0, 1]"),
            ("baseline.method", self.baseline_method in ("auto", "exhaustive", "random"),
             "must be auto, exhaustive or random"),
            ("baseline.count", self.baseline_count >= 1, "must be at least 1"),
            ("histogram.bins", self.bins >= 1, "must be at least 1"),
            ("simulate.h", self.sim_h > 0, "must be positive"),
            ("simulate.T", self.sim_T >= 0, "must be nonnegative"),
        ]
        if self.model == "memory":
            checks.append(("model.patterns", set(self.patterns) <= set("HTL") and self.patterns,
                           "letters must be among H, T, L"))
        for key, ok, msg in checks:
            if not ok:
                return key, msg
        return None


# dotted key -> (attribute, parser)
SCHEMA = {
    "seed": ("seed", int),
    "model.kind": ("model", str),
    "model.N": ("N", int),
    "model.epsilon": ("epsilon", float),
    "model.patterns": ("patterns", str),
    "model.alpha_range": ("alpha_range", _floats),
    "model.beta_range": ("beta_range", _floats),
    "model.gamma_range": ("gamma_range", _floats),
    "scheme.kind": ("scheme", str),
    "scheme.h": ("h", float),
    "scheme.newton_tol": ("newton_tol", float),
    "scheme.newton_max_iter": ("newton_max_iter", int),
    "horizon.T": ("T", int),
    "x0.policy": ("x0_policy", str),
    "x0.values": ("x0_values", _floats),
    "x0.low": ("x0_low", float),
    "x0.high": ("x0_high", float),
    "x0.pattern": ("x0_pattern", str),
    "x0.noise_sigma": ("x0_noise", float),
    "x0.settle_scheme": ("settle_scheme", str),
    "x0.settle_h": ("settle_h", float),
    "x0.settle_tol": ("settle_tol", float),
    "x0.settle_max_steps": ("settle_max_steps", int),
    "xd.policy": ("xd_policy", str),
    "xd.values": ("xd_values", _floats),
    "xd.low": ("xd_low", float),
    "xd.high": ("xd_high", float),
    "xd.pattern": ("xd_pattern", str),
    "budget.M_max": ("M_max", int),
    "budget.fraction": ("fraction", float),
    "budget.mode": ("mode", str),
    "solver.inner_iters": ("inner_iters", int),
    "solver.inner_tol": ("inner_tol", float),
    "solver.tol_grad": ("tol_grad", float),
    "solver.max_iter": ("max_iter", int),
    "solver.max_poll_rounds": ("max_poll_rounds", int),
    "solver.rel_improve": ("rel_improve", float),
    "relax.alpha_init": ("relax_alpha_init", float),
    "relax.tol": ("relax_tol", float),
    "relax.max_iter": ("relax_max_iter", int),
    "baseline.method": ("baseline_method", str),
    "baseline.count": ("baseline_count", int),
    "baseline.cap": ("baseline_cap", int),
    "histogram.bins": ("bins", int),
    "simulate.scheme": ("sim_scheme", str),
    "simulate.h": ("sim_h", float),
    "simulate.T": ("sim_T", int),
    "gradcheck.instances": ("gradcheck_instances", int),
    "gradcheck.fd_step": ("gradcheck_fd_step", float),
}

_ATTR_KEY = {attr: key for key, (attr, _) in SCHEMA.items()}

# Defaults that depend on the model kind, applied to keys the file omits.
MODEL_DEFAULTS = {
    "duffing": {"N": 10, "scheme": "TI", "h": 1e-4, "T": 10,
                "x0_policy": "steady-state-from-random", "settle_scheme": "TI",
                "xd_policy": "uniform"},
    "memory": {"N": 25, "scheme": "FE", "h": 1e-2, "T": 10, "epsilon": 0.8,
               "x0_policy": "pattern-noise-settled", "settle_scheme": "FE",
               "xd_policy": "pattern"},
}


def parse_config(text, path=None):
    """Parse configuration text into an :class:`ExperimentSpec`."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, path)
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        attr, parse = SCHEMA[key]
        if val == "":
            values[attr] = None
        else:
            try:
                values[attr] = parse(val)
            except ValueError:
                raise ConfigError(f"bad value {val!r} for {key}", lineno, path) from None
        lines[key] = lineno
    kind = values.get("model", "duffing")
    merged = dict(MODEL_DEFAULTS.get(kind, {}))
    merged.update(values)
    try:
        spec = ExperimentSpec(**merged)
    except TypeError as exc:  # pragma: no cover - schema and dataclass agree
        raise ConfigError(str(exc), None, path) from None
    bad = spec.validate()
    if bad:
        key, msg = bad
        raise ConfigError(f"{key} {msg}", lines.get(key), path)
    return spec


def _pinned_text(name):
    return importlib.resources.files("netctl.configs").joinpath(f"{name}.cfg").read_text()


def load_config(path):
    """Load a config file, or one of the pinned configs by name."""
    path = os.fspath(path)
    if not os.path.exists(path) and path in PINNED:
        return parse_config(_pinned_text(path), path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config(text, path)


def dump_config(spec):
    """Serialize every field in schema order; the output parses back to an
    equal spec."""
    out = ["# resolved experiment configuration"]
    for key, (attr, _) in SCHEMA.items():
        out.append(f"{key} = {_fmt(getattr(spec, attr))}")
    return "\n".join(out) + "\n"


def replace(spec, **changes):
    return dataclasses.replace(spec, **changes)
