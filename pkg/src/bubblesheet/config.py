"""Plain-text key=value experiment configuration with typed schemas."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Param:
    kind: type
    default: object
    help: str = ""

    def parse(self, text: str):
        if self.kind is bool:
            return _bool(text)
        if self.kind is tuple:
            return _floats(text)
        if self.kind is int:
            return int(text)
        if self.kind is float:
            return float(text)
        return text


SCHEMAS: dict[str, dict[str, Param]] = {
    "spectral": {
        "n1": Param(int, 64, "Hermite nodes in y1"),
        "n2": Param(int, 64, "Hermite nodes in y2"),
        "n_theta": Param(int, 32, "Fourier nodes in theta"),
        "fields": Param(int, 20, "random fields for the commutator check"),
        "seed": Param(int, 0, "RNG seed"),
    },
    "mz": {
        "runs": Param(int, 100, "Monte-Carlo realizations"),
        "seed": Param(int, 0, "RNG seed"),
        "C0": Param(float, 1.0, "envelope constant"),
        "gamma": Param(float, 0.5, "envelope decay exponent"),
        "tau0": Param(float, -100.0, "start time"),
        "tau_end": Param(float, -60.0, "end time"),
        "kappa0": Param(float, 1e-6, "switch parameter"),
        "xy_runs": Param(int, 50, "perturbed phase-plane trajectories"),
    },
    "shrinker": {
        "a": Param(tuple, (10.0, 20.0, 50.0, 100.0), "tip positions"),
        "L": Param(float, 10.0, "tip-bound sample point"),
        "tol": Param(float, 1e-10, "ODE tolerance"),
    },
    "barrier": {
        "a1": Param(float, 120.0, "elongation axis"),
        "a2": Param(float, 40.0, "short axis"),
        "L": Param(float, 10.0, "inner radius"),
        "n_r": Param(int, 200, "radial samples"),
        "n_theta": Param(int, 61, "angular samples"),
        "tol": Param(float, 1e-6, "residual tolerance"),
        "corrupt": Param(float, 1.0, "profile scale factor (1 = exact)"),
    },
    "flow": {
        "beta": Param(float, 5e-4, "convention parameter beta"),
        "L": Param(float, math.nan, "convention parameter L (default 1/beta^2)"),
        "gamma": Param(float, 0.5, "envelope exponent"),
        "Zhat": Param(float, 1.0, "bubble-sheet scale"),
        "kappa0": Param(float, 1e-6, "switch parameter"),
        "dtau": Param(float, 1e-2, "time step"),
        "tau0": Param(float, -200.0, "start time"),
        "tau_end": Param(float, -150.0, "end time"),
        "n1": Param(int, 32, "Hermite nodes in y1"),
        "n2": Param(int, 32, "Hermite nodes in y2"),
        "n_theta": Param(int, 1, "Fourier nodes in theta (1 = symmetric fast path)"),
        "recenter": Param(bool, True, "remove unstable modes each step"),
        "record_every": Param(int, 10, "steps between observable rows"),
    },
    "compare": {
        "alpha": Param(float, 1e-7, "anisotropy weight, at most beta^2"),
        "beta": Param(float, 5e-4, "convention parameter beta"),
        "b": Param(float, 2.0, "exponent of Psi_b"),
        "delta": Param(float, 0.1, "Phi_delta parameter"),
        "Zhat": Param(float, 1.0, "bubble-sheet scale"),
        "samples": Param(int, 1000, "region samples per check"),
        "seed": Param(int, 0, "RNG seed"),
        "log_t": Param(float, 20.0, "log|t| for the Psi_b check"),
        "tilt": Param(float, 0.05, "slope of the tilted graph"),
    },
}

EXPERIMENTS = tuple(SCHEMAS)
RESERVED = ("experiment", "output")


def _validate(name: str, p: dict):
    """Fixed parameter conventions, checked at load."""
    if "beta" in p and not 0 < p["beta"] < 1e-3:
        raise ConfigError("beta", f"must lie in (0, 1e-3), got {p['beta']}")
    if name == "flow":
        if math.isnan(p["L"]):
            p["L"] = 1.0 / p["beta"] ** 2
        if not p["L"] >= 1.0 / p["beta"] ** 2:
            raise ConfigError("L", f"must be >= 1/beta^2 = {1 / p['beta'] ** 2:g}, got {p['L']}")
        if not p["dtau"] > 0:
            raise ConfigError("dtau", "must be positive")
        if not p["tau_end"] > p["tau0"]:
            raise ConfigError("tau_end", "must exceed tau0")
    if "kappa0" in p and not 0 < p["kappa0"] < 1e-5:
        raise ConfigError("kappa0", f"must lie in (0, 1e-5), got {p['kappa0']}")
    if "b" in p and not 2 <= p["b"] <= 7:
        raise ConfigError("b", f"must lie in [2, 7], got {p['b']}")
    if "delta" in p and not 0 < p["delta"] < 0.5:
        raise ConfigError("delta", f"must lie in (0, 1/2), got {p['delta']}")
    if name == "compare" and not 0 < p["alpha"] <= p["beta"] ** 2:
        raise ConfigError("alpha", f"must lie in (0, beta^2], got {p['alpha']}")
    if "Zhat" in p and not p["Zhat"] > 0:
        raise ConfigError("Zhat", "must be positive")
    if name == "barrier":
        if not p["a1"] >= p["a2"]:
            raise ConfigError("a1", "must be >= a2")
        if not p["a2"] >= 11:
            raise ConfigError("a2", "must be >= 11")
        if not 1 <= p["L"] < p["a2"]:
            raise ConfigError("L", "must lie in [1, a2)")
    if name == "shrinker" and (not p["a"] or min(p["a"]) < 10):
        raise ConfigError("a", "needs values >= 10")
    if name == "mz" and not p["tau_end"] > p["tau0"]:
        raise ConfigError("tau_end", "must exceed tau0")
    for k in ("runs", "xy_runs", "samples", "fields", "n_r", "n_theta", "n1", "n2", "record_every"):
        if k in p and p[k] < 1:
            raise ConfigError(k, "must be positive")


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    output: str = "out"

    @classmethod
    def from_pairs(cls, pairs) -> "ExperimentConfig":
        """Build from (key, text) pairs; unknown keys and bad values raise ConfigError."""
        raw = {}
        for key, text in pairs:
            if key in raw:
                raise ConfigError(key, "given twice")
            raw[key] = text
        if "experiment" not in raw:
            raise ConfigError("experiment", f"missing; choose one of {', '.join(EXPERIMENTS)}")
        name = raw.pop("experiment")
        if name not in SCHEMAS:
            raise ConfigError("experiment", f"unknown experiment {name!r}")
        output = raw.pop("output", "out")
        schema = SCHEMAS[name]
        params = {k: spec.default for k, spec in schema.items()}
        for key, text in raw.items():
            if key not in schema:
                raise ConfigError(key, f"unknown key for experiment {name!r}")
            try:
                params[key] = schema[key].parse(text)
            except ValueError as exc:
                raise ConfigError(key, f"bad value {text!r} ({exc})") from None
        _validate(name, params)
        return cls(name, params, output)

    @classmethod
    def parse(cls, text: str, overrides=()) -> "ExperimentConfig":
        pairs = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            pairs.append((k.strip(), v.strip()))
        merged = dict(pairs)
        if len(merged) != len(pairs):
            seen = set()
            for k, _ in pairs:
                if k in seen:
                    raise ConfigError(k, "given twice")
                seen.add(k)
        for item in overrides:
            if "=" not in item:
                raise ConfigError(item, "override must be key=value")
            k, v = item.split("=", 1)
            merged[k.strip()] = v.strip()
        return cls.from_pairs(merged.items())

    @classmethod
    def load(cls, path, overrides=()) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path} ({exc.strerror})") from None
        return cls.parse(text, overrides)

    def dumps(self) -> str:
        lines = [f"experiment={self.experiment}", f"output={self.output}"]
        lines += [f"{k}={_fmt(v)}" for k, v in self.params.items()]
        return "\n".join(lines) + "\n"


def default_config(name: str, output: str = "out") -> ExperimentConfig:
    return ExperimentConfig.from_pairs([("experiment", name), ("output", output)])
