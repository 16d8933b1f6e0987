"""
Run configuration: flat ``key = value`` lines grouped under ``[section]`` headers.

Blank lines and lines starting with ``#`` or ``;`` are ignored.  Every value
is validated on reading and errors carry the file name and line number.
Unknown sections and keys are rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

__all__ = ["ConfigError", "RunConfig", "ModelSection", "ProblemSection", "NumericsSection",
           "OutputSection", "TubeSection", "load_config", "parse_config"]


class ConfigError(ValueError):
    def __init__(self, message, source="<config>", line=None):
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}")
        self.line = line


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _opt_float(text):
    return None if text.lower() in ("", "none") else _float(text)


def _int(text):
    return int(text, 0)


def _floats(text):
    vals = tuple(_float(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _opt_str(text):
    return None if text.lower() in ("", "none") else text


def _choice(*options):
    def conv(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return conv


@dataclass(frozen=True)
class ModelSection:
    potential: str = "quadratic"
    gamma: Optional[float] = None       # defaults: 3 (quadratic), 1 (double-well)
    mu: float = 0.8
    levy: str = "stable"
    alpha: float = 0.5
    beta: float = 0.5

    _types = {"potential": _choice("quadratic", "double-well"), "gamma": _opt_float,
              "mu": _float, "levy": _choice("stable", "none"), "alpha": _float, "beta": _float}


@dataclass(frozen=True)
class ProblemSection:
    x0: float = -1.0
    y0: Optional[float] = None
    xT: float = 1.0
    yT: Optional[float] = None
    T: float = 2.0

    _types = {"x0": _float, "y0": _opt_float, "xT": _float, "yT": _opt_float, "T": _float}


@dataclass(frozen=True)
class NumericsSection:
    n: int = 2000
    dt: float = 1e-3
    delta: float = 1e-3
    rtol: float = 1e-10
    bvp_tol: float = 1e-9
    solver: str = "auto"
    segments: int = 1
    seed: int = 0
    mode: str = "bridge"
    n_keep: int = 15
    end_tol: float = 0.1
    max_attempts: int = 10 ** 7
    n_samples: int = 100000

    _types = {"n": _int, "dt": _float, "delta": _float, "rtol": _float, "bvp_tol": _float,
              "solver": _choice("auto", "analytic", "el4", "hp", "optimize"),
              "segments": _int, "seed": _int, "mode": _choice("bridge", "raw"),
              "n_keep": _int, "end_tol": _float, "max_attempts": _int, "n_samples": _int}


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    prefix: str = ""

    _types = {"directory": str, "prefix": str}


@dataclass(frozen=True)
class TubeSection:
    path_a: Optional[str] = None
    path_b: Optional[str] = None
    epsilon: Tuple[float, ...] = (0.5,)

    _types = {"path_a": _opt_str, "path_b": _opt_str, "epsilon": _floats}


_SECTIONS = {"model": ModelSection, "problem": ProblemSection, "numerics": NumericsSection,
             "output": OutputSection, "tube": TubeSection}


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    problem: ProblemSection = field(default_factory=ProblemSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    output: OutputSection = field(default_factory=OutputSection)
    tube: TubeSection = field(default_factory=TubeSection)

    @property
    def gamma(self) -> float:
        if self.model.gamma is not None:
            return self.model.gamma
        return 3.0 if self.model.potential == "quadratic" else 1.0

    def validate(self, source="<config>", lines=None):
        """Check cross-field constraints; ``lines`` maps (section, key) to line numbers."""
        lines = lines or {}

        def fail(section, key, msg):
            raise ConfigError(f"[{section}] {key}: {msg}", source, lines.get((section, key)))

        m, p, nm = self.model, self.problem, self.numerics
        if not self.gamma > 0:
            fail("model", "gamma", "must be positive")
        if not m.mu > 0:
            fail("model", "mu", "must be positive")
        if m.levy == "stable":
            if not 0 < m.alpha < 1:
                fail("model", "alpha", "must lie in (0, 1)")
            if not -1 <= m.beta <= 1:
                fail("model", "beta", "must lie in [-1, 1]")
        if not (p.T > 0 and math.isfinite(p.T)):
            fail("problem", "T", f"horizon must be positive and finite, got {p.T}")
        if (p.y0 is None) != (p.yT is None) and nm.solver != "optimize":
            fail("problem", "yT" if p.yT is None else "y0",
                 "boundary velocities must be given together")
        if p.y0 is None and nm.solver in ("el4", "hp"):
            fail("numerics", "solver", f"{nm.solver} needs both boundary velocities")
        if nm.n < 8:
            fail("numerics", "n", "need at least 8 intervals")
        if not nm.dt > 0:
            fail("numerics", "dt", "must be positive")
        steps = p.T / nm.dt
        if steps < 2 or abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            fail("numerics", "dt", f"T/dt = {steps:g} must be an integer >= 2")
        if not 0 < nm.delta < 1:
            fail("numerics", "delta", "must lie in (0, 1)")
        if not 0 < nm.rtol < 1:
            fail("numerics", "rtol", "must lie in (0, 1)")
        if not nm.bvp_tol > 0:
            fail("numerics", "bvp_tol", "must be positive")
        if nm.segments < 1:
            fail("numerics", "segments", "must be >= 1")
        if not 0 <= nm.seed < 2 ** 64:
            fail("numerics", "seed", "must be an unsigned 64-bit integer")
        if nm.n_keep < 0:
            fail("numerics", "n_keep", "must be >= 0")
        if not nm.end_tol > 0:
            fail("numerics", "end_tol", "must be positive")
        if nm.max_attempts < 1:
            fail("numerics", "max_attempts", "must be >= 1")
        if nm.n_samples < 1:
            fail("numerics", "n_samples", "must be >= 1")
        if nm.solver == "analytic" and m.potential != "quadratic":
            fail("numerics", "solver", "the closed form exists only for the quadratic potential")
        if any(not e > 0 for e in self.tube.epsilon):
            fail("tube", "epsilon", "radii must be positive")
        if self.tube.path_b is not None and self.tube.path_a is None:
            fail("tube", "path_b", "needs path_a")
        return self

    def with_overrides(self, seed=None, out=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, numerics=replace(cfg.numerics, seed=seed))
        if out is not None:
            cfg = replace(cfg, output=replace(cfg.output, directory=out))
        return cfg

    def to_text(self) -> str:
        """Render the fully resolved configuration in the input format."""
        out = []
        for name in _SECTIONS:
            sec = getattr(self, name)
            out.append(f"[{name}]")
            for f in fields(sec):
                v = getattr(sec, f.name)
                if name == "model" and f.name == "gamma":
                    v = self.gamma
                if v is None:
                    v = "none"
                elif isinstance(v, tuple):
                    v = ", ".join(repr(x) for x in v)
                elif isinstance(v, float):
                    v = repr(v)
                out.append(f"{f.name} = {v}")
            out.append("")
        return "\n".join(out)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {name: {} for name in _SECTIONS}
    where = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", source, lineno)
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]", source, lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", source, lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", source, lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        types = _SECTIONS[section]._types
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{section}]", source, lineno)
        if key in values[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", source, lineno)
        try:
            values[section][key] = types[key](val)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: invalid value {val!r} ({exc})",
                              source, lineno) from None
        where[(section, key)] = lineno
    cfg = RunConfig(**{name: cls(**values[name]) for name, cls in _SECTIONS.items()})
    return cfg.validate(source, where)


def load_config(fname) -> RunConfig:
    try:
        with open(fname) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", str(fname)) from None
    return parse_config(text, str(fname))
