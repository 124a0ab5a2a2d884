"""Flat ``key = value`` run configuration with dotted sections.

A ``[section]`` header prefixes the keys below it, so ``[domain]`` followed
by ``nx = 128`` is the same as ``domain.nx = 128``. Lines starting with
``#`` are comments. Unknown keys and ill-typed values are rejected with
the offending line number.
"""

from dataclasses import dataclass, field

from .errors import ConfigError

EXPERIMENTS = ("penrose", "kernel-decay", "linear-evolve", "nonlinear-evolve",
               "characteristics", "accept")

# key -> (type, default)
SCHEMA = {
    "experiment": (str, None),
    "seed": (int, 0),
    "equilibrium.kind": (str, "maxwellian"),
    "equilibrium.dimension": (int, 3),
    "equilibrium.theta": (float, 1.0),
    "equilibrium.bump.u": (float, None),
    "equilibrium.bump.alpha": (float, None),
    "equilibrium.bump.theta1": (float, None),
    "equilibrium.bump.theta2": (float, None),
    "initial.kind": (str, "gaussian"),
    "initial.sigma_x": (float, 1.0),
    "initial.sigma_v": (float, 1.0),
    "initial.amplitude": (float, 1.0),
    "domain.L": (float, 256.0),
    "domain.nx": (int, 256),
    "domain.nv": (int, 256),
    "domain.vmax": (float, 8.0),
    "solver.nonlinear": (str, "grid"),
    "solver.t_max": (float, None),
    "solver.steps": (int, None),
    "solver.modes": (int, 2048),
    "solver.tol": (float, 1e-6),
    "solver.max_picard": (int, 20),
    "solver.picard_tol": (float, 1e-8),
    "solver.epsilon": (float, 1e-2),
    "penrose.n": (int, 48),
    "penrose.refine": (int, 2),
    "penrose.gamma_max": (float, 50.0),
    "penrose.tau_max": (float, 50.0),
    "penrose.xi_max": (float, 20.0),
    "output.dir": (str, "."),
}

CHOICES = {
    "experiment": EXPERIMENTS,
    "equilibrium.kind": ("maxwellian", "bump"),
    "initial.kind": ("gaussian", "zero"),
    "solver.nonlinear": ("grid",),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def replace(self, **updates):
        """Copy with dotted keys given as ``section__key=value``."""
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = v
        cfg = RunConfig(vals)
        validate(cfg)
        return cfg

    @property
    def dimension(self):
        return self.values["equilibrium.dimension"]


def _convert(key, raw, line):
    typ = SCHEMA[key][0]
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        if typ is not str:
            raise ConfigError(f"{key} expects {typ.__name__}, got a string", line)
        return text[1:-1]
    if typ is str:
        return text
    try:
        if typ is int:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key} expects {typ.__name__}, got {text!r}", line) from None


def defaults():
    return RunConfig({k: d for k, (_, d) in SCHEMA.items()})


def parse_config(text):
    """Parse a configuration document, filling defaults and validating."""
    vals = {k: d for k, (_, d) in SCHEMA.items()}
    lines = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ConfigError("empty section header", n)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", n)
        key, value = (s.strip() for s in line.split("=", 1))
        full = f"{section}.{key}" if section else key
        if full not in SCHEMA:
            raise ConfigError(f"unknown key {full!r}", n)
        if full in lines:
            raise ConfigError(f"duplicate key {full!r} (first set on line {lines[full]})", n)
        lines[full] = n
        vals[full] = _convert(full, value, n)
    cfg = RunConfig(vals)
    validate(cfg, lines)
    return cfg


def validate(cfg, lines=None):
    lines = lines or {}
    v = cfg.values
    for key, allowed in CHOICES.items():
        if v[key] is not None and v[key] not in allowed:
            raise ConfigError(f"{key} must be one of {', '.join(allowed)}; got {v[key]!r}",
                              lines.get(key))
    d = v["equilibrium.dimension"]
    if d < 1:
        raise ConfigError("equilibrium.dimension must be >= 1", lines.get("equilibrium.dimension"))
    if v["equilibrium.kind"] == "bump":
        missing = [k for k in ("u", "alpha", "theta1", "theta2") if v[f"equilibrium.bump.{k}"] is None]
        if missing:
            raise ConfigError("bump equilibrium needs " + ", ".join(f"equilibrium.bump.{k}" for k in missing),
                              lines.get("equilibrium.kind"))
    if v["experiment"] == "nonlinear-evolve" and v["solver.nonlinear"] == "grid" and d not in (1, 2):
        raise ConfigError("nonlinear grid path supports d in {1, 2}",
                          lines.get("equilibrium.dimension", lines.get("experiment")))
    for key in ("domain.nx", "domain.nv", "solver.modes", "solver.max_picard", "penrose.n"):
        if v[key] is not None and v[key] < 1:
            raise ConfigError(f"{key} must be positive", lines.get(key))
    for key in ("equilibrium.theta", "initial.sigma_x", "initial.sigma_v", "domain.L", "domain.vmax",
                "solver.tol", "solver.picard_tol"):
        if v[key] is not None and not v[key] > 0:
            raise ConfigError(f"{key} must be positive", lines.get(key))
    return cfg


def emit_config(cfg):
    """Serialize so that ``parse_config(emit_config(cfg)) == cfg``."""
    out = []
    for key in SCHEMA:
        val = cfg.values.get(key)
        if val is None:
            continue
        if isinstance(val, float):
            text = repr(val)
        elif isinstance(val, str):
            text = f'"{val}"'
        else:
            text = str(val)
        out.append(f"{key} = {text}")
    return "\n".join(out) + "\n"
