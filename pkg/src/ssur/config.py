"""Run configuration: flat ``key = value`` text with '#' comments."""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

from .io import text_hash


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


FIXABLE = ("gamma", "beta", "w", "w0", "tau", "sigma_rho", "graph")


@dataclass
class RunConfig:
    # data
    y: str | None = None
    x: str | None = None
    z: str | None = None
    mrf_edges: str | None = None
    out: str | None = None
    standardize: bool = False
    y_val: str | None = None
    x_val: str | None = None
    z_val: str | None = None
    truth: str | None = None
    # model
    prior: str = "mrf"
    covariance: str = "hiw"
    nu: float | None = None
    a_tau: float = 0.1
    b_tau: float = 10.0
    a_eta: float = 0.1
    b_eta: float = 1.0
    a_w: float = 2.0
    b_w: float = 5.0
    a_w0: float = 2.0
    b_w0: float = 5.0
    d: float = -2.0
    e: float = 0.1
    a_o: float = 2.0
    b_o: float | None = None
    a_pi: float = 2.0
    b_pi: float = 1.0
    # sampler
    niter: int = 500_000
    burnin: int = 300_000
    thin: int = 100
    nchains: int = 5
    seed: int | None = None
    threads: int = 1
    local_moves: int | None = None
    graph_moves: int = 1
    temp_ratio: float = 1.5
    exchange_target: float = 0.25
    adapt_window: int = 100
    crossover_prob: float = 0.5
    tau_step: float = 0.5
    init_gamma: str = "empty"
    store_loglik: bool = True
    check_every: int = 1000
    warmup: int | None = None
    prior_only: bool = False
    fixed: tuple = ()
    init_w: float | None = None
    init_w0: float | None = None
    init_tau: float = 1.0
    init_sigma2: float = 1.0

    def validate(self, allow_empty: bool = False) -> "RunConfig":
        """Check constraints; ``allow_empty`` permits ``burnin == niter``."""
        if self.prior not in ("mrf", "hotspot"):
            raise ConfigError(f"prior: expected mrf or hotspot, got {self.prior!r}")
        if self.covariance not in ("hiw", "iw", "indep"):
            raise ConfigError(f"covariance: expected hiw, iw or indep, got {self.covariance!r}")
        if self.niter < 0 or self.burnin < 0:
            raise ConfigError("niter/burnin: must be nonnegative")
        if self.burnin > self.niter or (self.burnin == self.niter and not allow_empty):
            raise ConfigError(f"burnin: burnin={self.burnin} must be less than niter={self.niter}")
        if self.thin < 1:
            raise ConfigError(f"thin: must be >= 1, got {self.thin}")
        if self.nchains < 1:
            raise ConfigError(f"nchains: must be >= 1, got {self.nchains}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")
        for key in ("a_tau", "b_tau", "a_eta", "b_eta", "a_w", "b_w", "a_w0", "b_w0",
                    "a_o", "a_pi", "b_pi", "temp_ratio", "init_tau", "init_sigma2"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key}: must be positive, got {getattr(self, key)}")
        for key in ("b_o", "init_w", "init_w0", "nu"):
            v = getattr(self, key)
            if v is not None and not v > 0:
                raise ConfigError(f"{key}: must be positive, got {v}")
        if self.temp_ratio < 1:
            raise ConfigError("temp_ratio: must be >= 1")
        if not 0 < self.exchange_target < 1:
            raise ConfigError("exchange_target: must lie in (0, 1)")
        if not 0 <= self.crossover_prob <= 1:
            raise ConfigError("crossover_prob: must lie in [0, 1]")
        if self.e < 0:
            raise ConfigError("e: must be nonnegative")
        if self.local_moves is not None and self.local_moves < 0:
            raise ConfigError("local_moves: must be nonnegative")
        if self.warmup is not None and not 0 <= self.warmup <= self.burnin:
            raise ConfigError(f"warmup: must lie in [0, burnin={self.burnin}], got {self.warmup}")
        if self.graph_moves < 0 or self.adapt_window < 1 or self.check_every < 0:
            raise ConfigError("graph_moves/adapt_window/check_every: out of range")
        if self.tau_step < 0:
            raise ConfigError("tau_step: must be nonnegative")
        if not (self.init_gamma == "empty" or self.init_gamma.startswith("bernoulli:")):
            raise ConfigError(f"init_gamma: expected empty or bernoulli:<p>, got {self.init_gamma!r}")
        if self.init_gamma.startswith("bernoulli:"):
            try:
                c = float(self.init_gamma.split(":", 1)[1])
            except ValueError:
                raise ConfigError("init_gamma: malformed probability") from None
            if not 0 <= c <= 1:
                raise ConfigError("init_gamma: probability must lie in [0, 1]")
        bad = [f for f in self.fixed if f not in FIXABLE]
        if bad:
            raise ConfigError(f"fixed: unknown parameter {bad[0]!r}")
        return self

    def to_text(self) -> str:
        """Canonical ``key = value`` rendering of every field."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(v)
            elif isinstance(v, float):
                v = repr(v)
            elif v is None:
                v = "none"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return text_hash(self.to_text())

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


_HINTS = typing.get_type_hints(RunConfig)


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    hint = _HINTS[key]
    text = raw.strip()
    args = typing.get_args(hint)
    optional = type(None) in args
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    if optional and text.lower() in ("none", ""):
        return None
    try:
        if base is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if base is int:
            f = float(text)
            if f != int(f):
                raise ValueError
            return int(f)
        if base is float:
            return float(text)
        if base is tuple or hint is tuple:
            return tuple(s.strip() for s in text.split(",") if s.strip())
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(base, '__name__', base)}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _HINTS:
            raise ConfigError(f"{key}: unknown key")
        out[key] = value.strip()
    return out


def parse_config(path=None, overrides: dict | None = None, allow_empty: bool = False) -> RunConfig:
    """Build a validated config from an optional file and flag overrides (flags win)."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    for k, v in (overrides or {}).items():
        k = k.replace("-", "_")
        if k not in _HINTS:
            raise ConfigError(f"{k}: unknown key")
        if v is not None:
            values[k] = v
    kwargs = {k: _coerce(k, v) for k, v in values.items()}
    return RunConfig(**kwargs).validate(allow_empty=allow_empty)
