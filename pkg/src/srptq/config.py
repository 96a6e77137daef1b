"""System configuration: load parameters, distributions, run control.

A config resolves the triple (lambda, servers, rho) from any two of them
using mu = 1 / mean service time, so lambda = rho * servers * mu holds
exactly after resolution regardless of which pair was given.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from . import dists
from .dists import DistributionSpec
from .simcore import Discipline


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; the message names the field."""


@dataclass(frozen=True)
class SystemConfig:
    lam: float
    servers: int
    rho: float
    service: DistributionSpec
    patience: DistributionSpec
    discipline: Discipline = Discipline.SRPT
    horizon: float = 10_000.0
    warmup: float = 1_000.0
    seeds: tuple[int, ...] = (1,)
    batches: int = 20

    @property
    def mu(self) -> float:
        return 1.0 / self.service.mean()

    def __post_init__(self):
        object.__setattr__(self, "discipline", Discipline(self.discipline))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        if self.lam <= 0 or self.servers < 1 or self.rho <= 0:
            raise ConfigError(
                f"lambda/servers/rho must be positive, got "
                f"({self.lam}, {self.servers}, {self.rho})"
            )
        if abs(self.lam - self.rho * self.servers * self.mu) > 1e-12 * self.lam:
            raise ConfigError(
                f"inconsistent load: lambda={self.lam} != rho*servers*mu="
                f"{self.rho * self.servers * self.mu}"
            )
        if self.horizon <= 0:
            raise ConfigError(f"horizon: must be positive, got {self.horizon}")
        if not 0 <= self.warmup < self.horizon:
            raise ConfigError(
                f"warmup: must lie in [0, horizon), got {self.warmup}"
            )
        if Discipline(self.discipline) is Discipline.PRIORITY_LOSS and self.rho <= 1.0:
            raise ConfigError(
                "discipline: priority_loss requires rho > 1 (the short-job "
                "cutoff does not exist otherwise)"
            )
        if self.batches < 5:
            raise ConfigError(f"batches: must be >= 5, got {self.batches}")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")

    def at_scale(self, servers: int) -> "SystemConfig":
        """Same config at a different server count, holding rho fixed."""
        return replace(self, servers=int(servers),
                       lam=self.rho * int(servers) * self.mu)


def resolve_load(service: DistributionSpec, lam=None, servers=None, rho=None):
    """Fill in the missing element of (lambda, servers, rho).

    Resolution is commutative: any consistent pair yields the same triple.
    A derived server count must land on an integer.
    """
    mu = 1.0 / service.mean()
    given = sum(x is not None for x in (lam, servers, rho))
    if given < 2:
        raise ConfigError("load: give at least two of lambda, servers, rho")
    if lam is None:
        lam = rho * servers * mu
    elif servers is None:
        raw = lam / (rho * mu)
        servers = round(raw)
        if servers < 1 or abs(raw - servers) > 1e-9 * max(1.0, raw):
            raise ConfigError(
                f"servers: lambda/(rho*mu) = {raw} is not a positive integer"
            )
    elif rho is None:
        rho = lam / (servers * mu)
    else:
        if abs(lam - rho * servers * mu) > 1e-9 * lam:
            raise ConfigError(
                f"load: lambda={lam}, servers={servers}, rho={rho} are "
                f"inconsistent with mu={mu}"
            )
        rho = lam / (servers * mu)  # re-derive so the identity is exact
    lam = rho * servers * mu
    return float(lam), int(servers), float(rho)


_KNOWN_KEYS = {
    "lambda", "servers", "rho", "service", "patience", "discipline",
    "horizon", "warmup", "seeds", "seed_base", "replications", "batches",
    "verify",
}


def config_from_dict(obj: Mapping) -> SystemConfig:
    if not isinstance(obj, Mapping):
        raise ConfigError(f"config: expected a mapping, got {type(obj).__name__}")
    unknown = set(obj) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"config: unknown field(s) {sorted(unknown)}")
    for name in ("service", "patience"):
        if name not in obj:
            raise ConfigError(f"{name}: missing")
    try:
        service = dists.from_config(obj["service"], field="service")
        patience = dists.from_config(obj["patience"], field="patience")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    lam, servers, rho = resolve_load(
        service,
        lam=_opt_float(obj, "lambda"),
        servers=_opt_int(obj, "servers"),
        rho=_opt_float(obj, "rho"),
    )
    disc_raw = obj.get("discipline", "srpt")
    try:
        discipline = Discipline(str(disc_raw).lower().replace("-", "_"))
    except ValueError:
        raise ConfigError(
            f"discipline: unknown value {disc_raw!r} "
            f"(expected one of {[d.value for d in Discipline]})"
        ) from None

    seeds = obj.get("seeds")
    if seeds is None:
        base = _opt_int(obj, "seed_base")
        reps = _opt_int(obj, "replications") or 1
        seeds = expand_seeds(base if base is not None else 1, reps)
    else:
        if not isinstance(seeds, (list, tuple)) or not all(
            isinstance(s, int) for s in seeds
        ):
            raise ConfigError("seeds: expected a list of integers")
        seeds = tuple(seeds)

    horizon = float(obj.get("horizon", 10_000.0))
    warmup = float(obj.get("warmup", 0.1 * horizon))
    return SystemConfig(
        lam=lam, servers=servers, rho=rho, service=service, patience=patience,
        discipline=discipline, horizon=horizon, warmup=warmup, seeds=seeds,
        batches=int(obj.get("batches", 20)),
    )


def config_from_file(path) -> SystemConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(raw)


def expand_seeds(base: int, count: int) -> tuple[int, ...]:
    """Deterministic replication seed list derived from a base seed."""
    if count < 1:
        raise ConfigError(f"replications: must be >= 1, got {count}")
    return tuple(int(base) + i for i in range(count))


def _opt_float(obj, key):
    v = obj.get(key)
    if v is None:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {v!r}") from None


def _opt_int(obj, key):
    v = obj.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    return v
