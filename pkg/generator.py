"""Seeded benchmark instances: random workflows encoded for τ-resiliency.

Each user is authorized for c steps, c uniform in [1, max(1, ⌊(k-1)/2⌋)];
q_sod separation-of-duty pairs are drawn independently (repeats allowed).
Every random draw comes from a PCG64 stream spawned per purpose from the seed.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from errors import DomainError
from model import AuthCost, Instance, MAX_RESOURCES
from resiliency import encode_resilient
from wsp import MustDiffer, WspInstance

log = logging.getLogger(__name__)

GENERATOR_VERSION = "1"
PRNG = "PCG64"
P_SOD_FACTOR = 10
P_CARD = 10

_AUTH_STREAM = 0
_SCOPE_STREAM = 1


def parse_alpha(value) -> Fraction:
    """α as a positive rational; strings like "1", "0.5" or "3/2" are accepted."""
    try:
        alpha = Fraction(str(value)).limit_denominator(1000)
    except (ValueError, ZeroDivisionError):
        raise DomainError(f"α must be a positive rational, got {value!r}") from None
    if alpha <= 0:
        raise DomainError(f"α must be positive, got {value!r}")
    return alpha


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    k: int | None = None
    tau: int | None = None
    alpha: Fraction = Fraction(1)
    q_sod: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("generator needs n ≥ 2")
        if self.k is None:
            object.__setattr__(self, "k", max(1, self.n // 10))
        if self.tau is None:
            object.__setattr__(self, "tau", self.n // 20)
        if self.q_sod is None:
            object.__setattr__(self, "q_sod", self.k if self.k >= 2 else 0)
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))
        if not 1 <= self.k <= MAX_RESOURCES:
            raise DomainError(f"k must lie in [1, {MAX_RESOURCES}], got {self.k}")
        if self.tau < 0:
            raise DomainError("τ must be non-negative")
        if self.q_sod < 0:
            raise DomainError("q_sod must be non-negative")
        if self.q_sod and self.k < 2:
            raise DomainError("separation-of-duty pairs need k ≥ 2")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    @property
    def steps_per_user(self) -> tuple[int, int]:
        return 1, max(1, (self.k - 1) // 2)

    def penalties(self) -> dict[str, int]:
        """Integer penalties for α = p/q: (10p, 10q, p) and user-count coefficient q."""
        p, q = self.alpha.numerator, self.alpha.denominator
        return {"sod": P_SOD_FACTOR * p, "card": P_CARD * q, "auth": p, "user_count": q}

    def echo(self) -> dict:
        out = asdict(self)
        out["alpha"] = str(self.alpha)
        return out


def _stream(seed: int, purpose: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(purpose,))))


def generate_wsp(cfg: GeneratorConfig) -> WspInstance:
    steps = tuple(f"s{i + 1}" for i in range(cfg.k))
    users = tuple(f"u{j + 1}" for j in range(cfg.n))
    auth = _stream(cfg.seed, _AUTH_STREAM)
    lo, hi = cfg.steps_per_user
    base = []
    for _ in range(cfg.n):
        count = int(auth.integers(lo, hi + 1))
        chosen = auth.choice(cfg.k, size=count, replace=False)
        base.append(int(sum(1 << int(s) for s in chosen)))
    scopes = _stream(cfg.seed, _SCOPE_STREAM)
    penalties = cfg.penalties()
    constraints = []
    for _ in range(cfg.q_sod):
        a, b = sorted(int(s) for s in scopes.choice(cfg.k, size=2, replace=False))
        constraints.append(MustDiffer(steps[a], steps[b], penalties["sod"]))
    meta = {"generator": {"version": GENERATOR_VERSION, "prng": PRNG, "seed": cfg.seed,
                          "config": cfg.echo()}}
    log.debug("generated workflow n=%d k=%d q_sod=%d seed=%d", cfg.n, cfg.k, cfg.q_sod, cfg.seed)
    return WspInstance(steps, users, tuple(constraints), AuthCost(tuple(base), penalties["auth"]), meta)


def generate(cfg: GeneratorConfig) -> Instance:
    """Same config, same instance: the draws depend on the seed alone."""
    penalties = cfg.penalties()
    return encode_resilient(generate_wsp(cfg), cfg.tau, p_sod=penalties["sod"], p_card=penalties["card"],
                            p_a=penalties["auth"], coef=penalties["user_count"])
