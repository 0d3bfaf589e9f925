"""Desk-scale constants for the pipelines and their key=value text form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping

# Constants that must lie in (0, 1].
_UNIT_FIELDS = ("c", "epsilon", "p", "gamma", "mu", "alpha", "theta", "reserve_gamma")


def as_fraction(value: Any) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float.

    Floats go through their shortest repr so ``0.1`` becomes ``1/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value).strip())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class DeskScaleParams:
    """Constants of the constructions, scaled to graphs of a few thousand vertices.

    The first block mirrors the asymptotic constants (``C``, ``c``, ``epsilon``,
    ``p``, ``gamma``, ``mu``, ``alpha``, ``theta`` and the two log multipliers).
    The second block holds knobs that only exist because the constructions run
    at small ``n`` (router width, chain length, template degree, ...).
    """

    C: Fraction = Fraction(2)
    c: Fraction = Fraction(1, 5)
    epsilon: Fraction = Fraction(1, 1000)
    p: Fraction = Fraction(1, 10)
    gamma: Fraction = Fraction(1, 5)
    mu: Fraction = Fraction(3, 20)
    alpha: Fraction = Fraction(1, 10)
    theta: Fraction = Fraction(1, 200)
    beta_log: Fraction = Fraction(4)
    beta_log3: Fraction = Fraction(1, 10)
    max_retries: int = 50
    rng_seed: int = 0

    extend_D: int = 10
    router_width: int = 16
    chain_length: int = 3
    reserve_gamma: Fraction = Fraction(9, 10)
    template_degree: int = 4
    absorber_cap: int = 100
    absorbing_path_size: int = 0
    template_samples: int = 200
    hamilton_restarts: int = 30
    hamilton_rotation_factor: int = 50
    connect_restarts: int = 20
    audit: bool = False
    strict_preconditions: bool = False

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.type in ("Fraction",) or isinstance(f.default, Fraction):
                object.__setattr__(self, f.name, as_fraction(value))
        for name in _UNIT_FIELDS:
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.C < 1:
            raise ValueError(f"C must be at least 1, got {self.C}")
        if self.beta_log <= 0 or self.beta_log3 <= 0:
            raise ValueError("log multipliers must be positive")
        for name in ("max_retries", "extend_D", "router_width", "chain_length",
                     "template_degree", "absorber_cap", "hamilton_restarts",
                     "hamilton_rotation_factor", "connect_restarts"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.absorbing_path_size < 0 or self.template_samples < 0:
            raise ValueError("sizes must be non-negative")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def replace(self, **changes: Any) -> "DeskScaleParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def to_text(self) -> str:
        """Flat ``key = value`` lines, one per field, in declaration order."""
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: "DeskScaleParams | None" = None
                     ) -> "DeskScaleParams":
        """Build params from string or typed values; unknown keys are an error."""
        base = base or cls()
        known = {f.name: f for f in dataclasses.fields(cls)}
        changes: dict[str, Any] = {}
        for key, raw in values.items():
            if key not in known:
                raise KeyError(f"unknown parameter {key!r}")
            default = getattr(base, key)
            if isinstance(default, bool):
                changes[key] = raw if isinstance(raw, bool) else _parse_bool(str(raw))
            elif isinstance(default, int):
                changes[key] = int(raw)
            else:
                changes[key] = as_fraction(raw)
        return dataclasses.replace(base, **changes)

    @classmethod
    def from_text(cls, text: str) -> "DeskScaleParams":
        return cls.from_mapping(parse_key_values(text))


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out
