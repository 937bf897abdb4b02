"""Physical parameter tuple of the film model."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import DomainError

#: ``b/e0 >= THEOREM_RATIO * r0`` is the hypothesis of the two-sided scaling law.
THEOREM_RATIO = 64.0**4
#: ``b/e0 >= CONSTRUCTION_RATIO * r0`` is what the dislocation construction needs.
CONSTRUCTION_RATIO = 4.0


@dataclass(frozen=True)
class ModelParams:
    """Surface tension, misfit, Burgers magnitude, volume, core radius and the
    nucleation / growth constants.

    Construction does not reject parameters that violate the optional
    hypotheses; use :attr:`construction_valid` / :attr:`theorem_valid` or the
    ``require_*`` helpers.
    """

    gamma: float
    e0: float
    b: float
    d: float
    r0: float
    c0: float = 1.0
    c1: float = 1.0

    def __post_init__(self):
        for name in ("gamma", "e0", "b", "c0"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        if not (self.d >= 0 and math.isfinite(self.d)):
            raise DomainError(f"d must be nonnegative and finite, got {self.d!r}")
        if not (0 < self.r0 <= 1):
            raise DomainError(f"r0 must lie in (0,1], got {self.r0!r}")
        if not (0 < self.c1 <= 1):
            raise DomainError(f"c1 must lie in (0,1], got {self.c1!r}")

    @property
    def period(self) -> float:
        """Dislocation spacing ``b/e0``."""
        return self.b / self.e0

    @property
    def log_ratio(self) -> float:
        """``log(b/(e0 r0))``."""
        return math.log(self.b / (self.e0 * self.r0))

    @property
    def construction_valid(self) -> bool:
        return self.period >= CONSTRUCTION_RATIO * self.r0 * (1 - 1e-12)

    @property
    def theorem_valid(self) -> bool:
        return self.period >= THEOREM_RATIO * self.r0 * (1 - 1e-12)

    def require_construction_valid(self):
        if not self.construction_valid:
            raise DomainError(
                f"dislocation construction needs b/e0 >= 4 r0; "
                f"got b/e0 = {self.period:.6g}, 4 r0 = {4 * self.r0:.6g}"
            )

    def require_theorem_valid(self):
        if not self.theorem_valid:
            raise DomainError(
                f"scaling law needs b/e0 >= 64^4 r0; "
                f"got b/e0 = {self.period:.6g}, 64^4 r0 = {THEOREM_RATIO * self.r0:.6g}"
            )

    def replace(self, **changes) -> "ModelParams":
        fields = dict(gamma=self.gamma, e0=self.e0, b=self.b, d=self.d,
                      r0=self.r0, c0=self.c0, c1=self.c1)
        fields.update(changes)
        return ModelParams(**fields)

    def as_dict(self) -> dict:
        return dict(gamma=self.gamma, e0=self.e0, b=self.b, d=self.d,
                    r0=self.r0, c0=self.c0, c1=self.c1)
