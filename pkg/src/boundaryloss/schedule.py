"""Per-epoch weights for mixing a regional loss with the boundary loss."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .exceptions import InvalidSchedule

STRATEGIES = ("constant", "increase", "rebalance")
DEFAULT_CAPS = {"constant": float("inf"), "increase": 1.0, "rebalance": 0.99}


@dataclass(frozen=True)
class AlphaSchedule:
    """Weighting strategy.

    ``constant`` yields ``(1, alpha0)`` at every epoch.  ``increase`` yields
    ``(1, alpha(e))`` and ``rebalance`` yields ``(1 - alpha(e), alpha(e))``,
    where ``alpha(e) = min(alpha0 + step * e, cap)``.  The rebalance cap must
    stay below 1 so the regional term never vanishes.
    """

    strategy: str = "rebalance"
    alpha0: float = 0.01
    step: float = 0.01
    cap: Optional[float] = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidSchedule(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.alpha0 < 0:
            raise InvalidSchedule(f"alpha0 must be >= 0, got {self.alpha0}")
        if self.step < 0:
            raise InvalidSchedule(f"step must be >= 0, got {self.step}")
        if self.cap is None:
            object.__setattr__(self, "cap", DEFAULT_CAPS[self.strategy])
        if self.strategy == "rebalance" and not (self.cap < 1 and self.alpha0 < 1):
            raise InvalidSchedule("rebalance needs alpha0 < 1 and cap < 1")

    def alpha(self, epoch: int) -> float:
        if epoch < 0:
            raise InvalidSchedule(f"epoch must be >= 0, got {epoch}")
        if self.strategy == "constant":
            return self.alpha0
        return min(self.alpha0 + self.step * epoch, self.cap)

    def weights(self, epoch: int) -> tuple:
        a = self.alpha(epoch)
        if self.strategy == "rebalance":
            return 1.0 - a, a
        return 1.0, a


def weights(sched: AlphaSchedule, epoch: int) -> tuple:
    """``(w_regional, w_boundary)`` for ``epoch``."""
    return sched.weights(epoch)
