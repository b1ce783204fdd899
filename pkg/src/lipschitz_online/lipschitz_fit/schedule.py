"""Growing Lipschitz budget ``L_T = L0 * max(ln T, 1) ** (1 / (m_eff + 2))``."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ValidationError


@dataclass(frozen=True)
class Schedule:
    L0: float = 1.0
    m_eff: int = 1
    frozen: bool = False  # hold the budget at L0 (used to show capacity must grow)

    def __post_init__(self):
        if not self.L0 > 0:
            raise ValidationError("schedule L0 must be positive")
        if self.m_eff < 0:
            raise ValidationError("m_eff must be nonnegative")

    def __call__(self, T: int) -> float:
        return schedule_L(self, T)


def schedule_L(schedule: Schedule, T: int) -> float:
    if T < 1:
        raise ValidationError("T must be >= 1")
    if schedule.frozen:
        return schedule.L0
    return schedule.L0 * max(math.log(T), 1.0) ** (1.0 / (schedule.m_eff + 2))
