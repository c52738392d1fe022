"""Standard normal target used by the random-walk toy experiment."""
from __future__ import annotations

from ..core import LogDensity


class NormalToy(LogDensity):
    """``log h(x) = -x^2 / 2`` on the real line."""

    def __init__(self):
        super().__init__(1, lambda x: -0.5 * float(x[0]) ** 2, name="normal_toy")

    variables = {"x": 0}
