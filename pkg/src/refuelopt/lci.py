"""Lifted cover inequalities for station-capacity knapsacks.

A cover for station v is a set of OD pairs whose combined demand exceeds the
station capacity; at most |C|-1 of them can use v simultaneously. Minimal
covers are built greedily from the LP values and strengthened with lifting
coefficients for the pairs outside the cover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

COVER_TOL = 1e-9


@dataclass(frozen=True)
class LiftedCover:
    """Cover plus lifting coefficients; rhs is ``len(cover) - 1``.

    ``alpha`` maps every pair outside the cover to its integer coefficient
    (zeros included; zero-coefficient terms drop out of the row).
    """

    station: str
    cover: tuple[int, ...]
    alpha: dict[int, int]
    rhs: int

    def coefficient(self, q: int) -> int:
        if q in self.alpha:
            return self.alpha[q]
        return 1 if q in self.cover else 0


def minimal_cover(
    z_values: Mapping[int, float],
    demands: Mapping[int, float],
    kappa: float,
) -> Optional[tuple[int, ...]]:
    """Greedy minimal cover: fill by non-increasing LP value, then strip.

    Pairs are accumulated in order of their station-usage LP values until the
    demand total exceeds the capacity; members are then removed largest
    demand first while the total still exceeds it. Returns ``None`` when the
    total demand cannot exceed the capacity (no cover exists).
    """
    if math.isinf(kappa):
        return None
    order = sorted(z_values, key=lambda q: (-z_values[q], q))
    total = 0.0
    cover: list[int] = []
    for q in order:
        cover.append(q)
        total += demands[q]
        if total > kappa + COVER_TOL:
            break
    else:
        return None
    for q in sorted(cover, key=lambda q: (-demands[q], q)):
        if total - demands[q] > kappa + COVER_TOL:
            cover.remove(q)
            total -= demands[q]
    return tuple(sorted(cover))


def balas_alpha(cover_demands: Sequence[float], f_q: float) -> int:
    """Lifting coefficient: the unique integer with S(a) <= f_q < S(a+1).

    S(r) is the sum of the r largest demands over the cover, S(0) = 0 and
    S(r) is unbounded past the cover size.
    """
    prefix = [0.0]
    for f in sorted(cover_demands, reverse=True):
        prefix.append(prefix[-1] + f)
    alpha = 0
    for r in range(1, len(prefix)):
        if prefix[r] <= f_q + COVER_TOL:
            alpha = r
        else:
            break
    return alpha


def balas_lift(
    cover: Sequence[int],
    demands: Mapping[int, float],
    outside: Sequence[int],
) -> dict[int, int]:
    """Coefficients for every pair outside the cover via the prefix sums."""
    cover_f = [demands[q] for q in cover]
    return {q: balas_alpha(cover_f, demands[q]) for q in outside}


def build_lifted_cover(
    station: str,
    z_values: Mapping[int, float],
    demands: Mapping[int, float],
    kappa: float,
) -> Optional[LiftedCover]:
    """Minimal cover plus lifting for one saturated station, if any."""
    cover = minimal_cover(z_values, demands, kappa)
    if cover is None:
        return None
    outside = [q for q in sorted(z_values) if q not in cover]
    alpha = balas_lift(cover, demands, outside)
    return LiftedCover(station, cover, alpha, len(cover) - 1)
