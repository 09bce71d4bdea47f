"""Local identifiability by the rank of the moment Jacobian at random parameters."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hypergraph import jacobian
from .model import ModelFamily, free_parameter_count, random_params
from .observations import ObservationSpec, enumerate_observations

RANK_RTOL = 1e-10
MIN_GAP_RATIO = 1e3


@dataclass
class RankResult:
    rank: int
    tol: float
    gap_ratio: float
    indeterminate: bool


def numerical_rank(singular_values: Sequence[float], m: int, n: int) -> RankResult:
    """Count singular values above ``max(m, n) * s_max * 1e-10``.

    The gap ratio ``s[rank-1] / s[rank]`` is infinite when there is nothing
    below the cut (or nothing above it); a finite ratio under 1e3 flags the
    rank as indeterminate.
    """
    s = np.asarray(singular_values, dtype=float)
    if s.size and np.any(np.diff(s) > 1e-12 * max(s[0], 1.0)):
        raise ValueError("singular values must be sorted in descending order")
    if s.size == 0 or s[0] <= 0.0:
        return RankResult(0, 0.0, float("inf"), False)
    tol = max(m, n) * s[0] * RANK_RTOL
    rank = int(np.sum(s > tol))
    if rank == 0 or rank == s.size:
        gap = float("inf")
    else:
        gap = float(s[rank - 1] / s[rank]) if s[rank] > 0 else float("inf")
    return RankResult(rank, tol, gap, gap < MIN_GAP_RATIO)


@dataclass
class IdentifiabilityVerdict:
    answer: str                      # "yes", "no" or "indeterminate"
    rank: int
    n: int
    m: int
    singular_values: list[float]
    draws: int
    ranks: list[int]
    gap_ratio: float
    family: str = ""
    observations: str = ""
    lengths: list[int] = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def deficiency(self) -> int:
        return self.n - self.rank

    def to_dict(self, tail: int = 6) -> dict:
        out = asdict(self)
        out["singular_value_tail"] = self.singular_values[-tail:]
        # no finite gap (nothing below or above the cut) is written as null
        out["gap_ratio"] = self.gap_ratio if np.isfinite(self.gap_ratio) else None
        del out["singular_values"]
        return out


def check_identifiability(
    family: ModelFamily,
    spec: ObservationSpec,
    lengths,
    seed: Optional[int] = 0,
    draws: int = 3,
) -> IdentifiabilityVerdict:
    """Sample interior parameters, stack the Jacobian over ``lengths`` and test its rank.

    The verdict uses the draw with the largest rank, since the generic rank is
    the maximal one.
    """
    if isinstance(lengths, int):
        lengths = [lengths]
    lengths = list(lengths)
    if not any(enumerate_observations(spec, L) for L in lengths):
        raise ValueError(f"{spec.family} yields no observations at lengths {lengths}")
    rng = np.random.default_rng(seed)
    n = free_parameter_count(family)
    best = None
    ranks = []
    for _ in range(draws):
        params = random_params(family, rng)
        J = jacobian(params, spec, lengths)
        s = np.linalg.svd(J, compute_uv=False)
        res = numerical_rank(s, J.shape[0], J.shape[1])
        ranks.append(res.rank)
        if best is None or res.rank > best[0].rank:
            best = (res, s, J.shape[0])
    res, s, m = best
    if res.indeterminate:
        answer = "indeterminate"
    else:
        answer = "yes" if res.rank == n else "no"
    return IdentifiabilityVerdict(
        answer=answer,
        rank=res.rank,
        n=n,
        m=m,
        singular_values=[float(v) for v in s],
        draws=draws,
        ranks=ranks,
        gap_ratio=res.gap_ratio,
        family=str(family),
        observations=spec.family + (f"{{{','.join(spec.etas)}}}" if spec.etas else ""),
        lengths=lengths,
        seed=seed,
    )
