"""Permutation-invariant parameter comparison and brute-force moment oracles."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import (
    EnumerationTooLarge,
    Family,
    ModelParams,
    count_topologies,
    sentence_distribution,
)
from .observations import Moments, Observation, ObservationSpec, enumerate_observations

EXACT_SEARCH_MAX_K = 6
BRUTE_FORCE_BUDGET = 2_000_000


def permute_params(params: ModelParams, perm) -> ModelParams:
    """Relabel hidden states: new state i is old state ``perm[i]``."""
    fam = params.family
    if not fam.kind.has_hidden_states:
        return params.copy()
    p = np.asarray(perm)
    k = fam.k
    out = {}
    for name in fam.blocks:
        v = params.block(name)
        if name == "pi":
            out[name] = v[p]
        elif name == "O":
            out[name] = v[:, p]
        elif name == "B":
            rows = (p[:, None] * k + p[None, :]).ravel()
            out[name] = v[rows][:, p]
        else:
            out[name] = v[np.ix_(p, p)]
    return ModelParams(fam, **out)


@dataclass
class MatchReport:
    permutation: list[int]
    block_max_abs: dict[str, float]
    block_frobenius: dict[str, float]
    error: float
    exact_search: bool = True
    inverse_is_transpose: bool = True
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "permutation": self.permutation,
            "block_max_abs": self.block_max_abs,
            "block_frobenius": self.block_frobenius,
            "error": self.error,
            "exact_search": self.exact_search,
        }


def _block_errors(a: ModelParams, b: ModelParams) -> tuple[dict, dict]:
    mx, fro = {}, {}
    for name in a.family.blocks:
        diff = np.asarray(a.block(name)) - np.asarray(b.block(name))
        mx[name] = float(np.max(np.abs(diff)))
        fro[name] = float(np.linalg.norm(diff))
    return mx, fro


def _check_same_family(est: ModelParams, ref: ModelParams) -> None:
    if est.family != ref.family:
        raise ValueError(f"family mismatch: {est.family} vs {ref.family}")
    for name in ref.family.blocks:
        if np.shape(est.block(name)) != np.shape(ref.block(name)):
            raise ValueError(f"block {name} shape mismatch")


def match_params(est: ModelParams, ref: ModelParams) -> MatchReport:
    """Smallest max-abs error over hidden-state relabelings of ``est``.

    All k! permutations are tried for k <= 6; larger k assigns states by
    O-column distance, which is approximate.
    """
    _check_same_family(est, ref)
    fam = ref.family
    if not fam.kind.has_hidden_states:
        mx, fro = _block_errors(est, ref)
        return MatchReport(list(range(fam.d)), mx, fro, max(mx.values()))
    k = fam.k
    if k <= EXACT_SEARCH_MAX_K:
        candidates = itertools.permutations(range(k))
        exact = True
    else:
        cost = np.abs(ref.O[:, :, None] - est.O[:, None, :]).sum(axis=0)
        _, cols = linear_sum_assignment(cost)
        candidates = [tuple(cols)]
        exact = False
    best = None
    for perm in candidates:
        relabeled = permute_params(est, perm)
        mx, fro = _block_errors(relabeled, ref)
        err = max(mx.values())
        if best is None or err < best.error:
            best = MatchReport(list(perm), mx, fro, err, exact)
    P = np.eye(k)[:, best.permutation]
    best.inverse_is_transpose = bool(np.allclose(np.linalg.inv(P), P.T))
    return best


def brute_force_moments(params: ModelParams, spec: ObservationSpec, L: int) -> Moments:
    """Moments by contracting the fully enumerated sentence distribution."""
    fam = params.family
    n_nodes = {"constituency": 2 * L - 1, "chain": L}
    kind = "dependency" if fam.kind.is_dependency else ("constituency" if fam.kind.is_constituency else "chain")
    if kind == "dependency":
        cost = fam.d ** L * count_topologies("dependency", L) * L
    else:
        cost = fam.d ** L + count_topologies(kind, L) * fam.k ** n_nodes[kind]
    if cost > BRUTE_FORCE_BUDGET:
        raise EnumerationTooLarge(f"brute force over {cost} configurations exceeds the budget")
    P = sentence_distribution(params, L)
    out = Moments(etas=dict(spec.etas))
    for obs in enumerate_observations(spec, L):
        out[(L, obs)] = contract_distribution(P, obs, spec.etas.get(obs.eta))
    return out


def contract_distribution(P: np.ndarray, obs: Observation, eta: Optional[np.ndarray] = None) -> np.ndarray:
    """E[phi_o(x)] from a full (d,)*L distribution tensor."""
    L = P.ndim
    letters = "abcdefghijklmnop"[:L]
    operands, subs = [P], [letters]
    if obs.kind == "thin":
        if eta is None:
            raise ValueError(f"observation {obs.name} needs its projection vector")
        operands.append(eta)
        subs.append(letters[obs.positions[2] - 1])
    out = "".join(letters[p - 1] for p in obs.designated)
    return np.einsum(",".join(subs) + "->" + out, *operands)


def max_moment_difference(a: Moments, b: Moments) -> float:
    keys = set(a.values) | set(b.values)
    if set(a.values) != set(b.values):
        raise KeyError("moment sets differ")
    return max(float(np.max(np.abs(a.values[k] - b.values[k]))) for k in keys)


def _min_gap(values: np.ndarray) -> float:
    v = np.asarray(values)
    if v.size < 2:
        return float("inf")
    return float(min(abs(a - b) for a, b in itertools.combinations(v, 2)))


def conditioning_margin(params: ModelParams, tau: Optional[np.ndarray] = None) -> float:
    """Distance from the degenerate set the spectral estimators cannot handle.

    The smallest of: min pi, smallest singular values of T and O, and the gap
    between the eigenvalues that Decompose has to separate (entries of
    (OT)^T tau for PCFG-IE, (T pi)_i / pi_i for HMM, spectrum of A for DEP).
    """
    fam = params.family
    parts = [float(np.min(params.pi))]
    if fam.kind.is_dependency:
        A_left, A_right = params.left_right()
        parts.append(_min_gap(np.linalg.eigvals(A_left)))
        if fam.kind is Family.DEP_I:
            parts.append(_min_gap(np.linalg.eigvals(A_right)))
        return min(parts)
    parts.append(float(np.linalg.svd(params.O, compute_uv=False)[-1]))
    if fam.kind is Family.PCFG_IE:
        parts.append(float(np.linalg.svd(params.T, compute_uv=False)[-1]))
        if tau is not None:
            parts.append(_min_gap((params.O @ params.T).T @ tau))
    elif fam.kind is Family.HMM:
        parts.append(float(np.linalg.svd(params.T, compute_uv=False)[-1]))
        parts.append(_min_gap(params.T @ params.pi / params.pi))
    return min(parts)


def draw_well_conditioned(family, rng, margin: float = 0.02, tau: Optional[np.ndarray] = None,
                          max_tries: int = 10_000) -> ModelParams:
    """Dirichlet(1) draw conditioned on ``conditioning_margin >= margin``."""
    from .model import random_params

    for _ in range(max_tries):
        params = random_params(family, rng)
        if conditioning_margin(params, tau) >= margin:
            return params
    raise RuntimeError(f"no draw with margin {margin} in {max_tries} tries")
