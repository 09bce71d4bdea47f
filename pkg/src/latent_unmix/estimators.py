"""Parameter recovery from observed moments: unmixing plus spectral steps."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mixing import MixingMatrix, mixing_matrix, parse_term, term_string
from .model import Family, ModelFamily, ModelParams
from .observations import Moments, Observation, ObservationSpec
from .spectral import (
    ConditioningError,
    decompose,
    in_rowspace,
    normalize_columns_to_stochastic,
    pseudoinverse,
)

# Backbone of A diag(pi) T^T diag(A^T eta) A^T: the right child of the root
# splits into the projected leaf and the second designated leaf.
PSI2_TERM = parse_term("(T:O:•,T:(T:O:◦,T:O:•)) [n3=0]")

REAL_TOL = 1e-8
COLSUM_TOL = 1e-6
REFIT_TOL = 1e-8
MAX_ROOT_SEARCH_D = 8


class UnmixError(ValueError):
    """A requested compound parameter is not determined by the mixing system."""


class RootSelectionError(ArithmeticError):
    """Several quadratic-root assignments explain the moments equally well."""

    def __init__(self, message, candidates):
        super().__init__(message)
        self.candidates = candidates


@dataclass
class RecoveredParams:
    params: ModelParams
    raw: dict[str, np.ndarray]
    permutation_ambiguous: bool
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from .model import params_to_dict

        return {
            "params": params_to_dict(self.params),
            "raw": {k: np.asarray(v).real.tolist() for k, v in self.raw.items()},
            "permutation_ambiguous": self.permutation_ambiguous,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"real": obj.real.tolist(), "imag": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, complex):
        return {"real": obj.real, "imag": obj.imag}
    return obj


def project_stochastic(M: np.ndarray) -> np.ndarray:
    """Clip negative entries and renormalize columns (vectors are one column)."""
    M = np.real(np.asarray(M, dtype=complex if np.iscomplexobj(M) else float))
    clipped = np.clip(M, 0.0, None)
    sums = clipped.sum(axis=0)
    if np.any(sums <= 0):
        raise ConditioningError("a column has no positive mass after clipping")
    return clipped / sums


# --------------------------------------------------------------------------
# unmixing


def moment_stack(moments: Moments, mm: MixingMatrix, eta_tag: str = "") -> np.ndarray:
    """Observed moments ordered like the rows of ``mm``."""
    out = []
    for L, pat in mm.rows:
        key = (L, Observation(pat.kind, pat.positions, eta_tag if pat.kind == "thin" else ""))
        if key not in moments:
            raise KeyError(f"moment {L}:{key[1].name} missing for the mixing system")
        out.append(moments.values[key])
    return np.stack(out)


def unmix(moments: Moments, mm: MixingMatrix, wanted: Sequence, eta_tag: str = "",
          tol: float = 1e-9) -> dict:
    """Compound parameters ``(M^+ mu)_p`` for each wanted column (index or term)."""
    M = mm.dense()
    cols = []
    for w in wanted:
        c = w if isinstance(w, (int, np.integer)) else _column_of(mm, w)
        e = np.zeros(M.shape[1])
        e[c] = 1.0
        ok, resid = in_rowspace(M, e, tol)
        if not ok:
            raise UnmixError(
                f"column {mm.column_labels()[c]} is not in the row space of M (residual {resid:.3e})"
            )
        cols.append(c)
    mu = moment_stack(moments, mm, eta_tag)
    psi = pseudoinverse(M) @ mu.reshape(mu.shape[0], -1)
    return {c: psi[c].reshape(mu.shape[1:]) for c in cols}


def _column_of(mm: MixingMatrix, term) -> int:
    try:
        return mm.columns.index(term)
    except ValueError:
        raise UnmixError(f"term {term_string(term)} does not occur in the mixing system") from None


# --------------------------------------------------------------------------
# PCFG-IE


def recover_pi_T_O_from_A(A_perm: np.ndarray, psi2_ones: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(pi, T, O) up to the column permutation already present in ``A_perm``."""
    Ap = pseudoinverse(A_perm)
    pi = Ap @ psi2_ones.sum(axis=1)
    if np.any(np.abs(pi) <= 1e-12 * max(1.0, np.abs(pi).max())):
        raise ConditioningError(f"recovered pi has a zero entry: {pi}")
    T = Ap @ psi2_ones.T @ pseudoinverse(A_perm.T) @ np.diag(1.0 / pi)
    if np.linalg.cond(T) > 1e12:
        raise ConditioningError("recovered T is not invertible")
    O = A_perm @ np.linalg.inv(T)
    return pi, T, O


def pcfg_ie_mixing(lengths: Sequence[int]) -> MixingMatrix:
    patterns = ObservationSpec("all-thin-triples", {"1": np.ones(1)})
    return mixing_matrix(Family.PCFG_IE, patterns, lengths)


def estimate_pcfg_ie(moments: Moments, k: int, tau_tag: str = "tau",
                     lengths: Optional[Sequence[int]] = None,
                     mm: Optional[MixingMatrix] = None) -> RecoveredParams:
    """Unmix Psi_2 at eta = 1 and eta = tau, then peel off A, pi, T and O."""
    if lengths is None:
        lengths = [L for L in moments.lengths() if L >= 3]
    if mm is None:
        mm = pcfg_ie_mixing(lengths)
    col = _column_of(mm, PSI2_TERM)
    psi_1 = unmix(moments, mm, [col], "1")[col]
    psi_tau = unmix(moments, mm, [col], tau_tag)[col]
    dec = decompose(psi_1.T, psi_tau.T, k)
    if np.iscomplexobj(dec.matrix):
        raise ConditioningError("eigenvalues of the Psi_2 pencil are complex; moments are too noisy")
    A_perm = normalize_columns_to_stochastic(dec.matrix, tol=1e-12)
    pi, T, O = recover_pi_T_O_from_A(A_perm, psi_1)
    d = psi_1.shape[0]
    fam = ModelFamily(Family.PCFG_IE, d, k)
    params = ModelParams(fam, pi=project_stochastic(pi), T=project_stochastic(T), O=project_stochastic(O))
    diag = {
        "eigenvalues": dec.eigenvalues,
        "eig_separation": dec.separation,
        "min_sv_projected": dec.min_sv_projected,
        "min_sv_eigvecs": dec.min_sv_eigvecs,
        "mixing_shape": list(mm.shape),
        "lengths": list(lengths),
        "tau": moments.etas.get(tau_tag),
    }
    return RecoveredParams(params, {"pi": pi, "T": T, "O": O, "A": A_perm}, True, diag)


# --------------------------------------------------------------------------
# DEP-IES


def dep_ies_closed_forms(pi: np.ndarray, A: np.ndarray) -> dict[str, np.ndarray]:
    """Length-3 pair moments (12, 13) and the length-2 pair moment of DEP-IES."""
    D = np.diag(pi)
    At = A.T
    mu12 = (3 * D @ At + D @ At @ At + 2 * A @ D + A @ D @ At) / 7
    mu13 = (2 * D @ At + D @ At @ At + A @ D @ At + A @ A @ D + 2 * A @ D) / 7
    mu12_tilde = (D @ At + A @ D) / 2
    return {"mu12": mu12, "mu13": mu13, "mu12_tilde": mu12_tilde}


def quadratic_roots(gamma):
    """Both solutions of lambda^2 + lambda = gamma, principal root first."""
    s = np.sqrt(1 + 4 * np.asarray(gamma, dtype=complex))
    return (-1 + s) / 2, (-1 - s) / 2


def _candidate_score(A: np.ndarray, pi: np.ndarray, targets: dict) -> tuple[float, float, float]:
    imag = float(np.max(np.abs(A.imag)))
    Ar = A.real
    colsum = float(np.max(np.abs(Ar.sum(axis=0) - 1)))
    fit = dep_ies_closed_forms(pi, Ar)
    resid = max(float(np.max(np.abs(fit[k] - targets[k]))) for k in targets)
    return imag, colsum, resid


def estimate_dep_ies(mu1: np.ndarray, mu12: np.ndarray, mu13: np.ndarray,
                     mu12_tilde: np.ndarray, strict: bool = True) -> RecoveredParams:
    """Recover A from AA + A = [7(mu13 - mu12) + 2 mu12~] diag(mu1)^-1.

    Each eigenvalue of AA + A has two preimages under x -> x^2 + x.  The
    principal root is tried first for every eigenvalue; if that fails the
    realness, column-sum or refit checks, all assignments are searched.
    With ``strict=False`` (noisy moments) the best-scoring candidate is
    returned even if no candidate passes the tolerances.
    """
    mu1 = np.asarray(mu1, dtype=float)
    if np.any(mu1 <= 0):
        raise ConditioningError("first-word marginal has a non-positive entry")
    d = mu1.shape[0]
    C = (7 * (np.asarray(mu13) - np.asarray(mu12)) + 2 * np.asarray(mu12_tilde)) @ np.diag(1.0 / mu1)
    gamma, Q = np.linalg.eig(C)
    if np.linalg.cond(Q) > 1e10:
        raise ConditioningError("AA + A is not diagonalizable to working precision")
    Qinv = np.linalg.inv(Q)
    plus, minus = quadratic_roots(gamma)
    targets = {"mu12": mu12, "mu13": mu13, "mu12_tilde": mu12_tilde}

    def build(choice):
        lam = np.where(np.asarray(choice, dtype=bool), minus, plus)
        return Q @ np.diag(lam) @ Qinv, lam

    def valid(score):
        imag, colsum, resid = score
        return imag <= REAL_TOL and colsum <= COLSUM_TOL and resid <= REFIT_TOL

    principal = (0,) * d
    A0, lam0 = build(principal)
    score0 = _candidate_score(A0, mu1, targets)
    searched = 1
    chosen, A_raw, lam, score = principal, A0, lam0, score0
    if not valid(score0):
        if d > MAX_ROOT_SEARCH_D:
            raise ConditioningError(f"root search over 2^{d} assignments is too large")
        scored = []
        for choice in itertools.product((0, 1), repeat=d):
            A, lam_c = build(choice)
            scored.append((choice, A, lam_c, _candidate_score(A, mu1, targets)))
        searched = len(scored)
        passing = [s for s in scored if valid(s[3])]
        if len(passing) > 1:
            raise RootSelectionError(
                f"{len(passing)} root assignments reproduce the moments",
                [np.real(s[1]) for s in passing],
            )
        if passing:
            chosen, A_raw, lam, score = passing[0]
        elif strict:
            best = min(scored, key=lambda s: s[3][2] + s[3][0] + s[3][1])
            raise ConditioningError(
                f"no root assignment passes validation (best imag={best[3][0]:.2e}, "
                f"colsum={best[3][1]:.2e}, refit={best[3][2]:.2e})"
            )
        else:
            chosen, A_raw, lam, score = min(scored, key=lambda s: s[3][2] + s[3][0] + s[3][1])
    A = project_stochastic(np.real(A_raw))
    pi = mu1 / mu1.sum()
    fam = ModelFamily(Family.DEP_IES, d)
    diag = {
        "gamma": gamma,
        "lambda": lam,
        "roots_chosen": ["-" if c else "+" for c in chosen],
        "assignments_searched": searched,
        "imag_residue": score[0],
        "colsum_error": score[1],
        "refit_residual": score[2],
        "stationarity_residual": float(np.max(np.abs(A @ pi - pi))),
    }
    return RecoveredParams(ModelParams(fam, pi=pi, A=A), {"A": A_raw, "pi": mu1}, False, diag)


def dep_ies_inputs(moments: Moments) -> dict[str, np.ndarray]:
    """Pick mu1, mu12, mu13 (length 3) and mu12~ (length 2) out of AllPairs/first moments."""
    p12, p13 = Observation("pair", (1, 2)), Observation("pair", (1, 3))
    mu12, mu13 = moments[(3, p12)], moments[(3, p13)]
    first = Observation("first", (1,))
    mu1 = moments[(3, first)] if (3, first) in moments else mu12.sum(axis=1)
    return {"mu1": mu1, "mu12": mu12, "mu13": mu13, "mu12_tilde": moments[(2, p12)]}


def estimate_dep_ies_from_moments(moments: Moments, strict: bool = True) -> RecoveredParams:
    return estimate_dep_ies(**dep_ies_inputs(moments), strict=strict)


# --------------------------------------------------------------------------
# HMM


def estimate_hmm_allpairs(mu12: np.ndarray, mu_next: np.ndarray, k: int) -> RecoveredParams:
    """HMM from E[x1 (x) x2] and E[x2 (x) x3].

    X = O diag(pi) T^T O^T and Y = O diag(T pi) T^T O^T share the factor O;
    the eigenvalues are the ratios (T pi)_i / pi_i.
    """
    mu12 = np.asarray(mu12, dtype=float)
    dec = decompose(mu12, np.asarray(mu_next, dtype=float), k)
    if np.iscomplexobj(dec.matrix):
        raise ConditioningError("complex eigenvalues in the HMM pencil")
    O_perm = normalize_columns_to_stochastic(dec.matrix, tol=1e-12)
    Op = pseudoinverse(O_perm)
    pi = Op @ mu12.sum(axis=1)
    if np.any(np.abs(pi) <= 1e-12):
        raise ConditioningError(f"recovered pi has a zero entry: {pi}")
    T = (np.diag(1.0 / pi) @ Op @ mu12 @ pseudoinverse(O_perm.T)).T
    fam = ModelFamily(Family.HMM, mu12.shape[0], k)
    params = ModelParams(fam, pi=project_stochastic(pi), T=project_stochastic(T), O=project_stochastic(O_perm))
    diag = {
        "eigenvalues": dec.eigenvalues,
        "eig_separation": dec.separation,
        "min_sv_projected": dec.min_sv_projected,
    }
    return RecoveredParams(params, {"pi": pi, "T": T, "O": O_perm}, True, diag)


def estimate_hmm_from_moments(moments: Moments, k: int, L: Optional[int] = None) -> RecoveredParams:
    L = L or max(moments.lengths())
    if L < 3:
        raise ValueError("the HMM estimator needs sentences of length at least 3")
    return estimate_hmm_allpairs(
        moments[(L, Observation("pair", (1, 2)))], moments[(L, Observation("pair", (2, 3)))], k
    )


def fit_residual(recovered: ModelParams, moments: Moments, spec: ObservationSpec) -> float:
    """Largest gap between the input moments and those implied by the estimate."""
    from .hypergraph import exact_moments

    fit = exact_moments(recovered, spec, moments.lengths())
    return max(float(np.max(np.abs(fit.values[key] - v))) for key, v in moments.values.items()
               if key in fit.values)

