"""Compound parameters and mixing matrices.

For a fixed observation, the conditional moment given the tree topology only
depends on the backbone: the part of the tree connecting the root to the
observed leaves.  Grouping topologies by backbone gives the linear system
``mu = M Psi`` whose rows are observations and whose columns are distinct
compound parameters.

Constituency (PCFG-IE) backbones are computed with a chart over spans.  Terms
are nested tuples:

* ``None``                 nil (no observed leaf below)
* ``("O", "•")``           designated leaf, emits through O
* ``("O", "◦")``           projected leaf, contributes ``O^T eta``
* ``("T", t)``             one T edge above ``t``
* ``("F", t1, t2)``        a node with children ``T:t1`` and ``T:t2``

Dependency backbones are enumerated topology by topology and described by
the arc directions on the paths from the lowest common ancestor.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .model import (
    Bracketing,
    DependencyTree,
    Family,
    ModelParams,
    enumerate_topologies,
    count_topologies,
)
from .observations import Observation, ObservationSpec, enumerate_observations

DOT = "•"
CIRC = "◦"
NIL = None
LEAF_DOT = ("O", DOT)
LEAF_CIRC = ("O", CIRC)
MAX_DEP_MIXING_L = 6

Term = Optional[tuple]


class UnsupportedFamily(ValueError):
    pass


# --------------------------------------------------------------------------
# constituency backbones


def has_dot(t: Term) -> bool:
    if t is None:
        return False
    if t == LEAF_DOT:
        return True
    if t == LEAF_CIRC:
        return False
    return any(has_dot(c) for c in t[1:])


def is_circ_chain(t: Term) -> bool:
    """A chain of T edges ending in the projected leaf (and nothing else)."""
    while t is not None and t[0] == "T":
        t = t[1]
    return t == LEAF_CIRC


def combine(t1: Term, t2: Term) -> Term:
    if t1 is not None and t2 is not None:
        if is_circ_chain(t2):
            return ("F", t2, t1)
        return ("F", t1, t2)
    if t1 is not None:
        return ("T", t1)
    if t2 is not None:
        return ("T", t2)
    return None


def base_term(position: int, obs: Observation) -> Term:
    """Leaf term at 1-based ``position``: designated, projected or nil."""
    if position in obs.designated:
        return LEAF_DOT
    if obs.kind == "thin" and position == obs.positions[2]:
        return LEAF_CIRC
    return None


def backbone_dp(obs: Observation, L: int) -> dict:
    """Chart over spans: canonical root term -> number of bracketings.

    Split points are visited from right to left, so the first term reached in
    each row is the one from the left-branching topology.
    """
    if max(obs.positions) > L:
        raise ValueError(f"observation {obs.name} does not fit L={L}")
    chart: dict[tuple[int, int], dict] = {}
    for i in range(L):
        chart[(i, i + 1)] = {base_term(i + 1, obs): 1}
    for width in range(2, L + 1):
        for i in range(0, L - width + 1):
            j = i + width
            cell: dict = {}
            for m in range(j - 1, i, -1):
                for t1, n1 in chart[(i, m)].items():
                    for t2, n2 in chart[(m, j)].items():
                        t = combine(t1, t2)
                        cell[t] = cell.get(t, 0) + n1 * n2
            chart[(i, j)] = cell
    return chart[(0, L)]


def backbone_of_bracketing(b: Bracketing, obs: Observation) -> Term:
    """Backbone of one topology, read directly off the tree."""

    def rec(i, j):
        if j - i == 1:
            return base_term(j, obs)
        m = b.split_of(i, j)
        return combine(rec(i, m), rec(m, j))

    return rec(0, b.L)


def finalize(t: Term) -> tuple[Term, int]:
    """Split the root chain off a term: returns (core, n3)."""
    n3 = 0
    while t is not None and t[0] == "T":
        t = t[1]
        n3 += 1
    return t, n3


def term_string(t: Term, root: bool = True) -> str:
    if root:
        core, n3 = finalize(t)
        return f"{term_string(core, False)} [n3={n3}]"
    if t is None:
        return "nil"
    if t[0] == "O":
        return f"O:{t[1]}"
    if t[0] == "T":
        return f"T:{term_string(t[1], False)}"
    return f"(T:{term_string(t[1], False)},T:{term_string(t[2], False)})"


def parse_term(s: str) -> Term:
    """Inverse of :func:`term_string`."""
    s = s.strip()
    n3 = 0
    if s.endswith("]"):
        s, _, tail = s.rpartition("[")
        n3 = int(tail.rstrip("]").split("=")[1])
        s = s.strip()
    pos = 0

    def expect(tok):
        nonlocal pos
        if not s.startswith(tok, pos):
            raise ValueError(f"bad term {s!r} at {pos}: expected {tok!r}")
        pos += len(tok)

    def rec():
        nonlocal pos
        if s.startswith("nil", pos):
            pos += 3
            return None
        if s.startswith("O:", pos):
            pos += 2
            ch = s[pos]
            pos += 1
            return ("O", ch)
        if s.startswith("T:", pos):
            pos += 2
            return ("T", rec())
        expect("(T:")
        a = rec()
        expect(",T:")
        b = rec()
        expect(")")
        return ("F", a, b)

    t = rec()
    if pos != len(s):
        raise ValueError(f"trailing text in term {s!r}")
    for _ in range(n3):
        t = ("T", t)
    return t


def _eval_node(t: Term, O: np.ndarray, T: np.ndarray, eta) -> np.ndarray:
    """Value with word axes first and the hidden state of the top node last."""
    if t == LEAF_DOT:
        return O
    if t == LEAF_CIRC:
        if eta is None:
            raise ValueError("term contains a projected leaf but no eta was given")
        return O.T @ eta
    if t[0] == "T":
        return _eval_node(t[1], O, T, eta) @ T
    a = _eval_node(t[1], O, T, eta) @ T
    b = _eval_node(t[2], O, T, eta) @ T
    k = T.shape[0]
    out = a.reshape(-1, 1, k) * b.reshape(1, -1, k)
    return out.reshape(a.shape[:-1] + b.shape[:-1] + (k,))


def eval_compound(t: Term, params: ModelParams, eta: Optional[np.ndarray] = None) -> np.ndarray:
    """Compound parameter of a PCFG-IE backbone term (root drawn from pi)."""
    if params.family.kind is not Family.PCFG_IE:
        raise UnsupportedFamily(f"constituency compound parameters need pcfg-ie, got {params.family}")
    if t is None:
        return np.array(1.0)
    return _eval_node(t, params.O, params.T, eta) @ params.pi


# --------------------------------------------------------------------------
# dependency backbones


@dataclass(frozen=True, order=True)
class DepTerm:
    """Arc directions ('L' or 'R') on the paths LCA -> first word, LCA -> second word, root -> LCA.

    A first-moment term only keeps the root path.  ``root`` is ``None`` when
    the root chain is collapsed into D = diag(pi) (stationary models).
    """

    left: tuple[str, ...]
    right: tuple[str, ...]
    root: Optional[tuple[str, ...]]
    first: bool = False

    def __str__(self) -> str:
        def w(p):
            return "".join(p) or "-"

        r = "D" if self.root is None else w(self.root)
        if self.first:
            return f"first|{r}"
        return f"{w(self.left)}|{w(self.right)}|{r}"


def _path_up(tree: DependencyTree, node: int) -> list[int]:
    out = [node]
    while tree.heads[out[-1]] >= 0:
        out.append(tree.heads[out[-1]])
    return out


def _directions(chain: Sequence[int]) -> tuple[str, ...]:
    """Directions of arcs along a top-down chain of positions."""
    return tuple("L" if b < a else "R" for a, b in zip(chain, chain[1:]))


def dep_backbone(tree: DependencyTree, obs: Observation, kind: Family) -> DepTerm:
    if obs.kind not in ("pair", "first"):
        raise UnsupportedFamily("dependency mixing supports first-moment and pair observations")
    pos = [p - 1 for p in obs.positions]
    up_i = _path_up(tree, pos[0])
    if len(pos) == 1:
        lca, up_j = pos[0], [pos[0]]
    else:
        up_j = _path_up(tree, pos[1])
        lca = next(a for a in up_i if a in up_j)
    down_i = list(reversed(up_i[: up_i.index(lca) + 1]))
    down_j = list(reversed(up_j[: up_j.index(lca) + 1]))
    root_chain = list(reversed(up_i[up_i.index(lca):]))
    left, right, root = _directions(down_i), _directions(down_j), _directions(root_chain)
    if kind in (Family.DEP_IE, Family.DEP_IES):
        left, right, root = ("A",) * len(left), ("A",) * len(right), ("A",) * len(root)
    if kind is Family.DEP_IES:
        root = None
    return DepTerm(left, right, root, first=len(pos) == 1)


def _path_matrix(path: Sequence[str], params: ModelParams) -> np.ndarray:
    """P[w, c]: probability of reaching state w from c along the path."""
    Al, Ar = params.left_right()
    P = np.eye(Al.shape[0])
    for step in path:
        P = (Ar if step == "R" else Al) @ P
    return P


def _root_marginal(root: Optional[tuple[str, ...]], params: ModelParams) -> np.ndarray:
    return params.pi if root is None else _path_matrix(root, params) @ params.pi


def eval_dep_term(t: DepTerm, params: ModelParams) -> np.ndarray:
    """Compound parameter of a dependency backbone (vector for first moments)."""
    if not params.family.kind.is_dependency:
        raise UnsupportedFamily(f"dependency compound parameters need a DEP family, got {params.family}")
    rho = _root_marginal(t.root, params)
    if t.first:
        return rho
    return _path_matrix(t.left, params) @ np.diag(rho) @ _path_matrix(t.right, params).T


def dep_term_expression(t: DepTerm) -> str:
    """Matrix product for IE/IES terms, e.g. ``A D A^T``."""
    mid = "D" if t.root is None else f"diag(A^{len(t.root)} pi)"
    if t.first:
        return "pi" if t.root is None else f"A^{len(t.root)} pi"
    return " ".join(["A"] * len(t.left) + [mid] + ["A^T"] * len(t.right))


# --------------------------------------------------------------------------
# mixing matrix


@dataclass
class MixingMatrix:
    """``entries[r][c]`` is an exact rational topology mass.

    Rows are (L, observation pattern); thin observations carry no projection
    tag here because M does not depend on eta.
    """

    family: str
    rows: list[tuple[int, Observation]]
    columns: list
    entries: list[dict[int, Fraction]] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.rows), len(self.columns))

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for r, row in enumerate(self.entries):
            for c, v in row.items():
                out[r, c] = float(v)
        return out

    def exact(self) -> list[list[Fraction]]:
        return [[row.get(c, Fraction(0)) for c in range(len(self.columns))] for row in self.entries]

    def row_sums(self) -> list[Fraction]:
        return [sum(row.values(), Fraction(0)) for row in self.entries]

    def row_index(self, L: int, obs: Observation) -> int:
        return self.rows.index((L, _pattern_obs(obs)))

    def column_labels(self) -> list[str]:
        if self.family == Family.PCFG_IE.value:
            return [term_string(t) for t in self.columns]
        return [str(t) for t in self.columns]

    def row_labels(self) -> list[str]:
        return [f"{L}:{o.name}" for L, o in self.rows]

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.dense()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row"] + self.column_labels())
        dense = self.dense()
        for label, vals in zip(self.row_labels(), dense):
            w.writerow([label] + [f"{v:.12g}" for v in vals])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "shape": list(self.shape),
            "rows": self.row_labels(),
            "columns": self.column_labels(),
            "entries": [
                {str(c): f"{v.numerator}/{v.denominator}" for c, v in sorted(row.items())}
                for row in self.entries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, ensure_ascii=False)


def _pattern_obs(obs: Observation) -> Observation:
    return Observation(obs.kind, obs.positions, "")


class TermRegistry:
    """Append-only map from canonical term to column id."""

    def __init__(self):
        self.terms: list = []
        self._index: dict = {}

    def match(self, t) -> int:
        if t not in self._index:
            self._index[t] = len(self.terms)
            self.terms.append(t)
        return self._index[t]

    def __len__(self):
        return len(self.terms)


def compound_match(t, registry: TermRegistry) -> int:
    return registry.match(t)


@lru_cache(maxsize=None)
def _dep_groups(kind: Family, obs: Observation, L: int) -> tuple:
    trees = enumerate_topologies("dependency", L)
    counts = Counter(dep_backbone(tr, obs, kind) for tr in trees)
    return tuple(counts.items())


def row_terms(family: Family, obs: Observation, L: int) -> list[tuple[object, int]]:
    """(term, topology count) pairs for one row, in a stable order."""
    if family is Family.PCFG_IE:
        return list(backbone_dp(obs, L).items())
    if family in (Family.DEP_I, Family.DEP_IE, Family.DEP_IES):
        if L > MAX_DEP_MIXING_L:
            raise UnsupportedFamily(f"dependency mixing enumerates trees; L={L} > {MAX_DEP_MIXING_L}")
        return list(_dep_groups(family, obs, L))
    raise UnsupportedFamily(f"no mixing matrix for family {family.value}")


def mixing_matrix(family, spec: ObservationSpec, lengths: Sequence[int]) -> MixingMatrix:
    """Stack rows for every observation pattern and length; columns are shared across lengths."""
    family = Family.parse(family if not hasattr(family, "kind") else family.kind)
    registry = TermRegistry()
    rows, entries = [], []
    for L in sorted(set(lengths)):
        patterns = []
        for obs in enumerate_observations(spec, L):
            p = _pattern_obs(obs)
            if p not in patterns:
                patterns.append(p)
        total = count_topologies("dependency" if family.is_dependency else "constituency", L)
        for obs in patterns:
            row: dict[int, Fraction] = {}
            for t, n in row_terms(family, obs, L):
                c = compound_match(t, registry)
                row[c] = row.get(c, Fraction(0)) + Fraction(n, total)
            rows.append((L, obs))
            entries.append(row)
    return MixingMatrix(family.value, rows, registry.terms, entries)


def compound_vector(mm: MixingMatrix, params: ModelParams, eta: Optional[np.ndarray] = None) -> np.ndarray:
    """Stack of all compound parameters, shape (columns, *moment shape)."""
    if not mm.columns:
        raise ValueError("mixing matrix has no columns (no observation fits the lengths)")
    if mm.family == Family.PCFG_IE.value:
        return np.stack([eval_compound(t, params, eta) for t in mm.columns])
    return np.stack([eval_dep_term(t, params) for t in mm.columns])


def apply_mixing(mm: MixingMatrix, psi: np.ndarray) -> np.ndarray:
    """mu rows predicted by ``M @ Psi`` (Psi stacked on the first axis)."""
    flat = psi.reshape(psi.shape[0], -1)
    return (mm.dense() @ flat).reshape((len(mm.rows),) + psi.shape[1:])


def dimension_report(spec: ObservationSpec, L_max: int = 10, n_etas: Sequence[int] = (1, 2),
                     mm: Optional[MixingMatrix] = None) -> dict:
    """Shape of the stacked PCFG-IE system for L = 1..L_max, counted per projection vector."""
    if mm is None:
        mm = mixing_matrix(Family.PCFG_IE, spec, range(1, L_max + 1))
    r, c = mm.shape
    out = {"L_max": L_max, "pattern_rows": r, "terms": c, "rank": mm.rank(), "by_eta_count": {}}
    for n in n_etas:
        out["by_eta_count"][str(n)] = {"rows": r * n, "columns": c * n}
    out["reference"] = [990, 2376]
    return out


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)
