"""Hypergraph encoding of sum_{x,z} p(x,z) and inside/outside recursions.

Each hyperpath from START corresponds to exactly one (sentence, parse,
hidden-state) triple, and its weight is the product of edge weights.  An edge
carries an index into the raw probability vector (or -1 for a constant edge),
a constant scale, and optionally the (position, word) it emits, which is where
per-moment factors ``f_j(e)`` attach.

All recursions are vectorized over moment coordinates: weights and scores
are arrays with one column per coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Optional

import numpy as np

from .model import (
    Family,
    ModelFamily,
    ModelParams,
    count_topologies,
    free_index_map,
    raw_layout,
    raw_size,
    raw_vector,
)
from .observations import Moments, Observation, ObservationSpec, enumerate_observations, factor_rows

START = "START"
END = "END"


@dataclass(frozen=True)
class Hypergraph:
    family: ModelFamily
    L: int
    nodes: tuple[Hashable, ...]
    start: int
    end: int
    src: np.ndarray
    left: np.ndarray
    right: np.ndarray
    param: np.ndarray
    scale: np.ndarray
    pos: np.ndarray
    word: np.ndarray
    level: np.ndarray
    groups: tuple[np.ndarray, ...]

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def level_groups(self) -> list[np.ndarray]:
        """Edge indices grouped by source-node level, ascending, each sorted by source."""
        return self.groups

    def dump(self) -> str:
        """Line-oriented listing: one ``node`` line per node, one ``edge`` line per edge."""
        names = [repr(n) for n in self.nodes]
        lines = [f"hypergraph {self.family} L={self.L} nodes={self.n_nodes} edges={self.n_edges}"]
        for i, name in enumerate(names):
            lines.append(f"node {i} level={self.level[i]} {name}")
        for e in range(self.n_edges):
            emit = f" emit=({self.pos[e]},{self.word[e]})" if self.pos[e] >= 0 else ""
            lines.append(
                f"edge {e} {names[self.src[e]]} -> {names[self.left[e]]} {names[self.right[e]]}"
                f" param={self.param[e]} scale={self.scale[e]:.12g}{emit}"
            )
        return "\n".join(lines)


class _Builder:
    def __init__(self):
        self.index: dict[Hashable, int] = {}
        self.edges: list[tuple[int, int, int, int, float, int, int]] = []
        self.node(START)
        self.node(END)

    def node(self, key) -> int:
        if key not in self.index:
            self.index[key] = len(self.index)
        return self.index[key]

    def edge(self, a, b, c, param=-1, scale=1.0, pos=-1, word=-1):
        self.edges.append((self.node(a), self.node(b), self.node(c), param, scale, pos, word))

    def finish(self, family: ModelFamily, L: int) -> Hypergraph:
        nodes = [None] * len(self.index)
        for key, i in self.index.items():
            nodes[i] = key
        arr = np.array(self.edges, dtype=object)
        src = arr[:, 0].astype(np.int64)
        left = arr[:, 1].astype(np.int64)
        right = arr[:, 2].astype(np.int64)
        start, end = self.index[START], self.index[END]

        # prune edges whose source is unreachable from START
        out_edges: dict[int, list[int]] = {}
        for e, a in enumerate(src):
            out_edges.setdefault(int(a), []).append(e)
        reach = {start}
        stack = [start]
        while stack:
            a = stack.pop()
            for e in out_edges.get(a, ()):
                for t in (int(left[e]), int(right[e])):
                    if t not in reach:
                        reach.add(t)
                        stack.append(t)
        keep = np.array([int(a) in reach for a in src])
        arr = arr[keep]
        used = sorted(reach | {end})
        remap = {old: new for new, old in enumerate(used)}
        src = np.array([remap[int(a)] for a in arr[:, 0]], dtype=np.int64)
        left = np.array([remap[int(a)] for a in arr[:, 1]], dtype=np.int64)
        right = np.array([remap[int(a)] for a in arr[:, 2]], dtype=np.int64)
        nodes = tuple(nodes[i] for i in used)
        level = _levels(len(nodes), remap[end], src, left, right)
        return Hypergraph(
            family=family,
            L=L,
            nodes=nodes,
            start=remap[start],
            end=remap[end],
            src=src,
            left=left,
            right=right,
            param=arr[:, 3].astype(np.int64),
            scale=arr[:, 4].astype(float),
            pos=arr[:, 5].astype(np.int64),
            word=arr[:, 6].astype(np.int64),
            level=level,
            groups=_level_groups(src, level),
        )


def _levels(n_nodes, end, src, left, right) -> np.ndarray:
    """Longest distance to END; raises if the graph has a cycle."""
    children: list[list[int]] = [[] for _ in range(n_nodes)]
    for a, b, c in zip(src, left, right):
        children[a].extend((int(b), int(c)))
    level = np.full(n_nodes, -1, dtype=np.int64)
    state = np.zeros(n_nodes, dtype=np.int8)  # 0 new, 1 open, 2 done
    for root in range(n_nodes):
        if state[root]:
            continue
        stack = [(root, 0)]
        while stack:
            v, i = stack.pop()
            if i == 0:
                if state[v] == 2:
                    continue
                state[v] = 1
            kids = children[v]
            if i < len(kids):
                stack.append((v, i + 1))
                c = kids[i]
                if state[c] == 1:
                    raise ValueError("hypergraph has a cycle")
                if state[c] == 0:
                    stack.append((c, 0))
                continue
            level[v] = 0 if not kids else 1 + max(level[c] for c in kids)
            state[v] = 2
    if level[end] != 0:
        raise ValueError("END must have no outgoing edges")
    return level


def _level_groups(src: np.ndarray, level: np.ndarray) -> tuple[np.ndarray, ...]:
    src_level = level[src]
    order = np.lexsort((src, src_level))
    cuts = np.flatnonzero(np.diff(src_level[order])) + 1
    return tuple(np.split(order, cuts))


# ---------------------------------------------------------------------------
# Construction per family

@lru_cache(maxsize=256)
def build_hypergraph(family: ModelFamily, L: int) -> Hypergraph:
    """Hypergraph whose hyperpaths enumerate (x, z, states) at sentence length L."""
    if L < 1:
        raise ValueError("L must be >= 1")
    kind = family.kind
    if kind.is_constituency:
        return _build_constituency(family, L)
    if kind.is_dependency:
        return _build_dependency(family, L)
    if kind.is_chain:
        return _build_chain(family, L)
    raise ValueError(f"unsupported family {kind}")


def _entry(layout, name, r, c=None) -> int:
    offset, shape = layout[name]
    if len(shape) == 1:
        return offset + r
    return offset + r * shape[1] + c


def _build_constituency(family: ModelFamily, L: int) -> Hypergraph:
    k, d = family.k, family.d
    lay = raw_layout(family)
    g = _Builder()
    prior = 1.0 / count_topologies("constituency", L)
    for s in range(k):
        g.edge(START, ("N", 0, L, s), END, _entry(lay, "pi", s), prior)
    for width in range(2, L + 1):
        for i in range(0, L - width + 1):
            j = i + width
            for m in range(i + 1, j):
                for s1 in range(k):
                    if family.kind is Family.PCFG:
                        for s2 in range(k):
                            for s3 in range(k):
                                g.edge(("N", i, j, s1), ("N", i, m, s2), ("N", m, j, s3),
                                       _entry(lay, "B", s2 * k + s3, s1))
                    else:
                        first = "T1" if family.kind is Family.PCFG_I else "T"
                        for s2 in range(k):
                            g.edge(("N", i, j, s1), ("N", i, m, s2), ("R", m, j, s1),
                                   _entry(lay, first, s2, s1))
    second = "T2" if family.kind is Family.PCFG_I else "T"
    if family.kind is not Family.PCFG:
        for i in range(1, L):
            for j in range(i + 1, L + 1):
                for s1 in range(k):
                    for s3 in range(k):
                        g.edge(("R", i, j, s1), ("N", i, j, s3), END, _entry(lay, second, s3, s1))
    for i in range(L):
        for s in range(k):
            for w in range(d):
                g.edge(("N", i, i + 1, s), END, END, _entry(lay, "O", w, s), pos=i, word=w)
    return g.finish(family, L)


def _build_dependency(family: ModelFamily, L: int) -> Hypergraph:
    """Eisner's split-head chart with word labels on heads and dependents."""
    d = family.d
    lay = raw_layout(family)
    left_name, right_name = ("A_left", "A_right") if family.kind is Family.DEP_I else ("A", "A")
    g = _Builder()
    prior = 1.0 / count_topologies("dependency", L)
    for r in range(L):
        for w in range(d):
            g.edge(START, ("C<", 0, r, w), ("C>", r, L - 1, w), _entry(lay, "pi", w), prior)
    for i in range(L):
        for w in range(d):
            g.edge(("C>", i, i, w), END, END, pos=i, word=w)
            g.edge(("C<", i, i, w), END, END)
    for width in range(1, L):
        for i in range(0, L - width):
            j = i + width
            for wh in range(d):
                for wd in range(d):
                    for m in range(i, j):
                        # arc i -> j (head i word wh, dependent j word wd)
                        g.edge(("I>", i, j, wh, wd), ("C>", i, m, wh), ("C<", m + 1, j, wd),
                               _entry(lay, right_name, wd, wh))
                        # arc j -> i (head j word wh, dependent i word wd)
                        g.edge(("I<", i, j, wh, wd), ("C>", i, m, wd), ("C<", m + 1, j, wh),
                               _entry(lay, left_name, wd, wh))
                    for m in range(i + 1, j + 1):
                        g.edge(("C>", i, j, wh), ("I>", i, m, wh, wd), ("C>", m, j, wd))
                    for m in range(i, j):
                        g.edge(("C<", i, j, wh), ("C<", i, m, wd), ("I<", m, j, wh, wd))
    return g.finish(family, L)


def _build_chain(family: ModelFamily, L: int) -> Hypergraph:
    k, d = family.k, family.d
    lay = raw_layout(family)
    g = _Builder()
    for s in range(k):
        g.edge(START, ("S", 0, s), END, _entry(lay, "pi", s))
    for i in range(L):
        for s in range(k):
            for w in range(d):
                g.edge(("E", i, s), END, END, _entry(lay, "O", w, s), pos=i, word=w)
            if i + 1 == L:
                g.edge(("S", i, s), ("E", i, s), END)
            elif family.kind is Family.LCM:
                g.edge(("S", i, s), ("E", i, s), ("S", i + 1, s))
            else:
                for t in range(k):
                    g.edge(("S", i, s), ("E", i, s), ("S", i + 1, t), _entry(lay, "T", t, s))
    return g.finish(family, L)


# ---------------------------------------------------------------------------
# Weightings and recursions

@dataclass
class EdgeWeighting:
    """Edge weights ``w_j(e) = scale_e * theta_{e.i} * f_j(e)``, one column per moment j."""

    base: np.ndarray      # (E,) scale * theta
    factors: np.ndarray   # (E, m) f_j(e)

    @property
    def weights(self) -> np.ndarray:
        return self.base[:, None] * self.factors

    @property
    def m(self) -> int:
        return self.factors.shape[1]


def edge_weighting(h: Hypergraph, raw: np.ndarray, G: Optional[np.ndarray] = None) -> EdgeWeighting:
    """Weighting for parameters ``raw`` and per-position word factors ``G`` of shape (m, L, d).

    ``G=None`` is the single all-ones weighting (total probability).
    """
    theta = np.append(np.asarray(raw, dtype=float), 1.0)
    base = h.scale * theta[h.param]
    if G is None:
        G = np.ones((1, h.L, h.family.d))
    factors = np.ones((h.n_edges, G.shape[0]))
    emit = h.pos >= 0
    factors[emit] = G[:, h.pos[emit], h.word[emit]].T
    return EdgeWeighting(base, factors)


def inside(h: Hypergraph, weighting: EdgeWeighting) -> np.ndarray:
    """alpha(a) = sum over edges out of a of w(e) alpha(e.b) alpha(e.c); alpha(END) = 1."""
    W = weighting.weights
    alpha = np.zeros((h.n_nodes, weighting.m))
    alpha[h.end] = 1.0
    for group in h.level_groups():
        contrib = W[group] * alpha[h.left[group]] * alpha[h.right[group]]
        srcs = h.src[group]
        starts = np.flatnonzero(np.r_[True, srcs[1:] != srcs[:-1]])
        alpha[srcs[starts]] = np.add.reduceat(contrib, starts, axis=0)
    return alpha


def outside(h: Hypergraph, weighting: EdgeWeighting, alpha: np.ndarray) -> np.ndarray:
    """beta(START) = 1; beta(b) collects w(e) beta(e.a) alpha(sibling) from every edge into b."""
    W = weighting.weights
    beta = np.zeros_like(alpha)
    beta[h.start] = 1.0
    for group in reversed(h.level_groups()):
        top = W[group] * beta[h.src[group]]
        np.add.at(beta, h.left[group], top * alpha[h.right[group]])
        np.add.at(beta, h.right[group], top * alpha[h.left[group]])
    return beta


def count_hyperpaths(h: Hypergraph) -> int:
    w = EdgeWeighting(np.ones(h.n_edges), np.ones((h.n_edges, 1)))
    return int(round(inside(h, w)[h.start, 0]))


def raw_partials(h: Hypergraph, weighting: EdgeWeighting, alpha=None, beta=None) -> np.ndarray:
    """d alpha_j(START) / d theta_raw for every moment j: shape (m, n_raw).

    Edge-local derivative is ``scale * f_j(e) * beta(e.a) alpha(e.b) alpha(e.c)``.
    """
    if alpha is None:
        alpha = inside(h, weighting)
    if beta is None:
        beta = outside(h, weighting, alpha)
    contrib = (h.scale[:, None] * weighting.factors) * beta[h.src] * alpha[h.left] * alpha[h.right]
    has_param = h.param >= 0
    out = np.zeros((raw_size(h.family), weighting.m))
    np.add.at(out, h.param[has_param], contrib[has_param])
    return out.T


# ---------------------------------------------------------------------------
# Moments and Jacobian

def _rows_for(spec: ObservationSpec, L: int, d: int) -> tuple[list[Observation], list[int], np.ndarray]:
    obs = enumerate_observations(spec, L)
    blocks, sizes = [], []
    for o in obs:
        eta = spec.eta(o.eta) if o.kind == "thin" else None
        G = factor_rows(o, L, d, eta)
        blocks.append(G)
        sizes.append(G.shape[0])
    G = np.concatenate(blocks) if blocks else np.zeros((0, L, d))
    return obs, sizes, G


def exact_moments(params: ModelParams, spec: ObservationSpec, lengths) -> Moments:
    """E_theta[phi_o(x)] for every observation of ``spec`` at each length, via inside passes."""
    if isinstance(lengths, int):
        lengths = [lengths]
    fam = params.family
    raw = raw_vector(params)
    out = Moments(etas=dict(spec.etas))
    for L in lengths:
        obs, sizes, G = _rows_for(spec, L, fam.d)
        if not obs:
            continue
        h = build_hypergraph(fam, L)
        alpha = inside(h, edge_weighting(h, raw, G))
        values = alpha[h.start]
        for o, chunk in zip(obs, np.split(values, np.cumsum(sizes)[:-1])):
            out[(L, o)] = chunk.reshape(o.shape(fam.d))
    return out


def moment_vector(params: ModelParams, spec: ObservationSpec, lengths) -> np.ndarray:
    """Stacked moment coordinates in the same row order as :func:`jacobian`."""
    mom = exact_moments(params, spec, lengths)
    return np.concatenate([mom.values[key].ravel() for key in _row_keys(spec, lengths)]) \
        if len(mom) else np.zeros(0)


def _row_keys(spec, lengths):
    if isinstance(lengths, int):
        lengths = [lengths]
    return [(L, o) for L in lengths for o in enumerate_observations(spec, L)]


def free_coordinate_map(params: ModelParams) -> np.ndarray:
    """d theta_raw / d theta_free, shape (n_raw, n_free).

    Each free coordinate moves its own entry up and the column's last entry
    down.  For DEP-IES the stationary pi responds through implicit
    differentiation of (A - I) pi = 0, 1^T pi = 1.
    """
    fam = params.family
    pairs = free_index_map(fam)
    D = np.zeros((raw_size(fam), len(pairs)))
    for f, (own, last) in enumerate(pairs):
        D[own, f] += 1.0
        D[last, f] -= 1.0
    if fam.kind is Family.DEP_IES:
        A, pi = params.A, params.pi
        d = fam.d
        lay = raw_layout(fam)
        a_off = lay["A"][0]
        pi_off = lay["pi"][0]
        system = np.vstack([A - np.eye(d), np.ones((1, d))])
        rhs = np.zeros((d + 1, len(pairs)))
        for f in range(len(pairs)):
            dA = D[a_off : a_off + d * d, f].reshape(d, d)
            rhs[:d, f] = -dA @ pi
        dpi = np.linalg.lstsq(system, rhs, rcond=None)[0]
        D[pi_off : pi_off + d] = dpi
    return D


def jacobian(params: ModelParams, spec: ObservationSpec, lengths) -> np.ndarray:
    """Jacobian of the stacked moment vector w.r.t. the free coordinates, shape (m, n)."""
    if isinstance(lengths, int):
        lengths = [lengths]
    fam = params.family
    raw = raw_vector(params)
    blocks = []
    for L in lengths:
        obs, sizes, G = _rows_for(spec, L, fam.d)
        if not obs:
            continue
        h = build_hypergraph(fam, L)
        blocks.append(raw_partials(h, edge_weighting(h, raw, G)))
    if not blocks:
        return np.zeros((0, free_coordinate_map(params).shape[1]))
    return np.vstack(blocks) @ free_coordinate_map(params)
