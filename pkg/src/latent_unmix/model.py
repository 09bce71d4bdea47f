"""Parsing-model families, their parameters, topologies and exact sampling.

Words and hidden states are 0-based integers internally.  Every parameter
matrix is column-stochastic: column ``c`` is the conditional distribution
given parent state/word ``c``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import comb, prod
from typing import Iterator, Optional, Sequence, Union

import numpy as np

MAX_CONSTITUENCY_L = 12
MAX_DEPENDENCY_L = 8


class EnumerationTooLarge(ValueError):
    """Raised when exhaustive enumeration is requested beyond the size guard."""


class ParamsError(ValueError):
    """A parameter set violates one of the model invariants."""


class Family(str, Enum):
    PCFG = "pcfg"
    PCFG_I = "pcfg-i"
    PCFG_IE = "pcfg-ie"
    DEP_I = "dep-i"
    DEP_IE = "dep-ie"
    DEP_IES = "dep-ies"
    HMM = "hmm"
    LCM = "lcm"

    @property
    def is_constituency(self) -> bool:
        return self in (Family.PCFG, Family.PCFG_I, Family.PCFG_IE)

    @property
    def is_dependency(self) -> bool:
        return self in (Family.DEP_I, Family.DEP_IE, Family.DEP_IES)

    @property
    def is_chain(self) -> bool:
        return self in (Family.HMM, Family.LCM)

    @property
    def has_hidden_states(self) -> bool:
        return not self.is_dependency

    @classmethod
    def parse(cls, value: Union[str, "Family"]) -> "Family":
        if isinstance(value, Family):
            return value
        key = value.strip().lower().replace("_", "-")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown model family {value!r}")


# Stored probability tables per family, in raw-vector order.
BLOCKS: dict[Family, tuple[str, ...]] = {
    Family.PCFG: ("pi", "B", "O"),
    Family.PCFG_I: ("pi", "T1", "T2", "O"),
    Family.PCFG_IE: ("pi", "T", "O"),
    Family.DEP_I: ("pi", "A_left", "A_right"),
    Family.DEP_IE: ("pi", "A"),
    Family.DEP_IES: ("pi", "A"),
    Family.HMM: ("pi", "T", "O"),
    Family.LCM: ("pi", "O"),
}


@dataclass(frozen=True)
class ModelFamily:
    kind: Family
    d: int
    k: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Family.parse(self.kind))
        if self.d < 1:
            raise ValueError("vocabulary size d must be >= 1")
        if self.kind.is_dependency:
            if self.k is not None:
                raise ValueError("dependency families have no hidden-state dimension")
        elif self.k is None or self.k < 1:
            raise ValueError(f"{self.kind.value} needs k >= 1")

    @property
    def blocks(self) -> tuple[str, ...]:
        return BLOCKS[self.kind]

    @property
    def free_blocks(self) -> tuple[str, ...]:
        if self.kind is Family.DEP_IES:
            return ("A",)
        return self.blocks

    def block_shape(self, name: str) -> tuple[int, ...]:
        k, d = self.k, self.d
        if name == "pi":
            return (d,) if self.kind.is_dependency else (k,)
        if name == "B":
            return (k * k, k)
        if name in ("T", "T1", "T2"):
            return (k, k)
        if name == "O":
            return (d, k)
        if name in ("A", "A_left", "A_right"):
            return (d, d)
        raise KeyError(name)

    @property
    def n_states(self) -> int:
        """Size of the per-node state space (hidden states, or words for DEP)."""
        return self.d if self.kind.is_dependency else self.k

    def __str__(self) -> str:
        if self.kind.is_dependency:
            return f"{self.kind.value}(d={self.d})"
        return f"{self.kind.value}(k={self.k}, d={self.d})"


@dataclass
class ModelParams:
    family: ModelFamily
    pi: np.ndarray
    B: Optional[np.ndarray] = None
    T: Optional[np.ndarray] = None
    T1: Optional[np.ndarray] = None
    T2: Optional[np.ndarray] = None
    O: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    A_left: Optional[np.ndarray] = None
    A_right: Optional[np.ndarray] = None

    def block(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        if value is None:
            raise ParamsError(f"{self.family.kind.value} parameters lack block {name!r}")
        return value

    def binary_rule(self) -> np.ndarray:
        """The k^2 x k production matrix B; row ``a*k + b`` is the child pair (a, b)."""
        kind = self.family.kind
        if kind is Family.PCFG:
            return self.B
        if kind is Family.PCFG_I:
            return colwise_tensor(self.T1, self.T2)
        if kind is Family.PCFG_IE:
            return colwise_tensor(self.T, self.T)
        raise ParamsError(f"{kind.value} has no binary production")

    def left_right(self) -> tuple[np.ndarray, np.ndarray]:
        if self.family.kind is Family.DEP_I:
            return self.A_left, self.A_right
        if self.family.kind.is_dependency:
            return self.A, self.A
        raise ParamsError(f"{self.family.kind.value} has no argument distributions")

    def transition(self) -> np.ndarray:
        if self.family.kind is Family.LCM:
            return np.eye(self.family.k)
        return self.block("T")

    def copy(self) -> "ModelParams":
        kwargs = {name: self.block(name).copy() for name in self.family.blocks}
        return ModelParams(self.family, **kwargs)


def colwise_tensor(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Columnwise tensor product: out[i1*m + i2, j] = A[i1, j] * B[i2, j]."""
    m, n = A.shape
    return (A[:, None, :] * B[None, :, :]).reshape(m * m, n)


def stationary_distribution(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Unique pi with A pi = pi for a column-stochastic A.

    Raises ``ValueError`` when the eigenvalue 1 is not simple (for instance a
    reducible A such as the identity); perturb A before retrying.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    u, s, vt = np.linalg.svd(A - np.eye(d))
    nullity = int(np.sum(s <= tol * max(1.0, s[0] if s.size else 1.0)))
    if nullity != 1:
        raise ValueError(
            f"stationary distribution is not unique (nullity {nullity}); perturb A"
        )
    system = np.vstack([A - np.eye(d), np.ones((1, d))])
    rhs = np.zeros(d + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(system, rhs, rcond=None)[0]
    if np.any(pi < -1e-10):
        raise ValueError("stationary vector has negative entries; A is not stochastic")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def random_params(family: ModelFamily, rng=None) -> ModelParams:
    """Draw every stochastic column from the flat Dirichlet."""
    rng = np.random.default_rng(rng)
    blocks = {}
    for name in family.blocks:
        shape = family.block_shape(name)
        if family.kind is Family.DEP_IES and name == "pi":
            continue
        if len(shape) == 1:
            blocks[name] = rng.dirichlet(np.ones(shape[0]))
        else:
            blocks[name] = rng.dirichlet(np.ones(shape[0]), size=shape[1]).T
    if family.kind is Family.DEP_IES:
        blocks["pi"] = stationary_distribution(blocks["A"])
    return ModelParams(family, **blocks)


def validate_params(params: ModelParams, tol: float = 1e-12) -> None:
    """Raise ``ParamsError`` naming the first invariant that fails."""
    fam = params.family
    for name in fam.blocks:
        value = params.block(name)
        if value.shape != fam.block_shape(name):
            raise ParamsError(f"{name}: shape {value.shape}, expected {fam.block_shape(name)}")
        if not np.all(np.isfinite(value)):
            raise ParamsError(f"{name}: non-finite entries")
        if value.min() < -tol or value.max() > 1 + tol:
            raise ParamsError(f"{name}: entries outside [0, 1]")
        sums = value.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=tol, rtol=0):
            raise ParamsError(f"{name}: columns do not sum to 1 (max dev {np.abs(sums - 1).max():.3g})")
    if fam.kind is Family.DEP_IES:
        dev = np.abs(params.A @ params.pi - params.pi).max()
        if dev > 1e-10:
            raise ParamsError(f"pi is not stationary under A (|A pi - pi| = {dev:.3g})")


# ---------------------------------------------------------------------------
# Parameter vectorization

def free_parameter_count(family: ModelFamily) -> int:
    n = 0
    for name in family.free_blocks:
        shape = family.block_shape(name)
        rows = shape[0]
        cols = shape[1] if len(shape) == 2 else 1
        n += (rows - 1) * cols
    return n


def raw_layout(family: ModelFamily) -> dict[str, tuple[int, tuple[int, ...]]]:
    """Offset and shape of each stored block inside the raw probability vector."""
    out, offset = {}, 0
    for name in family.blocks:
        shape = family.block_shape(name)
        out[name] = (offset, shape)
        offset += prod(shape)
    return out


def raw_size(family: ModelFamily) -> int:
    return sum(prod(family.block_shape(name)) for name in family.blocks)


def raw_vector(params: ModelParams) -> np.ndarray:
    return np.concatenate([params.block(name).ravel() for name in params.family.blocks])


def free_index_map(family: ModelFamily) -> list[tuple[int, int]]:
    """For each free coordinate: (raw index of that entry, raw index of its column's last entry)."""
    layout = raw_layout(family)
    pairs = []
    for name in family.free_blocks:
        offset, shape = layout[name]
        rows = shape[0]
        cols = shape[1] if len(shape) == 2 else 1
        for c in range(cols):
            last = offset + (rows - 1) * cols + c
            for r in range(rows - 1):
                pairs.append((offset + r * cols + c, last))
    return pairs


def vectorize_params(params: ModelParams) -> np.ndarray:
    """Free coordinates: column by column, each column's last entry dropped."""
    raw = raw_vector(params)
    return np.array([raw[i] for i, _ in free_index_map(params.family)])


def unvectorize_params(family: ModelFamily, theta: Sequence[float], tol: float = 1e-12) -> ModelParams:
    theta = np.asarray(theta, dtype=float)
    n = free_parameter_count(family)
    if theta.shape != (n,):
        raise ParamsError(f"expected {n} free coordinates, got shape {theta.shape}")
    blocks = {}
    pos = 0
    for name in family.free_blocks:
        shape = family.block_shape(name)
        rows = shape[0]
        cols = shape[1] if len(shape) == 2 else 1
        mat = np.empty((rows, cols))
        for c in range(cols):
            mat[: rows - 1, c] = theta[pos : pos + rows - 1]
            mat[rows - 1, c] = 1.0 - theta[pos : pos + rows - 1].sum()
            pos += rows - 1
        if mat.min() < -tol or mat.max() > 1 + tol:
            raise ParamsError(f"{name}: coordinates leave the simplex")
        blocks[name] = mat if len(shape) == 2 else mat[:, 0]
    if family.kind is Family.DEP_IES:
        blocks["pi"] = stationary_distribution(blocks["A"])
    return ModelParams(family, **blocks)


# ---------------------------------------------------------------------------
# Topologies

@dataclass(frozen=True)
class Bracketing:
    """Binary bracketing of [0, L]; ``splits`` holds one (i, m, j) per internal span."""

    L: int
    splits: tuple[tuple[int, int, int], ...]

    @property
    def spans(self) -> tuple[tuple[int, int], ...]:
        inner = [(i, j) for i, _, j in self.splits]
        leaves = [(i, i + 1) for i in range(self.L)]
        return tuple(sorted(set(inner) | set(leaves), key=lambda s: (s[0], -s[1])))

    def split_of(self, i: int, j: int) -> int:
        for a, m, b in self.splits:
            if (a, b) == (i, j):
                return m
        raise KeyError((i, j))


@dataclass(frozen=True)
class DependencyTree:
    """``heads[j]`` is the parent position of word j, or -1 for the root."""

    heads: tuple[int, ...]

    @property
    def L(self) -> int:
        return len(self.heads)

    @property
    def root(self) -> int:
        return self.heads.index(-1)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple((h, j) for j, h in enumerate(self.heads) if h >= 0)

    def children(self, h: int) -> list[int]:
        return [j for j, p in enumerate(self.heads) if p == h]


@dataclass(frozen=True)
class Chain:
    L: int


Topology = Union[Bracketing, DependencyTree, Chain]


def _topology_kind(kind) -> str:
    if isinstance(kind, str) and kind in ("constituency", "dependency", "chain"):
        return kind
    fam = Family.parse(kind) if not isinstance(kind, ModelFamily) else kind.kind
    if fam.is_constituency:
        return "constituency"
    if fam.is_dependency:
        return "dependency"
    return "chain"


@lru_cache(maxsize=None)
def _bracketings(i: int, j: int) -> tuple[tuple[tuple[int, int, int], ...], ...]:
    if j - i == 1:
        return ((),)
    out = []
    for m in range(i + 1, j):
        for left in _bracketings(i, m):
            for right in _bracketings(m, j):
                out.append(((i, m, j),) + left + right)
    return tuple(out)


@lru_cache(maxsize=None)
def _projective(i: int, j: int) -> tuple[tuple[int, dict], ...]:
    """All projective trees on positions i..j inclusive, as (root, {child: head})."""
    if i > j:
        return ()
    out = []
    for r in range(i, j + 1):
        for left in _dependents(i, r - 1, r):
            for right in _dependents(r + 1, j, r):
                heads = dict(left)
                heads.update(right)
                out.append((r, heads))
    return tuple(out)


@lru_cache(maxsize=None)
def _dependents(i: int, j: int, head: int) -> tuple[dict, ...]:
    """Ways to cover i..j by consecutive projective subtrees all attached to ``head``."""
    if i > j:
        return ({},)
    out = []
    for end in range(i, j + 1):
        for root, heads in _projective(i, end):
            for rest in _dependents(end + 1, j, head):
                combined = dict(heads)
                combined[root] = head
                combined.update(rest)
                out.append(combined)
    return tuple(out)


def enumerate_topologies(kind, L: int) -> list[Topology]:
    """Every topology of a sentence of length L for the given family (or kind name)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    tk = _topology_kind(kind)
    if tk == "constituency":
        if L > MAX_CONSTITUENCY_L:
            raise EnumerationTooLarge(f"enumeration too large: constituency L={L} > {MAX_CONSTITUENCY_L}")
        return [Bracketing(L, tuple(sorted(s))) for s in _bracketings(0, L)]
    if tk == "dependency":
        if L > MAX_DEPENDENCY_L:
            raise EnumerationTooLarge(f"enumeration too large: dependency L={L} > {MAX_DEPENDENCY_L}")
        trees = []
        for root, heads in _projective(0, L - 1):
            trees.append(DependencyTree(tuple(heads.get(j, -1) for j in range(L))))
        return sorted(trees, key=lambda t: t.heads)
    return [Chain(L)]


def is_projective(heads: Sequence[int]) -> bool:
    """Standard projectivity: every word strictly inside an arc is dominated by its head."""
    L = len(heads)
    if sum(1 for h in heads if h == -1) != 1:
        return False

    def ancestors(j):
        seen = []
        while heads[j] != -1:
            j = heads[j]
            if j in seen:
                return None
            seen.append(j)
        return seen

    anc = [ancestors(j) for j in range(L)]
    if any(a is None for a in anc):
        return False
    for dep, head in enumerate(heads):
        if head < 0:
            continue
        lo, hi = min(dep, head), max(dep, head)
        for w in range(lo + 1, hi):
            if head not in anc[w]:
                return False
    return True


@lru_cache(maxsize=None)
def count_topologies(kind, L: int) -> int:
    """|Trees_L|; constituency and dependency counts come from counting recursions."""
    tk = _topology_kind(kind)
    if tk == "constituency":
        return _count_bracketings(L)
    if tk == "dependency":
        return _count_projective(0, L - 1)
    return 1


@lru_cache(maxsize=None)
def _count_bracketings(w: int) -> int:
    if w == 1:
        return 1
    return sum(_count_bracketings(m) * _count_bracketings(w - m) for m in range(1, w))


@lru_cache(maxsize=None)
def _count_projective(i: int, j: int) -> int:
    return sum(_count_dependents(i, r - 1) * _count_dependents(r + 1, j) for r in range(i, j + 1))


@lru_cache(maxsize=None)
def _count_dependents(i: int, j: int) -> int:
    if i > j:
        return 1
    return sum(_count_projective(i, end) * _count_dependents(end + 1, j) for end in range(i, j + 1))


# ---------------------------------------------------------------------------
# Probabilities

def _check_sentence(params: ModelParams, x: Sequence[int]) -> tuple[int, ...]:
    x = tuple(int(w) for w in x)
    if not x:
        raise ValueError("empty sentence")
    if min(x) < 0 or max(x) >= params.family.d:
        raise ValueError(f"word index outside [0, {params.family.d})")
    return x


def _structure_weight(params: ModelParams, topology: Topology, states) -> float:
    """Prior x root x transition factors of a hidden-state configuration (no emissions)."""
    fam = params.family
    L = topology.L
    if fam.kind.is_constituency:
        B, k = params.binary_rule(), fam.k
        p = params.pi[states[(0, L)]]
        for i, m, j in topology.splits:
            p *= B[states[(i, m)] * k + states[(m, j)], states[(i, j)]]
        return p / count_topologies("constituency", L)
    if fam.kind is Family.LCM:
        return params.pi[states]
    T = params.T
    p = params.pi[states[0]]
    for i in range(1, L):
        p *= T[states[i], states[i - 1]]
    return p


def _leaf_states(params: ModelParams, topology: Topology, states) -> tuple[int, ...]:
    fam = params.family
    if fam.kind.is_constituency:
        return tuple(states[(i, i + 1)] for i in range(topology.L))
    if fam.kind is Family.LCM:
        return (states,) * topology.L
    return tuple(states)


def joint_prob(params: ModelParams, x: Sequence[int], topology: Topology, states=None) -> float:
    """P(x, z) with the uniform topology prior included.

    ``states`` maps spans to hidden states (constituency), lists one state per
    position (HMM), or is a single state (LCM).  Dependency trees take none.
    """
    x = _check_sentence(params, x)
    L = len(x)
    fam = params.family
    if topology.L != L:
        raise ValueError("topology length does not match sentence length")
    if fam.kind.is_dependency:
        if not isinstance(topology, DependencyTree):
            raise ValueError("dependency family needs a DependencyTree")
        left, right = params.left_right()
        p = params.pi[x[topology.root]]
        for h, j in topology.edges:
            A = left if j < h else right
            p *= A[x[j], x[h]]
        return p / count_topologies("dependency", L)
    if fam.kind.is_constituency and not isinstance(topology, Bracketing):
        raise ValueError("constituency family needs a Bracketing")
    if fam.kind is Family.LCM and not np.isscalar(states):
        if any(t != states[0] for t in states):
            return 0.0
        states = states[0]
    p = _structure_weight(params, topology, states)
    for w, s in zip(x, _leaf_states(params, topology, states)):
        p *= params.O[w, s]
    return p


def state_assignments(params: ModelParams, topology: Topology) -> Iterator:
    """All hidden-state configurations compatible with a topology."""
    fam = params.family
    k = fam.k
    if fam.kind.is_constituency:
        spans = topology.spans
        for combo in itertools.product(range(k), repeat=len(spans)):
            yield dict(zip(spans, combo))
    elif fam.kind is Family.HMM:
        yield from itertools.product(range(k), repeat=topology.L)
    elif fam.kind is Family.LCM:
        yield from range(k)
    else:
        yield None


def marginal_prob(params: ModelParams, x: Sequence[int]) -> float:
    """P(x) by summing the joint over every topology and state assignment."""
    x = _check_sentence(params, x)
    total = 0.0
    for topo in enumerate_topologies(params.family.kind, len(x)):
        for states in state_assignments(params, topo):
            total += joint_prob(params, x, topo, states)
    return total


def sentence_distribution(params: ModelParams, L: int) -> np.ndarray:
    """Full distribution over sentences of length L as a (d,)*L array, by enumeration."""
    fam = params.family
    d = fam.d
    out = np.zeros((d,) * L)
    if fam.kind.is_dependency:
        for x in itertools.product(range(d), repeat=L):
            out[x] = marginal_prob(params, x)
        return out
    O = params.O
    for topo in enumerate_topologies(fam.kind, L):
        # aggregate over internal states before expanding the word tensor
        leaf_weight: dict[tuple[int, ...], float] = {}
        for states in state_assignments(params, topo):
            leaves = _leaf_states(params, topo, states)
            leaf_weight[leaves] = leaf_weight.get(leaves, 0.0) + _structure_weight(params, topo, states)
        for leaves, w in leaf_weight.items():
            tensor = np.array(w)
            for s in leaves:
                tensor = np.multiply.outer(tensor, O[:, s])
            out += tensor
    return out


# ---------------------------------------------------------------------------
# Sampling

def _draw(columns: np.ndarray, parents: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per entry of ``parents`` from the matching column."""
    cdf = np.cumsum(columns[:, parents], axis=0)
    u = rng.random(parents.shape[0])
    out = (u[None, :] > cdf).sum(axis=0)
    return np.minimum(out, columns.shape[0] - 1)


def sample_sentences(params: ModelParams, L: int, n: int, seed=None) -> np.ndarray:
    """Exact i.i.d. draws from P(x) at length L, shape (n, L)."""
    rng = np.random.default_rng(seed)
    fam = params.family
    x = np.zeros((n, L), dtype=np.int64)
    if n == 0:
        return x
    if fam.kind.is_chain:
        T = params.transition()
        s = _draw(params.pi[:, None], np.zeros(n, dtype=np.int64), rng)
        for i in range(L):
            x[:, i] = _draw(params.O, s, rng)
            if i + 1 < L:
                s = _draw(T, s, rng)
        return x
    topologies = enumerate_topologies(fam.kind, L)
    choice = rng.integers(len(topologies), size=n)
    root_col = params.pi[:, None]
    for t_index in np.unique(choice):
        rows = np.flatnonzero(choice == t_index)
        topo = topologies[t_index]
        zeros = np.zeros(rows.size, dtype=np.int64)
        if fam.kind.is_dependency:
            left, right = params.left_right()
            words = {topo.root: _draw(root_col, zeros, rng)}
            frontier = [topo.root]
            while frontier:
                h = frontier.pop(0)
                for j in topo.children(h):
                    words[j] = _draw(left if j < h else right, words[h], rng)
                    frontier.append(j)
            for j in range(L):
                x[rows, j] = words[j]
            continue
        state = {(0, L): _draw(root_col, zeros, rng)}
        for i, m, j in sorted(topo.splits, key=lambda s: s[0] - s[2]):
            parent = state[(i, j)]
            if fam.kind is Family.PCFG:
                pair = _draw(params.B, parent, rng)
                state[(i, m)], state[(m, j)] = np.divmod(pair, fam.k)
            else:
                T1, T2 = (params.T1, params.T2) if fam.kind is Family.PCFG_I else (params.T, params.T)
                state[(i, m)] = _draw(T1, parent, rng)
                state[(m, j)] = _draw(T2, parent, rng)
        for i in range(L):
            x[rows, i] = _draw(params.O, state[(i, i + 1)], rng)
    return x


def sample_sentence(params: ModelParams, L: int, seed=None) -> tuple[int, ...]:
    return tuple(int(w) for w in sample_sentences(params, L, 1, seed)[0])


# ---------------------------------------------------------------------------
# JSON parameter files (matrices row-major)

def params_to_dict(params: ModelParams) -> dict:
    fam = params.family
    out = {"family": fam.kind.value, "d": fam.d}
    if fam.k is not None:
        out["k"] = fam.k
    for name in fam.blocks:
        out[name] = params.block(name).tolist()
    return out


def params_from_dict(data: dict, validate: bool = True) -> ModelParams:
    fam = ModelFamily(Family.parse(data["family"]), int(data["d"]), data.get("k"))
    blocks = {}
    for name in fam.blocks:
        if name not in data:
            if fam.kind is Family.DEP_IES and name == "pi":
                continue
            raise ParamsError(f"missing block {name!r}")
        blocks[name] = np.asarray(data[name], dtype=float)
    if fam.kind is Family.DEP_IES and "pi" not in blocks:
        blocks["pi"] = stationary_distribution(blocks["A"])
    params = ModelParams(fam, **blocks)
    if validate:
        validate_params(params)
    return params


def save_params(params: ModelParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh, indent=2)


def load_params(path, validate: bool = True) -> ModelParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh), validate=validate)


def dependency_tree_count_formula(L: int) -> int:
    """Closed form for single-root projective trees, used only as a test oracle."""
    return comb(3 * L - 2, L - 1) // L
