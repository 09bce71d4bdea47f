"""Observation functions (moment functionals of a sentence) and observed moments.

Positions in observation ids are 1-based, matching the usual ``x_1 ... x_L``
naming; sentences themselves hold 0-based word indices.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

FAMILIES = (
    "pairs",
    "all-pairs",
    "thin-triples",
    "triples",
    "all-thin-triples",
    "all-triples",
    "first-moment",
)
THIN_FAMILIES = ("thin-triples", "all-thin-triples")
MIN_LENGTH = {
    "pairs": 2,
    "all-pairs": 2,
    "thin-triples": 3,
    "triples": 3,
    "all-thin-triples": 3,
    "all-triples": 3,
    "first-moment": 1,
}


@dataclass(frozen=True, order=True)
class Observation:
    """One observation matrix/tensor.

    ``kind`` is ``first``, ``pair``, ``triple`` or ``thin``.  For ``thin`` the
    positions are ``(a, b, c)``: the moment is ``x_a (x) x_b`` scaled by
    ``eta^T x_c`` where ``eta`` is named by ``eta``.
    """

    kind: str
    positions: tuple[int, ...]
    eta: str = ""

    @property
    def name(self) -> str:
        sep = "" if max(self.positions) < 10 else "."
        core = sep.join(str(p) for p in self.positions)
        return f"{core}eta{self.eta}" if self.kind == "thin" else core

    @property
    def pattern(self) -> tuple[str, tuple[int, ...]]:
        """Identity of the observation with the projection vector forgotten."""
        return (self.kind, self.positions)

    @property
    def designated(self) -> tuple[int, ...]:
        """Positions that index the output array (excludes the projected one)."""
        return self.positions[:2] if self.kind == "thin" else self.positions

    def shape(self, d: int) -> tuple[int, ...]:
        return (d,) * len(self.designated)

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, name: str) -> "Observation":
        core, _, eta = name.partition("eta")
        pos = tuple(int(p) for p in (core.split(".") if "." in core else core))
        if eta or "eta" in name:
            return cls("thin", pos, eta)
        return cls({1: "first", 2: "pair", 3: "triple"}[len(pos)], pos)


@dataclass
class ObservationSpec:
    """A named observation family plus the projection vectors it uses."""

    family: str
    etas: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.family = self.family.strip().lower().replace("_", "-")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown observation family {self.family!r}")
        self.etas = {tag: np.asarray(v, dtype=float) for tag, v in self.etas.items()}
        if self.family in THIN_FAMILIES and not self.etas:
            raise ValueError(f"{self.family} needs at least one projection vector")
        if self.family not in THIN_FAMILIES and self.etas:
            raise ValueError(f"{self.family} takes no projection vector")

    @classmethod
    def thin(cls, family: str, eta: np.ndarray, tag: str, with_ones: bool = True) -> "ObservationSpec":
        """Thin family at ``eta``; by default also at the all-ones projection."""
        eta = np.asarray(eta, dtype=float)
        etas = {"1": np.ones(eta.shape[0])} if with_ones else {}
        etas[tag] = eta
        return cls(family, etas)

    def eta(self, tag: str) -> np.ndarray:
        return self.etas[tag]


def unit_eta(d: int, index: int = 0) -> np.ndarray:
    e = np.zeros(d)
    e[index] = 1.0
    return e


def random_eta(d: int, seed: int = 0) -> np.ndarray:
    """tau ~ Uniform[0,1]^d from a fixed seed."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=d)


def default_spec(family: str, d: int, eta_mode: str = "both", seed: int = 0) -> ObservationSpec:
    """Spec with the default projections: all-ones and/or a seeded random tau."""
    family = family.strip().lower().replace("_", "-")
    if family not in THIN_FAMILIES:
        return ObservationSpec(family)
    etas = {}
    if eta_mode in ("ones", "both"):
        etas["1"] = np.ones(d)
    if eta_mode in ("random", "both"):
        etas["tau"] = random_eta(d, seed)
    if eta_mode == "e1":
        etas = {"1": np.ones(d), "e1": unit_eta(d)}
    if not etas:
        raise ValueError(f"unknown eta mode {eta_mode!r}")
    return ObservationSpec(family, etas)


def enumerate_observations(spec: ObservationSpec, L: int) -> list[Observation]:
    """Observation ids present at sentence length L, sorted; empty below the family arity."""
    fam = spec.family
    if L < MIN_LENGTH[fam]:
        return []
    if fam == "first-moment":
        return [Observation("first", (1,))]
    if fam == "pairs":
        return [Observation("pair", (1, 2))]
    if fam == "all-pairs":
        return [Observation("pair", p) for p in itertools.combinations(range(1, L + 1), 2)]
    if fam == "triples":
        return [Observation("triple", (1, 2, 3))]
    if fam == "all-triples":
        return [Observation("triple", p) for p in itertools.combinations(range(1, L + 1), 3)]
    tags = list(spec.etas)
    if fam == "thin-triples":
        patterns = [(1, 2, 3)]
    else:
        patterns = []
        for trio in itertools.combinations(range(1, L + 1), 3):
            for c in reversed(trio):
                a, b = (p for p in trio if p != c)
                patterns.append((a, b, c))
        patterns.sort()
    return [Observation("thin", pat, tag) for pat in patterns for tag in tags]


def eval_phi(obs: Observation, x: Sequence[int], d: int, eta: Optional[np.ndarray] = None) -> np.ndarray:
    """phi_o(x) for one sentence of 0-based word ids."""
    L = len(x)
    if max(obs.positions) > L or min(obs.positions) < 1:
        raise ValueError(f"observation {obs.name} does not fit a sentence of length {L}")
    out = np.zeros(obs.shape(d))
    index = tuple(int(x[p - 1]) for p in obs.designated)
    if obs.kind == "thin":
        if eta is None:
            raise ValueError(f"observation {obs.name} needs its projection vector")
        out[index] = eta[int(x[obs.positions[2] - 1])]
    else:
        out[index] = 1.0
    return out


def factor_rows(obs: Observation, L: int, d: int, eta: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-position word factors for every entry of the moment array.

    Row ``r`` (entries in C order) is an (L, d) table ``G`` such that the
    entry equals ``E[prod_i G[i, x_i]]``.
    """
    shape = obs.shape(d)
    entries = list(itertools.product(range(d), repeat=len(shape)))
    G = np.ones((len(entries), L, d))
    for r, index in enumerate(entries):
        for p, w in zip(obs.designated, index):
            G[r, p - 1, :] = 0.0
            G[r, p - 1, w] = 1.0
        if obs.kind == "thin":
            if eta is None:
                raise ValueError(f"observation {obs.name} needs its projection vector")
            G[r, obs.positions[2] - 1, :] = eta
    return G


@dataclass
class Moments:
    """Observed moments keyed by (sentence length, observation)."""

    values: dict[tuple[int, Observation], np.ndarray] = field(default_factory=dict)
    etas: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key):
        L, obs = key
        if isinstance(obs, str):
            obs = Observation.parse(obs)
        return self.values[(L, obs)]

    def __setitem__(self, key, value):
        self.values[key] = np.asarray(value, dtype=float)

    def __contains__(self, key):
        return key in self.values

    def __len__(self):
        return len(self.values)

    def keys(self):
        return sorted(self.values)

    def lengths(self) -> list[int]:
        return sorted({L for L, _ in self.values})

    def for_length(self, L: int) -> dict[Observation, np.ndarray]:
        return {o: v for (l, o), v in sorted(self.values.items()) if l == L}

    def merge(self, other: "Moments") -> "Moments":
        out = Moments(dict(self.values), dict(self.etas))
        out.values.update(other.values)
        out.etas.update(other.etas)
        return out

    def to_dict(self) -> dict:
        return {
            "etas": {tag: v.tolist() for tag, v in self.etas.items()},
            "moments": [
                {"L": L, "obs": o.name, "matrix": v.tolist()} for (L, o), v in sorted(self.values.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Moments":
        out = cls(etas={t: np.asarray(v, dtype=float) for t, v in data.get("etas", {}).items()})
        for item in data["moments"]:
            out[(int(item["L"]), Observation.parse(item["obs"]))] = item["matrix"]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def empirical_moments(samples: Mapping[int, np.ndarray], spec: ObservationSpec, d: int) -> Moments:
    """Plug-in moments: average of phi over the sentences of each length."""
    out = Moments(etas=dict(spec.etas))
    for L, sents in sorted(samples.items()):
        X = np.asarray(sents, dtype=np.int64).reshape(-1, L)
        n = X.shape[0]
        if n == 0:
            raise ValueError(f"no samples for sentence length L={L}")
        for obs in enumerate_observations(spec, L):
            cols = [X[:, p - 1] for p in obs.designated]
            weights = np.ones(n)
            if obs.kind == "thin":
                weights = spec.eta(obs.eta)[X[:, obs.positions[2] - 1]]
            acc = np.zeros(obs.shape(d))
            np.add.at(acc, tuple(cols), weights)
            out[(L, obs)] = acc / n
    return out


def read_corpus(path) -> dict[int, np.ndarray]:
    """One sentence per line, space-separated 1-based word ids; grouped by length."""
    groups: dict[int, list[list[int]]] = {}
    with open(path) as fh:
        for line in fh:
            words = [int(w) - 1 for w in line.split()]
            if words:
                groups.setdefault(len(words), []).append(words)
    return {L: np.array(rows, dtype=np.int64) for L, rows in groups.items()}


def write_corpus(path, sentences: Iterable[Sequence[int]]) -> None:
    with open(path, "w") as fh:
        for sent in sentences:
            fh.write(" ".join(str(int(w) + 1) for w in sent) + "\n")
