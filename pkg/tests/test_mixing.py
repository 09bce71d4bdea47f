import json
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from latent_unmix.estimators import PSI2_TERM
from latent_unmix.hypergraph import exact_moments
from latent_unmix.mixing import (
    CIRC,
    DOT,
    LEAF_CIRC,
    LEAF_DOT,
    UnsupportedFamily,
    apply_mixing,
    backbone_dp,
    backbone_of_bracketing,
    catalan,
    combine,
    compound_vector,
    dep_term_expression,
    dimension_report,
    eval_compound,
    finalize,
    mixing_matrix,
    parse_term,
    term_string,
)
from latent_unmix.model import Family, ModelFamily, ModelParams, enumerate_topologies, random_params
from latent_unmix.observations import Observation, ObservationSpec, random_eta

ONES = ObservationSpec("all-thin-triples", {"1": np.ones(2)})


def chain(t, n):
    for _ in range(n):
        t = ("T", t)
    return t


def test_combine_cases():
    assert combine(None, None) is None
    assert combine(LEAF_DOT, None) == ("T", LEAF_DOT)
    assert combine(None, LEAF_DOT) == ("T", LEAF_DOT)
    assert combine(LEAF_DOT, LEAF_DOT) == ("F", LEAF_DOT, LEAF_DOT)


def test_combine_moves_projected_chain_left():
    dots = chain(LEAF_DOT, 2)
    circ = chain(LEAF_CIRC, 1)
    assert combine(dots, circ) == ("F", circ, dots)
    assert combine(circ, dots) == ("F", circ, dots)
    mixed = ("F", LEAF_CIRC, LEAF_DOT)
    assert combine(LEAF_DOT, mixed) == ("F", LEAF_DOT, mixed)


def test_pair_l2_single_term():
    terms = backbone_dp(Observation("pair", (1, 2)), 2)
    assert terms == {("F", LEAF_DOT, LEAF_DOT): 1}
    assert term_string(next(iter(terms))) == "(T:O:•,T:O:•) [n3=0]"


def test_pair_l3_two_terms():
    terms = backbone_dp(Observation("pair", (1, 2)), 3)
    assert sorted(terms.values()) == [1, 1]
    assert set(map(term_string, terms)) == {
        "(T:O:•,T:O:•) [n3=1]",
        "(T:O:•,T:T:O:•) [n3=0]",
    }


def path_exponents(b, p1, p2):
    """(n1, n2, n3) of a bracketing: edges LCA->leaf1, LCA->leaf2, root->LCA."""
    spans = b.spans
    leaf1, leaf2 = (p1 - 1, p1), (p2 - 1, p2)
    covers = lambda s, leaf: s[0] <= leaf[0] and leaf[1] <= s[1]
    lca = min((s for s in spans if covers(s, leaf1) and covers(s, leaf2)), key=lambda s: s[1] - s[0])
    inside = lambda leaf: sum(1 for s in spans if covers(lca, s) and s != lca and covers(s, leaf))
    n3 = sum(1 for s in spans if covers(s, lca) and s != lca)
    return inside(leaf1), inside(leaf2), n3


def term_exponents(t):
    core, n3 = finalize(t)
    assert core[0] == "F"
    depth = lambda u: 1 + (depth(u[1]) if u[0] == "T" else 0)
    return depth(core[1]), depth(core[2]), n3


def test_pair_grouping_matches_topology_oracle():
    L, obs = 5, Observation("pair", (1, 3))
    oracle = Counter(path_exponents(b, 1, 3) for b in enumerate_topologies("constituency", L))
    dp = {term_exponents(t): n for t, n in backbone_dp(obs, L).items()}
    assert dp == dict(oracle)


@pytest.mark.parametrize("L", range(3, 8))
def test_dp_matches_per_topology_backbones(L):
    for obs in [Observation("pair", (1, L)), Observation("thin", (2, 3, 1), "1"), Observation("thin", (1, L, 2), "1")]:
        direct = Counter(backbone_of_bracketing(b, obs) for b in enumerate_topologies("constituency", L))
        assert backbone_dp(obs, L) == dict(direct)


@pytest.mark.parametrize("L", range(1, 9))
def test_dp_total_is_catalan(L):
    obs = Observation("first", (1,))
    assert sum(backbone_dp(obs, L).values()) == catalan(L - 1)
    if L >= 3:
        assert sum(backbone_dp(Observation("thin", (1, 3, 2), "1"), L).values()) == catalan(L - 1)


def test_term_string_round_trip():
    for L in (3, 4, 5):
        for t in backbone_dp(Observation("thin", (1, 3, 2), "1"), L):
            assert parse_term(term_string(t)) == t
    assert parse_term("nil [n3=0]") is None
    with pytest.raises(ValueError):
        parse_term("(T:O:•,T:O:•")


def test_psi2_shared_by_two_rows():
    mm = mixing_matrix(Family.PCFG_IE, ONES, [3])
    c = mm.columns.index(PSI2_TERM)
    with_psi2 = [mm.rows[r][1].name for r, row in enumerate(mm.entries) if c in row]
    assert sorted(with_psi2) == ["123eta", "132eta"]


def test_l3_mixing_matrix():
    mm = mixing_matrix(Family.PCFG_IE, ONES, [3])
    h = Fraction(1, 2)
    assert [r[1].name for r in mm.rows] == ["123eta", "132eta", "231eta"]
    assert mm.exact() == [[h, h, 0], [0, h, h], [h, 0, h]]
    assert mm.column_labels()[1] == term_string(PSI2_TERM)


def test_columns_shared_across_lengths():
    a = mixing_matrix(Family.PCFG_IE, ONES, [3])
    b = mixing_matrix(Family.PCFG_IE, ONES, [3, 4])
    assert b.columns[:3] == a.columns
    assert b.shape[1] > 3


@pytest.mark.parametrize("lengths", [[3], [3, 4], range(2, 7)])
def test_rows_sum_to_one(lengths):
    for spec in [ONES, ObservationSpec("all-pairs")]:
        mm = mixing_matrix(Family.PCFG_IE, spec, lengths)
        assert all(s == 1 for s in mm.row_sums())
    mm = mixing_matrix(Family.DEP_IE, ObservationSpec("all-pairs"), [L for L in lengths if L <= 5])
    assert all(s == 1 for s in mm.row_sums())


def test_entries_are_counts_over_catalan():
    mm = mixing_matrix(Family.PCFG_IE, ONES, [5])
    for row in mm.entries:
        for v in row.values():
            assert (v * catalan(4)).denominator == 1


def test_eval_compound_fork():
    rng = np.random.default_rng(0)
    p = random_params(ModelFamily("pcfg-ie", 3, 2), rng)
    O, T, pi = p.O, p.T, p.pi
    t = parse_term("(T:O:•,T:O:•) [n3=1]")
    np.testing.assert_allclose(eval_compound(t, p), O @ T @ np.diag(T @ pi) @ T.T @ O.T, atol=1e-15)
    t2 = parse_term("(T:O:•,T:O:•) [n3=0]")
    np.testing.assert_allclose(eval_compound(t2, p), O @ T @ np.diag(pi) @ T.T @ O.T, atol=1e-15)
    assert eval_compound(t2, p).sum() == pytest.approx(1.0)


def test_eval_compound_identity_parameters():
    fam = ModelFamily("pcfg-ie", 2, 2)
    pi = np.array([0.3, 0.7])
    p = ModelParams(fam, pi=pi, T=np.eye(2), O=np.eye(2))
    np.testing.assert_allclose(eval_compound(parse_term("(T:O:•,T:O:•) [n3=0]"), p), np.diag(pi))


def test_eval_compound_psi2():
    rng = np.random.default_rng(1)
    p = random_params(ModelFamily("pcfg-ie", 3, 2), rng)
    eta = random_eta(3, 4)
    A = p.O @ p.T
    expected = A @ np.diag(p.pi) @ p.T.T @ np.diag(A.T @ eta) @ A.T
    np.testing.assert_allclose(eval_compound(PSI2_TERM, p, eta), expected, atol=1e-15)
    with pytest.raises(ValueError):
        eval_compound(PSI2_TERM, p)


def test_eval_compound_family_guard():
    p = random_params(ModelFamily("pcfg", 2, 2), np.random.default_rng(0))
    with pytest.raises(UnsupportedFamily):
        eval_compound(parse_term("(T:O:•,T:O:•) [n3=0]"), p)


@pytest.mark.parametrize("lengths", [[3], [2, 3, 4], range(3, 7)])
def test_moments_are_mixtures_of_compounds(lengths):
    rng = np.random.default_rng(2)
    p = random_params(ModelFamily("pcfg-ie", 3, 2), rng)
    for tag, eta in [("1", np.ones(3)), ("tau", random_eta(3, 9))]:
        spec = ObservationSpec("all-thin-triples", {tag: eta})
        mm = mixing_matrix(Family.PCFG_IE, spec, lengths)
        if not mm.columns:
            continue
        mom = exact_moments(p, spec, lengths)
        pred = apply_mixing(mm, compound_vector(mm, p, eta))
        for r, (L, pat) in enumerate(mm.rows):
            np.testing.assert_allclose(pred[r], mom[(L, Observation("thin", pat.positions, tag))], atol=1e-12)


def test_distinct_columns_evaluate_differently():
    mm = mixing_matrix(Family.PCFG_IE, ObservationSpec("all-thin-triples", {"1": np.ones(3)}), range(3, 6))
    rng = np.random.default_rng(3)
    vals = []
    for _ in range(5):
        p = random_params(ModelFamily("pcfg-ie", 3, 2), rng)
        vals.append(compound_vector(mm, p, random_eta(3, int(rng.integers(1 << 30)))).reshape(mm.shape[1], -1))
    stacked = np.concatenate(vals, axis=1)
    for i in range(len(stacked)):
        gaps = np.max(np.abs(stacked - stacked[i]), axis=1)
        gaps[i] = np.inf
        assert gaps.min() > 1e-6


def test_dependency_seven_term_rows():
    mm = mixing_matrix(Family.DEP_IES, ObservationSpec("all-pairs"), [3])
    rows = {pat.name: {dep_term_expression(mm.columns[c]): v for c, v in row.items()}
            for (L, pat), row in zip(mm.rows, mm.entries)}
    F = Fraction
    assert rows["12"] == {"D A^T": F(3, 7), "D A^T A^T": F(1, 7), "A D": F(2, 7), "A D A^T": F(1, 7)}
    assert rows["13"] == {"D A^T": F(2, 7), "D A^T A^T": F(1, 7), "A D A^T": F(1, 7),
                          "A A D": F(1, 7), "A D": F(2, 7)}


@pytest.mark.parametrize("kind", ["dep-i", "dep-ie", "dep-ies"])
def test_dependency_moments_are_mixtures(kind):
    fam = ModelFamily(kind, 3)
    p = random_params(fam, np.random.default_rng(4))
    for spec in [ObservationSpec("all-pairs"), ObservationSpec("first-moment")]:
        lengths = [2, 3, 4] if spec.family == "all-pairs" else [1, 2, 3, 4]
        mm = mixing_matrix(fam.kind, spec, lengths)
        pred = apply_mixing(mm, compound_vector(mm, p))
        mom = exact_moments(p, spec, lengths)
        for r, (L, pat) in enumerate(mm.rows):
            np.testing.assert_allclose(pred[r], mom[(L, pat)], atol=1e-13)


def test_unsupported_mixing():
    with pytest.raises(UnsupportedFamily):
        mixing_matrix(Family.PCFG, ObservationSpec("all-pairs"), [3])
    with pytest.raises(UnsupportedFamily):
        mixing_matrix(Family.DEP_IE, ObservationSpec("all-pairs"), [7])


def test_exports():
    mm = mixing_matrix(Family.PCFG_IE, ONES, [3])
    lines = mm.to_csv().splitlines()
    assert lines[0].startswith("row,") and lines[1] == "3:123eta,0.5,0.5,0"
    rec = json.loads(mm.to_json())
    assert rec["shape"] == [3, 3] and rec["entries"][0] == {"0": "1/2", "1": "1/2"}
    assert all(DOT in c and CIRC in c for c in rec["columns"])


def test_reference_dimensions():
    rep = dimension_report(ONES, L_max=10)
    assert (rep["pattern_rows"], rep["terms"]) == (990, 2376)
    assert rep["by_eta_count"]["2"] == {"rows": 1980, "columns": 4752}
