import json
from fractions import Fraction as F

import pytest
from hypothesis import given, settings

from maxagree.coupling import (
    BEYOND,
    DIRECT,
    PAPER,
    CouplingFormatError,
    LayeredCoupling,
    RegraftError,
    agreement_profile,
    build,
    check_ladder,
    conditional_marginal_check,
    conditional_marginal_check_all,
    coupling_from_json,
    coupling_to_json,
    decoupling_step,
    first_disagreement,
    greedy_meet,
    independent_product,
    ladder_conditional_check,
    product_coupling,
    regraft,
    sigma_distribution,
    swap_roles,
    verify_coupling,
    verify_maximality,
)
from maxagree.lawmodels import law_from_table, law_iid
from maxagree.measure import Alphabet
from support import AB, instance_a, law_pairs


def labelled(c):
    fmt = c.alphabet.format_path
    return {(s, fmt(p1), fmt(p2)): m for s, p1, p2, m in c.atoms()}


def test_first_disagreement_and_sentinel_order():
    assert first_disagreement((0, 1, 1), (0, 1, 0)) == 2
    assert first_disagreement((0, 1), (0, 1)) is BEYOND
    assert 3 < BEYOND and not BEYOND < 3 and sorted([BEYOND, 1, 0]) == [0, 1, BEYOND]


def test_direct_build_instance_a_atoms():
    c, _ = build(*instance_a(), DIRECT)
    assert labelled(c) == {
        (0, "aa", "bb"): F(3, 16), (0, "ab", "bb"): F(1, 16),
        (1, "ba", "bb"): F(1, 16),
        (BEYOND, "aa", "aa"): F(1, 16), (BEYOND, "ab", "ab"): F(3, 16),
        (BEYOND, "ba", "ba"): F(3, 16), (BEYOND, "bb", "bb"): F(1, 4),
    }
    assert sigma_distribution(c) == {0: F(1, 4), 1: F(1, 16), BEYOND: F(11, 16)}
    assert verify_coupling(c) and verify_maximality(c)


def test_paper_build_instance_a_shortfall():
    c, ladder = build(*instance_a(), PAPER)
    assert sigma_distribution(c) == {0: F(1, 4), 1: F(3, 16), BEYOND: F(9, 16)}
    assert verify_coupling(c)
    report = verify_maximality(c)
    assert not report
    assert [(v["t"], v["shortfall"]) for v in report.violations] == [(1, F(1, 8))]
    assert ladder.mu_layer[1][0].to_labels() == {"aa": F(1, 16), "ba": F(1, 8)}


def test_decoupling_step_deficit_instance_a():
    step = decoupling_step(*instance_a(), 1)
    assert step.deficit == {(1,): F(1, 16)}
    assert step.capacity[0] == {(0, 0): F(3, 16), (0, 1): F(1, 16), (1, 0): F(1, 16)}
    assert step.capacity[1] == {(1, 1): F(5, 16)}


@pytest.mark.parametrize("mode", [DIRECT, PAPER])
def test_identical_laws_agree_forever(mode):
    law = law_from_table(AB, 2, [("aab", F(1, 3)), ("bba", F(2, 3))])
    c, _ = build(law, law, mode)
    assert sigma_distribution(c) == {BEYOND: 1}


@pytest.mark.parametrize("mode", [DIRECT, PAPER])
def test_disjoint_at_time_zero(mode):
    c, _ = build(law_from_table(AB, 1, [("aa", 1)]), law_from_table(AB, 1, [("bb", 1)]), mode)
    assert labelled(c) == {(0, "aa", "bb"): 1}
    assert verify_maximality(c)


def test_product_coupling_is_valid_not_maximal():
    c = product_coupling(*instance_a())
    assert verify_coupling(c)
    assert not verify_maximality(c)


def test_tampered_coupling_names_atoms():
    c, _ = build(*instance_a(), DIRECT)
    layers = {s: list(a) for s, a in c.layers.items()}
    p1, p2, m = layers[BEYOND][0]
    layers[BEYOND][0] = (p1, p2, m + F(1, 16))
    layers[0] = [(q1, q2, w - F(1, 16)) if (q1, q2) == ((0, 0), (1, 1)) else (q1, q2, w) for q1, q2, w in layers[0]]
    bad = LayeredCoupling(c.law1, c.law2, layers)
    report = verify_coupling(bad)
    assert not report
    assert {(v["side"], v["path"]) for v in report.violations if v["kind"] == "marginal"} == {(2, "aa"), (2, "bb")}
    mislabelled = LayeredCoupling(c.law1, c.law2, {1: c.layers[0] + c.layers[1], BEYOND: c.layers[BEYOND]})
    kinds = {v["kind"] for v in verify_coupling(mislabelled).violations}
    assert kinds == {"layer_structure"}


def test_ladders_instance_a():
    laws = instance_a()
    for mode in (DIRECT, PAPER):
        _, ladder = build(*laws, mode)
        assert check_ladder(ladder, *laws)
    _, ladder = build(*laws, PAPER)
    assert ladder_conditional_check(ladder, *laws)


# Frozen counterexample: under any maximal agreement coupling the post-decoupling
# paths are not distributed by the laws' own conditionals.
XYAB = Alphabet(("x", "y", "a", "b"))
FORCED_1 = law_from_table(XYAB, 2, [(p, F(1, 4)) for p in ("xaa", "xab", "xba", "xbb")])
FORCED_2 = law_from_table(XYAB, 2, [("xaa", F(1, 4)), ("yaa", F(3, 4))])


def test_conditional_marginals_fail_for_maximal_coupling():
    c, _ = build(FORCED_1, FORCED_2, DIRECT)
    assert verify_coupling(c) and verify_maximality(c)
    report = conditional_marginal_check(c, 1)
    assert not report
    cells = {(v["prefix"], v["path"]): v["coupling_conditional"] for v in report.violations if v["side"] == 1}
    assert cells[("xa", "xaa")] == 1 and cells[("xa", "xab")] == 0
    # the agreement mass at prefix xa up to time 1 equals the meet there, all of it
    # continuing along xaa, so every maximal coupling is forced into this shape
    assert agreement_profile(c)[2] == F(1, 4)


def test_conditional_marginals_hold_for_recursive_ladder_on_counterexample():
    c, _ = build(FORCED_1, FORCED_2, PAPER)
    assert conditional_marginal_check_all(c)
    assert not verify_maximality(c)


def test_regraft_independent_reproduces_direct():
    c, _ = build(*instance_a(), DIRECT)
    assert regraft(c, independent_product) == c


def test_regraft_greedy_meet_preserves_structure():
    law1 = law_from_table(AB, 2, [("aaa", F(1, 4)), ("aab", F(1, 4)), ("bab", F(1, 2))])
    law2 = law_from_table(AB, 2, [("aba", F(1, 4)), ("bbb", F(1, 4)), ("baa", F(1, 2))])
    c, _ = build(law1, law2, DIRECT)
    g = regraft(c, greedy_meet)
    assert verify_coupling(g)
    assert sigma_distribution(g) == sigma_distribution(c)
    assert agreement_profile(g) == agreement_profile(c)


def test_regraft_rejects_invalid_policy():
    c, _ = build(*instance_a(), DIRECT)

    def lopsided(nu1, nu2):
        s1 = next(iter(nu1))
        for s2, b in nu2.items():
            yield s1, s2, b

    law1 = law_iid(AB, 1, {"a": F(1, 2), "b": F(1, 2)})
    c, _ = build(law1, law_from_table(AB, 1, [("bb", 1)]), DIRECT)
    with pytest.raises(RegraftError, match="side-1 marginal"):
        regraft(c, lopsided)


@pytest.mark.parametrize("mode", [DIRECT, PAPER])
def test_export_round_trip(mode):
    laws = instance_a()
    c, _ = build(*laws, mode)
    text = json.dumps(coupling_to_json(c))
    back = coupling_from_json(json.loads(text), *laws)
    assert back == c and json.dumps(coupling_to_json(back)) == text


def test_import_keeps_declared_sigma_and_rejects_garbage():
    laws = instance_a()
    data = coupling_to_json(build(*laws, DIRECT)[0])
    data["layers"][0]["sigma"] = 1
    assert not verify_coupling(coupling_from_json(data, *laws))
    with pytest.raises(CouplingFormatError):
        coupling_from_json({**data, "kind": "other"}, *laws)
    data["layers"][0]["mass"] = "0.25"
    with pytest.raises(CouplingFormatError):
        coupling_from_json(data, *laws)


@settings(max_examples=60, deadline=None)
@given(law_pairs())
def test_direct_build_is_maximal(pair):
    c, ladder = build(*pair, DIRECT)
    assert verify_coupling(c)
    assert verify_maximality(c)
    assert check_ladder(ladder, *pair)
    assert verify_coupling(swap_roles(c))


@settings(max_examples=60, deadline=None)
@given(law_pairs())
def test_paper_build_invariants(pair):
    c, ladder = build(*pair, PAPER)
    assert verify_coupling(c)
    assert check_ladder(ladder, *pair)
    assert ladder_conditional_check(ladder, *pair)
    assert conditional_marginal_check_all(c)
    report = verify_maximality(c)
    assert all(row["shortfall"] >= 0 for row in report.details["profile"])


@settings(max_examples=40, deadline=None)
@given(law_pairs(max_horizon=2))
def test_regraft_greedy_preserves_profile(pair):
    c, _ = build(*pair, DIRECT)
    g = regraft(c, greedy_meet)
    assert verify_coupling(g)
    for t in range(c.horizon + 1):
        keep = [s for s in c.layers if s is not BEYOND and s <= t]
        assert {s: g.layers.get(s) and sum(m for *_, m in g.layers[s]) for s in keep} == \
            {s: sum(m for *_, m in c.layers[s]) for s in keep}
    assert verify_maximality(g)
