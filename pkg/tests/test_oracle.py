from dataclasses import replace
from fractions import Fraction as F

import pytest
from hypothesis import given, settings

from maxagree.coupling import DIRECT, PAPER, agreement_profile, build
from maxagree.lawmodels import law_from_table, law_iid
from maxagree.measure import Alphabet, tv_distance
from maxagree.oracle import (
    OracleCapError,
    agreement_upper_bound,
    independence_by_joint_enumeration,
    kappa_by_subset_enumeration,
    tv_by_event_enumeration,
)
from maxagree.tau import extend_with_tau, kappa
from support import AB, instance_a, law_pairs


def test_tv_event_instance_a():
    law1, law2 = instance_a()
    best = tv_by_event_enumeration(law1, law2, 1, with_event=True)
    assert best.value == F(5, 16)
    assert {AB.format_path(z) for z in best.event} == {"aa", "ab", "ba"}
    assert tv_by_event_enumeration(law1, law2, 0) == F(1, 4)


def test_tv_event_trivial():
    law1, _ = instance_a()
    assert tv_by_event_enumeration(law1, law1, 1) == 0
    d1, d2 = law_from_table(AB, 1, [("aa", 1)]), law_from_table(AB, 1, [("ab", 1)])
    assert tv_by_event_enumeration(d1, d2, 1) == 1


def test_tv_event_cap():
    big = Alphabet(tuple("abcde"))
    law = law_iid(big, 1, [F(1, 5)] * 5)
    with pytest.raises(OracleCapError):
        tv_by_event_enumeration(law, law, 1)


def test_kappa_subsets():
    law1, law2 = instance_a()
    assert kappa_by_subset_enumeration(law1, law2, 0) == F(1, 2)
    assert kappa_by_subset_enumeration(law1, law1, 1) == 0
    null = law_from_table(AB, 0, [("b", 1)])
    assert kappa_by_subset_enumeration(law_iid(AB, 0, [F(1, 2)] * 2), null, 0) == 1
    huge = Alphabet(tuple("abcdefghijklm"))
    with pytest.raises(OracleCapError):
        kappa_by_subset_enumeration(law_iid(huge, 0, [F(1, 13)] * 13), law_iid(huge, 0, [F(1, 13)] * 13), 0)


def test_agreement_upper_bound():
    assert agreement_upper_bound(*instance_a()) == {0: F(3, 4), 1: F(11, 16)}
    law1, _ = instance_a()
    assert set(agreement_upper_bound(law1, law1).values()) == {1}
    d1, d2 = law_from_table(AB, 1, [("aa", 1)]), law_from_table(AB, 1, [("bb", 1)])
    assert agreement_upper_bound(d1, d2) == {0: 0, 1: 0}


def test_joint_independence_table():
    ec = extend_with_tau(build(*instance_a(), PAPER)[0])
    report = independence_by_joint_enumeration(ec)
    assert report and report.details == {"rows": 4, "columns": 3}
    law = law_iid(AB, 1, [F(1, 2)] * 2)
    assert independence_by_joint_enumeration(extend_with_tau(build(law, law)[0]))


def test_joint_independence_names_cell():
    ec = extend_with_tau(build(*instance_a(), PAPER)[0])
    atoms = list(ec.atoms)
    s, p1, p2, tau, m = atoms[-1]
    atoms[-1] = (s, p1, p2, 0, m)
    report = independence_by_joint_enumeration(replace(ec, atoms=tuple(atoms)))
    assert not report
    assert any(v["path1"] == AB.format_path(p1) for v in report.violations)


@settings(max_examples=80, deadline=None)
@given(law_pairs(max_horizon=1))
def test_oracles_agree_with_library(pair):
    law1, law2 = pair
    ceiling = agreement_upper_bound(law1, law2)
    for t in range(law1.horizon + 1):
        assert tv_by_event_enumeration(law1, law2, t) == tv_distance(law1, law2, t)
        assert kappa_by_subset_enumeration(law1, law2, t) == kappa(law1, law2, t)
    for mode in (DIRECT, PAPER):
        profile = agreement_profile(build(law1, law2, mode)[0])
        assert all(profile[t] <= ceiling[t] for t in ceiling)
        if mode == DIRECT:
            assert profile == ceiling
