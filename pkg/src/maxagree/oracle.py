"""Brute-force reference computations.

Nothing here reuses the meet, conditional or hazard code of the library:
prefix masses are summed straight from the path tables, and suprema and
infima are taken by exhaustive enumeration.  Every routine fails loudly once
its enumeration would become too large.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import lcm

from .coupling import SigmaValue
from .report import CheckReport

MAX_EVENT_PREFIXES = 20
MAX_SUBSET_SYMBOLS = 12
MAX_JOINT_CELLS = 1 << 20


class OracleCapError(ValueError):
    """The instance is too large for exhaustive enumeration."""


def _prefix_masses(law, level: int) -> dict[tuple, Fraction]:
    out: dict[tuple, Fraction] = defaultdict(Fraction)
    for path, mass in law.paths.atoms.items():
        out[path[:level]] += mass
    return out


@dataclass(frozen=True)
class EventMaximum:
    value: Fraction
    event: frozenset


def tv_by_event_enumeration(law1, law2, t: int, *, with_event: bool = False):
    """``max_A mu1(A) - mu2(A)`` over every set ``A`` of level-``t + 1`` prefixes.

    Subsets are walked in Gray-code order so each step adds or removes one
    prefix.  Returns an :class:`EventMaximum` when ``with_event`` is set.
    """
    m1, m2 = _prefix_masses(law1, t + 1), _prefix_masses(law2, t + 1)
    prefixes = sorted(set(m1) | set(m2))
    n = len(prefixes)
    if n > MAX_EVENT_PREFIXES:
        raise OracleCapError(f"{n} prefixes at level {t + 1}; cap is {MAX_EVENT_PREFIXES}")
    # common denominator so the walk runs on integers
    denom = lcm(*(m.denominator for m in (*m1.values(), *m2.values())))
    diffs = [int((m1.get(z, 0) - m2.get(z, 0)) * denom) for z in prefixes]
    best, best_code, current, code = 0, 0, 0, 0
    for i in range(1, 1 << n):
        bit = (i & -i).bit_length() - 1
        code ^= 1 << bit
        current += diffs[bit] if code >> bit & 1 else -diffs[bit]
        if current > best:
            best, best_code = current, code
    value = Fraction(best, denom)
    if not with_event:
        return value
    return EventMaximum(value, frozenset(z for k, z in enumerate(prefixes) if best_code >> k & 1))


def kappa_by_subset_enumeration(law1, law2, t: int) -> Fraction:
    """``1 - min`` of the conditional ratio ``mu2(Z_t in B | z) / mu1(Z_t in B | z)``.

    Ranges over histories ``z`` of length ``t`` charged by both laws and every
    nonempty symbol set ``B`` with positive ``mu1`` conditional probability.
    """
    size = len(law1.alphabet.symbols)
    if size > MAX_SUBSET_SYMBOLS:
        raise OracleCapError(f"alphabet of {size} symbols; cap is {MAX_SUBSET_SYMBOLS}")
    h1, h2 = _prefix_masses(law1, t), _prefix_masses(law2, t)
    n1, n2 = _prefix_masses(law1, t + 1), _prefix_masses(law2, t + 1)
    worst = None
    for z in sorted(h1):
        if not h2.get(z):
            continue
        for k in range(1, size + 1):
            for subset in combinations(range(size), k):
                p = sum(n1.get(z + (e,), 0) for e in subset) / h1[z]
                if not p:
                    continue
                q = sum(n2.get(z + (e,), 0) for e in subset) / h2[z]
                ratio = q / p
                if worst is None or ratio < worst:
                    worst = ratio
    return Fraction(1) if worst is None else 1 - worst


def independence_by_joint_enumeration(ec) -> CheckReport:
    """Materialise the full (first path, tau) table and test every cell for factorisation."""
    T = ec.horizon
    fmt = ec.base.alphabet.format_path
    paths = sorted(set(_prefix_masses(ec.base.law1, T + 1)) | {a[1] for a in ec.atoms})
    taus: list[SigmaValue] = sorted({a[3] for a in ec.atoms} | set(range(T + 1)))
    if len(paths) * len(taus) > MAX_JOINT_CELLS:
        raise OracleCapError(f"joint table of {len(paths) * len(taus)} cells")
    table = {(p, v): Fraction(0) for p in paths for v in taus}
    for _, p1, _, tau, mass in ec.atoms:
        table[p1, tau] += mass
    rows = {p: sum(table[p, v] for v in taus) for p in paths}
    cols = {v: sum(table[p, v] for p in paths) for v in taus}
    violations = [
        {"path1": fmt(p), "tau": "beyond" if not isinstance(v, int) else v,
         "joint": table[p, v], "product": rows[p] * cols[v]}
        for p in paths for v in taus if table[p, v] != rows[p] * cols[v]
    ]
    return CheckReport("oracle_independence", not violations, violations,
                       {"rows": len(paths), "columns": len(taus)})


def agreement_upper_bound(law1, law2) -> dict[int, Fraction]:
    """``t -> 1 - TV`` over times ``0..t``, via the positive part of ``mu1 - mu2``."""
    out = {}
    for t in range(law1.horizon + 1):
        m1, m2 = _prefix_masses(law1, t + 1), _prefix_masses(law2, t + 1)
        excess = sum((m1[z] - m2.get(z, 0) for z in m1 if m1[z] > m2.get(z, 0)), Fraction(0))
        out[t] = 1 - excess
    return out
