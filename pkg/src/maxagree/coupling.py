"""Layered couplings of two process laws organised by first disagreement time.

A coupling is stored as a map from the first disagreement time ``sigma`` to
the atoms ``(path1, path2, mass)`` carrying that value.  ``BEYOND`` marks
agreement on the whole window ``0..T``.

Two builders are provided:

``build_direct_meet``
    Agreement mass at time ``t`` is the meet of the two laws restricted to
    times ``0..t``.  This attains the coupling-inequality ceiling at every
    ``t`` and is the default.
``build_paper_recursive``
    The recursive ladder in which each agreement level is the meet of the
    *continuations* of the previous one.  It keeps the product structure of
    every layer, but its agreement profile can fall short of the ceiling.
"""

from __future__ import annotations

import functools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .lawmodels import ProcessLaw
from .measure import (
    ONE,
    ZERO,
    DominationError,
    Path,
    PathMeasure,
    dominated,
    extend_proportional,
    from_pairs,
    marginal,
    meet,
    restrict,
    subtract,
    total_mass,
    tv_distance,
)
from .rational import format_rational, parse_rational
from .report import CheckReport


class ConstructionError(RuntimeError):
    """An internal invariant of a builder was violated."""


class RegraftError(ValueError):
    """A recoupling policy returned something that is not a coupling."""


class CouplingFormatError(ValueError):
    pass


@functools.total_ordering
class _Beyond:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __eq__(self, other):
        return other is self

    def __lt__(self, other):
        return False

    def __hash__(self):
        return hash("BEYOND")

    def __repr__(self):
        return "BEYOND"

    def __reduce__(self):
        return (_Beyond, ())


BEYOND = _Beyond()
SigmaValue = int | _Beyond
Atom = tuple[Path, Path, Fraction]

DIRECT = "direct"
PAPER = "paper"


def sigma_label(sigma: SigmaValue) -> str | int:
    return "beyond" if sigma is BEYOND else sigma


def parse_sigma(value) -> SigmaValue:
    if value == "beyond":
        return BEYOND
    if isinstance(value, int) and not isinstance(value, bool) and value >= 0:
        return value
    raise CouplingFormatError(f"bad sigma value {value!r}")


def first_disagreement(path1: Sequence[int], path2: Sequence[int]) -> SigmaValue:
    for t, (a, b) in enumerate(zip(path1, path2)):
        if a != b:
            return t
    return BEYOND


def exceeds(sigma: SigmaValue, t: int) -> bool:
    """``sigma > t`` with ``BEYOND`` above every finite time."""
    return sigma is BEYOND or sigma > t


@dataclass(frozen=True, eq=False)
class LayeredCoupling:
    """Joint law of two paths, split into layers by the first disagreement time.

    The constructor only normalises ordering; structural validity is checked
    by :func:`verify_coupling` so that corrupted inputs can still be reported.
    """

    law1: ProcessLaw
    law2: ProcessLaw
    layers: Mapping[SigmaValue, tuple[Atom, ...]]
    mode: str = DIRECT

    def __post_init__(self):
        ordered = {}
        for sigma in sorted(self.layers):
            atoms = tuple(sorted((tuple(p1), tuple(p2), Fraction(m)) for p1, p2, m in self.layers[sigma]))
            if atoms:
                ordered[sigma] = atoms
        object.__setattr__(self, "layers", ordered)

    @property
    def horizon(self) -> int:
        return self.law1.horizon

    @property
    def alphabet(self):
        return self.law1.alphabet

    def atoms(self) -> Iterator[tuple[SigmaValue, Path, Path, Fraction]]:
        for sigma, atoms in self.layers.items():
            for p1, p2, m in atoms:
                yield sigma, p1, p2, m

    def side(self, i: int, keep: Callable[[SigmaValue], bool] = lambda s: True) -> PathMeasure:
        """Full-path measure of side ``i`` over the layers selected by ``keep``."""
        return from_pairs(
            self.alphabet,
            self.horizon + 1,
            (((p1 if i == 1 else p2), m) for s, p1, p2, m in self.atoms() if keep(s)),
        )

    def __eq__(self, other):
        if not isinstance(other, LayeredCoupling):
            return NotImplemented
        return self.law1 == other.law1 and self.law2 == other.law2 and dict(self.layers) == dict(other.layers)

    __hash__ = None


def from_joint(law1: ProcessLaw, law2: ProcessLaw, atoms: Iterable[tuple[Path, Path, Fraction]],
               mode: str = "external") -> LayeredCoupling:
    """Organise an arbitrary list of joint atoms into sigma layers."""
    acc: dict[tuple[Path, Path], Fraction] = defaultdict(Fraction)
    for p1, p2, m in atoms:
        acc[tuple(p1), tuple(p2)] += Fraction(m)
    layers: dict[SigmaValue, list[Atom]] = defaultdict(list)
    for (p1, p2), m in acc.items():
        if m:
            layers[first_disagreement(p1, p2)].append((p1, p2, m))
    return LayeredCoupling(law1, law2, layers, mode)


def product_coupling(law1: ProcessLaw, law2: ProcessLaw) -> LayeredCoupling:
    """The independent coupling, reorganised by sigma."""
    return from_joint(
        law1, law2,
        ((p1, p2, m1 * m2) for p1, m1 in law1.paths.items() for p2, m2 in law2.paths.items()),
        mode="product",
    )


def swap_roles(c: LayeredCoupling) -> LayeredCoupling:
    """Exchange the two sides; sigma is symmetric so layers keep their keys."""
    return LayeredCoupling(
        c.law2, c.law1,
        {s: tuple((p2, p1, m) for p1, p2, m in atoms) for s, atoms in c.layers.items()},
        c.mode,
    )


@dataclass(frozen=True)
class ConstructionLadder:
    """Trace of a construction.

    ``pi[t]`` is the agreement prefix measure at level ``t + 1``;
    ``mu_bar[t]`` the pair of full-path measures carried by ``sigma >= t``
    (index ``T + 1`` is the agreement remainder); ``mu_layer[t]`` the pair
    carried by ``sigma == t``.
    """

    mode: str
    pi: tuple[PathMeasure, ...]
    mu_bar: tuple[tuple[PathMeasure, PathMeasure], ...]
    mu_layer: tuple[tuple[PathMeasure, PathMeasure], ...]


def _check_pair(law1: ProcessLaw, law2: ProcessLaw) -> None:
    if law1.alphabet != law2.alphabet:
        raise ValueError("laws use different alphabets")
    if law1.horizon != law2.horizon:
        raise ValueError(f"horizon mismatch: {law1.horizon} vs {law2.horizon}")


def agreement_prefix_measure(c: LayeredCoupling, t: int) -> PathMeasure:
    """Prefix measure (level ``t + 1``) of the event ``sigma > t``."""
    return restrict(c.side(1, lambda s: exceeds(s, t)), t)


def ladder_from_coupling(c: LayeredCoupling, mode: str | None = None) -> ConstructionLadder:
    """Read the ladder off any coupling via its sigma layers."""
    T = c.horizon
    pi = tuple(agreement_prefix_measure(c, t) for t in range(T + 1))
    mu_bar = tuple(
        (c.side(1, lambda s, t=t: s is BEYOND or s >= t), c.side(2, lambda s, t=t: s is BEYOND or s >= t))
        for t in range(T + 2)
    )
    mu_layer = tuple((c.side(1, lambda s, t=t: s == t), c.side(2, lambda s, t=t: s == t)) for t in range(T + 1))
    return ConstructionLadder(mode or c.mode, pi, mu_bar, mu_layer)


# -- direct-meet construction -------------------------------------------------


@dataclass(frozen=True)
class DecouplingStep:
    """Bookkeeping of the direct construction at time ``t``.

    ``deficit[z]`` is agreement mass on the level-``t`` prefix ``z`` that must
    decouple at ``t``; ``capacity[i][z + (e,)]`` is side-``i`` mass at level
    ``t + 1`` not covered by agreement.
    """

    t: int
    pi_prev: PathMeasure
    pi: PathMeasure
    deficit: dict[Path, Fraction]
    capacity: tuple[dict[Path, Fraction], dict[Path, Fraction]]


def decoupling_step(law1: ProcessLaw, law2: ProcessLaw, t: int) -> DecouplingStep:
    A = law1.alphabet
    pi_prev = PathMeasure(A, 0, {(): ONE}) if t == 0 else meet(law1.marginal(t), law2.marginal(t))
    m1, m2 = law1.marginal(t + 1), law2.marginal(t + 1)
    pi = meet(m1, m2)
    kept = marginal(pi, t)
    deficit = {z: mass - kept[z] for z, mass in pi_prev.items() if mass != kept[z]}
    capacity = tuple({w: m - pi[w] for w, m in mi.items() if m != pi[w]} for mi in (m1, m2))
    return DecouplingStep(t, pi_prev, pi, deficit, capacity)


def _group_by_prefix(weights: Mapping[Path, Fraction]) -> dict[Path, dict[int, Fraction]]:
    out: dict[Path, dict[int, Fraction]] = defaultdict(dict)
    for w, m in weights.items():
        out[w[:-1]][w[-1]] = m
    return out


def build_direct_meet(law1: ProcessLaw, law2: ProcessLaw) -> tuple[LayeredCoupling, ConstructionLadder]:
    """Maximal agreement coupling with agreement ``pi_t`` = meet of the restrictions."""
    _check_pair(law1, law2)
    T = law1.horizon
    agree: dict[Path, Fraction] = {(): ONE}
    # (sigma, prefix1, prefix2) -> mass, prefixes of the current level
    decoupled: dict[tuple[int, Path, Path], Fraction] = {}

    for t in range(T + 1):
        step = decoupling_step(law1, law2, t)
        caps = [_group_by_prefix(step.capacity[0]), _group_by_prefix(step.capacity[1])]
        new_side: list[dict[Path, dict[int, Fraction]]] = [defaultdict(dict), defaultdict(dict)]
        leftover: list[dict[Path, dict[int, Fraction]]] = [defaultdict(dict), defaultdict(dict)]
        for i in (0, 1):
            for z, row in caps[i].items():
                total = sum(row.values(), ZERO)
                d = step.deficit.get(z, ZERO)
                if d > total:
                    raise ConstructionError(f"t={t}: deficit {d} exceeds side-{i + 1} capacity {total}")
                for e, cap in row.items():
                    b = d * cap / total if d else ZERO
                    if b:
                        new_side[i][z][e] = b
                    if cap - b:
                        leftover[i][z][e] = cap - b
        for z, d in step.deficit.items():
            if d and (not new_side[0].get(z) or not new_side[1].get(z)):
                raise ConstructionError(f"t={t}: deficit at {z!r} has no capacity to decouple into")

        nxt: dict[tuple[int, Path, Path], Fraction] = defaultdict(Fraction)
        # earlier layers continue inside the leftover capacity, side by side
        norms = [{z: sum(row.values(), ZERO) for z, row in leftover[i].items()} for i in (0, 1)]
        for (s, p1, p2), m in decoupled.items():
            n1, n2 = norms[0].get(p1, ZERO), norms[1].get(p2, ZERO)
            if not n1 or not n2:
                raise ConstructionError(f"t={t}: no leftover capacity to continue layer {s} atom")
            for e1, l1 in leftover[0][p1].items():
                for e2, l2 in leftover[1][p2].items():
                    nxt[s, p1 + (e1,), p2 + (e2,)] += m * (l1 / n1) * (l2 / n2)
        for z, d in step.deficit.items():
            for e1, b1 in new_side[0][z].items():
                for e2, b2 in new_side[1][z].items():
                    if e1 == e2:
                        raise ConstructionError(f"t={t}: decoupling pair on the diagonal at {z!r}")
                    nxt[t, z + (e1,), z + (e2,)] += b1 * b2 / d
        decoupled = dict(nxt)
        agree = dict(step.pi.items())

    layers: dict[SigmaValue, list[Atom]] = defaultdict(list)
    for (s, p1, p2), m in decoupled.items():
        layers[s].append((p1, p2, m))
    layers[BEYOND] = [(z, z, m) for z, m in agree.items()]
    c = LayeredCoupling(law1, law2, layers, DIRECT)
    return c, ladder_from_coupling(c, DIRECT)


# -- recursive (literal ladder) construction ----------------------------------


def build_paper_recursive(law1: ProcessLaw, law2: ProcessLaw) -> tuple[LayeredCoupling, ConstructionLadder]:
    """Coupling from the recursive ladder with product layers.

    ``pi_t`` is the meet of the time-``t`` restrictions of the measures still
    in agreement, those are re-extended along each law's conditionals, and the
    difference forms layer ``t``, coupled as a product over each common
    level-``t`` prefix.
    """
    _check_pair(law1, law2)
    T = law1.horizon
    laws = (law1, law2)
    pis: list[PathMeasure] = []
    mu_bar: list[tuple[PathMeasure, PathMeasure]] = [(law1.paths, law2.paths)]
    mu_layer: list[tuple[PathMeasure, PathMeasure]] = []
    layers: dict[SigmaValue, list[Atom]] = {}

    for t in range(T + 1):
        cur = mu_bar[t]
        pi = meet(restrict(cur[0], t), restrict(cur[1], t))
        nxt = tuple(extend_proportional(pi, laws[i], T + 1) for i in (0, 1))
        try:
            layer = tuple(subtract(cur[i], nxt[i]) for i in (0, 1))
        except DominationError as exc:
            raise ConstructionError(f"t={t}: continuation not dominated: {exc}") from exc
        pis.append(pi)
        mu_bar.append(nxt)
        mu_layer.append(layer)

        base = [marginal(layer[i], t) for i in (0, 1)]
        if base[0] != base[1]:
            raise ConstructionError(f"t={t}: layer sides disagree before the decoupling time")
        by_prefix = [defaultdict(list), defaultdict(list)]
        for i in (0, 1):
            for p, m in layer[i].items():
                by_prefix[i][p[:t]].append((p, m))
        atoms = []
        for z, weight in base[0].items():
            for p1, m1 in by_prefix[0][z]:
                for p2, m2 in by_prefix[1][z]:
                    atoms.append((p1, p2, m1 * m2 / weight))
        layers[t] = atoms

    if mu_bar[T + 1][0] != mu_bar[T + 1][1]:
        raise ConstructionError("agreement remainders differ between sides")
    layers[BEYOND] = [(z, z, m) for z, m in mu_bar[T + 1][0].items()]
    c = LayeredCoupling(law1, law2, layers, PAPER)
    return c, ConstructionLadder(PAPER, tuple(pis), tuple(mu_bar), tuple(mu_layer))


def build(law1: ProcessLaw, law2: ProcessLaw, mode: str = DIRECT) -> tuple[LayeredCoupling, ConstructionLadder]:
    if mode == DIRECT:
        return build_direct_meet(law1, law2)
    if mode == PAPER:
        return build_paper_recursive(law1, law2)
    raise ValueError(f"unknown construction mode {mode!r}")


# -- summaries and verifiers ---------------------------------------------------


def sigma_distribution(c: LayeredCoupling) -> dict[SigmaValue, Fraction]:
    return {s: sum((m for _, _, m in atoms), ZERO) for s, atoms in c.layers.items()}


def agreement_profile(c: LayeredCoupling) -> dict[int, Fraction]:
    """``t -> P(sigma > t)`` for ``t = 0..T``."""
    dist = sigma_distribution(c)
    return {t: sum((m for s, m in dist.items() if exceeds(s, t)), ZERO) for t in range(c.horizon + 1)}


def verify_coupling(c: LayeredCoupling) -> CheckReport:
    """Exact marginals and sigma-layer structure; every offence is listed."""
    A, T = c.alphabet, c.horizon
    fmt = A.format_path
    violations = []
    for sigma, p1, p2, m in c.atoms():
        where = {"sigma": sigma_label(sigma), "path1": fmt(p1), "path2": fmt(p2), "mass": m}
        if len(p1) != T + 1 or len(p2) != T + 1:
            violations.append({"kind": "path_length", **where})
            continue
        if m <= 0:
            violations.append({"kind": "nonpositive_mass", **where})
        actual = first_disagreement(p1, p2)
        if actual != sigma:
            violations.append({"kind": "layer_structure", "actual_sigma": sigma_label(actual), **where})

    bad_paths: list[set[Path]] = [set(), set()]
    for i, law in ((1, c.law1), (2, c.law2)):
        acc: dict[Path, Fraction] = defaultdict(Fraction)
        for _, p1, p2, m in c.atoms():
            acc[p1 if i == 1 else p2] += m
        for p in sorted(set(acc) | set(law.paths.atoms)):
            if acc.get(p, ZERO) != law.paths[p]:
                bad_paths[i - 1].add(p)
                violations.append({
                    "kind": "marginal", "side": i, "path": fmt(p),
                    "coupling_mass": acc.get(p, ZERO), "law_mass": law.paths[p],
                })
    suspects = [
        {"sigma": sigma_label(s), "path1": fmt(p1), "path2": fmt(p2), "mass": m}
        for s, p1, p2, m in c.atoms()
        if p1 in bad_paths[0] and p2 in bad_paths[1]
    ]
    total = sum((m for *_, m in c.atoms()), ZERO)
    return CheckReport(
        "coupling", not violations, violations,
        {"total_mass": total, "suspect_atoms": suspects, "mode": c.mode},
    )


def verify_maximality(c: LayeredCoupling) -> CheckReport:
    """Compare ``P(sigma > t)`` with ``1 - TV`` over times ``0..t`` for every ``t``."""
    achieved = agreement_profile(c)
    rows, violations = [], []
    for t, value in achieved.items():
        ceiling = ONE - tv_distance(c.law1, c.law2, t)
        row = {"t": t, "achieved": value, "ceiling": ceiling, "shortfall": ceiling - value, "equal": value == ceiling}
        rows.append(row)
        if value != ceiling:
            violations.append({"kind": "exceeds_ceiling" if value > ceiling else "shortfall", **row})
    return CheckReport("maximality", not violations, violations, {"profile": rows, "mode": c.mode})


def conditional_marginal_check(c: LayeredCoupling, t: int) -> CheckReport:
    """Full-path law of side ``i`` given its prefix ``z`` (level ``t + 1``) and ``sigma >= t``.

    Compared against the law's own conditional ``mu_i( . | z)`` for every
    prefix carrying positive mass on the event.
    """
    fmt = c.alphabet.format_path
    violations, checked = [], 0
    for i, law in ((1, c.law1), (2, c.law2)):
        side = c.side(i, lambda s: s is BEYOND or s >= t)
        groups: dict[Path, dict[Path, Fraction]] = defaultdict(dict)
        for p, m in side.items():
            groups[p[: t + 1]][p] = m
        for z, group in sorted(groups.items()):
            checked += 1
            weight = sum(group.values(), ZERO)
            target = law.path_conditional(z)
            for p in sorted(set(group) | set(target)):
                got = group.get(p, ZERO) / weight
                want = target.get(p, ZERO)
                if got != want:
                    violations.append({
                        "side": i, "t": t, "prefix": fmt(z), "path": fmt(p),
                        "coupling_conditional": got, "law_conditional": want,
                    })
    return CheckReport(f"conditional_marginals[t={t}]", not violations, violations, {"prefixes_checked": checked})


def conditional_marginal_check_all(c: LayeredCoupling) -> CheckReport:
    reports = [conditional_marginal_check(c, t) for t in range(c.horizon + 1)]
    violations = [v for r in reports for v in r.violations]
    return CheckReport(
        "conditional_marginals", not violations, violations,
        {"per_t": {t: r.passed for t, r in enumerate(reports)}},
    )


def check_ladder(ladder: ConstructionLadder, law1: ProcessLaw, law2: ProcessLaw) -> CheckReport:
    """Monotonicity, layer differences and (for the recursive ladder) restriction identities."""
    violations = []
    T = law1.horizon
    for i in (0, 1):
        for t in range(T + 1):
            hi, lo = ladder.mu_bar[t][i], ladder.mu_bar[t + 1][i]
            if not dominated(lo, hi):
                violations.append({"kind": "mu_bar_not_monotone", "side": i + 1, "t": t})
                continue
            if subtract(hi, lo) != ladder.mu_layer[t][i]:
                violations.append({"kind": "layer_not_difference", "side": i + 1, "t": t})
            if restrict(lo, t) != ladder.pi[t]:
                violations.append({"kind": "restriction_not_pi", "side": i + 1, "t": t})
    if ladder.mu_bar[0][0] != law1.paths or ladder.mu_bar[0][1] != law2.paths:
        violations.append({"kind": "ladder_start_not_laws"})
    return CheckReport("ladder", not violations, violations, {"mode": ladder.mode})


def _conditional_mismatches(m: PathMeasure, law: ProcessLaw, min_level: int) -> list[dict]:
    """Levels ``l >= min_level`` where a one-step conditional of ``m`` differs from the law's."""
    out = []
    for level in range(min_level, law.horizon + 1):
        here = marginal(m, level)
        nxt = marginal(m, level + 1)
        table = law.step_conditionals(level)
        for z, mass in here.items():
            want = table.get(z)
            got = {w[-1]: wm / mass for w, wm in nxt.items() if w[:-1] == z}
            if want is None or got != want:
                out.append({"level": level, "prefix": m.alphabet.format_path(z)})
    return out


def ladder_conditional_check(ladder: ConstructionLadder, law1: ProcessLaw, law2: ProcessLaw) -> CheckReport:
    """Continuation conditionals of ``mu_bar[t]`` (levels >= t) and ``mu_layer[t]`` (levels >= t+1)."""
    violations = []
    for i, law in ((0, law1), (1, law2)):
        for t in range(law.horizon + 1):
            for v in _conditional_mismatches(ladder.mu_bar[t][i], law, t):
                violations.append({"measure": "mu_bar", "side": i + 1, "t": t, **v})
            for v in _conditional_mismatches(ladder.mu_layer[t][i], law, t + 1):
                violations.append({"measure": "mu_layer", "side": i + 1, "t": t, **v})
    return CheckReport("ladder_conditionals", not violations, violations, {"mode": ladder.mode})


# -- regrafting post-decoupling continuations ---------------------------------

Suffix = tuple[int, ...]
Recoupler = Callable[[Mapping[Suffix, Fraction], Mapping[Suffix, Fraction]], Iterable[tuple[Suffix, Suffix, Fraction]]]


def independent_product(nu1: Mapping[Suffix, Fraction], nu2: Mapping[Suffix, Fraction]):
    for s1, a in nu1.items():
        for s2, b in nu2.items():
            yield s1, s2, a * b


def greedy_meet(nu1: Mapping[Suffix, Fraction], nu2: Mapping[Suffix, Fraction]):
    """Pair identical continuations first, couple the remainders independently."""
    common = {s: min(a, nu2[s]) for s, a in nu1.items() if s in nu2}
    for s, m in common.items():
        if m:
            yield s, s, m
    rest = ONE - sum(common.values(), ZERO)
    if not rest:
        return
    r1 = {s: a - common.get(s, ZERO) for s, a in nu1.items() if a != common.get(s, ZERO)}
    r2 = {s: b - common.get(s, ZERO) for s, b in nu2.items() if b != common.get(s, ZERO)}
    for s1, a in r1.items():
        for s2, b in r2.items():
            yield s1, s2, a * b / rest


def regraft(c: LayeredCoupling, policy: Recoupler = independent_product) -> LayeredCoupling:
    """Replace the post-decoupling continuations of every layer ``sigma = t < T``.

    Atoms of layer ``t`` are grouped by their prefix pair at level ``t + 1``.
    The policy receives the group's two continuation laws (over the suffix
    ``t+1..T``) and must return a coupling of them, which is rejected with
    diagnostics otherwise.  The ``BEYOND`` layer is left untouched.
    """
    fmt = c.alphabet.format_path
    layers: dict[SigmaValue, list[Atom]] = {}
    for sigma, atoms in c.layers.items():
        if sigma is BEYOND or sigma == c.horizon:
            layers[sigma] = list(atoms)
            continue
        cut = sigma + 1
        groups: dict[tuple[Path, Path], list[Atom]] = defaultdict(list)
        for atom in atoms:
            groups[atom[0][:cut], atom[1][:cut]].append(atom)
        out: list[Atom] = []
        for (z1, z2), group in sorted(groups.items()):
            weight = sum((m for _, _, m in group), ZERO)
            nu = [defaultdict(Fraction), defaultdict(Fraction)]
            for p1, p2, m in group:
                nu[0][p1[cut:]] += m / weight
                nu[1][p2[cut:]] += m / weight
            proposal = [(tuple(s1), tuple(s2), Fraction(m)) for s1, s2, m in policy(dict(nu[0]), dict(nu[1]))]
            got = [defaultdict(Fraction), defaultdict(Fraction)]
            for s1, s2, m in proposal:
                if m < 0 or len(s1) != c.horizon + 1 - cut or len(s2) != c.horizon + 1 - cut:
                    raise RegraftError(f"sigma={sigma} prefixes ({fmt(z1)}, {fmt(z2)}): malformed atom {(s1, s2, m)!r}")
                got[0][s1] += m
                got[1][s2] += m
            for i in (0, 1):
                diff = {
                    fmt(s): (got[i].get(s, ZERO), nu[i].get(s, ZERO))
                    for s in set(got[i]) | set(nu[i])
                    if got[i].get(s, ZERO) != nu[i].get(s, ZERO)
                }
                if diff:
                    raise RegraftError(
                        f"sigma={sigma} prefixes ({fmt(z1)}, {fmt(z2)}): side-{i + 1} marginal mismatch "
                        f"(proposed, required) = {diff}"
                    )
            out.extend((z1 + s1, z2 + s2, m * weight) for s1, s2, m in proposal if m)
        merged: dict[tuple[Path, Path], Fraction] = defaultdict(Fraction)
        for p1, p2, m in out:
            merged[p1, p2] += m
        layers[sigma] = [(p1, p2, m) for (p1, p2), m in merged.items()]
    return LayeredCoupling(c.law1, c.law2, layers, c.mode)


# -- export --------------------------------------------------------------------


def coupling_to_json(c: LayeredCoupling) -> dict:
    fmt = c.alphabet.format_path
    return {
        "kind": "layered_coupling",
        "mode": c.mode,
        "alphabet": list(c.alphabet.symbols),
        "horizon": c.horizon,
        "layers": [
            {"sigma": sigma_label(s), "path1": fmt(p1), "path2": fmt(p2), "mass": format_rational(m)}
            for s, p1, p2, m in c.atoms()
        ],
    }


_ATOM_FIELDS = {"sigma", "path1", "path2", "mass"}
_COUPLING_FIELDS = {"kind", "mode", "alphabet", "horizon", "layers"}


def coupling_from_json(data: dict, law1: ProcessLaw, law2: ProcessLaw) -> LayeredCoupling:
    """Inverse of :func:`coupling_to_json`; the laws come from the matching instance.

    The declared sigma of each atom is kept as written so that tampering
    shows up in :func:`verify_coupling` rather than being silently repaired.
    """
    if not isinstance(data, dict) or set(data) != _COUPLING_FIELDS or data["kind"] != "layered_coupling":
        raise CouplingFormatError("not a layered coupling export")
    if list(data["alphabet"]) != list(law1.alphabet.symbols) or data["horizon"] != law1.horizon:
        raise CouplingFormatError("coupling alphabet/horizon do not match the instance")
    A = law1.alphabet
    layers: dict[SigmaValue, list[Atom]] = defaultdict(list)
    for entry in data["layers"]:
        if not isinstance(entry, dict) or set(entry) != _ATOM_FIELDS:
            raise CouplingFormatError(f"bad atom entry {entry!r}")
        try:
            p1, p2 = A.parse_path(entry["path1"]), A.parse_path(entry["path2"])
            mass = parse_rational(entry["mass"])
        except ValueError as exc:
            raise CouplingFormatError(str(exc)) from exc
        layers[parse_sigma(entry["sigma"])].append((p1, p2, mass))
    return LayeredCoupling(law1, law2, layers, data["mode"])
