"""Hazard rates and the decoupling-time lower bound ``tau``.

``tau`` is built by thinning: each atom of a layered coupling is split over
the values of ``tau`` so that ``tau <= sigma`` holds on every atom and
``tau`` is exactly independent of the first path, with hazard ``kappa_hat[t]``.

The per-atom survival weight at time ``t`` is
``(1 - kappa_hat[t]) / (1 - h_t(p))`` where ``h_t(p)`` is the conditional
probability of decoupling at ``t`` given ``sigma >= t`` and the first path
``p``.  With ``resolution="path"`` (default) ``p`` is the full first path,
which gives exact independence for every coupling.  ``resolution="prefix"``
uses only the prefix ``p[0..t]``; the two coincide for recursive-ladder
couplings, whose layers continue along the laws' own conditionals.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Literal

from .coupling import BEYOND, CouplingFormatError, LayeredCoupling, SigmaValue, exceeds, parse_sigma, sigma_label
from .lawmodels import ProcessLaw
from .measure import ONE, ZERO, Path
from .rational import format_rational, parse_rational, to_jsonable
from .report import CheckReport


class TauConstructionError(RuntimeError):
    pass


Resolution = Literal["path", "prefix"]


def _common_histories(law1: ProcessLaw, law2: ProcessLaw, t: int) -> list[Path]:
    """Level-``t`` prefixes carrying positive mass under both laws."""
    other = law2.marginal(t)
    return sorted(z for z in law1.marginal(t) if other[z])


def kappa(law1: ProcessLaw, law2: ProcessLaw, t: int) -> Fraction:
    """One minus the worst one-step likelihood ratio of law2 against law1 at time ``t``.

    The infimum over sets of next symbols is attained on a single symbol, so
    only singletons are scanned.  Histories that either law cannot produce
    are excluded; with no common history the hazard is 1.
    """
    if not 0 <= t <= law1.horizon:
        raise ValueError(f"time {t} outside 0..{law1.horizon}")
    c1, c2 = law1.step_conditionals(t), law2.step_conditionals(t)
    worst = None
    for z in _common_histories(law1, law2, t):
        for e, p in c1[z].items():
            ratio = c2[z].get(e, ZERO) / p
            if worst is None or ratio < worst:
                worst = ratio
    return ONE if worst is None else ONE - worst


@dataclass(frozen=True)
class HazardProfile:
    """Per-time hazards of a coupling.

    ``kappa_conditional[t]`` maps level-``t + 1`` first-path prefixes and
    ``kappa_path[t]`` full first paths to ``P(sigma = t | ., sigma >= t)``.
    ``kappa_effective[t]`` is the hazard used for ``tau``.
    """

    kappa_formula: tuple[Fraction, ...]
    kappa_conditional: tuple[dict[Path, Fraction], ...]
    kappa_path: tuple[dict[Path, Fraction], ...]
    kappa_effective: tuple[Fraction, ...]

    @property
    def horizon(self) -> int:
        return len(self.kappa_formula) - 1

    def max_conditional(self, t: int) -> Fraction:
        return max(self.kappa_conditional[t].values(), default=ZERO)

    def max_path(self, t: int) -> Fraction:
        return max(self.kappa_path[t].values(), default=ZERO)

    def within_formula(self, t: int) -> bool:
        return self.max_conditional(t) <= self.kappa_formula[t]


def _hazards(c: LayeredCoupling, t: int, cut: int) -> dict[Path, Fraction]:
    hit: dict[Path, Fraction] = defaultdict(Fraction)
    alive: dict[Path, Fraction] = defaultdict(Fraction)
    for s, p1, _, m in c.atoms():
        if s is BEYOND or s >= t:
            alive[p1[:cut]] += m
            if s == t:
                hit[p1[:cut]] += m
    return {z: hit.get(z, ZERO) / a for z, a in sorted(alive.items())}


def kappa_profile(c: LayeredCoupling) -> HazardProfile:
    T = c.horizon
    formula = tuple(kappa(c.law1, c.law2, t) for t in range(T + 1))
    cond = tuple(_hazards(c, t, t + 1) for t in range(T + 1))
    path = tuple(_hazards(c, t, T + 1) for t in range(T + 1))
    effective = tuple(
        max(formula[t], max(cond[t].values(), default=ZERO), max(path[t].values(), default=ZERO))
        for t in range(T + 1)
    )
    return HazardProfile(formula, cond, path, effective)


TauAtom = tuple[SigmaValue, Path, Path, SigmaValue, Fraction]


@dataclass(frozen=True, eq=False)
class ExtendedCoupling:
    """Atoms ``(sigma, path1, path2, tau, mass)`` extending a layered coupling."""

    base: LayeredCoupling
    atoms: tuple[TauAtom, ...]
    hazards: HazardProfile
    resolution: str = "path"

    @property
    def horizon(self) -> int:
        return self.base.horizon

    def tau_distribution(self) -> dict[SigmaValue, Fraction]:
        out: dict[SigmaValue, Fraction] = defaultdict(Fraction)
        for *_, tau, m in self.atoms:
            out[tau] += m
        return dict(sorted(out.items()))

    def survival(self) -> dict[int, Fraction]:
        """``t -> P(tau > t)``."""
        dist = self.tau_distribution()
        return {t: sum((m for v, m in dist.items() if exceeds(v, t)), ZERO) for t in range(self.horizon + 1)}


def extend_with_tau(c: LayeredCoupling, profile: HazardProfile | None = None,
                    resolution: Resolution = "path") -> ExtendedCoupling:
    """Split every atom over ``tau`` values by thinning with independent bits.

    With ``resolution="prefix"`` the hazard ignores full-path information,
    both in the thinning weights and in ``kappa_hat``; independence from the
    first path then only holds when the coupling's path and prefix hazards agree.
    """
    profile = profile or kappa_profile(c)
    T = c.horizon
    if resolution == "path":
        table, cut = profile.kappa_path, T + 1
    elif resolution == "prefix":
        table, cut = profile.kappa_conditional, None
        profile = replace(profile, kappa_effective=tuple(
            max(profile.kappa_formula[t], profile.max_conditional(t)) for t in range(T + 1)))
    else:
        raise ValueError(f"unknown hazard resolution {resolution!r}")
    fmt = c.alphabet.format_path
    out: dict[tuple, Fraction] = defaultdict(Fraction)
    for sigma, p1, p2, m in c.atoms():
        alive = m
        for t in range(T + 1):
            if alive == 0:
                break
            if sigma == t:
                out[sigma, p1, p2, t] += alive
                alive = ZERO
                break
            key = p1 if cut else p1[: t + 1]
            h = table[t].get(key)
            if h is None or h >= 1:
                raise TauConstructionError(f"t={t}, z={fmt(key)}: no surviving agreement mass to thin against")
            stay = (ONE - profile.kappa_effective[t]) / (ONE - h)
            if not ZERO <= stay <= ONE:
                raise TauConstructionError(f"t={t}, z={fmt(key)}: thinning weight {stay} outside [0, 1]")
            if alive * (ONE - stay):
                out[sigma, p1, p2, t] += alive * (ONE - stay)
            alive *= stay
        if alive:
            out[sigma, p1, p2, BEYOND] += alive
    atoms = tuple(sorted(((s, p1, p2, tau, m) for (s, p1, p2, tau), m in out.items() if m),
                         key=lambda a: (a[0], a[1], a[2], a[3])))
    return ExtendedCoupling(c, atoms, profile, resolution)


def _tau_values(T: int) -> list[SigmaValue]:
    return list(range(T + 1)) + [BEYOND]


def verify_tau(ec: ExtendedCoupling) -> CheckReport:
    """Projection, independence from path 1, ``tau <= sigma``, hazard and survival identities.

    Whether the hazard actually used equals the closed-form value is
    reported per ``t`` in ``details`` without affecting ``passed``.
    """
    c, T = ec.base, ec.horizon
    fmt = c.alphabet.format_path
    violations = []

    projected: dict[tuple, Fraction] = defaultdict(Fraction)
    for s, p1, p2, _, m in ec.atoms:
        projected[s, p1, p2] += m
    base = {(s, p1, p2): m for s, p1, p2, m in c.atoms()}
    for key in sorted(set(projected) | set(base), key=lambda k: (k[0], k[1], k[2])):
        if projected.get(key, ZERO) != base.get(key, ZERO):
            violations.append({"check": "projection", "sigma": sigma_label(key[0]),
                               "path1": fmt(key[1]), "path2": fmt(key[2])})

    joint: dict[tuple[Path, SigmaValue], Fraction] = defaultdict(Fraction)
    row: dict[Path, Fraction] = defaultdict(Fraction)
    col: dict[SigmaValue, Fraction] = defaultdict(Fraction)
    for s, p1, p2, tau, m in ec.atoms:
        joint[p1, tau] += m
        row[p1] += m
        col[tau] += m
        if not tau <= s:
            violations.append({"check": "tau_le_sigma", "sigma": sigma_label(s), "tau": sigma_label(tau),
                               "path1": fmt(p1), "path2": fmt(p2), "mass": m})
    for p in sorted(row):
        for v in _tau_values(T):
            if joint.get((p, v), ZERO) != row[p] * col.get(v, ZERO):
                violations.append({"check": "independence", "path1": fmt(p), "tau": sigma_label(v),
                                   "joint": joint.get((p, v), ZERO), "product": row[p] * col.get(v, ZERO)})

    hazard_rows = []
    survival = ONE
    for t in range(T + 1):
        at_risk = sum((m for v, m in col.items() if v is BEYOND or v >= t), ZERO)
        observed = col.get(t, ZERO) / at_risk if at_risk else None
        k_hat = ec.hazards.kappa_effective[t]
        survival *= ONE - k_hat
        tail = at_risk - col.get(t, ZERO)
        hazard_rows.append({"t": t, "kappa_hat": k_hat, "observed": observed, "survival": tail,
                            "survival_product": survival})
        if observed is not None and observed != k_hat:
            violations.append({"check": "hazard", "t": t, "observed": observed, "kappa_hat": k_hat})
        if tail != survival:
            violations.append({"check": "survival", "t": t, "observed": tail, "product": survival})
    beyond = col.get(BEYOND, ZERO)
    if (beyond > 0) != all(k < 1 for k in ec.hazards.kappa_effective):
        violations.append({"check": "beyond_positive", "p_beyond": beyond})

    matches = [ec.hazards.kappa_effective[t] == ec.hazards.kappa_formula[t] for t in range(T + 1)]
    return CheckReport(
        "tau", not violations, violations,
        {"hazards": hazard_rows, "kappa_matches_formula": matches,
         "tau_distribution": {sigma_label(v): m for v, m in sorted(col.items())},
         "resolution": ec.resolution},
    )


def density_check(c: LayeredCoupling) -> CheckReport:
    """Ratio of ``sigma >= t`` to ``sigma > t`` prefix mass equals ``1 / (1 - kappa_t(z))``."""
    profile = kappa_profile(c)
    fmt = c.alphabet.format_path
    violations = []
    for t in range(c.horizon + 1):
        ge: dict[Path, Fraction] = defaultdict(Fraction)
        gt: dict[Path, Fraction] = defaultdict(Fraction)
        for s, p1, _, m in c.atoms():
            if s is BEYOND or s >= t:
                ge[p1[: t + 1]] += m
                if exceeds(s, t):
                    gt[p1[: t + 1]] += m
        for z, num in sorted(gt.items()):
            if num and ge[z] / num != ONE / (ONE - profile.kappa_conditional[t][z]):
                violations.append({"t": t, "prefix": fmt(z)})
    return CheckReport("density", not violations, violations)


# -- countable-alphabet bounds -------------------------------------------------


@dataclass(frozen=True)
class CountableBounds:
    """Minimal one-step conditionals and the two resulting hazard bounds.

    ``bound_b`` uses ``max(mu2 - mu1)`` over next symbols; ``bound_b_reversed``
    uses ``max(mu1 - mu2)``, which is the difference a singleton ratio sees.
    ``None`` marks quantities that are undefined because no history is
    common to both laws.
    """

    t: int
    delta1: Fraction | None
    delta2: Fraction | None
    bound_a: Fraction
    bound_b: Fraction | None
    bound_b_reversed: Fraction | None
    kappa: Fraction

    @property
    def holds_a(self) -> bool:
        return self.kappa <= self.bound_a

    @property
    def holds_b(self) -> bool:
        return self.bound_b is None or self.kappa <= self.bound_b

    @property
    def holds_b_reversed(self) -> bool:
        return self.bound_b_reversed is None or self.kappa <= self.bound_b_reversed

    def as_tuple(self):
        return self.delta1, self.delta2, self.bound_a, self.bound_b

    def to_json(self) -> dict:
        return to_jsonable({
            "t": self.t, "delta1": self.delta1, "delta2": self.delta2, "bound_a": self.bound_a,
            "bound_b": self.bound_b, "bound_b_reversed": self.bound_b_reversed, "kappa": self.kappa,
            "holds_a": self.holds_a, "holds_b": self.holds_b, "holds_b_reversed": self.holds_b_reversed,
        })


def _bounds_from_rows(t: int, rows: Iterable[tuple[dict[int, Fraction], dict[int, Fraction]]],
                      kappa_value: Fraction) -> CountableBounds:
    d1 = d2 = diff = rdiff = None
    for c1, c2 in rows:
        for e, p in c1.items():
            d1 = p if d1 is None else min(d1, p)
            q = c2.get(e, ZERO)
            d2 = q if d2 is None else min(d2, q)
        for e in set(c1) | set(c2):
            up = c2.get(e, ZERO) - c1.get(e, ZERO)
            diff = up if diff is None else max(diff, up)
            rdiff = -up if rdiff is None else max(rdiff, -up)
    if d1 is None:
        return CountableBounds(t, None, None, ONE, None, None, kappa_value)
    return CountableBounds(t, d1, d2, ONE - d2, diff / d1, rdiff / d1, kappa_value)


def countable_bounds(law1: ProcessLaw, law2: ProcessLaw, t: int) -> CountableBounds:
    """Bounds on ``kappa(t)`` from the smallest one-step conditionals at time ``t``."""
    c1, c2 = law1.step_conditionals(t), law2.step_conditionals(t)
    rows = [(c1[z], c2[z]) for z in _common_histories(law1, law2, t)]
    return _bounds_from_rows(t, rows, kappa(law1, law2, t))


def _two_step(law: ProcessLaw, t: int) -> dict[Path, dict[int, Fraction]]:
    """Law of ``Z_t`` given the history ``Z_0..Z_{t-2}``."""
    level = t - 1
    base = law.marginal(level)
    acc: dict[Path, dict[int, Fraction]] = defaultdict(lambda: defaultdict(Fraction))
    for w, m in law.marginal(t + 1).items():
        acc[w[:level]][w[-1]] += m / base[w[:level]]
    return {z: dict(row) for z, row in acc.items()}


def countable_bounds_variants(law1: ProcessLaw, law2: ProcessLaw) -> dict[str, list]:
    """The per-time reading next to two alternatives.

    ``offset``: histories one step shorter, conditionals two steps ahead
    (undefined at ``t = 0``).  ``uniform``: the minima taken over all times
    at once, giving one pair of bounds for the whole horizon.
    """
    T = law1.horizon
    per_t = [countable_bounds(law1, law2, t) for t in range(T + 1)]
    offset: list[CountableBounds | None] = [None]
    for t in range(1, T + 1):
        a, b = _two_step(law1, t), _two_step(law2, t)
        rows = [(a[z], b[z]) for z in sorted(a) if z in b]
        offset.append(_bounds_from_rows(t, rows, kappa(law1, law2, t)))
    all_rows = []
    for t in range(T + 1):
        c1, c2 = law1.step_conditionals(t), law2.step_conditionals(t)
        all_rows.extend((c1[z], c2[z]) for z in _common_histories(law1, law2, t))
    uniform = _bounds_from_rows(-1, all_rows, max(kappa(law1, law2, t) for t in range(T + 1)))
    return {"per_t": per_t, "offset": offset, "uniform": [uniform]}


# -- export --------------------------------------------------------------------


def hazard_report(c: LayeredCoupling) -> dict:
    profile = kappa_profile(c)
    rows = []
    for t in range(c.horizon + 1):
        b = countable_bounds(c.law1, c.law2, t)
        rows.append({
            "t": t,
            "kappa": profile.kappa_formula[t],
            "kappa_hat": profile.kappa_effective[t],
            "bound_a": b.bound_a,
            "bound_b": b.bound_b,
            "bound_b_reversed": b.bound_b_reversed,
            "delta1": b.delta1,
            "delta2": b.delta2,
            "max_conditional_hazard": profile.max_conditional(t),
            "max_path_hazard": profile.max_path(t),
            "flags": {
                "conditional_within_kappa": profile.within_formula(t),
                "kappa_hat_equals_kappa": profile.kappa_effective[t] == profile.kappa_formula[t],
                "bound_a_holds": b.holds_a,
                "bound_b_holds": b.holds_b,
            },
        })
    return to_jsonable({"kind": "hazard_report", "mode": c.mode, "per_t": rows})


def extended_to_json(ec: ExtendedCoupling) -> dict:
    c = ec.base
    fmt = c.alphabet.format_path
    return {
        "kind": "extended_coupling",
        "mode": c.mode,
        "resolution": ec.resolution,
        "alphabet": list(c.alphabet.symbols),
        "horizon": c.horizon,
        "kappa_hat": [format_rational(k) for k in ec.hazards.kappa_effective],
        "layers": [
            {"sigma": sigma_label(s), "path1": fmt(p1), "path2": fmt(p2), "tau": sigma_label(tau),
             "mass": format_rational(m)}
            for s, p1, p2, tau, m in ec.atoms
        ],
    }


def extended_from_json(data: dict, law1: ProcessLaw, law2: ProcessLaw) -> ExtendedCoupling:
    """Rebuild an extended coupling; hazards are recomputed from the projected coupling."""
    fields = {"kind", "mode", "resolution", "alphabet", "horizon", "kappa_hat", "layers"}
    if not isinstance(data, dict) or set(data) != fields or data["kind"] != "extended_coupling":
        raise CouplingFormatError("not an extended coupling export")
    if list(data["alphabet"]) != list(law1.alphabet.symbols) or data["horizon"] != law1.horizon:
        raise CouplingFormatError("extended coupling alphabet/horizon do not match the instance")
    A = law1.alphabet
    atoms, base = [], defaultdict(list)
    for entry in data["layers"]:
        if not isinstance(entry, dict) or set(entry) != {"sigma", "path1", "path2", "tau", "mass"}:
            raise CouplingFormatError(f"bad atom entry {entry!r}")
        try:
            s, tau = parse_sigma(entry["sigma"]), parse_sigma(entry["tau"])
            p1, p2, m = A.parse_path(entry["path1"]), A.parse_path(entry["path2"]), parse_rational(entry["mass"])
        except ValueError as exc:
            raise CouplingFormatError(str(exc)) from exc
        atoms.append((s, p1, p2, tau, m))
        base[s].append((p1, p2, m))
    merged = {s: _merge(v) for s, v in base.items()}
    c = LayeredCoupling(law1, law2, merged, data["mode"])
    profile = kappa_profile(c)
    try:
        declared = tuple(parse_rational(k) for k in data["kappa_hat"])
    except (TypeError, ValueError) as exc:
        raise CouplingFormatError(f"bad kappa_hat: {exc}") from exc
    if len(declared) != c.horizon + 1:
        raise CouplingFormatError("kappa_hat length does not match the horizon")
    if declared != profile.kappa_effective:
        profile = replace(profile, kappa_effective=declared)
    return ExtendedCoupling(c, tuple(atoms), profile, data["resolution"])


def _merge(atoms):
    acc: dict[tuple[Path, Path], Fraction] = defaultdict(Fraction)
    for p1, p2, m in atoms:
        acc[p1, p2] += m
    return [(p1, p2, m) for (p1, p2), m in acc.items()]
