"""Exact sparse measures on path prefixes.

A :class:`PathMeasure` is a finite sub-probability measure on words of a
fixed length (its *level*) over an :class:`Alphabet`.  Level ``t + 1`` holds
the information of the coordinates ``0..t``, so "restrict to time ``t``"
means "marginalise to level ``t + 1``".  Masses are :class:`fractions.Fraction`
throughout; nothing in here touches floating point.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

Path = tuple[int, ...]

ZERO = Fraction(0)
ONE = Fraction(1)


class MeasureError(ValueError):
    """Base class for measure-algebra failures."""


class LevelError(MeasureError):
    pass


class AlphabetMismatch(MeasureError):
    pass


class DominationError(MeasureError):
    pass


class ConditioningError(MeasureError):
    """Conditioning on a prefix of zero mass."""


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise ValueError("alphabet must contain at least one symbol")
        if any(not isinstance(s, str) or not s for s in symbols):
            raise ValueError(f"alphabet symbols must be non-empty strings: {symbols!r}")
        if len(set(symbols)) != len(symbols):
            raise ValueError(f"duplicate alphabet symbols: {symbols!r}")

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise ValueError(f"unknown symbol {symbol!r}; alphabet is {self.symbols!r}") from None

    @property
    def _compact(self) -> bool:
        return all(len(s) == 1 for s in self.symbols)

    def format_path(self, path: Sequence[int]) -> str:
        """Render a path; single-character alphabets concatenate, others space-join."""
        sep = "" if self._compact else " "
        return sep.join(self.symbols[i] for i in path)

    def parse_path(self, text: str | Sequence[str]) -> Path:
        if not isinstance(text, str):
            return tuple(self.index(s) for s in text)
        if self._compact:
            return tuple(self.index(c) for c in text)
        return tuple(self.index(s) for s in text.split())


def _clean_atoms(alphabet: Alphabet, level: int, atoms: Mapping[Path, Fraction]) -> dict[Path, Fraction]:
    out = {}
    for path, mass in atoms.items():
        path = tuple(path)
        if len(path) != level:
            raise LevelError(f"atom {path!r} has length {len(path)}, measure level is {level}")
        if any(not 0 <= i < alphabet.size for i in path):
            raise ValueError(f"atom {path!r} uses an index outside the alphabet")
        mass = Fraction(mass)
        if mass < 0:
            raise ValueError(f"negative mass {mass} on atom {path!r}")
        if mass:
            out[path] = mass
    return out


@dataclass(frozen=True, eq=False)
class PathMeasure:
    """Sub-probability measure on words of length ``level``.

    Zero atoms are dropped on construction and the mapping is read-only.
    """

    alphabet: Alphabet
    level: int
    atoms: Mapping[Path, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.level < 0:
            raise LevelError(f"negative level {self.level}")
        cleaned = _clean_atoms(self.alphabet, self.level, self.atoms)
        if sum(cleaned.values(), ZERO) > 1:
            raise ValueError("total mass exceeds 1")
        object.__setattr__(self, "atoms", MappingProxyType(cleaned))

    def __eq__(self, other):
        if not isinstance(other, PathMeasure):
            return NotImplemented
        return (
            self.alphabet == other.alphabet
            and self.level == other.level
            and dict(self.atoms) == dict(other.atoms)
        )

    __hash__ = None

    def __getitem__(self, path: Sequence[int]) -> Fraction:
        return self.atoms.get(tuple(path), ZERO)

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def items(self):
        return self.atoms.items()

    @property
    def support(self) -> frozenset[Path]:
        return frozenset(self.atoms)

    def __repr__(self):
        body = ", ".join(
            f"{self.alphabet.format_path(p) or '()'}: {m}" for p, m in sorted(self.atoms.items())
        )
        return f"PathMeasure(level={self.level}, {{{body}}})"

    def to_labels(self) -> dict[str, Fraction]:
        return {self.alphabet.format_path(p): m for p, m in sorted(self.atoms.items())}


def empty(alphabet: Alphabet, level: int) -> PathMeasure:
    return PathMeasure(alphabet, level, {})


def unit(alphabet: Alphabet) -> PathMeasure:
    """Unit mass on the empty prefix (level 0)."""
    return PathMeasure(alphabet, 0, {(): ONE})


def _check_compatible(m1: PathMeasure, m2: PathMeasure) -> None:
    if m1.alphabet != m2.alphabet:
        raise AlphabetMismatch(f"{m1.alphabet.symbols!r} vs {m2.alphabet.symbols!r}")
    if m1.level != m2.level:
        raise LevelError(f"level mismatch: {m1.level} vs {m2.level}")


def total_mass(m: PathMeasure) -> Fraction:
    return sum(m.atoms.values(), ZERO)


def marginal(m: PathMeasure, level: int) -> PathMeasure:
    """Marginalise onto the first ``level`` coordinates (``0 <= level <= m.level``)."""
    if not 0 <= level <= m.level:
        raise LevelError(f"cannot marginalise level-{m.level} measure to level {level}")
    if level == m.level:
        return m
    acc: dict[Path, Fraction] = defaultdict(Fraction)
    for path, mass in m.atoms.items():
        acc[path[:level]] += mass
    return PathMeasure(m.alphabet, level, acc)


def restrict(m: PathMeasure, t: int) -> PathMeasure:
    """Restriction to the sigma-algebra of times ``0..t`` (level ``t + 1``)."""
    if t + 1 > m.level or t < -1:
        raise LevelError(f"restrict to time {t} needs level >= {t + 1}, measure has {m.level}")
    return marginal(m, t + 1)


def meet(m1: PathMeasure, m2: PathMeasure) -> PathMeasure:
    """Largest measure below both arguments: the atomwise minimum."""
    _check_compatible(m1, m2)
    small, big = (m1, m2) if len(m1) <= len(m2) else (m2, m1)
    return PathMeasure(
        m1.alphabet,
        m1.level,
        {p: min(mass, big[p]) for p, mass in small.atoms.items() if p in big.atoms},
    )


def add(m1: PathMeasure, m2: PathMeasure) -> PathMeasure:
    _check_compatible(m1, m2)
    acc = dict(m1.atoms)
    for p, mass in m2.atoms.items():
        acc[p] = acc.get(p, ZERO) + mass
    return PathMeasure(m1.alphabet, m1.level, acc)


def subtract(m1: PathMeasure, m2: PathMeasure) -> PathMeasure:
    """Atomwise ``m1 - m2``; requires ``m2 <= m1``."""
    _check_compatible(m1, m2)
    acc = dict(m1.atoms)
    for p, mass in m2.atoms.items():
        have = acc.get(p, ZERO)
        if mass > have:
            raise DominationError(
                f"cannot subtract {mass} from {have} at atom {m1.alphabet.format_path(p)!r}"
            )
        acc[p] = have - mass
    return PathMeasure(m1.alphabet, m1.level, acc)


def dominated(m1: PathMeasure, m2: PathMeasure) -> bool:
    """True iff ``m1 <= m2`` atomwise."""
    _check_compatible(m1, m2)
    return all(mass <= m2[p] for p, mass in m1.atoms.items())


def scale(m: PathMeasure, factor: Fraction) -> PathMeasure:
    return PathMeasure(m.alphabet, m.level, {p: mass * factor for p, mass in m.atoms.items()})


def one_step_conditional(law, z: Sequence[int]) -> dict[int, Fraction]:
    """Law of the next coordinate given the prefix ``z``.

    Returns a mapping symbol index -> probability over the positive entries.
    ``law`` is a :class:`~maxagree.lawmodels.ProcessLaw`.
    """
    z = tuple(z)
    if len(z) > law.horizon:
        raise LevelError(f"prefix of length {len(z)} has no next coordinate within horizon {law.horizon}")
    table = law.step_conditionals(len(z))
    if z not in table:
        raise ConditioningError(f"prefix {law.alphabet.format_path(z)!r} has zero mass")
    return dict(table[z])


def conditional_of(m: PathMeasure, z: Sequence[int]) -> dict[int, Fraction]:
    """One-step conditional of a measure at level ``len(z) + 1`` given prefix ``z``."""
    z = tuple(z)
    if m.level != len(z) + 1:
        raise LevelError(f"measure level {m.level} does not extend prefix of length {len(z)}")
    weights = {p[-1]: mass for p, mass in m.atoms.items() if p[:-1] == z}
    denom = sum(weights.values(), ZERO)
    if not denom:
        raise ConditioningError(f"prefix {m.alphabet.format_path(z)!r} has zero mass")
    return {e: w / denom for e, w in weights.items()}


def extend_proportional(prefix_measure: PathMeasure, law, to_level: int) -> PathMeasure:
    """Spread every prefix atom over its extensions using the law's conditionals."""
    level = prefix_measure.level
    if prefix_measure.alphabet != law.alphabet:
        raise AlphabetMismatch("prefix measure and law use different alphabets")
    if not level <= to_level <= law.horizon + 1:
        raise LevelError(f"cannot extend level {level} to level {to_level} (horizon {law.horizon})")
    base = law.marginal(level)
    children = law.extensions(level, to_level)
    out: dict[Path, Fraction] = {}
    for z, mass in prefix_measure.atoms.items():
        denom = base[z]
        if not denom:
            raise ConditioningError(
                f"prefix {law.alphabet.format_path(z)!r} has zero mass under the law"
            )
        ratio = mass / denom
        for w, wmass in children[z]:
            out[w] = wmass * ratio
    return PathMeasure(law.alphabet, to_level, out)


def tv_distance(law1, law2, t: int) -> Fraction:
    """Total variation over times ``0..t``: one minus the mass of the meet."""
    if law1.alphabet != law2.alphabet:
        raise AlphabetMismatch("laws use different alphabets")
    if law1.horizon != law2.horizon:
        raise LevelError(f"horizon mismatch: {law1.horizon} vs {law2.horizon}")
    if not 0 <= t <= law1.horizon:
        raise LevelError(f"time {t} outside 0..{law1.horizon}")
    return ONE - total_mass(meet(law1.marginal(t + 1), law2.marginal(t + 1)))


def from_pairs(alphabet: Alphabet, level: int, pairs: Iterable[tuple[Path, Fraction]]) -> PathMeasure:
    """Build a measure summing masses of repeated paths."""
    acc: dict[Path, Fraction] = defaultdict(Fraction)
    for path, mass in pairs:
        acc[tuple(path)] += mass
    return PathMeasure(alphabet, level, acc)
