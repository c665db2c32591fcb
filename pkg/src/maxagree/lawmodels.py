"""Process laws on a finite horizon and the ways to build them."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Sequence

from .measure import (
    ONE,
    ZERO,
    Alphabet,
    ConditioningError,
    Path,
    PathMeasure,
    marginal,
    one_step_conditional,
    total_mass,
)


class LawError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProcessLaw:
    """Probability measure on paths ``Z_0..Z_T`` (level ``T + 1``)."""

    alphabet: Alphabet
    horizon: int
    paths: PathMeasure
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.horizon < 0:
            raise LawError(f"negative horizon {self.horizon}")
        if self.paths.alphabet != self.alphabet:
            raise LawError("path measure alphabet differs from law alphabet")
        if self.paths.level != self.horizon + 1:
            raise LawError(f"path measure level {self.paths.level} != horizon + 1 = {self.horizon + 1}")
        mass = total_mass(self.paths)
        if mass != 1:
            raise LawError(f"law must have total mass 1, got {mass}")

    def __eq__(self, other):
        if not isinstance(other, ProcessLaw):
            return NotImplemented
        return self.horizon == other.horizon and self.paths == other.paths

    __hash__ = None

    def marginal(self, level: int) -> PathMeasure:
        key = ("marginal", level)
        if key not in self._cache:
            self._cache[key] = marginal(self.paths, level)
        return self._cache[key]

    def prefix_mass(self, z: Sequence[int]) -> Fraction:
        return self.marginal(len(z))[z]

    def extensions(self, level: int, to_level: int) -> dict[Path, list[tuple[Path, Fraction]]]:
        """Group the level-``to_level`` atoms by their level-``level`` prefix."""
        key = ("ext", level, to_level)
        if key not in self._cache:
            groups: dict[Path, list[tuple[Path, Fraction]]] = defaultdict(list)
            for w, mass in sorted(self.marginal(to_level).items()):
                groups[w[:level]].append((w, mass))
            self._cache[key] = dict(groups)
        return self._cache[key]

    def step_conditionals(self, level: int) -> dict[Path, dict[int, Fraction]]:
        """Next-symbol conditionals for every positive-mass prefix of length ``level``."""
        key = ("cond", level)
        if key not in self._cache:
            base = self.marginal(level)
            table = {}
            for z, children in self.extensions(level, level + 1).items():
                denom = base[z]
                table[z] = {w[-1]: m / denom for w, m in children}
            self._cache[key] = table
        return self._cache[key]

    def conditional(self, z: Sequence[int]) -> dict[int, Fraction]:
        return one_step_conditional(self, z)

    def path_conditional(self, z: Sequence[int]) -> dict[Path, Fraction]:
        """Law of the full path given the prefix ``z``."""
        z = tuple(z)
        denom = self.prefix_mass(z)
        if not denom:
            raise ConditioningError(f"prefix {self.alphabet.format_path(z)!r} has zero mass")
        return {w: m / denom for w, m in self.extensions(len(z), self.horizon + 1).get(z, [])}

    def to_labels(self) -> dict[str, Fraction]:
        return self.paths.to_labels()


def _as_path(alphabet: Alphabet, path) -> Path:
    if isinstance(path, str):
        return alphabet.parse_path(path)
    path = tuple(path)
    if all(isinstance(p, int) for p in path):
        return path
    return alphabet.parse_path(path)


def law_from_table(alphabet: Alphabet, horizon: int, entries: Iterable[tuple[object, Fraction]]) -> ProcessLaw:
    """Law given by explicit (path, mass) entries.

    Paths may be index tuples, symbol sequences or path strings.
    """
    atoms: dict[Path, Fraction] = {}
    for raw, mass in entries:
        path = _as_path(alphabet, raw)
        if len(path) != horizon + 1:
            raise LawError(f"path {raw!r} has length {len(path)}, expected {horizon + 1}")
        mass = Fraction(mass)
        if mass < 0:
            raise LawError(f"negative mass {mass} for path {raw!r}")
        if path in atoms:
            raise LawError(f"duplicate path {raw!r}")
        atoms[path] = mass
    total = sum(atoms.values(), ZERO)
    if total != 1:
        raise LawError(f"table masses sum to {total}, not 1")
    return ProcessLaw(alphabet, horizon, PathMeasure(alphabet, horizon + 1, atoms))


def _distribution(alphabet: Alphabet, dist: Mapping[str, Fraction] | Sequence[Fraction], what: str) -> tuple[Fraction, ...]:
    if isinstance(dist, Mapping):
        probs = [ZERO] * alphabet.size
        for sym, p in dist.items():
            probs[alphabet.index(sym)] = Fraction(p)
    else:
        probs = [Fraction(p) for p in dist]
        if len(probs) != alphabet.size:
            raise LawError(f"{what} has {len(probs)} entries for {alphabet.size} symbols")
    if any(p < 0 for p in probs):
        raise LawError(f"{what} has a negative entry")
    if sum(probs, ZERO) != 1:
        raise LawError(f"{what} sums to {sum(probs, ZERO)}, not 1")
    return tuple(probs)


def law_iid(alphabet: Alphabet, horizon: int, step: Mapping[str, Fraction] | Sequence[Fraction]) -> ProcessLaw:
    probs = _distribution(alphabet, step, "step distribution")
    support = [i for i, p in enumerate(probs) if p]
    atoms = {}
    for path in product(support, repeat=horizon + 1):
        mass = ONE
        for i in path:
            mass *= probs[i]
        atoms[path] = mass
    return ProcessLaw(alphabet, horizon, PathMeasure(alphabet, horizon + 1, atoms))


@dataclass(frozen=True)
class MarkovSpec:
    """Time-homogeneous chain: initial law and row-stochastic kernel, indexed by ``states``."""

    states: Alphabet
    initial: tuple[Fraction, ...]
    kernel: tuple[tuple[Fraction, ...], ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "initial", _distribution(self.states, self.initial, "initial law"))
        if len(self.kernel) != self.states.size:
            raise LawError(f"kernel has {len(self.kernel)} rows for {self.states.size} states")
        rows = tuple(
            _distribution(self.states, row, f"kernel row {self.states.symbols[i]!r}")
            for i, row in enumerate(self.kernel)
        )
        object.__setattr__(self, "kernel", rows)
        if self.horizon < 0:
            raise LawError(f"negative horizon {self.horizon}")

    @classmethod
    def from_dicts(cls, states: Alphabet, initial: Mapping[str, Fraction],
                   kernel: Mapping[str, Mapping[str, Fraction]], horizon: int) -> "MarkovSpec":
        unknown = set(kernel) - set(states.symbols)
        if unknown:
            raise LawError(f"kernel rows for unknown states {sorted(unknown)}")
        missing = [s for s in states.symbols if s not in kernel]
        if missing:
            raise LawError(f"kernel rows missing for states {missing}")
        init = _distribution(states, initial, "initial law")
        rows = tuple(_distribution(states, kernel[s], f"kernel row {s!r}") for s in states.symbols)
        return cls(states, init, rows, horizon)


def law_markov(spec: MarkovSpec) -> ProcessLaw:
    atoms: dict[Path, Fraction] = {(i,): p for i, p in enumerate(spec.initial) if p}
    for _ in range(spec.horizon):
        nxt = {}
        for path, mass in atoms.items():
            row = spec.kernel[path[-1]]
            for j, p in enumerate(row):
                if p:
                    nxt[path + (j,)] = mass * p
        atoms = nxt
    return ProcessLaw(spec.states, spec.horizon, PathMeasure(spec.states, spec.horizon + 1, atoms))


@dataclass(frozen=True)
class CoarseGrainMap:
    """Total map from underlying states onto the symbols of ``target``."""

    source: Alphabet
    target: Alphabet
    mapping: tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(self.mapping)
        object.__setattr__(self, "mapping", mapping)
        if len(mapping) != self.source.size:
            raise LawError(f"map covers {len(mapping)} of {self.source.size} states")
        if any(not 0 <= j < self.target.size for j in mapping):
            raise LawError("map sends a state outside the target alphabet")

    @classmethod
    def from_dict(cls, source: Alphabet, target: Alphabet, phi: Mapping[str, str]) -> "CoarseGrainMap":
        unknown = set(phi) - set(source.symbols)
        if unknown:
            raise LawError(f"map mentions unknown states {sorted(unknown)}")
        missing = [s for s in source.symbols if s not in phi]
        if missing:
            raise LawError(f"map is not total; unmapped states {missing}")
        return cls(source, target, tuple(target.index(phi[s]) for s in source.symbols))

    def __call__(self, path: Sequence[int]) -> Path:
        return tuple(self.mapping[i] for i in path)


def pushforward_measure(m: PathMeasure, phi: CoarseGrainMap) -> PathMeasure:
    if m.alphabet != phi.source:
        raise LawError("measure alphabet differs from the map's source")
    acc: dict[Path, Fraction] = defaultdict(Fraction)
    for path, mass in m.items():
        acc[phi(path)] += mass
    return PathMeasure(phi.target, m.level, acc)


def pushforward(law: ProcessLaw, phi: CoarseGrainMap) -> ProcessLaw:
    """Image law of the symbol-wise coarse-grained process."""
    return ProcessLaw(phi.target, law.horizon, pushforward_measure(law.paths, phi))
