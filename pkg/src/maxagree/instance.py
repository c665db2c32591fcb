"""Instance files: two laws on a shared alphabet and horizon.

Layout::

    {"alphabet": ["a", "b"], "horizon": 1, "name": "optional",
     "law1": {"type": "iid", "step": {"a": "1/2", "b": "1/2"}},
     "law2": {"type": "table", "entries": [["aa", "1/16"], ...]}}

Law types are ``table`` (``entries``), ``iid`` (``step``), ``markov``
(``init``, ``kernel``; states are the alphabet) and ``coarse_markov``
(``states``, ``init``, ``kernel``, ``phi``).  Rationals are ``"p/q"``
strings or integers.  Unknown or missing fields are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Any, Mapping

from .lawmodels import (
    CoarseGrainMap,
    LawError,
    MarkovSpec,
    ProcessLaw,
    law_from_table,
    law_iid,
    law_markov,
    pushforward,
)
from .measure import Alphabet, MeasureError
from .rational import format_rational, parse_rational


class InstanceError(ValueError):
    """Malformed instance file or law description."""


_LAW_FIELDS = {
    "table": {"entries"},
    "iid": {"step"},
    "markov": {"init", "kernel"},
    "coarse_markov": {"states", "init", "kernel", "phi"},
}


def _fields(obj: Any, required: set[str], optional: set[str] = frozenset(), where: str = "") -> None:
    if not isinstance(obj, dict):
        raise InstanceError(f"{where or 'value'} must be an object")
    keys = set(obj)
    if unknown := keys - required - optional:
        raise InstanceError(f"{where}: unknown fields {sorted(unknown)}")
    if missing := required - keys:
        raise InstanceError(f"{where}: missing fields {sorted(missing)}")


def _rational(value, where: str) -> Fraction:
    try:
        return parse_rational(value)
    except (TypeError, ValueError) as exc:
        raise InstanceError(f"{where}: {exc}") from None


def _dist(obj, where: str) -> dict[str, Fraction]:
    if not isinstance(obj, dict):
        raise InstanceError(f"{where} must map symbols to rationals")
    return {str(k): _rational(v, f"{where}[{k!r}]") for k, v in obj.items()}


def _kernel(obj, where: str) -> dict[str, dict[str, Fraction]]:
    if not isinstance(obj, dict):
        raise InstanceError(f"{where} must map states to rows")
    return {str(k): _dist(v, f"{where}[{k!r}]") for k, v in obj.items()}


def _symbols(obj, where: str) -> tuple[str, ...]:
    if not isinstance(obj, list) or not all(isinstance(s, str) for s in obj):
        raise InstanceError(f"{where} must be a list of strings")
    return tuple(obj)


@dataclass(frozen=True)
class LawSpec:
    """Parsed law description; ``params`` holds the type-specific fields."""

    kind: str
    params: Mapping[str, Any]

    @classmethod
    def from_json(cls, obj, where: str = "law") -> "LawSpec":
        if not isinstance(obj, dict) or "type" not in obj:
            raise InstanceError(f"{where} must be an object with a 'type'")
        kind = obj["type"]
        if kind not in _LAW_FIELDS:
            raise InstanceError(f"{where}: unknown law type {kind!r}")
        _fields(obj, _LAW_FIELDS[kind] | {"type"}, where=where)
        if kind == "table":
            entries = obj["entries"]
            if not isinstance(entries, list):
                raise InstanceError(f"{where}.entries must be a list")
            parsed = []
            for k, item in enumerate(entries):
                if not (isinstance(item, list) and len(item) == 2 and isinstance(item[0], (str, list))):
                    raise InstanceError(f"{where}.entries[{k}] must be [path, mass]")
                path = item[0] if isinstance(item[0], str) else tuple(item[0])
                parsed.append((path, _rational(item[1], f"{where}.entries[{k}]")))
            params = {"entries": tuple(parsed)}
        elif kind == "iid":
            params = {"step": _dist(obj["step"], f"{where}.step")}
        elif kind == "markov":
            params = {"init": _dist(obj["init"], f"{where}.init"),
                      "kernel": _kernel(obj["kernel"], f"{where}.kernel")}
        else:
            phi = obj["phi"]
            if not isinstance(phi, dict) or not all(isinstance(v, str) for v in phi.values()):
                raise InstanceError(f"{where}.phi must map states to symbols")
            params = {"states": _symbols(obj["states"], f"{where}.states"),
                      "init": _dist(obj["init"], f"{where}.init"),
                      "kernel": _kernel(obj["kernel"], f"{where}.kernel"),
                      "phi": dict(phi)}
        return cls(kind, params)

    def to_json(self) -> dict:
        p = self.params
        out: dict[str, Any] = {"type": self.kind}
        if self.kind == "table":
            out["entries"] = [[path if isinstance(path, str) else list(path), format_rational(m)]
                              for path, m in p["entries"]]
        if "step" in p:
            out["step"] = {k: format_rational(v) for k, v in p["step"].items()}
        if "states" in p:
            out["states"] = list(p["states"])
        if "init" in p:
            out["init"] = {k: format_rational(v) for k, v in p["init"].items()}
            out["kernel"] = {s: {k: format_rational(v) for k, v in row.items()} for s, row in p["kernel"].items()}
        if "phi" in p:
            out["phi"] = dict(p["phi"])
        return out

    def build(self, alphabet: Alphabet, horizon: int) -> ProcessLaw:
        p = self.params
        if self.kind == "table":
            return law_from_table(alphabet, horizon, p["entries"])
        if self.kind == "iid":
            return law_iid(alphabet, horizon, p["step"])
        if self.kind == "markov":
            return law_markov(MarkovSpec.from_dicts(alphabet, p["init"], p["kernel"], horizon))
        states = Alphabet(p["states"])
        chain = law_markov(MarkovSpec.from_dicts(states, p["init"], p["kernel"], horizon))
        return pushforward(chain, CoarseGrainMap.from_dict(states, alphabet, p["phi"]))


@dataclass(frozen=True)
class InstanceSpec:
    alphabet: Alphabet
    horizon: int
    law1: LawSpec
    law2: LawSpec
    name: str | None = None

    @classmethod
    def from_json(cls, obj) -> "InstanceSpec":
        _fields(obj, {"alphabet", "horizon", "law1", "law2"}, {"name"}, where="instance")
        horizon = obj["horizon"]
        if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 0:
            raise InstanceError(f"horizon must be a non-negative integer, got {horizon!r}")
        name = obj.get("name")
        if name is not None and not isinstance(name, str):
            raise InstanceError("name must be a string")
        try:
            alphabet = Alphabet(_symbols(obj["alphabet"], "alphabet"))
        except ValueError as exc:
            raise InstanceError(str(exc)) from None
        return cls(alphabet, horizon, LawSpec.from_json(obj["law1"], "law1"),
                   LawSpec.from_json(obj["law2"], "law2"), name)

    def to_json(self) -> dict:
        out = {"alphabet": list(self.alphabet.symbols), "horizon": self.horizon,
               "law1": self.law1.to_json(), "law2": self.law2.to_json()}
        if self.name is not None:
            out["name"] = self.name
        return out

    def laws(self) -> tuple[ProcessLaw, ProcessLaw]:
        """Build both laws, turning validation failures into :class:`InstanceError`."""
        try:
            return self.law1.build(self.alphabet, self.horizon), self.law2.build(self.alphabet, self.horizon)
        except (LawError, MeasureError, ValueError) as exc:
            raise InstanceError(str(exc)) from exc


def table_spec(law: ProcessLaw) -> LawSpec:
    fmt = law.alphabet.format_path
    return LawSpec("table", {"entries": tuple((fmt(p), m) for p, m in sorted(law.paths.items()))})


def load_instance(path: str | FsPath) -> InstanceSpec:
    try:
        data = json.loads(FsPath(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON ({exc})") from None
    return InstanceSpec.from_json(data)
