"""Command-line interface.

Exit codes: 0 everything requested passed, 1 a check failed, 2 bad input,
3 an internal construction assertion fired.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
from bisect import bisect_right
from collections import Counter
from fractions import Fraction
from pathlib import Path
from typing import Any

from . import coupling as cp
from . import oracle
from .instance import InstanceError, load_instance
from .measure import tv_distance
from .rational import format_rational, parse_rational, to_jsonable
from .report import CheckReport
from .tau import (
    TauConstructionError,
    countable_bounds_variants,
    extend_with_tau,
    extended_to_json,
    hazard_report,
    kappa,
    verify_tau,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

PAPER_NOTE = (
    "paper mode follows the literal recursive ladder; it is a valid coupling "
    "but is generally not maximal (see the maximality profile)"
)


class InputError(Exception):
    pass


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _instance(path: str):
    try:
        spec = load_instance(path)
        return spec, *spec.laws()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except InstanceError as exc:
        raise InputError(f"{path}: {exc}") from None


def _build(args, law1, law2):
    if args.mode == cp.PAPER:
        print(f"note: {PAPER_NOTE}", file=sys.stderr)
    c, ladder = cp.build(law1, law2, args.mode)
    return c, ladder


def _profile_rows(c: cp.LayeredCoupling) -> list[dict]:
    rows = cp.verify_maximality(c).details["profile"]
    return [dict(r, tv=tv_distance(c.law1, c.law2, r["t"])) for r in rows]


def _sigma_table(c: cp.LayeredCoupling) -> dict:
    return {cp.sigma_label(s): m for s, m in cp.sigma_distribution(c).items()}


# -- commands -------------------------------------------------------------------


def cmd_build(args) -> tuple[int, dict, list[dict]]:
    _, law1, law2 = _instance(args.instance)
    c, _ = _build(args, law1, law2)
    maximal = cp.verify_maximality(c)
    summary = {
        "command": "build",
        "mode": c.mode,
        "sigma": _sigma_table(c),
        "profile": _profile_rows(c),
        "maximal": maximal.passed,
        "coupling_valid": cp.verify_coupling(c).passed,
    }
    if c.mode == cp.PAPER:
        summary["note"] = PAPER_NOTE
    export = cp.coupling_to_json(c)
    if args.output:
        Path(args.output).write_text(json.dumps(export, indent=1) + "\n")
        summary["written"] = args.output
    else:
        summary["coupling"] = export
    return EXIT_OK, summary, export["layers"]


def _oracle_suite(c: cp.LayeredCoupling) -> list[CheckReport]:
    law1, law2 = c.law1, c.law2
    reports = []
    for name, fast, slow in (
        ("oracle_tv", tv_distance, oracle.tv_by_event_enumeration),
        ("oracle_kappa", kappa, oracle.kappa_by_subset_enumeration),
    ):
        rows, violations, skipped = [], [], None
        for t in range(c.horizon + 1):
            try:
                expected = slow(law1, law2, t)
            except oracle.OracleCapError as exc:
                skipped = str(exc)
                break
            got = fast(law1, law2, t)
            rows.append({"t": t, "library": got, "oracle": expected})
            if got != expected:
                violations.append({"t": t, "library": got, "oracle": expected})
        details = {"rows": rows}
        if skipped:
            details["skipped"] = skipped
        reports.append(CheckReport(name, not violations, violations, details))
    ceiling = oracle.agreement_upper_bound(law1, law2)
    achieved = cp.agreement_profile(c)
    over = [{"t": t, "achieved": achieved[t], "ceiling": ceiling[t]}
            for t in ceiling if achieved[t] > ceiling[t]]
    reports.append(CheckReport("oracle_ceiling", not over, over, {"ceiling": ceiling}))
    return reports


def cmd_verify(args) -> tuple[int, dict, list[dict]]:
    _, law1, law2 = _instance(args.instance)
    data = _read_json(args.coupling)
    try:
        c = cp.coupling_from_json(data, law1, law2)
    except cp.CouplingFormatError as exc:
        raise InputError(f"{args.coupling}: {exc}") from None
    reports = [cp.verify_coupling(c), cp.verify_maximality(c), cp.conditional_marginal_check_all(c)]
    if args.oracle:
        reports.extend(_oracle_suite(c))
    passed = all(reports)
    out = {"command": "verify", "mode": c.mode, "passed": passed,
           "checks": [r.to_json() for r in reports]}
    table = [{"check": r.name, "passed": r.passed, "violations": len(r.violations)} for r in reports]
    return (EXIT_OK if passed else EXIT_FAIL), out, table


def cmd_kappa(args) -> tuple[int, dict, list[dict]]:
    _, law1, law2 = _instance(args.instance)
    c, _ = _build(args, law1, law2)
    report = hazard_report(c)
    out = {"command": "kappa", **report}
    if args.verbose:
        out["bound_variants"] = to_jsonable(
            {k: [b.to_json() if b else None for b in v] for k, v in countable_bounds_variants(law1, law2).items()}
        )
    rows = [{k: v for k, v in r.items() if k != "flags"} for r in report["per_t"]]
    return EXIT_OK, out, rows


def _tau_summary(ec) -> tuple[CheckReport, dict]:
    check = verify_tau(ec)
    sigma_tail = cp.agreement_profile(ec.base)
    tau_tail = ec.survival()
    out = {
        "tau": {cp.sigma_label(v): m for v, m in ec.tau_distribution().items()},
        "kappa_hat": list(ec.hazards.kappa_effective),
        "kappa": list(ec.hazards.kappa_formula),
        "survival": [{"t": t, "tau_tail": tau_tail[t], "sigma_tail": sigma_tail[t],
                      "tau_below_sigma": tau_tail[t] <= sigma_tail[t]} for t in tau_tail],
        "independent": not any(v["check"] == "independence" for v in check.violations),
        "check": check.to_json(),
    }
    return check, out


def cmd_extend(args) -> tuple[int, dict, list[dict]]:
    _, law1, law2 = _instance(args.instance)
    c, _ = _build(args, law1, law2)
    ec = extend_with_tau(c, resolution=args.resolution)
    check, out = _tau_summary(ec)
    out = {"command": "extend", "mode": c.mode, "resolution": ec.resolution, **out}
    if args.oracle:
        out["oracle_independence"] = oracle.independence_by_joint_enumeration(ec).to_json()
    export = extended_to_json(ec)
    if args.output:
        Path(args.output).write_text(json.dumps(export, indent=1) + "\n")
        out["written"] = args.output
    else:
        out["extended_coupling"] = export
    ok = check.passed and (not args.oracle or out["oracle_independence"]["passed"])
    return (EXIT_OK if ok else EXIT_FAIL), out, export["layers"]


def _sample_atoms(data) -> tuple[str, list[dict], list[Fraction]]:
    kinds = {"layered_coupling": {"sigma", "path1", "path2", "mass"},
             "extended_coupling": {"sigma", "path1", "path2", "tau", "mass"}}
    if not isinstance(data, dict) or data.get("kind") not in kinds or not isinstance(data.get("layers"), list):
        raise InputError("sample needs a coupling or extended-coupling export")
    fields = kinds[data["kind"]]
    atoms, masses = [], []
    for entry in data["layers"]:
        if not isinstance(entry, dict) or set(entry) != fields:
            raise InputError(f"bad atom entry {entry!r}")
        try:
            m = parse_rational(entry["mass"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if m < 0:
            raise InputError(f"negative mass in {entry!r}")
        if m:
            atoms.append(entry)
            masses.append(m)
    if sum(masses) != 1:
        raise InputError(f"atom masses sum to {sum(masses)}, not 1")
    return data["kind"], atoms, masses


def draw_indices(masses: list[Fraction], n: int, seed: int) -> list[int]:
    """Draw ``n`` atom indices with exact probabilities.

    Each draw is a uniform 64-bit integer ``u``, read as the dyadic rational
    ``u / 2**64``; atom ``k`` is chosen when ``u`` falls below the exact
    cumulative mass threshold ``ceil(cum_k * 2**64)``.
    """
    scale = 1 << 64
    thresholds, cum = [], Fraction(0)
    for m in masses:
        cum += m
        thresholds.append(math.ceil(cum * scale))
    rng = random.Random(seed)
    return [bisect_right(thresholds, rng.getrandbits(64)) for _ in range(n)]


def cmd_sample(args) -> tuple[int, dict, list[dict]]:
    if args.n < 1:
        raise InputError("--n must be at least 1")
    kind, atoms, masses = _sample_atoms(_read_json(args.file))
    picks = draw_indices(masses, args.n, args.seed)
    rows = []
    keys = ["sigma"] + (["tau"] if kind == "extended_coupling" else [])
    for key in keys:
        exact: dict[Any, Fraction] = {}
        for a, m in zip(atoms, masses):
            exact[a[key]] = exact.get(a[key], Fraction(0)) + m
        counts = Counter(atoms[i][key] for i in picks)
        for value in sorted(exact, key=lambda v: (isinstance(v, str), v)):
            p = exact[value]
            se = math.sqrt(float(p * (1 - p)) / args.n)
            freq = counts.get(value, 0) / args.n
            rows.append({"variable": key, "value": value, "count": counts.get(value, 0),
                         "empirical": freq, "exact": format_rational(p), "stderr": se,
                         "within_4se": abs(freq - float(p)) <= 4 * se})
    diagonal = sum(1 for i in picks if atoms[i]["path1"] == atoms[i]["path2"])
    out = {"command": "sample", "kind": kind, "n": args.n, "seed": args.seed,
           "diagonal_fraction": diagonal / args.n, "table": rows}
    return EXIT_OK, out, rows


def cmd_report(args) -> tuple[int, dict, list[dict]]:
    spec, law1, law2 = _instance(args.instance)
    c, ladder = _build(args, law1, law2)
    checks = [cp.verify_coupling(c), cp.verify_maximality(c), cp.conditional_marginal_check_all(c),
              cp.check_ladder(ladder, law1, law2)]
    ec = extend_with_tau(c)
    tau_check, tau_out = _tau_summary(ec)
    checks.append(tau_check)
    hz = hazard_report(c)
    rows = []
    profile = _profile_rows(c)
    for r, h in zip(profile, hz["per_t"]):
        rows.append({"t": r["t"], "tv": r["tv"], "ceiling": r["ceiling"], "achieved": r["achieved"],
                     "shortfall": r["shortfall"], "kappa": h["kappa"], "kappa_hat": h["kappa_hat"],
                     "tau_tail": ec.survival()[r["t"]]})
    out = {"command": "report", "name": spec.name, "mode": c.mode, "sigma": _sigma_table(c),
           "per_t": rows, "hazards": hz["per_t"], "tau": tau_out["tau"],
           "checks": {r.name: r.passed for r in checks}}
    if c.mode == cp.PAPER:
        out["note"] = PAPER_NOTE
    return EXIT_OK, out, rows


# -- plumbing ---------------------------------------------------------------------


def _csv(rows: list[dict]) -> str:
    rows = to_jsonable(rows)
    if not rows:
        return ""
    buf = io.StringIO()
    fields = list(dict.fromkeys(k for r in rows for k in r))
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxagree", description="Exact maximal agreement couplings.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", help="write the export (build/extend) or the report to this file")
    modes = argparse.ArgumentParser(add_help=False)
    modes.add_argument("--mode", choices=(cp.DIRECT, cp.PAPER), default=cp.DIRECT)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[common, modes], help="build a coupling and summarise it")
    p.add_argument("instance")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("verify", parents=[common], help="verify an exported coupling against its instance")
    p.add_argument("coupling")
    p.add_argument("instance")
    p.add_argument("--oracle", action="store_true", help="also run the brute-force oracles")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("kappa", parents=[common, modes], help="hazard rates and their bounds")
    p.add_argument("instance")
    p.add_argument("--verbose", action="store_true", help="include alternative readings of the bounds")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("extend", parents=[common, modes], help="extend a coupling with tau")
    p.add_argument("instance")
    p.add_argument("--resolution", choices=("path", "prefix"), default="path")
    p.add_argument("--oracle", action="store_true")
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("sample", parents=[common], help="Monte Carlo draws from an exported coupling")
    p.add_argument("file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("report", parents=[common, modes], help="full report for one instance")
    p.add_argument("instance")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) is not None and not 0 <= getattr(args, "seed", 0) < 1 << 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    try:
        code, report, table = args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (cp.ConstructionError, TauConstructionError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    if args.format == "csv":
        text = _csv(table)
    else:
        text = json.dumps(to_jsonable(report), indent=1) + "\n"
    if args.output and args.command not in ("build", "extend"):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
