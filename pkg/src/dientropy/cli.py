"""Batch front end: scenario sweeps, single-point bounds, verification suites.

Sweeps write CSV files with a stable column contract; single-point reports
and behavior files use documented structured text (JSON for behaviors).
Exit codes: 0 success, 1 verification failure, 2 at least one sweep row
failed, 3 certified-infeasible statistics, 64 usage error, 65 invalid
behavior file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import pipeline as pl
from .opalg import RuleSet
from .relax import BasisSpec
from .scenarios import (
    Behavior,
    ScenarioError,
    behavior_from_realization,
    chsh_value,
    constraints_from_behavior,
    detection_efficiency,
    optimize_chsh_realization,
    sixstate,
    tilted_chsh,
    werner_chsh,
)
from .witness import Pinching

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_ROW_FAIL = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64
EXIT_BAD_DATA = 65

CSV_COLUMNS = [
    "parameter",
    "chsh",
    "entropy_bits",
    "h_key_given_bob",
    "rate",
    "pg",
    "minentropy_ref",
    "linear_pg_ref",
    "chsh_ref",
    "lambda",
    "level",
    "evaluations",
    "solve_seconds",
    "status",
]


def _parse_grid(text: str):
    vals = [float(t) for t in text.split(",") if t.strip() != ""]
    if not vals:
        raise ValueError("empty grid")
    return vals


def _parse_level(text: str | None):
    if text is None:
        return None
    parts = [int(t) for t in text.split(",")]
    if len(parts) == 1:
        return BasisSpec(parts[0], parts[0])
    return BasisSpec(parts[0], parts[1])


def _parse_constraints(text: str):
    if text.startswith("tilted:"):
        return tilted_chsh(float(text.split(":", 1)[1]))
    if text in ("full", "chsh", "qber"):
        return text
    raise ValueError(f"unknown constraint mode {text!r}")


def _scenario_point(scenario: str, value: float, seed: int):
    if scenario == "werner":
        r, b = werner_chsh(value)
        return r, b
    if scenario == "detection":
        r = optimize_chsh_realization(value, seed=seed)
        b = detection_efficiency(value, r)
        b = Behavior(
            table=b.table,
            parameter_alice=(0, 1),
            parameter_bob=(1, 2),
            key_settings=(0, 0),
        )
        return r, b
    if scenario == "sixstate":
        return sixstate(value)
    raise ValueError(f"unknown scenario {scenario!r}")


def compute_rate_row(args_tuple):
    """One sweep row; returns a dict matching CSV_COLUMNS."""
    (scenario, value, mode, pinching_mode, level, budget, tol, seed, onesided) = args_tuple
    row = {c: "" for c in CSV_COLUMNS}
    row["parameter"] = value
    t0 = time.perf_counter()
    try:
        r, b = _scenario_point(scenario, value, seed)
        cs = constraints_from_behavior(b, mode)
        hab = pl.cond_shannon(b)
        row["h_key_given_bob"] = f"{hab:.9f}"
        try:
            row["chsh"] = f"{chsh_value(b):.9f}"
        except ScenarioError:
            pass

        if onesided or scenario == "sixstate":
            res = pl.onesided_bound(cs, level=level, budget=budget, seed=seed, tol=tol)
        else:
            pin = Pinching(0, 0) if pinching_mode == "two" else Pinching(0)
            res = pl.optimize_lambda(
                cs, pin, level=level, budget=budget, seed=seed, behavior=b, tol=tol
            )
        row["entropy_bits"] = f"{res.entropy_bits:.9f}"
        row["rate"] = f"{pl.devetak_winter(res.entropy_bits, hab):.9f}"
        row["lambda"] = ";".join(f"{v:.6g}" for v in res.lam)
        row["level"] = f"{res.level.alice_depth},{res.level.bob_depth}"
        row["evaluations"] = res.diagnostics.get("evaluations", "")

        if not (onesided or scenario == "sixstate"):
            pg = pl.guessing_probability(cs, pl.ONE_PARTY)
            row["pg"] = f"{pg:.9f}"
            marg = b.alice_marginal(b.key_settings[0])
            uniform = len(marg) == 2 and abs(marg[0] - 0.5) < 1e-9
            mebits, linbits = pl.baseline_bounds(pg, uniform)
            row["minentropy_ref"] = f"{mebits:.9f}"
            if linbits is not None:
                row["linear_pg_ref"] = f"{linbits:.9f}"
            try:
                s = chsh_value(b)
                if 2.0 <= s <= 2.0 * math.sqrt(2.0) + 1e-12:
                    row["chsh_ref"] = f"{pl.chsh_analytic_bound(s):.9f}"
            except ScenarioError:
                pass
        row["status"] = "ok"
    except pl.InconsistentStatisticsError as exc:
        row["status"] = f"infeasible: {exc}"
    except Exception as exc:  # pragma: no cover - surfaced in the status column
        row["status"] = f"error: {exc}"
    row["solve_seconds"] = f"{time.perf_counter() - t0:.2f}"
    return row


def cmd_rate(args) -> int:
    try:
        grid = _parse_grid(args.grid)
        mode = _parse_constraints(args.constraints)
        level = _parse_level(args.level)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    tasks = [
        (args.scenario, v, mode, args.pinching, level, args.lambda_budget, args.tol, args.seed, args.onesided)
        for v in grid
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(compute_rate_row, tasks))
    else:
        rows = [compute_rate_row(t) for t in tasks]
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    text = out.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = [r for r in rows if r["status"] != "ok"]
    return EXIT_ROW_FAIL if failed else EXIT_OK


def cmd_bound(args) -> int:
    try:
        with open(args.behavior) as fh:
            b = Behavior.from_json(fh.read())
        b.validate()
    except (OSError, ValueError, ScenarioError) as exc:
        print(f"invalid behavior file: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    try:
        mode = _parse_constraints(args.constraints)
        level = _parse_level(args.level)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cs = constraints_from_behavior(b, mode)
    pin = Pinching(0, 0) if args.pinching == "two" else Pinching(0)
    try:
        if args.onesided:
            res = pl.onesided_bound(cs, level=level, budget=args.lambda_budget, seed=args.seed, tol=args.tol)
        else:
            res = pl.optimize_lambda(
                cs, pin, level=level, budget=args.lambda_budget, seed=args.seed, behavior=b, tol=args.tol
            )
    except pl.InconsistentStatisticsError as exc:
        print(f"certified infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    cert = res.certificate
    report = [
        "dientropy bound report",
        f"entropy_bits: {res.entropy_bits!r}",
        f"entropy_nats: {res.entropy_nats!r}",
        f"lambda: {' '.join(repr(float(v)) for v in res.lam)}",
        f"level: {res.level.alice_depth},{res.level.bob_depth}",
        f"certified_supremum: {res.diagnostics['certified_supremum']!r}",
        f"certificate_slack: {res.diagnostics['certificate_slack']!r}",
        f"evaluations: {res.diagnostics.get('evaluations', 1)}",
    ]
    text = "\n".join(report) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.cases < 1:
        print("usage error: cases must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    import numpy as np

    from .oracle import (
        entropy_production,
        expectation,
        purification_crosscheck,
        verify_production_inequality,
        witness_value_quadrature,
    )
    from .scenarios import QubitRealization
    from .witness import ConstraintSet, build_witness, validate_window_transform, weight_table

    rng = np.random.default_rng(args.seed)
    failures = []
    worst_gap = math.inf
    try:
        err = validate_window_transform()
        print(f"window transform closed form vs quadrature: max err {err:.2e}")
    except ArithmeticError as exc:
        failures.append(f"window transform: {exc}")

    for k in range(args.cases):
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        dirs = rng.normal(size=(4, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        r = QubitRealization(
            state=rho, alice_directions=list(dirs[:2]), bob_directions=list(dirs[2:])
        ).to_explicit()
        try:
            ep = entropy_production(r, Pinching(0))
            pc = purification_crosscheck(r)
            if abs(ep - pc) > 1e-9:
                failures.append(f"case {k}: purification mismatch {abs(ep - pc):.2e}")
            coeffs = rng.normal(size=(2, 2, 2, 2, 2))
            cs = ConstraintSet(coeffs=coeffs, targets=np.zeros(2), cards=(2, 2, 2, 2))
            lam = rng.normal(scale=0.7, size=2)
            pin = Pinching(0, 0) if k % 3 == 0 else Pinching(0)
            rep = verify_production_inequality(r, cs, lam, pin)
            worst_gap = min(worst_gap, rep["gap_nats"])
            w = weight_table(lam, cs)
            order = cs.factor_pairs()
            wit = build_witness(w, pin, factor_order=order, rules=cs.rules())
            sym = expectation(r, wit.poly).real
            quad = witness_value_quadrature(r, w, pin, order)
            if abs(sym - quad) > 1e-8:
                failures.append(f"case {k}: witness evaluation mismatch {abs(sym - quad):.2e}")
        except AssertionError as exc:
            failures.append(f"case {k}: {exc}")
    print(f"ran {args.cases} randomized cases; smallest production gap {worst_gap:.3e} nats")
    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        return EXIT_VERIFY_FAIL
    print("all verification cases passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dientropy", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--constraints", default="full", help="full | chsh | qber | tilted:ALPHA")
        sp.add_argument("--pinching", choices=["one", "two"], default="one")
        sp.add_argument("--level", default=None, help="Alice,Bob word depths (default: minimum admitting)")
        sp.add_argument("--lambda-budget", type=int, default=60)
        sp.add_argument("--tol", type=float, default=1e-8)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        sp.add_argument("--onesided", action="store_true", help="characterized anticommuting Alice device")

    rate = sub.add_parser("rate", help="sweep a scenario parameter and write a CSV of certified rates")
    rate.add_argument("--scenario", choices=["werner", "detection", "sixstate"], required=True)
    rate.add_argument("--grid", required=True, help="comma-separated parameter values")
    rate.add_argument("--workers", type=int, default=1)
    common(rate)
    rate.set_defaults(func=cmd_rate)

    bound = sub.add_parser("bound", help="certified bound for an externally measured behavior file")
    bound.add_argument("behavior", help="path to a behavior JSON file")
    common(bound)
    bound.set_defaults(func=cmd_bound)

    verify = sub.add_parser("verify", help="run the randomized verification suites")
    verify.add_argument("--cases", type=int, default=200)
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
