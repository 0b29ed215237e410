"""Certified entropy bounds assembled into key rates.

Every bound produced here is *secure by construction*: for any multiplier
vector the reported value is  sum_j lam_j l_j - ln(certified sup <W>),
where the supremum certificate comes from :func:`dientropy.sdp.certify_upper_bound`
and therefore holds even when the numerical solver underperforms.  The outer
multiplier search only ever improves the bound; it cannot invalidate it.

Internally everything is in nats (the variational statement is natural in
base e); all reported outputs are bits.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .opalg import ALICE, BOB, IDENTITY, Polynomial, RuleSet, multiply, pair_projector, projector
from .relax import BasisSpec, MomentRelaxation, build_relaxation, guessing_problem, objective_vector, to_sdp
from .scenarios import Behavior, chsh_constraint_direction
from .sdp import CertificationError, SDPProblem, certify_upper_bound, solve
from .witness import ConstraintSet, Pinching, Witness, build_witness, required_depths, weight_table

LN2 = math.log(2.0)


class BoundError(RuntimeError):
    pass


class InconsistentStatisticsError(BoundError):
    """The constraint values admit no quantum (or even relaxed) realization."""


def binary_entropy(p: float) -> float:
    """Shannon entropy of a bit, in bits."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * math.log2(p) - (1 - p) * math.log2(1 - p))


@dataclass
class BoundResult:
    entropy_nats: float
    entropy_bits: float
    lam: np.ndarray
    level: BasisSpec
    certificate: object
    diagnostics: dict = field(default_factory=dict)


@dataclass
class RateResult:
    rate: float
    hae: BoundResult
    hab_bits: float


class BoundComputer:
    """Reusable context for entropy bounds of one scenario at one level.

    The moment structure (basis, rows, scatter map) is built once; each
    multiplier evaluation only rebuilds the witness polynomial and swaps the
    objective vector of the SDP.
    """

    def __init__(
        self,
        cs: ConstraintSet,
        pinching: Pinching,
        level: BasisSpec | None = None,
        rules: RuleSet | None = None,
        tol: float = 1e-8,
        factor_order=None,
        cert_threshold: float = 1e-6,
    ):
        self.cs = cs
        self.pinching = pinching
        self.rules = rules if rules is not None else cs.rules()
        self.factor_order = tuple(factor_order) if factor_order else cs.factor_pairs()
        self.tol = tol
        self.cert_threshold = cert_threshold
        if level is None:
            probe = build_witness(
                weight_table(np.ones(len(cs)), cs),
                pinching,
                factor_order=self.factor_order,
                rules=self.rules,
            )
            level = BasisSpec(*required_depths(probe))
        self.level = level
        # rows and scatter structure are objective-independent; each bound()
        # call indexes its own witness and fails loudly if the level is short
        self.rel = build_relaxation(Polynomial.one(), cs, self.level, self.rules)
        self.base_problem = to_sdp(self.rel, sense="max")
        self.evaluations = 0
        self.solve_seconds = 0.0

    def bound(self, lam: np.ndarray) -> BoundResult:
        lam = np.asarray(lam, dtype=float)
        wit = build_witness(
            weight_table(lam, self.cs),
            self.pinching,
            factor_order=self.factor_order,
            rules=self.rules,
        )
        problem = replace(self.base_problem, obj=objective_vector(self.rel, wit))
        t0 = time.perf_counter()
        try:
            sol = solve(problem, tol=self.tol)
        except np.linalg.LinAlgError as exc:
            raise BoundError(f"linear algebra failure during solve: {exc}") from exc
        finally:
            self.solve_seconds += time.perf_counter() - t0
            self.evaluations += 1
        if sol.status == "infeasible":
            if sol.infeasibility_certified:
                raise InconsistentStatisticsError(
                    "constraint values admit no feasible moment matrix"
                )
            raise BoundError("solver reported possible infeasibility (uncertified)")
        cert = certify_upper_bound(problem, sol, residual_threshold=self.cert_threshold)
        if cert.bound <= 0.0:
            raise BoundError("certified witness supremum is not positive")
        nats = float(lam @ self.cs.targets) - math.log(cert.bound)
        return BoundResult(
            entropy_nats=nats,
            entropy_bits=nats / LN2,
            lam=lam,
            level=self.level,
            certificate=cert,
            diagnostics={
                "solver_status": sol.status,
                "iterations": sol.iterations,
                "witness_terms": len(wit.poly.terms),
                "certified_supremum": cert.bound,
                "certificate_slack": cert.slack_shift,
            },
        )


def entropy_bound(
    cs: ConstraintSet,
    lam: np.ndarray,
    pinching: Pinching,
    level: BasisSpec | None = None,
    **kwargs,
) -> BoundResult:
    """Certified lower bound on the conditional entropy for one multiplier vector.

    With ``level=None`` the minimum level admitting this multiplier's witness
    is used (the all-zero vector needs only the statistics themselves).
    """
    lam = np.asarray(lam, dtype=float)
    if level is None:
        wit = build_witness(
            weight_table(lam, cs),
            pinching,
            factor_order=kwargs.get("factor_order") or cs.factor_pairs(),
            rules=kwargs.get("rules") or cs.rules(),
        )
        da, db = required_depths(wit)
        level = BasisSpec(max(da, 1), max(db, 1))  # statistics need degree-2 moments
    return BoundComputer(cs, pinching, level, **kwargs).bound(lam)


def _initial_directions(cs: ConstraintSet, behavior: Behavior | None):
    dirs = []
    if behavior is not None:
        d = chsh_constraint_direction(cs, behavior)
        if d is not None and np.linalg.norm(d) > 0:
            dirs.append(np.asarray(d, dtype=float))
    if not dirs:
        t = np.abs(cs.targets)
        dirs.append(np.ones(len(cs)) / max(1.0, np.linalg.norm(t)))
    return dirs


SCALE_GRID = (0.1, 0.25, 0.4, 0.55, 0.7, 0.9, 1.2, 1.8)


def optimize_lambda(
    cs: ConstraintSet,
    pinching: Pinching,
    level: BasisSpec | None = None,
    budget: int = 200,
    seed: int = 0,
    behavior: Behavior | None = None,
    computer: BoundComputer | None = None,
    **kwargs,
) -> BoundResult:
    """Derivative-free maximization of the certified bound over multipliers.

    Every evaluation is itself a secure bound, so the search can stop
    anywhere.  Stages: the zero vector, a scale sweep along the CHSH-aligned
    direction when one exists, then simplex descent with seeded restarts
    until the budget is exhausted.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    comp = computer if computer is not None else BoundComputer(cs, pinching, level, **kwargs)
    rng = np.random.default_rng(seed)
    remaining = [budget]
    best: list = [None]

    def evaluate(lam) -> float:
        # finite penalty keeps the simplex informative outside the good region
        penalty = -1e6 - float(np.linalg.norm(lam))
        if remaining[0] <= 0:
            return penalty
        remaining[0] -= 1
        try:
            res = comp.bound(lam)
        except (BoundError, CertificationError, OverflowError):
            return penalty
        if best[0] is None or res.entropy_nats > best[0].entropy_nats:
            best[0] = res
        return res.entropy_nats

    evaluate(np.zeros(len(cs)))
    directions = _initial_directions(cs, behavior)
    for d in directions:
        for s in SCALE_GRID:
            if remaining[0] <= 0:
                break
            evaluate(s * d)

    while remaining[0] > 2 and best[0] is not None:
        start = best[0].lam
        if np.linalg.norm(start) == 0:
            start = directions[0] * 0.5
        if best[0].diagnostics.get("restarts", 0) > 0:
            start = start * (1.0 + 0.1 * rng.standard_normal(len(start)))
        budget_here = remaining[0]
        res = minimize(
            lambda v: -evaluate(v),
            start,
            method="Nelder-Mead",
            options={"maxfev": budget_here, "xatol": 1e-7, "fatol": 1e-10},
        )
        if best[0] is not None:
            best[0].diagnostics["restarts"] = best[0].diagnostics.get("restarts", 0) + 1
        if remaining[0] >= budget_here:  # no progress possible
            break

    out = best[0]
    if out is None:
        raise BoundError("no multiplier evaluation succeeded within the budget")
    out.diagnostics["evaluations"] = comp.evaluations
    out.diagnostics["solve_seconds"] = comp.solve_seconds
    return out


# ---------------------------------------------------------------------------
# rate assembly
# ---------------------------------------------------------------------------

def devetak_winter(hae_bits: float, hab_bits: float) -> float:
    """One-way asymptotic key rate: positive part of the entropy difference."""
    return max(hae_bits - hab_bits, 0.0)


def cond_shannon(b: Behavior, key_settings: tuple | None = None) -> float:
    """H(A|B) in bits of the joint distribution at the key settings."""
    x0, y0 = key_settings if key_settings is not None else b.key_settings
    joint = b.table[:, :, x0, y0]
    total = 0.0
    pb = joint.sum(axis=0)
    for j in range(joint.shape[1]):
        if pb[j] <= 0:
            continue
        for i in range(joint.shape[0]):
            p = joint[i, j]
            if p > 0:
                total -= p * math.log2(p / pb[j])
    return total


# ---------------------------------------------------------------------------
# guessing-probability baselines
# ---------------------------------------------------------------------------

ONE_PARTY = "one"
TWO_PARTY = "two"


def guessing_probability(
    cs: ConstraintSet,
    target: str = ONE_PARTY,
    level: BasisSpec | None = None,
    rules: RuleSet | None = None,
    key_settings: tuple[int, int] = (0, 0),
    tol: float = 1e-9,
) -> float:
    """Certified upper bound on the adversary's guessing probability.

    One sub-normalized moment block per possible guess; the observed
    statistics constrain the block sum and the objective collects the
    guessed-outcome moments.
    """
    rules = rules if rules is not None else cs.rules()
    level = level if level is not None else BasisSpec(2, 2)
    rel = build_relaxation(Polynomial.one(), cs, level, rules)
    x0, y0 = key_settings
    polys = []
    if target == ONE_PARTY:
        for a in range(rules.outcomes[ALICE]):
            polys.append(projector(ALICE, x0, a, rules))
    elif target == TWO_PARTY:
        for a in range(rules.outcomes[ALICE]):
            for bb in range(rules.outcomes[BOB]):
                polys.append(pair_projector(a, bb, x0, y0, rules))
    else:
        raise ValueError("target must be 'one' or 'two'")
    problem = guessing_problem(rel, cs, polys)
    # extremal statistics make this problem degenerate; conservative steps
    # buy the terminal accuracy the certificate needs
    sol = solve(problem, tol=tol, max_iter=400, step_fraction=0.8, patience=100)
    if sol.status == "infeasible":
        raise InconsistentStatisticsError("statistics admit no quantum model")
    cert = certify_upper_bound(problem, sol, residual_threshold=1e-3)
    return min(float(cert.bound), 1.0)


def baseline_bounds(pg: float, uniform_binary_marginal: bool):
    """(min-entropy bound, linear bound) in bits from a guessing probability.

    The linear bound 2(1 - pg) bits requires a uniform binary key marginal
    and is returned only when that flag is set.
    """
    pg = min(max(pg, 1e-12), 1.0)
    min_entropy = -math.log2(pg)
    linear = 2.0 * (1.0 - pg) if uniform_binary_marginal else None
    return min_entropy, linear


def chsh_analytic_bound(s: float) -> float:
    """Known analytic curve bounding H(A0|E) from the CHSH value alone, in bits.

    Reference curve for comparisons; never used as a security bound here.
    """
    if not 2.0 <= s <= 2.0 * math.sqrt(2.0) + 1e-12:
        raise ValueError("CHSH value outside [2, 2 sqrt 2]")
    s = min(s, 2.0 * math.sqrt(2.0))
    return 1.0 - binary_entropy(0.5 + 0.5 * math.sqrt((s / 2.0) ** 2 - 1.0))


def bb84_reference(qber: float) -> float:
    """Reference curve 1 - h(Q) for comparison with characterized-Alice runs."""
    return 1.0 - binary_entropy(qber)


# ---------------------------------------------------------------------------
# characterized-Alice (one-sided) runs
# ---------------------------------------------------------------------------

def onesided_rules(cs: ConstraintSet) -> RuleSet:
    """Rules declaring Alice's binary observables pairwise anticommuting."""
    return cs.rules(alice_anticommuting=True)


def onesided_bound(
    cs: ConstraintSet,
    level: BasisSpec | None = None,
    budget: int = 40,
    seed: int = 0,
    tol: float = 1e-8,
) -> BoundResult:
    """Entropy bound with Alice's device characterized as anticommuting qubit
    measurements; Bob stays uncharacterized."""
    rules = onesided_rules(cs)
    nX = cs.cards[2]
    level = level if level is not None else BasisSpec(nX, len(cs.factor_pairs()))
    comp = BoundComputer(cs, Pinching(0), level, rules=rules, tol=tol)
    res = optimize_lambda(cs, Pinching(0), budget=budget, seed=seed, computer=comp)
    res.diagnostics["level"] = (level.alice_depth, level.bob_depth)
    return res
