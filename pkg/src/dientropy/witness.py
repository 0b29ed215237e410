"""Construction of the pinched exponential-weight operator polynomial.

Given Bell-type constraint functionals with coefficient tables ``c[j,a,b,x,y]``
and a multiplier vector ``lam``, the entropy machinery needs the Hermitian
operator

    W = T[ integral dt rho(t) | prod_{xy} sum_{ab} e^{(1+it) w_{abxy}/2} P_a^x P_b^y |^2 ]

where ``w = sum_j lam_j c_j`` is the weight table, ``rho`` is the window
density ``(pi/2) / (cosh(pi t) + 1)`` and ``T`` conjugates by the
key-generating projectors (one party or both).  The t-integral factorizes
over pairs of expansion terms and evaluates in closed form through the
Fourier transform of the window, so ``W`` comes out as an explicit
noncommutative polynomial that downstream moment relaxations can bound.

The closed form is *gated*: :func:`validate_window_transform` compares it
against adaptive quadrature of the defining integral and is exercised by the
test suite before anything else trusts it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .opalg import (
    ALICE,
    BOB,
    IDENTITY,
    Monomial,
    Polynomial,
    RuleSet,
    adjoint_word,
    canonicalize,
    multiply,
    pair_projector,
    projector,
)

MAX_TOTAL_WEIGHT = 240.0  # keeps exp((W1+W2)/2) and its products finite


@dataclass(frozen=True)
class Pinching:
    """Key-generation pinching: conjugate by Alice's (and optionally Bob's) key projectors."""

    alice_setting: int = 0
    bob_setting: int | None = None

    @property
    def two_party(self) -> bool:
        return self.bob_setting is not None


@dataclass
class ConstraintSet:
    """Linear statistical constraints  sum_{abxy} c[j,a,b,x,y] Pr(ab|xy) = targets[j].

    ``coeffs`` has shape (n_constraints, nA, nB, nX, nY) over *all* outcomes
    and settings of the scenario; zero slices mark settings that never enter
    parameter estimation (e.g. a key-only setting).
    """

    coeffs: np.ndarray
    targets: np.ndarray
    cards: tuple[int, int, int, int]  # (nA, nB, nX, nY)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        nA, nB, nX, nY = self.cards
        if self.coeffs.shape != (len(self.targets), nA, nB, nX, nY):
            raise ValueError(
                f"coefficient table shape {self.coeffs.shape} does not match "
                f"{len(self.targets)} constraints over cards {self.cards}"
            )
        if not np.all(np.isfinite(self.coeffs)) or not np.all(np.isfinite(self.targets)):
            raise ValueError("constraint data must be finite")

    def __len__(self) -> int:
        return len(self.targets)

    def rules(self, **kw) -> RuleSet:
        nA, nB, nX, nY = self.cards
        return RuleSet(settings=(nX, nY), outcomes=(nA, nB), **kw)

    def factor_pairs(self) -> tuple:
        """Setting pairs carrying any constraint weight, in lexicographic order."""
        support = np.any(self.coeffs != 0, axis=(0, 1, 2))
        return tuple((x, y) for x, y in itertools.product(*map(range, support.shape)) if support[x, y])


def weight_table(lam: np.ndarray, cs: ConstraintSet) -> np.ndarray:
    """w[a,b,x,y] = sum_j lam_j c[j,a,b,x,y]."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != self_targets_shape(cs):
        raise ValueError(f"lambda length {lam.shape} does not match {len(cs)} constraints")
    if not np.all(np.isfinite(lam)):
        raise ValueError("lambda must be finite")
    return np.einsum("j,jabxy->abxy", lam, cs.coeffs)


def self_targets_shape(cs: ConstraintSet):
    return cs.targets.shape


# ---------------------------------------------------------------------------
# window density and its Fourier transform
# ---------------------------------------------------------------------------

def cosh_window(t):
    """The smoothing density (pi/2) / (cosh(pi t) + 1); integrates to 1."""
    return (np.pi / 2.0) / (np.cosh(np.pi * np.asarray(t, dtype=float)) + 1.0)


def cosh_window_ft(theta: float) -> float:
    """Fourier transform  integral cosh_window(t) e^{i theta t} dt  =  theta / sinh(theta).

    Even, real, equals 1 at theta = 0.  The closed form is validated against
    quadrature by :func:`validate_window_transform`.
    """
    th = abs(float(theta))
    if th < 1e-4:
        t2 = th * th
        return 1.0 - t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    if th > 30.0:
        # 2 th e^{-th} / (1 - e^{-2 th}) avoids overflow of sinh
        e = np.exp(-th)
        return 2.0 * th * e / (1.0 - e * e)
    return th / np.sinh(th)


def cosh_window_ft_quadrature(theta: float, tail: float = 30.0) -> float:
    """Quadrature oracle for the transform; independent of the closed form."""
    f = lambda t: cosh_window(t) * np.cos(theta * t)
    val, err = quad(f, -tail, tail, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


def validate_window_transform(thetas=None, tol: float = 1e-10) -> float:
    """Max |closed form - quadrature| over a grid; raises if above tol."""
    if thetas is None:
        thetas = np.concatenate([np.arange(0.0, 10.01, 0.1), -np.arange(0.1, 10.01, 0.1)])
    worst = 0.0
    for th in thetas:
        worst = max(worst, abs(cosh_window_ft(th) - cosh_window_ft_quadrature(th)))
    if worst > tol:
        raise ArithmeticError(f"window transform closed form off by {worst:.3e}")
    return worst


def pair_coefficient(w1: float, w2: float) -> float:
    """Scalar weight of an (adjoint-term, direct-term) pair in the expansion.

    The adjoint factor contributes e^{(1-it) w1 / 2}, the direct factor
    e^{(1+it) w2 / 2}; integrating against the window gives
    e^{(w1+w2)/2} * cosh_window_ft((w2-w1)/2).  Always strictly positive.
    """
    s = 0.5 * (w1 + w2)
    if s > MAX_TOTAL_WEIGHT:
        raise OverflowError(f"pair weight {s:.1f} too large to exponentiate")
    return float(np.exp(s)) * cosh_window_ft(0.5 * (w2 - w1))


# ---------------------------------------------------------------------------
# operator polynomial assembly
# ---------------------------------------------------------------------------

@dataclass
class Witness:
    """The pinched Hermitian operator polynomial for one weight table."""

    poly: Polynomial
    pinching: Pinching
    factor_order: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_identity(self) -> bool:
        t = self.poly.terms
        return len(t) == 1 and IDENTITY in t and abs(t[IDENTITY] - 1.0) < 1e-12


def _expand_sides(weights: np.ndarray, factor_order, rules: RuleSet):
    """Expand the ordered factor product into (word -> {weight key -> coeff}).

    Each factor is  sum_{ab} e^{kappa w[a,b,x,y]} P_a^x P_b^y  with the
    eliminated outcome expanded; the scalar exponential is deferred, tracked
    as the accumulated weight of the (a, b) choices.  Terms are merged by
    (canonical word, rounded weight) to keep the expansion compact.
    """
    nA, nB = rules.outcomes
    state: dict = {(IDENTITY, 0.0): 1.0}
    weight_of: dict = {0.0: 0.0}
    for (x, y) in factor_order:
        factor_terms = []
        for a in range(nA):
            for b in range(nB):
                op = pair_projector(a, b, x, y, rules)
                w_ab = float(weights[a, b, x, y])
                factor_terms.append((w_ab, op))
        new_state: dict = {}
        for (word, wkey), coeff in state.items():
            w_acc = weight_of[wkey]
            for w_ab, op in factor_terms:
                w_new = w_acc + w_ab
                k_new = round(w_new, 12)
                weight_of.setdefault(k_new, w_new)
                for pword, pc in op.terms.items():
                    full = canonicalize(word + pword, rules)
                    if full is None:
                        continue
                    key = (full, k_new)
                    new_state[key] = new_state.get(key, 0.0) + coeff * pc.real
        state = {k: c for k, c in new_state.items() if c != 0.0}
    # regroup: word -> {weight key -> coefficient}
    grouped: dict = {}
    for (word, wkey), coeff in state.items():
        grouped.setdefault(word, {})[wkey] = coeff
    return grouped, weight_of


def build_witness(
    weights: np.ndarray,
    pinching: Pinching,
    factor_order=None,
    rules: RuleSet | None = None,
    drop_tol: float = 1e-15,
) -> Witness:
    """Assemble the pinched operator polynomial for a weight table.

    ``factor_order`` fixes the order of the setting-pair factors in the
    product; any fixed order yields a valid bound (orders differ only in
    tightness).  Defaults to lexicographic over the pairs that carry weight
    anywhere in the constraint support, which keeps the polynomial identical
    for all multiplier vectors of one scenario.
    """
    weights = np.asarray(weights, dtype=float)
    nA, nB, nX, nY = weights.shape
    if rules is None:
        rules = RuleSet(settings=(nX, nY), outcomes=(nA, nB))
    if factor_order is None:
        support = np.any(weights != 0, axis=(0, 1))
        factor_order = tuple(
            (x, y) for x, y in itertools.product(range(nX), range(nY)) if support[x, y]
        )
    else:
        factor_order = tuple(factor_order)
        if len(factor_order) == 0:
            raise ValueError("factor order must not be empty")
    if 2.0 * float(np.max(np.abs(weights))) * max(1, len(factor_order)) > MAX_TOTAL_WEIGHT:
        raise OverflowError("weight table too large; rescale the multipliers")

    if len(factor_order) == 0:
        raw = Polynomial.one()
        n_pairs = 0
    else:
        direct, weight_of = _expand_sides(weights, factor_order, rules)
        wkeys = sorted(weight_of)
        widx = {k: i for i, k in enumerate(wkeys)}
        wvals = np.array([weight_of[k] for k in wkeys])
        # pair matrix over weight values: adjoint side w1 (rows), direct side w2
        s = 0.5 * (wvals[:, None] + wvals[None, :])
        d = 0.5 * (wvals[None, :] - wvals[:, None])
        ft = np.vectorize(cosh_window_ft)(d)
        pair_mat = np.exp(s) * ft
        dir_words = sorted(direct, key=lambda w: (len(w), w))
        coef = np.zeros((len(dir_words), len(wkeys)))
        for i, w in enumerate(dir_words):
            for k, c in direct[w].items():
                coef[i, widx[k]] = c
        # adjoint-side words are the reversals of the direct ones, same weights
        cross = coef @ pair_mat @ coef.T  # cross[i, j]: adjoint word_i * word_j
        raw_terms: dict = {}
        n_pairs = 0
        for i, wi in enumerate(dir_words):
            ai = adjoint_word(wi)
            for j, wj in enumerate(dir_words):
                c = cross[i, j]
                if c == 0.0:
                    continue
                n_pairs += 1
                full = canonicalize(ai + wj, rules)
                if full is None:
                    continue
                raw_terms[full] = raw_terms.get(full, 0.0) + c
        raw = Polynomial(raw_terms)

    pinched = _apply_pinching(raw, pinching, rules)
    dropped = len(pinched.terms)
    pinched = pinched.prune(drop_tol)
    dropped -= len(pinched.terms)
    # the construction is real and Hermitian; symmetrize away roundoff
    herm = 0.5 * (pinched + pinched.adjoint())
    herm = Polynomial({w: c.real for w, c in herm.terms.items()})
    return Witness(
        poly=herm,
        pinching=pinching,
        factor_order=factor_order,
        diagnostics={"term_pairs": n_pairs, "terms": len(herm.terms), "dropped_terms": dropped},
    )


def _apply_pinching(poly: Polynomial, pinching: Pinching, rules: RuleSet) -> Polynomial:
    key_ops = []
    for a in range(rules.outcomes[ALICE]):
        pa = projector(ALICE, pinching.alice_setting, a, rules)
        if pinching.two_party:
            for b in range(rules.outcomes[BOB]):
                pb = projector(BOB, pinching.bob_setting, b, rules)
                key_ops.append(multiply(pa, pb, rules))
        else:
            key_ops.append(pa)
    out = Polynomial.zero()
    for p in key_ops:
        out = out + multiply(multiply(p, poly, rules), p, rules)
    return out


def required_depths(witness: Witness) -> tuple[int, int]:
    """Per-party word depths (dA, dB) sufficient to factor every monomial as u* v.

    Counted from the raw degrees of the construction: each factor contributes
    at most one symbol per party and side, the squared product doubles that,
    pinching adds two key projectors, and the u* v split halves the total.
    """
    if witness.is_identity:
        return (0, 0)
    f = len(witness.factor_order)
    da = f + 1  # Alice is always pinched
    db = f + (1 if witness.pinching.two_party else 0)
    return (da, db)
