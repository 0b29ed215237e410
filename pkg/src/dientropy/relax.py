"""Moment-matrix relaxations for polynomial optimization over measurement algebras.

Given a basis of words, the moment matrix has entries ``<u* v>`` indexed by
basis pairs; for any quantum realization it is positive semidefinite and its
entries repeat according to the word algebra.  The relaxation keeps one real
scalar variable per distinct canonical moment (real embedding: the real part
of a feasible Hermitian moment matrix is feasible with the same objective for
Hermitian objectives), pins the identity moment to one, adds the observed
statistics as linear rows, and maximizes the objective functional.  Its value
can only overestimate the quantum supremum, which is the direction needed for
security statements.

Operator identities of partially characterized devices enter in two ways:

* generic identity polynomials become moment-level rows ``<u* I v> = 0`` for
  all basis pairs whose words stay inside the indexed moment set (pairs that
  fall outside are skipped and counted -- dropping rows only loosens the
  relaxation, so the result stays a valid bound);
* the special case of pairwise-anticommuting binary observables on Alice's
  side is handled exactly, by reducing Alice words to the quotient algebra
  when moments are indexed.  This keeps the basis small enough to be solvable
  at the depths the objective requires.

Every entry of a feasible moment matrix lies in [-1, 1]: the basis is closed
under suffixes, so the diagonal moments are bounded by one through nested
2x2 minors, and off-diagonals follow by positive semidefiniteness.  This is
what justifies ``var_cap = 1`` for certification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .opalg import (
    ALICE,
    BOB,
    IDENTITY,
    Monomial,
    Polynomial,
    RuleSet,
    adjoint_word,
    anticommuting_reduce,
    canonicalize,
    multiply,
    pair_projector,
    projector,
    word_sort_key,
)
from .sdp import SDPProblem
from .witness import ConstraintSet, Pinching, Witness


class IncreaseLevelError(ValueError):
    """The basis does not span a required monomial; raise the depth."""

    def __init__(self, word):
        self.word = word
        super().__init__(f"monomial {word!r} is outside the moment span; increase the level")


@dataclass(frozen=True)
class BasisSpec:
    alice_depth: int
    bob_depth: int
    extra_words: tuple = ()

    def __post_init__(self):
        if self.alice_depth < 0 or self.bob_depth < 0:
            raise ValueError("depths must be nonnegative")


def party_words(party: int, depth: int, rules: RuleSet):
    """Canonical single-party words up to the given length.

    For an anticommuting characterized Alice the free words collapse to the
    quotient algebra, spanned by the ascending-setting products.
    """
    if party == ALICE and rules.alice_anticommuting:
        out = [IDENTITY]
        settings = range(rules.settings[ALICE])
        for size in range(1, min(depth, rules.settings[ALICE]) + 1):
            for combo in itertools.combinations(settings, size):
                out.append(tuple(_sym(party, s) for s in combo))
        return out
    letters = [
        (s, o)
        for s in range(rules.settings[party])
        for o in range(rules.symbol_outcomes(party))
    ]
    out = [IDENTITY]
    frontier = [IDENTITY]
    for _ in range(depth):
        nxt = []
        for w in frontier:
            for s, o in letters:
                if w and w[-1].setting == s:
                    continue
                nxt.append(w + (_sym(party, s, o),))
        out.extend(nxt)
        frontier = nxt
    return out


def _sym(party, setting, outcome=0):
    from .opalg import Symbol

    return Symbol(party, setting, outcome)


def generate_basis(spec: BasisSpec, rules: RuleSet):
    """Alice-word x Bob-word products, deduplicated, graded-lexicographic order."""
    alice = party_words(ALICE, spec.alice_depth, rules)
    bob = party_words(BOB, spec.bob_depth, rules)
    words = {a + b for a in alice for b in bob}
    for w in spec.extra_words:
        cw = canonicalize(w, rules)
        if cw is not None:
            words.add(cw)
    return sorted(words, key=word_sort_key)


def _moment_terms(u: Monomial, v: Monomial, rules: RuleSet):
    """Decompose <u* v> into canonical moment labels with real coefficients.

    Returns a list of (label word, coefficient); the empty list is a
    structural zero (orthogonality collision).  Without the quotient the
    label is the adjoint-folded canonical word itself.
    """
    w = canonicalize(adjoint_word(u) + v, rules)
    if w is None:
        return []
    if rules.alice_anticommuting:
        return [(t, c) for t, c in anticommuting_reduce(w, rules).items()]
    return [(min(w, adjoint_word(w), key=word_sort_key), 1.0)]


def fold_polynomial(poly: Polynomial, rules: RuleSet, label_index: dict) -> np.ndarray:
    """Real functional over moment labels computing Re<poly> for Hermitian poly."""
    vec = np.zeros(len(label_index))
    for w, c in poly.terms.items():
        if rules.alice_anticommuting:
            terms = anticommuting_reduce(w, rules).items()
        else:
            terms = [(min(w, adjoint_word(w), key=word_sort_key), 1.0)]
        for t, coeff in terms:
            if t not in label_index:
                raise IncreaseLevelError(t)
            vec[label_index[t]] += c.real * coeff
    return vec


@dataclass
class MomentRelaxation:
    basis: list
    labels: list
    label_index: dict
    rules: RuleSet
    spec: BasisSpec
    ent_i: np.ndarray
    ent_j: np.ndarray
    ent_var: np.ndarray
    ent_coeff: np.ndarray
    rows: sp.csr_matrix
    rhs: np.ndarray
    row_kinds: list
    objective: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def moment_id(self, u: Monomial, v: Monomial):
        """Moment ids and coefficients for <u* v>; None marks a structural zero."""
        terms = _moment_terms(u, v, self.rules)
        if not terms:
            return None
        return [(self.label_index[t], c) for t, c in terms]


def build_relaxation(
    objective: Witness | Polynomial,
    cs: ConstraintSet | None,
    spec: BasisSpec,
    rules: RuleSet,
) -> MomentRelaxation:
    """Moment relaxation of  sup <objective>  subject to the constraint rows."""
    basis = generate_basis(spec, rules)
    label_index: dict = {}
    labels: list = []
    ei, ej, ev, ec = [], [], [], []
    for i, u in enumerate(basis):
        for j in range(i, len(basis)):
            terms = _moment_terms(u, basis[j], rules)
            for t, c in terms:
                if t not in label_index:
                    label_index[t] = len(labels)
                    labels.append(t)
                ei.append(i)
                ej.append(j)
                ev.append(label_index[t])
                ec.append(c)
    # deterministic label order independent of discovery order
    order = sorted(range(len(labels)), key=lambda k: word_sort_key(labels[k]))
    remap = np.empty(len(labels), dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
    labels = [labels[k] for k in order]
    label_index = {w: k for k, w in enumerate(labels)}
    ev = remap[np.array(ev, dtype=np.int64)]

    if IDENTITY not in label_index:
        raise IncreaseLevelError(IDENTITY)

    row_list, rhs_list, kinds = [], [], []

    def add_row(vec, target, kind):
        row_list.append(vec)
        rhs_list.append(target)
        kinds.append(kind)

    norm = np.zeros(len(labels))
    norm[label_index[IDENTITY]] = 1.0
    add_row(norm, 1.0, "normalization")

    if cs is not None:
        for j in range(len(cs)):
            poly = _constraint_polynomial(cs.coeffs[j], rules)
            add_row(fold_polynomial(poly, rules, label_index), float(cs.targets[j]), f"statistic[{j}]")

    skipped = 0
    emitted = set()
    for ident in rules.extra_identities:
        for u in basis:
            for v in basis:
                try:
                    vec = _identity_row(u, ident, v, rules, label_index)
                except IncreaseLevelError:
                    skipped += 1
                    continue
                if vec is None:
                    continue
                key = tuple(np.round(vec, 12))
                if key in emitted or tuple(-x for x in key) in emitted:
                    continue
                emitted.add(key)
                add_row(vec, 0.0, "identity")

    adjoint_rows = 0
    if rules.alice_anticommuting:
        for t in labels:
            ta = adjoint_word(t)
            if ta == t:
                continue
            terms = anticommuting_reduce(ta, rules)
            if word_sort_key(min(terms, key=word_sort_key)) > word_sort_key(t):
                continue  # the partner class emits this relation
            if any(w not in label_index for w in terms):
                continue
            vec = np.zeros(len(labels))
            vec[label_index[t]] = 1.0
            for w, c in terms.items():
                vec[label_index[w]] -= c
            if np.any(vec != 0.0):
                add_row(vec, 0.0, "adjoint")
                adjoint_rows += 1

    rows = sp.csr_matrix(np.array(row_list)) if row_list else sp.csr_matrix((0, len(labels)))

    poly = objective.poly if isinstance(objective, Witness) else objective
    obj_vec = fold_polynomial(poly, rules, label_index)

    return MomentRelaxation(
        basis=basis,
        labels=labels,
        label_index=label_index,
        rules=rules,
        spec=spec,
        ent_i=np.array(ei, dtype=np.int32),
        ent_j=np.array(ej, dtype=np.int32),
        ent_var=np.asarray(ev, dtype=np.int32),
        ent_coeff=np.array(ec, dtype=float),
        rows=rows,
        rhs=np.array(rhs_list),
        row_kinds=kinds,
        objective=obj_vec,
        diagnostics={
            "basis_size": len(basis),
            "moment_count": len(labels),
            "identity_pairs_skipped": skipped,
            "adjoint_rows": adjoint_rows,
        },
    )


def _constraint_polynomial(coeffs: np.ndarray, rules: RuleSet) -> Polynomial:
    nA, nB, nX, nY = coeffs.shape
    out = Polynomial.zero()
    for a, b, x, y in itertools.product(range(nA), range(nB), range(nX), range(nY)):
        c = coeffs[a, b, x, y]
        if c != 0.0:
            out = out + c * pair_projector(a, b, x, y, rules)
    return out


def _identity_row(u, ident: Polynomial, v, rules, label_index):
    """Row asserting <u* I v> = 0 over the moment labels, or None if trivial."""
    acc: dict = {}
    for w, c in ident.terms.items():
        word = canonicalize(adjoint_word(u) + w + v, rules)
        if word is None:
            continue
        if rules.alice_anticommuting:
            terms = anticommuting_reduce(word, rules).items()
        else:
            terms = [(min(word, adjoint_word(word), key=word_sort_key), 1.0)]
        for t, coeff in terms:
            if t not in label_index:
                raise IncreaseLevelError(t)
            acc[t] = acc.get(t, 0.0) + c.real * coeff
    if not acc:
        return None
    vec = np.zeros(len(label_index))
    for t, c in acc.items():
        vec[label_index[t]] = c
    return vec if np.abs(vec).max() > 1e-14 else None


def objective_vector(rel: MomentRelaxation, objective: Witness | Polynomial) -> np.ndarray:
    poly = objective.poly if isinstance(objective, Witness) else objective
    return fold_polynomial(poly, rel.rules, rel.label_index)


def to_sdp(rel: MomentRelaxation, sense: str = "max") -> SDPProblem:
    n = rel.dimension
    return SDPProblem(
        blocks=(n,),
        sense=sense,
        nvars=len(rel.labels),
        ent_block=np.zeros(len(rel.ent_i), dtype=np.int32),
        ent_i=rel.ent_i,
        ent_j=rel.ent_j,
        ent_var=rel.ent_var,
        ent_coeff=rel.ent_coeff,
        rows=rel.rows,
        rhs=rel.rhs,
        obj=rel.objective,
        var_cap=1.0,
        name="moment-relaxation",
    )


def guessing_problem(
    rel: MomentRelaxation,
    cs: ConstraintSet,
    guess_polys: list,
) -> SDPProblem:
    """Multi-block guessing-probability relaxation from a base moment structure.

    One sub-normalized moment block per guess; observed statistics constrain
    the block sum, block normalizations sum to one, and the objective adds
    the guessed-outcome moment of each block.
    """
    k = len(guess_polys)
    d = len(rel.labels)
    n = rel.dimension
    nent = len(rel.ent_i)
    ent_block = np.concatenate([np.full(nent, e, dtype=np.int32) for e in range(k)])
    ent_i = np.tile(rel.ent_i, k)
    ent_j = np.tile(rel.ent_j, k)
    ent_var = np.concatenate([rel.ent_var + e * d for e in range(k)])
    ent_coeff = np.tile(rel.ent_coeff, k)

    base_rows = rel.rows.toarray()
    keep = [i for i, kind in enumerate(rel.row_kinds) if kind != "normalization"]
    shared = np.hstack([base_rows[keep]] * k) if keep else np.zeros((0, k * d))
    shared_rhs = rel.rhs[keep]
    norm = np.zeros((1, k * d))
    for e in range(k):
        norm[0, e * d + rel.label_index[IDENTITY]] = 1.0
    rows = sp.csr_matrix(np.vstack([norm, shared]))
    rhs = np.concatenate([[1.0], shared_rhs])

    obj = np.zeros(k * d)
    for e, poly in enumerate(guess_polys):
        obj[e * d : (e + 1) * d] = fold_polynomial(poly, rel.rules, rel.label_index)

    return SDPProblem(
        blocks=tuple([n] * k),
        sense="max",
        nvars=k * d,
        ent_block=ent_block,
        ent_i=ent_i,
        ent_j=ent_j,
        ent_var=ent_var,
        ent_coeff=ent_coeff,
        rows=rows,
        rhs=rhs,
        obj=obj,
        var_cap=1.0,
        name="guessing-probability",
    )
