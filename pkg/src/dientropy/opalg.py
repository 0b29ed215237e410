"""Noncommutative polynomial algebra over projective-measurement symbols.

Words are tuples of projector symbols, one symbol per measurement outcome.
The built-in relations are the projector identities

* idempotence:      P P = P          (same party, setting and outcome)
* orthogonality:    P Q = 0          (same party and setting, different outcome)
* party commutation: Alice symbols commute with Bob symbols.

A word is *canonical* when all Alice symbols precede all Bob symbols (the
internal order of each party's symbols is preserved) and no two adjacent
symbols of one party share a setting.  Canonicalization is confluent: the
result does not depend on the order in which relations are applied.

With outcome elimination active (the default) only the first ``n - 1``
outcomes of an ``n``-outcome measurement get a symbol; the last projector is
represented as identity minus the others at polynomial-construction time, via
:func:`projector`.  This keeps the rewrite system confluent and the word
alphabet small.

Operator identities beyond the built-in ones (used for partially
characterized devices) are *not* rewrite rules; they are carried on the
:class:`RuleSet` and consumed downstream as moment-level constraints.  The
one exception is :func:`anticommuting_reduce`, an exact quotient for the
special case of pairwise-anticommuting binary observables on Alice's side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional

ALICE = 0
BOB = 1

_PARTY_CHAR = "AB"


class Symbol(NamedTuple):
    """One measurement-outcome projector: party, setting index, outcome index."""

    party: int
    setting: int
    outcome: int

    def __repr__(self) -> str:
        return f"{_PARTY_CHAR[self.party]}{self.setting}:{self.outcome}"


#: A canonical word.  The empty tuple is the identity operator.
Monomial = tuple
IDENTITY: Monomial = ()


def A(setting: int, outcome: int = 0) -> Symbol:
    return Symbol(ALICE, setting, outcome)


def B(setting: int, outcome: int = 0) -> Symbol:
    return Symbol(BOB, setting, outcome)


class AlgebraError(ValueError):
    """Raised for symbols or operations outside the declared scenario."""


@dataclass(frozen=True)
class RuleSet:
    """Scenario shape plus the relations used during canonicalization.

    ``settings``/``outcomes`` give the number of measurement settings and of
    outcomes per setting for (Alice, Bob).  ``extra_identities`` are
    polynomials asserted to vanish; they are exported as moment-level
    equalities by the relaxation builder, never used for rewriting.
    ``alice_anticommuting`` declares Alice's binary observables
    ``2 P_x - 1`` pairwise anticommuting (characterized qubit devices); see
    :func:`anticommuting_reduce`.
    """

    settings: tuple[int, int]
    outcomes: tuple[int, int]
    eliminate: bool = True
    extra_identities: tuple = ()
    alice_anticommuting: bool = False

    def __post_init__(self):
        if min(self.settings) < 1 or min(self.outcomes) < 2:
            raise AlgebraError("need at least one setting and two outcomes per party")
        if self.alice_anticommuting and (self.outcomes[0] != 2 or not self.eliminate):
            raise AlgebraError("anticommuting reduction requires binary outcomes with elimination")

    def symbol_outcomes(self, party: int) -> int:
        """Number of outcomes that get their own symbol."""
        return self.outcomes[party] - 1 if self.eliminate else self.outcomes[party]

    def check_symbol(self, s: Symbol) -> None:
        if s.party not in (ALICE, BOB):
            raise AlgebraError(f"bad party in {s!r}")
        if not 0 <= s.setting < self.settings[s.party]:
            raise AlgebraError(f"setting out of range in {s!r}")
        if not 0 <= s.outcome < self.symbol_outcomes(s.party):
            raise AlgebraError(f"outcome out of range in {s!r}")


def _reduce_party_block(symbols: list) -> Optional[list]:
    """Collapse adjacent same-setting symbols; None marks the zero operator."""
    stack: list = []
    for s in symbols:
        if stack and stack[-1].setting == s.setting:
            if stack[-1].outcome == s.outcome:
                continue
            return None
        stack.append(s)
    return stack


def canonicalize(word: Iterable, rules: RuleSet) -> Optional[Monomial]:
    """Canonical form of a word, or None if it reduces to the zero operator."""
    alice, bob = [], []
    for s in word:
        rules.check_symbol(s)
        (alice if s.party == ALICE else bob).append(s)
    ra = _reduce_party_block(alice)
    if ra is None:
        return None
    rb = _reduce_party_block(bob)
    if rb is None:
        return None
    return tuple(ra) + tuple(rb)


def adjoint_word(word: Monomial) -> Monomial:
    """Adjoint of a canonical word (symbols are self-adjoint projectors)."""
    alice = tuple(s for s in word if s.party == ALICE)
    bob = word[len(alice):]
    return alice[::-1] + bob[::-1]


def word_sort_key(word: Monomial):
    """Graded lexicographic order, Alice-major.  Deterministic basis ordering."""
    return (len(word), word)


class Polynomial:
    """Complex linear combination of canonical words.

    The term map never stores exact-zero coefficients.  Instances behave like
    immutable values; arithmetic returns new objects.
    """

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        clean = {}
        if terms:
            for w, c in terms.items():
                c = complex(c)
                if c != 0:
                    clean[w] = c
        object.__setattr__(self, "terms", clean)

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls) -> "Polynomial":
        return cls()

    @classmethod
    def one(cls) -> "Polynomial":
        return cls({IDENTITY: 1.0})

    @classmethod
    def monomial(cls, word: Monomial, coeff=1.0) -> "Polynomial":
        return cls({tuple(word): coeff})

    # -- ring operations ----------------------------------------------
    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0.0) + c
        return Polynomial(out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-1.0) * other

    def __neg__(self) -> "Polynomial":
        return (-1.0) * self

    def __mul__(self, scalar) -> "Polynomial":
        if isinstance(scalar, Polynomial):
            raise TypeError("use opalg.multiply(p, q, rules) for word products")
        return Polynomial({w: scalar * c for w, c in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        bits = []
        for w in sorted(self.terms, key=word_sort_key):
            c = self.terms[w]
            word = " ".join(map(repr, w)) if w else "1"
            bits.append(f"({c:.6g})*{word}")
        return " + ".join(bits)

    # -- involution and helpers ----------------------------------------
    def adjoint(self) -> "Polynomial":
        return Polynomial({adjoint_word(w): c.conjugate() for w, c in self.terms.items()})

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return allclose(self, self.adjoint(), tol)

    def prune(self, tol: float) -> "Polynomial":
        if not self.terms:
            return self
        cut = tol * max(abs(c) for c in self.terms.values())
        return Polynomial({w: c for w, c in self.terms.items() if abs(c) > cut})

    def max_degree(self, party: int) -> int:
        if not self.terms:
            return 0
        return max((sum(1 for s in w if s.party == party) for w in self.terms), default=0)


def allclose(p: Polynomial, q: Polynomial, tol: float = 1e-12) -> bool:
    words = set(p.terms) | set(q.terms)
    return all(abs(p.terms.get(w, 0.0) - q.terms.get(w, 0.0)) <= tol for w in words)


def adjoint(p: Polynomial) -> Polynomial:
    return p.adjoint()


def multiply(p: Polynomial, q: Polynomial, rules: RuleSet) -> Polynomial:
    """Product of two polynomials, canonicalized term by term."""
    out: dict = {}
    for w1, c1 in p.terms.items():
        for w2, c2 in q.terms.items():
            w = canonicalize(w1 + w2, rules)
            if w is None:
                continue
            out[w] = out.get(w, 0.0) + c1 * c2
    return Polynomial(out)


def projector(party: int, setting: int, outcome: int, rules: RuleSet) -> Polynomial:
    """Projector for one outcome, with the eliminated outcome expanded.

    Under elimination the last outcome is identity minus the sum of the
    represented ones, so completeness sums collapse to the identity exactly.
    """
    n = rules.outcomes[party]
    if not 0 <= setting < rules.settings[party]:
        raise AlgebraError(f"setting {setting} out of range for party {party}")
    if not 0 <= outcome < n:
        raise AlgebraError(f"outcome {outcome} out of range")
    if not rules.eliminate or outcome < n - 1:
        return Polynomial.monomial((Symbol(party, setting, outcome),))
    terms = {IDENTITY: 1.0}
    for a in range(n - 1):
        terms[(Symbol(party, setting, a),)] = -1.0
    return Polynomial(terms)


def pair_projector(a: int, b: int, x: int, y: int, rules: RuleSet) -> Polynomial:
    """The product projector for joint outcome (a, b) of settings (x, y)."""
    return multiply(projector(ALICE, x, a, rules), projector(BOB, y, b, rules), rules)


# ---------------------------------------------------------------------------
# Quotient for characterized anticommuting binary observables on Alice's side
# ---------------------------------------------------------------------------

def _swap_pair(left: Symbol, right: Symbol):
    """Rewrite P_y P_x (settings y > x) into sorted-word branches.

    Anticommutation of O_s = 2 P_s - 1 gives
    P_y P_x = P_x + P_y - 1/2 - P_x P_y.
    """
    x, y = right, left
    return [((x,), 1.0), ((y,), 1.0), ((), -0.5), ((x, y), -1.0)]


@lru_cache(maxsize=None)
def _reduce_alice_cached(word: Monomial):
    for k in range(len(word) - 1):
        l, r = word[k], word[k + 1]
        if l.setting > r.setting:
            out: dict = {}
            for mid, coeff in _swap_pair(l, r):
                branch = word[:k] + mid + word[k + 2:]
                reduced = _reduce_party_block(list(branch))
                if reduced is None:
                    continue
                for w2, c2 in _reduce_alice_cached(tuple(reduced)).items():
                    out[w2] = out.get(w2, 0.0) + coeff * c2
            return {w: c for w, c in out.items() if c != 0}
    return {word: 1.0}


def anticommuting_reduce(word: Monomial, rules: RuleSet) -> dict:
    """Rewrite the Alice part of a canonical word into the exact quotient.

    Valid when Alice's binary observables pairwise anticommute (e.g. Pauli
    measurements on a characterized qubit).  The quotient algebra is spanned
    by products of projectors with strictly increasing settings, so the
    result maps ascending-Alice words to real coefficients.  Bob's part is
    untouched.
    """
    if not rules.alice_anticommuting:
        raise AlgebraError("rule set does not declare anticommuting Alice observables")
    alice = tuple(s for s in word if s.party == ALICE)
    bob = word[len(alice):]
    out = {}
    for aw, c in _reduce_alice_cached(alice).items():
        out[aw + bob] = c.real if isinstance(c, complex) else float(c)
    return out
