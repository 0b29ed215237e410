import math
import random

import pytest
from hypothesis import given, strategies as st

from dientropy.opalg import (
    ALICE,
    BOB,
    A,
    B,
    IDENTITY,
    AlgebraError,
    Polynomial,
    RuleSet,
    adjoint,
    adjoint_word,
    allclose,
    anticommuting_reduce,
    canonicalize,
    multiply,
    pair_projector,
    projector,
)

R22 = RuleSet(settings=(2, 2), outcomes=(2, 2))
R22_FULL = RuleSet(settings=(2, 2), outcomes=(2, 2), eliminate=False)


def test_canonicalize_idempotence():
    assert canonicalize([A(0, 0), A(0, 0)], R22) == (A(0, 0),)


def test_canonicalize_orthogonality_is_zero():
    assert canonicalize([A(0, 0), A(0, 1)], R22_FULL) is None


def test_canonicalize_party_commutation():
    assert canonicalize([B(0, 0), A(1, 0)], R22) == (A(1, 0), B(0, 0))


def test_canonicalize_rejects_bad_symbols():
    with pytest.raises(AlgebraError):
        canonicalize([A(5, 0)], R22)
    with pytest.raises(AlgebraError):
        canonicalize([A(0, 1)], R22)  # eliminated outcome has no symbol


def test_multiply_identity():
    p = Polynomial({(A(0, 0), B(1, 0)): 2.0, IDENTITY: -0.5})
    assert multiply(Polynomial.one(), p, R22) == p


def test_multiply_orthogonal_outcomes():
    p = Polynomial.monomial((A(0, 0),))
    q = Polynomial.monomial((A(0, 1),))
    assert multiply(p, q, R22_FULL) == Polynomial.zero()


def test_multiply_completeness_sum():
    b00 = Polynomial.monomial((B(0, 0),))
    # elimination off: the sum is a genuine two-term polynomial
    s_full = projector(ALICE, 0, 0, R22_FULL) + projector(ALICE, 0, 1, R22_FULL)
    prod_full = multiply(s_full, b00, R22_FULL)
    expected = Polynomial({(A(0, 0), B(0, 0)): 1.0, (A(0, 1), B(0, 0)): 1.0})
    assert prod_full == expected
    # elimination on: the completeness sum is the identity
    s_elim = projector(ALICE, 0, 0, R22) + projector(ALICE, 0, 1, R22)
    assert s_elim == Polynomial.one()
    assert multiply(s_elim, b00, R22) == b00


def test_adjoint_examples():
    c = 1 + 2j
    p = Polynomial({(A(0, 0), B(0, 0)): c})
    assert adjoint(p) == Polynomial({(A(0, 0), B(0, 0)): c.conjugate()})
    q = Polynomial.monomial((A(0, 0), A(1, 0)))
    assert adjoint(q) == Polynomial.monomial((A(1, 0), A(0, 0)))
    herm = Polynomial({(A(0, 0),): 0.5, (A(0, 0), A(1, 0)): 1j, (A(1, 0), A(0, 0)): -1j})
    assert herm.is_hermitian()
    assert adjoint(herm) == herm


# ---------------------------------------------------------------------------
# property tests
# ---------------------------------------------------------------------------

RULES_BIG = RuleSet(settings=(3, 3), outcomes=(3, 3))

symbols = st.builds(
    lambda p, s, o: (A if p == ALICE else B)(s, o),
    st.sampled_from([ALICE, BOB]),
    st.integers(0, 2),
    st.integers(0, 1),
)
words = st.lists(symbols, max_size=8).map(tuple)


def reduce_random_order(word, rules, seed):
    """Oracle reducer: apply relations at random positions until stable."""
    rnd = random.Random(seed)
    term = list(word)
    while True:
        moves = []
        for i in range(len(term) - 1):
            s, t = term[i], term[i + 1]
            if s.party == BOB and t.party == ALICE:
                moves.append(("swap", i))
            elif s.party == t.party and s.setting == t.setting:
                moves.append(("merge", i))
        if not moves:
            return tuple(term)
        kind, i = rnd.choice(moves)
        if kind == "swap":
            term[i], term[i + 1] = term[i + 1], term[i]
        elif term[i].outcome == term[i + 1].outcome:
            del term[i + 1]
        else:
            return None


@given(words, st.integers(0, 10_000))
def test_canonicalize_matches_random_order_reduction(word, seed):
    assert canonicalize(word, RULES_BIG) == reduce_random_order(word, RULES_BIG, seed)


@given(words, words)
def test_canonicalize_confluent_under_splitting(u, v):
    direct = canonicalize(u + v, RULES_BIG)
    cu, cv = canonicalize(u, RULES_BIG), canonicalize(v, RULES_BIG)
    recombined = None if (cu is None or cv is None) else canonicalize(cu + cv, RULES_BIG)
    assert direct == recombined


coeffs = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)
polys = st.dictionaries(words, coeffs, max_size=4).map(
    lambda d: Polynomial(
        {w: c for w, c in ((canonicalize(k, RULES_BIG), v) for k, v in d.items()) if w is not None}
    )
)


@given(polys)
def test_adjoint_involution(p):
    assert adjoint(adjoint(p)) == p


@given(polys, polys, polys)
def test_multiply_associative(p, q, r):
    left = multiply(multiply(p, q, RULES_BIG), r, RULES_BIG)
    right = multiply(p, multiply(q, r, RULES_BIG), RULES_BIG)
    assert allclose(left, right, 1e-9)


@given(polys, polys)
def test_adjoint_antihomomorphism(p, q):
    lhs = adjoint(multiply(p, q, RULES_BIG))
    rhs = multiply(adjoint(q), adjoint(p), RULES_BIG)
    assert allclose(lhs, rhs, 1e-9)


def test_adjoint_word_stays_canonical():
    w = (A(0, 0), A(1, 0), B(2, 0), B(0, 0))
    assert adjoint_word(w) == (A(1, 0), A(0, 0), B(0, 0), B(2, 0))
    assert canonicalize(adjoint_word(w), RULES_BIG) == adjoint_word(w)


# ---------------------------------------------------------------------------
# anticommuting quotient
# ---------------------------------------------------------------------------

R3AC = RuleSet(settings=(3, 3), outcomes=(2, 2), alice_anticommuting=True)


def _as_matrix(word_coeffs):
    """Evaluate an Alice-word combination on explicit Pauli projectors."""
    import numpy as np

    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, 1]], dtype=complex) * 0  # placeholder
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    projs = [(np.eye(2) + s) / 2 for s in (sz, sx, sy)]
    total = np.zeros((2, 2), dtype=complex)
    for w, c in word_coeffs.items():
        m = np.eye(2, dtype=complex)
        for s in w:
            m = m @ projs[s.setting]
        total += c * m
    return total


@given(st.lists(st.integers(0, 2), max_size=6))
def test_anticommuting_reduce_is_exact_on_paulis(settings_seq):
    import numpy as np

    word = tuple(A(s, 0) for s in settings_seq)
    cw = canonicalize(word, R3AC)
    if cw is None:
        return
    reduced = anticommuting_reduce(cw, R3AC)
    # every reduced word has strictly ascending settings
    for w in reduced:
        sets = [s.setting for s in w]
        assert sets == sorted(set(sets))
    assert np.allclose(_as_matrix({cw: 1.0}), _as_matrix(reduced), atol=1e-12)


def test_anticommuting_requires_declaration():
    with pytest.raises(AlgebraError):
        anticommuting_reduce((A(0, 0),), RULES_BIG)
