import itertools

import numpy as np
import pytest

from dientropy.oracle import (
    ExplicitRealization,
    entropy_production,
    expectation,
    purification_crosscheck,
    von_neumann_entropy,
    witness_value_quadrature,
    word_moment,
)
from dientropy.scenarios import (
    PHI_PLUS,
    ZDIR,
    XDIR,
    constraints_from_behavior,
    werner_chsh,
    werner_state,
)
from dientropy.witness import Pinching
from dientropy.oracle import verify_production_inequality

LN2 = np.log(2.0)


def _random_realization(rng, rank=None):
    dim = 4
    g = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real

    def rand_dirs(n):
        v = rng.normal(size=(n, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    from dientropy.scenarios import QubitRealization

    return QubitRealization(
        state=rho, alice_directions=list(rand_dirs(2)), bob_directions=list(rand_dirs(2))
    ).to_explicit()


def test_entropy_production_pure_bell_state():
    r, _ = werner_chsh(0.0)
    assert entropy_production(r.to_explicit(), Pinching(0)) == pytest.approx(LN2, abs=1e-12)


def test_entropy_production_maximally_mixed_is_zero():
    r, _ = werner_chsh(0.5)
    ex = r.to_explicit()
    assert entropy_production(ex, Pinching(0)) == pytest.approx(0.0, abs=1e-10)
    assert entropy_production(ex, Pinching(0, 0)) == pytest.approx(0.0, abs=1e-10)


def test_entropy_production_werner_regression():
    # frozen from the eigendecomposition; cross-checked by the purification path
    r, _ = werner_chsh(0.05)
    ex = r.to_explicit()
    value = entropy_production(ex, Pinching(0))
    assert value == pytest.approx(0.5428820389877889, abs=1e-12)
    assert purification_crosscheck(ex) == pytest.approx(value, abs=1e-9)


def test_entropy_production_nonnegative_random(rng):
    for _ in range(20):
        ex = _random_realization(rng)
        assert entropy_production(ex, Pinching(0)) >= -1e-10


def test_purification_crosscheck_pure_state():
    r, _ = werner_chsh(0.0)
    ex = r.to_explicit()
    # pure global state: conditional entropy equals the key-register entropy
    assert purification_crosscheck(ex) == pytest.approx(LN2, abs=1e-9)


def test_purification_crosscheck_random_rank2(rng):
    for _ in range(10):
        ex = _random_realization(rng, rank=2)
        assert purification_crosscheck(ex) == pytest.approx(
            entropy_production(ex, Pinching(0)), abs=1e-9
        )


def test_purification_crosscheck_product_state(rng):
    from dientropy.scenarios import QubitRealization

    pa = np.array([[0.7, 0.2], [0.2, 0.3]], dtype=complex)
    pb = np.array([[0.5, 0.1j], [-0.1j, 0.5]], dtype=complex)
    ex = QubitRealization(
        state=np.kron(pa, pb), alice_directions=[ZDIR, XDIR], bob_directions=[ZDIR, XDIR]
    ).to_explicit()
    assert purification_crosscheck(ex) == pytest.approx(
        entropy_production(ex, Pinching(0)), abs=1e-9
    )


def test_quadrature_zero_weights_is_one():
    r, _ = werner_chsh(0.07, bob_key=False)
    val = witness_value_quadrature(
        r.to_explicit(), np.zeros((2, 2, 2, 2)), Pinching(0), ((0, 0), (1, 1))
    )
    assert val == pytest.approx(1.0, abs=1e-10)


def test_moments_match_born_rule():
    r, b = werner_chsh(0.1)
    ex = r.to_explicit()
    from dientropy.opalg import A, B

    for x, y in itertools.product(range(2), range(1, 3)):
        m = word_moment(ex, (A(x, 0),), (B(y, 0),))
        assert m.real == pytest.approx(b.table[0, 0, x, y], abs=1e-12)


def test_production_inequality_zero_lambda():
    r, b = werner_chsh(0.1, bob_key=False)
    cs = constraints_from_behavior(b, "full")
    rep = verify_production_inequality(r.to_explicit(), cs, np.zeros(len(cs)), Pinching(0))
    assert rep["rhs_nats"] == pytest.approx(0.0, abs=1e-9)
    assert rep["lhs_nats"] >= -1e-10


def test_production_inequality_random_suite(rng):
    # trimmed version of the acceptance sweep: random states, measurements,
    # random constraint tables and multipliers
    from dientropy.witness import ConstraintSet

    for k in range(25):
        ex = _random_realization(rng)
        coeffs = rng.normal(size=(2, 2, 2, 2, 2))
        cs = ConstraintSet(coeffs=coeffs, targets=np.zeros(2), cards=(2, 2, 2, 2))
        lam = rng.normal(scale=0.8, size=2)
        pin = Pinching(0, 0) if k % 3 == 0 else Pinching(0)
        rep = verify_production_inequality(ex, cs, lam, pin)
        assert rep["gap_nats"] >= -1e-7
