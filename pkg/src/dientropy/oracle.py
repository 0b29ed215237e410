"""Brute-force verification on explicit small-dimensional realizations.

Everything here is independent of the relaxation machinery: states and
projectors are explicit arrays, entropies come from eigendecompositions and
the operator polynomial is evaluated by adaptive quadrature of its defining
integral.  These routines are the ground truth against which the symbolic
construction and every certified bound are checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .opalg import ALICE, Monomial, Polynomial
from .witness import Pinching, ConstraintSet, cosh_window

EIG_CLIP = 1e-12  # eigenvalues in [-EIG_CLIP, 0] are treated as exact zeros


@dataclass
class ExplicitRealization:
    """A state with explicit projective measurements for both parties."""

    rho: np.ndarray
    alice_projectors: list  # [setting][outcome] -> (dA x dA) array
    bob_projectors: list    # [setting][outcome] -> (dB x dB) array
    key_settings: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=complex)
        self.dims = (self.alice_projectors[0][0].shape[0], self.bob_projectors[0][0].shape[0])
        d = self.dims[0] * self.dims[1]
        if self.rho.shape != (d, d):
            raise ValueError(f"state dimension {self.rho.shape} does not match projectors {self.dims}")

    def validate(self, tol: float = 1e-10) -> None:
        if np.linalg.norm(self.rho - self.rho.conj().T) > tol:
            raise ValueError("state is not Hermitian")
        if abs(np.trace(self.rho).real - 1.0) > tol:
            raise ValueError("state is not normalized")
        if np.linalg.eigvalsh(self.rho).min() < -1e-10:
            raise ValueError("state is not positive semidefinite")
        for projs, dim in ((self.alice_projectors, self.dims[0]), (self.bob_projectors, self.dims[1])):
            for setting in projs:
                total = np.zeros((dim, dim), dtype=complex)
                for p in setting:
                    if np.linalg.norm(p @ p - p) > tol or np.linalg.norm(p - p.conj().T) > tol:
                        raise ValueError("projector is not an orthogonal projector")
                    total += p
                if np.linalg.norm(total - np.eye(dim)) > tol:
                    raise ValueError("projectors of one setting do not sum to identity")

    def cards(self):
        return (
            len(self.alice_projectors[0]),
            len(self.bob_projectors[0]),
            len(self.alice_projectors),
            len(self.bob_projectors),
        )

    def joint_projector(self, a: int, b: int, x: int, y: int) -> np.ndarray:
        return np.kron(self.alice_projectors[x][a], self.bob_projectors[y][b])

    def probability_table(self) -> np.ndarray:
        nA, nB, nX, nY = self.cards()
        table = np.zeros((nA, nB, nX, nY))
        for x in range(nX):
            for y in range(nY):
                for a in range(nA):
                    for b in range(nB):
                        table[a, b, x, y] = float(
                            np.trace(self.rho @ self.joint_projector(a, b, x, y)).real
                        )
        return table


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy in nats, with the documented clip for tiny negative eigenvalues."""
    vals = np.linalg.eigvalsh(rho)
    if vals.min() < -EIG_CLIP:
        raise ValueError(f"matrix has negative eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    nz = vals[vals > 0]
    return float(-(nz * np.log(nz)).sum())


def pinch_state(r: ExplicitRealization, pinching: Pinching) -> np.ndarray:
    dA, dB = r.dims
    ops = []
    for pa in r.alice_projectors[pinching.alice_setting]:
        if pinching.two_party:
            for pb in r.bob_projectors[pinching.bob_setting]:
                ops.append(np.kron(pa, pb))
        else:
            ops.append(np.kron(pa, np.eye(dB)))
    return sum(p @ r.rho @ p for p in ops)


def entropy_production(r: ExplicitRealization, pinching: Pinching) -> float:
    """H(pinched state) - H(state), in nats.

    Equals the conditional entropy of the key register(s) given the
    purifying system, for any purification of the state.
    """
    return von_neumann_entropy(pinch_state(r, pinching)) - von_neumann_entropy(r.rho)


def purification_crosscheck(r: ExplicitRealization, pinching: Pinching | None = None) -> float:
    """H(key register | purifying system) computed on an explicit purification.

    Builds the purification, applies the key measurement(s) into a classical
    register, and evaluates H(K E) - H(E) directly.  Must agree with
    :func:`entropy_production` to high precision for all states.
    """
    if pinching is None:
        pinching = Pinching(alice_setting=r.key_settings[0])
    d = r.rho.shape[0]
    if d > 16:
        raise ValueError("purification crosscheck limited to total dimension <= 16")
    vals, vecs = np.linalg.eigh(r.rho)
    vals = np.clip(vals, 0.0, None)
    dA, dB = r.dims
    ops = []
    for pa in r.alice_projectors[pinching.alice_setting]:
        if pinching.two_party:
            for pb in r.bob_projectors[pinching.bob_setting]:
                ops.append(np.kron(pa, pb))
        else:
            ops.append(np.kron(pa, np.eye(dB)))
    # |psi> = sum_i sqrt(p_i) |i>_AB |i>_E ; rho_E = sum_ij sqrt(p_i p_j) <j|i... = diag-ish
    sq = np.sqrt(vals)
    # E-marginal of the purification: Gram matrix of sqrt(p_i)|i> pairs
    rho_E = np.diag(vals).astype(complex)
    h_E = von_neumann_entropy(rho_E)
    # classical-quantum state on K (x) E after the key measurement
    blocks = []
    for op in ops:
        m = vecs.conj().T @ op @ vecs  # measurement in the eigenbasis of rho
        block = (sq[:, None] * m * sq[None, :]).conj()  # <j| P |i> sqrt(pi pj) -> E operator
        blocks.append(block.T)
    h_KE = von_neumann_entropy(_block_diag(blocks))
    return h_KE - h_E


def _block_diag(blocks):
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=complex)
    i = 0
    for b in blocks:
        out[i : i + b.shape[0], i : i + b.shape[0]] = b
        i += b.shape[0]
    return out


# ---------------------------------------------------------------------------
# symbolic-polynomial evaluation
# ---------------------------------------------------------------------------

def word_matrix(r: ExplicitRealization, word: Monomial) -> np.ndarray:
    """Explicit matrix of a canonical word (outcome indices are the raw ones)."""
    dA, dB = r.dims
    ma = np.eye(dA, dtype=complex)
    mb = np.eye(dB, dtype=complex)
    for s in word:
        if s.party == ALICE:
            ma = ma @ r.alice_projectors[s.setting][s.outcome]
        else:
            mb = mb @ r.bob_projectors[s.setting][s.outcome]
    return np.kron(ma, mb)


def polynomial_matrix(r: ExplicitRealization, poly: Polynomial) -> np.ndarray:
    d = r.rho.shape[0]
    out = np.zeros((d, d), dtype=complex)
    for w, c in poly.terms.items():
        out += c * word_matrix(r, w)
    return out


def expectation(r: ExplicitRealization, poly: Polynomial) -> complex:
    return complex(np.trace(r.rho @ polynomial_matrix(r, poly)))


def word_moment(r: ExplicitRealization, u: Monomial, v: Monomial) -> complex:
    """<u* v> on the realization, for moment-matrix feasibility checks."""
    m = word_matrix(r, u).conj().T @ word_matrix(r, v)
    return complex(np.trace(r.rho @ m))


# ---------------------------------------------------------------------------
# quadrature evaluation of the witness expectation
# ---------------------------------------------------------------------------

def witness_value_quadrature(
    r: ExplicitRealization,
    weights: np.ndarray,
    pinching: Pinching,
    factor_order,
    tail: float = 30.0,
) -> float:
    """<W>_rho by adaptive quadrature of the defining t-integral.

    Independent of the symbolic expansion: the factor product is formed from
    explicit matrices at each quadrature node.  The window decays like
    e^{-pi |t|} so the truncation error at the default tail is far below the
    integration tolerance; the tail bound is returned in the diagnostics of
    exceptions on failure.
    """
    weights = np.asarray(weights, dtype=float)
    pinched = pinch_state(r, pinching)  # self-adjoint pinching: tr(rho T[M]) = tr(T[rho] M)
    d = r.rho.shape[0]

    def integrand(t: float) -> float:
        g = np.eye(d, dtype=complex)
        for (x, y) in factor_order:
            f = np.zeros((d, d), dtype=complex)
            for a in range(weights.shape[0]):
                for b in range(weights.shape[1]):
                    f += np.exp(0.5 * (1 + 1j * t) * weights[a, b, x, y]) * r.joint_projector(a, b, x, y)
            g = g @ f
        m = g.conj().T @ g
        return float(np.trace(pinched @ m).real) * float(cosh_window(t))

    val, err = quad(integrand, -tail, tail, epsabs=1e-12, epsrel=1e-11, limit=600)
    if err > 1e-7 * max(1.0, abs(val)):
        raise ArithmeticError(f"quadrature did not converge: estimate {val:.6e}, error {err:.2e}")
    return val


def verify_production_inequality(
    r: ExplicitRealization,
    cs: ConstraintSet,
    lam: np.ndarray,
    pinching: Pinching,
    factor_order=None,
    slack: float = 1e-7,
) -> dict:
    """Check that entropy production dominates the variational bound on one realization.

    Evaluates both sides with the constraint values taken from the
    realization itself; a violation beyond ``slack`` indicates an
    implementation bug and raises with a diagnostic dump.
    """
    from .witness import weight_table  # local import to keep module load light

    lam = np.asarray(lam, dtype=float)
    w = weight_table(lam, cs)
    if factor_order is None:
        cs_pairs = cs.factor_pairs()
        factor_order = cs_pairs if cs_pairs else ((0, 0),)
    table = r.probability_table()
    l_true = np.einsum("jabxy,abxy->j", cs.coeffs, table)
    lhs = entropy_production(r, pinching)
    wv = witness_value_quadrature(r, w, pinching, factor_order)
    rhs = float(lam @ l_true) - float(np.log(wv))
    gap = lhs - rhs
    report = {
        "lhs_nats": lhs,
        "rhs_nats": rhs,
        "gap_nats": gap,
        "witness_value": wv,
        "constraint_values": l_true,
    }
    if gap < -slack:
        raise AssertionError(f"production inequality violated by {-gap:.3e} nats: {report}")
    return report
