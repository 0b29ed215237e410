"""Two-qubit scenario generators: states, measurements, behaviors, constraints.

All behaviors come from an explicit two-qubit simulator (Born rule on Bloch
measurement directions), so every generated table has a realization the
oracle can evaluate exactly.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .oracle import ExplicitRealization
from .witness import ConstraintSet

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
ZDIR = np.array([0.0, 0.0, 1.0])
XDIR = np.array([1.0, 0.0, 0.0])
YDIR = np.array([0.0, 1.0, 0.0])

PHI_PLUS = np.zeros((4, 4), dtype=complex)
_v = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
PHI_PLUS[:, :] = np.outer(_v, _v.conj())


class ScenarioError(ValueError):
    pass


def bloch_projectors(direction: np.ndarray):
    """Projectors for outcomes (0, 1) of a spin measurement along a Bloch direction."""
    n = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise ScenarioError(f"Bloch direction {n} is not unit norm")
    op = n[0] * PAULI["x"] + n[1] * PAULI["y"] + n[2] * PAULI["z"]
    eye = np.eye(2, dtype=complex)
    return [(eye + op) / 2, (eye - op) / 2]


@dataclass
class QubitRealization:
    """Two-qubit state plus Bloch measurement directions for both parties."""

    state: np.ndarray
    alice_directions: list
    bob_directions: list
    key_settings: tuple[int, int] = (0, 0)
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=complex)
        if self.state.shape != (4, 4):
            raise ScenarioError("state must be a 4x4 density matrix")

    def validate(self) -> None:
        rho = self.state
        if np.linalg.norm(rho - rho.conj().T) > 1e-12:
            raise ScenarioError("state not Hermitian")
        if abs(np.trace(rho).real - 1) > 1e-12:
            raise ScenarioError("state not normalized")
        if np.linalg.eigvalsh(rho).min() < -1e-12:
            raise ScenarioError("state not positive semidefinite")
        for d in list(self.alice_directions) + list(self.bob_directions):
            if abs(np.linalg.norm(d) - 1.0) > 1e-10:
                raise ScenarioError("measurement direction not unit norm")

    def to_explicit(self) -> ExplicitRealization:
        return ExplicitRealization(
            rho=self.state,
            alice_projectors=[bloch_projectors(d) for d in self.alice_directions],
            bob_projectors=[bloch_projectors(d) for d in self.bob_directions],
            key_settings=self.key_settings,
        )


@dataclass
class Behavior:
    """Conditional outcome table Pr(ab|xy) with scenario metadata."""

    table: np.ndarray
    parameter_alice: tuple = ()
    parameter_bob: tuple = ()
    key_settings: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.table.ndim != 4:
            raise ScenarioError("behavior table must be 4-dimensional (a, b, x, y)")
        if not self.parameter_alice:
            self.parameter_alice = tuple(range(self.table.shape[2]))
        if not self.parameter_bob:
            self.parameter_bob = tuple(range(self.table.shape[3]))

    @property
    def cards(self):
        return self.table.shape

    def validate(self) -> None:
        t = self.table
        if t.min() < -1e-12:
            raise ScenarioError("negative probability")
        sums = t.sum(axis=(0, 1))
        if np.abs(sums - 1.0).max() > 1e-12:
            raise ScenarioError("setting pair not normalized")
        # no-signaling: each marginal independent of the other party's setting
        pa = t.sum(axis=1)  # (a, x, y)
        if np.abs(pa - pa[:, :, :1]).max() > 1e-10:
            raise ScenarioError("Alice marginal depends on Bob's setting (signaling)")
        pb = t.sum(axis=0)
        if np.abs(pb - pb[:, :1, :]).max() > 1e-10:
            raise ScenarioError("Bob marginal depends on Alice's setting (signaling)")

    def alice_marginal(self, x: int) -> np.ndarray:
        return self.table[:, :, x, 0].sum(axis=1)

    def key_joint(self) -> np.ndarray:
        x0, y0 = self.key_settings
        return self.table[:, :, x0, y0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": "dientropy-behavior-1",
                "cards": list(self.cards),
                "table": self.table.tolist(),
                "parameter_alice": list(self.parameter_alice),
                "parameter_bob": list(self.parameter_bob),
                "key_settings": list(self.key_settings),
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "Behavior":
        data = json.loads(text)
        if data.get("format") != "dientropy-behavior-1":
            raise ScenarioError("unrecognized behavior file format")
        b = cls(
            table=np.array(data["table"], dtype=float),
            parameter_alice=tuple(data.get("parameter_alice", ())),
            parameter_bob=tuple(data.get("parameter_bob", ())),
            key_settings=tuple(data.get("key_settings", (0, 0))),
        )
        if list(b.cards) != list(data["cards"]):
            raise ScenarioError("declared cards do not match table shape")
        return b


def behavior_from_realization(r: QubitRealization, **meta) -> Behavior:
    """Born-rule table of a qubit realization."""
    r.validate()
    ex = r.to_explicit()
    return Behavior(table=ex.probability_table(), key_settings=r.key_settings, **meta)


# ---------------------------------------------------------------------------
# named scenarios
# ---------------------------------------------------------------------------

def werner_state(q: float) -> np.ndarray:
    if not 0.0 <= q <= 0.5:
        raise ScenarioError("depolarizing weight must lie in [0, 1/2]")
    return (1 - 2 * q) * PHI_PLUS + (q / 2) * np.eye(4)


def werner_chsh(q: float, bob_key: bool = True):
    """Maximally entangled state with depolarizing noise and the standard settings.

    Alice measures Z and X; Bob's parameter-estimation settings are
    (Z±X)/sqrt(2).  With ``bob_key`` Bob gets an extra Z measurement (setting
    0) used only for key generation, giving error rate q against Alice's key
    setting; without it the first parameter setting doubles as the key
    (randomness-generation flavor).
    """
    diag = (ZDIR + XDIR) / np.sqrt(2)
    anti = (ZDIR - XDIR) / np.sqrt(2)
    bob = [ZDIR, diag, anti] if bob_key else [diag, anti]
    r = QubitRealization(
        state=werner_state(q),
        alice_directions=[ZDIR, XDIR],
        bob_directions=bob,
        key_settings=(0, 0),
        info={"q": q},
    )
    param_bob = (1, 2) if bob_key else (0, 1)
    b = behavior_from_realization(r, parameter_alice=(0, 1), parameter_bob=param_bob)
    return r, b


def sixstate(q: float):
    """Three matched bases on the noisy singlet-equivalent, error rate q in each.

    Bob's third direction is -Y so that all three bases are correlated rather
    than anti-correlated on the maximally entangled state.
    """
    r = QubitRealization(
        state=werner_state(q),
        alice_directions=[ZDIR, XDIR, YDIR],
        bob_directions=[ZDIR, XDIR, -YDIR],
        key_settings=(0, 0),
        info={"q": q},
    )
    b = behavior_from_realization(r, parameter_alice=(0, 1, 2), parameter_bob=(0, 1, 2))
    return r, b


def detection_efficiency(eta: float, r: QubitRealization) -> Behavior:
    """Flip outcome 1 to 0 with probability 1 - eta, independently per party."""
    if not 0.0 <= eta <= 1.0:
        raise ScenarioError("efficiency must lie in [0, 1]")
    b = behavior_from_realization(r)
    if b.cards[0] != 2 or b.cards[1] != 2:
        raise ScenarioError("detection model requires binary outcomes")
    flip = np.array([[1.0, 1.0 - eta], [0.0, eta]])
    table = np.einsum("ac,bd,cdxy->abxy", flip, flip, b.table)
    return Behavior(
        table=table,
        parameter_alice=b.parameter_alice,
        parameter_bob=b.parameter_bob,
        key_settings=b.key_settings,
    )


def chsh_value(b: Behavior) -> float:
    """CHSH combination over the parameter-estimation settings."""
    xs, ys = b.parameter_alice, b.parameter_bob
    if len(xs) != 2 or len(ys) != 2:
        raise ScenarioError("CHSH needs two parameter settings per party")
    s = 0.0
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            joint = b.table[:, :, x, y]
            corr = joint[0, 0] + joint[1, 1] - joint[0, 1] - joint[1, 0]
            s += (-1) ** (i * j) * corr
    return float(s)


def _zx_direction(angle: float) -> np.ndarray:
    return np.array([np.sin(angle), 0.0, np.cos(angle)])


def partially_entangled_realization(theta, a0, a1, b1, b2, bob_key: bool = True) -> QubitRealization:
    """cos(theta)|00> + sin(theta)|11> with Z-X-plane measurement angles.

    Bob's key direction (when present) is the analytic maximizer of the
    correlation with Alice's key measurement on this state.
    """
    v = np.array([np.cos(theta), 0, 0, np.sin(theta)], dtype=complex)
    state = np.outer(v, v.conj())
    # E(alpha, beta) = cos a cos b + sin(2 theta) sin a sin b; best beta given a0:
    bk = np.arctan2(np.sin(2 * theta) * np.sin(a0), np.cos(a0))
    bob_angles = [bk, b1, b2] if bob_key else [b1, b2]
    return QubitRealization(
        state=state,
        alice_directions=[_zx_direction(a0), _zx_direction(a1)],
        bob_directions=[_zx_direction(b) for b in bob_angles],
        key_settings=(0, 0),
        info={"theta": theta, "angles": (a0, a1, b1, b2)},
    )


EBERHARD_THRESHOLD = 2.0 / 3.0


def optimize_chsh_realization(
    eta: float, seed: int = 0, starts: int = 20, budget: int = 2000, bob_key: bool = True
) -> QubitRealization:
    """Partially entangled state and angles maximizing CHSH after detection losses.

    Searches cos(theta)|00> + sin(theta)|11> with all measurements in the Z-X
    plane (the standard ansatz for this loss model).  Below the threshold
    efficiency 2/3 no quantum violation exists and the search is refused.
    The achieved CHSH value is recorded in ``info["chsh"]``.
    """
    if not eta <= 1.0:
        raise ScenarioError("efficiency must lie in (2/3, 1]")
    if eta <= EBERHARD_THRESHOLD:
        raise ScenarioError(
            f"no quantum violation attainable at efficiency {eta} (threshold 2/3)"
        )

    def negative_chsh(p):
        theta, a0, a1, b1, b2 = p
        r = partially_entangled_realization(theta, a0, a1, b1, b2, bob_key=False)
        return -chsh_value(detection_efficiency(eta, r))

    rng = np.random.default_rng(seed)
    ideal = np.array([np.pi / 4, 0.0, np.pi / 2, np.pi / 4, -np.pi / 4])
    best_p, best_val = ideal, negative_chsh(ideal)
    per_start = max(50, budget // max(1, starts))
    for k in range(starts):
        p0 = ideal if k == 0 else rng.uniform([0.02, -np.pi, -np.pi, -np.pi, -np.pi], [np.pi / 4, np.pi, np.pi, np.pi, np.pi])
        res = minimize(negative_chsh, p0, method="Nelder-Mead", options={"maxfev": per_start, "xatol": 1e-10, "fatol": 1e-12})
        if res.fun < best_val:
            best_val, best_p = res.fun, res.x
    r = partially_entangled_realization(*best_p, bob_key=bob_key)
    r.info["chsh"] = -best_val
    r.info["eta"] = eta
    return r


# ---------------------------------------------------------------------------
# constraint sets
# ---------------------------------------------------------------------------

FULL = "full"
FULL_JOINTS = "joints"
CHSH_ONLY = "chsh"
MATCHED_QBER = "qber"


def tilted_chsh(alpha: float) -> tuple[str, float]:
    return ("tilted", float(alpha))


def constraints_from_behavior(b: Behavior, mode="full") -> ConstraintSet:
    """Constraint set over the parameter-estimation settings of a behavior.

    Key-only settings are excluded entirely: the constraint tables live over
    the parameter block with settings renumbered consecutively, so downstream
    relaxations never enumerate dead measurement settings.

    ``full`` emits the non-redundant marginal-plus-joint (Collins-Gisin)
    parametrization; ``joints`` every joint probability separately (redundant
    as statistics, but the richer coefficient tables give the downstream
    multiplier family strictly more freedom, which matters for tightness);
    ``chsh`` the single CHSH functional; ``("tilted", a)`` the a-tilted CHSH
    functional (reducing to plain CHSH at a = 0); ``qber`` one error-rate
    constraint per matched basis pair.
    """
    nA, nB = b.cards[0], b.cards[1]
    xs, ys = b.parameter_alice, b.parameter_bob
    sub = b.table[np.ix_(range(nA), range(nB), xs, ys)]
    nX, nY = len(xs), len(ys)
    rows, vals = [], []

    def empty():
        return np.zeros((nA, nB, nX, nY))

    if mode == FULL_JOINTS:
        for x in range(nX):
            for y in range(nY):
                for a in range(nA):
                    for bb in range(nB):
                        c = empty()
                        c[a, bb, x, y] = 1.0
                        rows.append(c)
                        vals.append(sub[a, bb, x, y])
    elif mode == FULL:
        for x in range(nX):
            for a in range(nA - 1):
                c = empty()
                c[a, :, x, 0] = 1.0
                rows.append(c)
                vals.append(sub[a, :, x, 0].sum())
        for y in range(nY):
            for bb in range(nB - 1):
                c = empty()
                c[:, bb, 0, y] = 1.0
                rows.append(c)
                vals.append(sub[:, bb, 0, y].sum())
        for x in range(nX):
            for y in range(nY):
                for a in range(nA - 1):
                    for bb in range(nB - 1):
                        c = empty()
                        c[a, bb, x, y] = 1.0
                        rows.append(c)
                        vals.append(sub[a, bb, x, y])
    elif mode == CHSH_ONLY or (isinstance(mode, tuple) and mode[0] == "tilted"):
        if nX != 2 or nY != 2 or nA != 2 or nB != 2:
            raise ScenarioError("CHSH-type constraints need a 2-input/2-output parameter block")
        c = empty()
        for x in range(2):
            for y in range(2):
                for a in range(2):
                    for bb in range(2):
                        c[a, bb, x, y] += (-1) ** (x * y) * (-1) ** (a + bb)
        if isinstance(mode, tuple):
            alpha = mode[1]
            for a in range(2):
                c[a, :, 0, 0] += alpha * (-1) ** a
        rows.append(c)
        vals.append(float(np.sum(c * sub)))
    elif mode == MATCHED_QBER:
        if nX != nY:
            raise ScenarioError("matched-basis error rates need equal setting counts")
        for x in range(nX):
            c = empty()
            for a in range(nA):
                for bb in range(nB):
                    if a != bb:
                        c[a, bb, x, x] = 1.0
            rows.append(c)
            vals.append(float(np.sum(c * sub)))
    else:
        raise ScenarioError(f"unknown constraint mode {mode!r}")

    return ConstraintSet(
        coeffs=np.array(rows), targets=np.array(vals), cards=(nA, nB, nX, nY)
    )


def constraint_operator(coeffs: np.ndarray, rules) -> "Polynomial":
    """Operator polynomial sum_{abxy} c[a,b,x,y] P_a^x P_b^y with elimination expanded."""
    from .opalg import Polynomial, pair_projector

    nA, nB, nX, nY = coeffs.shape
    out = Polynomial.zero()
    for a, bb, x, y in itertools.product(range(nA), range(nB), range(nX), range(nY)):
        c = coeffs[a, bb, x, y]
        if c != 0.0:
            out = out + c * pair_projector(a, bb, x, y, rules)
    return out


def chsh_constraint_direction(cs: ConstraintSet, b: Behavior) -> np.ndarray | None:
    """Multiplier vector reproducing the CHSH functional within the constraint span.

    The match is at the operator level modulo identity terms (a constant
    offset only shifts the functional), which is where completeness makes,
    e.g., reference-slice marginal rows equal to genuine marginal operators.
    Returns None when CHSH is not expressible.
    """
    from .opalg import IDENTITY

    try:
        chsh_cs = constraints_from_behavior(b, CHSH_ONLY)
    except ScenarioError:
        return None
    rules = cs.rules()
    target_poly = constraint_operator(chsh_cs.coeffs[0], rules)
    row_polys = [constraint_operator(cs.coeffs[j], rules) for j in range(len(cs))]
    words = sorted(
        {w for p in row_polys + [target_poly] for w in p.terms if w != IDENTITY},
        key=lambda w: (len(w), w),
    )
    mat = np.array([[row_polys[j].terms.get(w, 0.0).real for j in range(len(cs))] for w in words])
    rhs = np.array([target_poly.terms.get(w, 0.0).real for w in words])
    sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    if np.linalg.norm(mat @ sol - rhs) > 1e-8:
        return None
    return sol
