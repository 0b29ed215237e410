"""Dense primal-dual interior-point SDP solver with rigorous bound certification.

Problems are stored in linear-matrix-inequality form over a vector of scalar
variables: the block-diagonal matrix ``X(y)`` is a fixed linear map of ``y``
(the *scatter map*), subject to equality rows ``B y = rhs`` and ``X(y) >= 0``,
optimizing ``c . y``.  Moment relaxations land in this form natively (one
variable per moment); a generic standard-form SDP is the special case of one
variable per matrix entry.

The solver runs a Nesterov-Todd scaled predictor-corrector path-following
method on the internally reduced problem (equalities eliminated through an
orthonormal nullspace basis).  It is deterministic: identical inputs produce
identical iterates.

Certification never trusts the solver.  :func:`certify_upper_bound` takes the
returned multiplier matrix, projects it to exact feasibility (clip to the PSD
cone, then absorb the equality residual through a compensated-summation
verification pass), and converts what is left into a rigorous additive slack
using only a-priori bounds on the feasible set (``var_cap``, e.g. all moments
of projector words lie in [-1, 1]).  The result is a true upper bound on the
optimum even if the solver silently failed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

DEFAULT_TOL = 1e-8
RANK_TOL = 1e-10
STEP_FRACTION = 0.98


class SDPError(RuntimeError):
    pass


class CertificationError(SDPError):
    pass


@dataclass
class SDPProblem:
    """Block-diagonal SDP over scalar variables in LMI form.

    ``entries`` is the scatter map as an array of records
    ``(block, i, j, var, coeff)`` with ``i <= j``; the coefficient applies to
    the ``(i, j)`` and ``(j, i)`` positions alike.  ``rows``/``rhs`` are the
    equality constraints over the variables, ``obj`` the objective vector.
    ``var_cap`` is an a-priori bound on ``|y_k|`` over the feasible set,
    required for certification (1 for moment problems: every moment of a
    product of projectors has modulus at most one).
    """

    blocks: tuple
    sense: str
    nvars: int
    ent_block: np.ndarray
    ent_i: np.ndarray
    ent_j: np.ndarray
    ent_var: np.ndarray
    ent_coeff: np.ndarray
    rows: sp.csr_matrix
    rhs: np.ndarray
    obj: np.ndarray
    var_cap: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise SDPError("sense must be 'max' or 'min'")
        if np.any(self.ent_i > self.ent_j):
            raise SDPError("scatter entries must satisfy i <= j")

    @property
    def total_dim(self) -> int:
        return int(sum(self.blocks))


def standard_problem(blocks, objective_blocks, constraints, rhs, sense="max", var_cap=None):
    """Build an entry-labeled problem from standard-form data.

    ``objective_blocks`` and each constraint are lists of dense symmetric
    arrays, one per block.  One scalar variable per upper-triangular entry.
    """
    blocks = tuple(int(n) for n in blocks)
    var_of = {}
    eb, ei, ej, ev, ec = [], [], [], [], []
    for b, n in enumerate(blocks):
        for i in range(n):
            for j in range(i, n):
                var_of[(b, i, j)] = len(var_of)
                eb.append(b)
                ei.append(i)
                ej.append(j)
                ev.append(var_of[(b, i, j)])
                ec.append(1.0)
    nvars = len(var_of)

    def functional(mats):
        v = np.zeros(nvars)
        for b, m in enumerate(mats):
            m = np.asarray(m, dtype=float)
            if m.shape != (blocks[b], blocks[b]):
                raise SDPError("coefficient block has wrong shape")
            for i in range(blocks[b]):
                v[var_of[(b, i, i)]] += m[i, i]
                for j in range(i + 1, blocks[b]):
                    v[var_of[(b, i, j)]] += m[i, j] + m[j, i]
        return v

    rows = sp.csr_matrix(
        np.array([functional(con) for con in constraints]).reshape(len(constraints), nvars)
        if constraints
        else np.zeros((0, nvars))
    )
    return SDPProblem(
        blocks=blocks,
        sense=sense,
        nvars=nvars,
        ent_block=np.array(eb, dtype=np.int32),
        ent_i=np.array(ei, dtype=np.int32),
        ent_j=np.array(ej, dtype=np.int32),
        ent_var=np.array(ev, dtype=np.int32),
        ent_coeff=np.array(ec, dtype=float),
        rows=rows,
        rhs=np.asarray(rhs, dtype=float),
        obj=functional(objective_blocks),
        var_cap=var_cap,
    )


# ---------------------------------------------------------------------------
# scatter / gather context
# ---------------------------------------------------------------------------

class _Structure:
    """Directed scatter matrices and per-block entry lists for one problem."""

    def __init__(self, p: SDPProblem):
        self.problem = p
        self.blocks = p.blocks
        self.scatters = []  # per block: CSR (n*n, nvars) including mirrored entries
        self.directed = []  # per block: (rows, cols, vars, coeffs) directed arrays
        for b, n in enumerate(p.blocks):
            m = p.ent_block == b
            i, j, v, c = p.ent_i[m], p.ent_j[m], p.ent_var[m], p.ent_coeff[m]
            off = i != j
            di = np.concatenate([i, j[off]])
            dj = np.concatenate([j, i[off]])
            dv = np.concatenate([v, v[off]])
            dc = np.concatenate([c, c[off]])
            self.directed.append((di, dj, dv, dc))
            mat = sp.coo_matrix((dc, (di * n + dj, dv)), shape=(n * n, p.nvars))
            self.scatters.append(mat.tocsr())

    def scatter(self, y: np.ndarray):
        out = []
        for b, n in enumerate(self.blocks):
            x = (self.scatters[b] @ y).reshape(n, n)
            out.append(np.ascontiguousarray(x))
        return out

    def gather(self, mats) -> np.ndarray:
        g = np.zeros(self.problem.nvars)
        for b, n in enumerate(self.blocks):
            g += self.scatters[b].T @ mats[b].reshape(-1)
        return g

    def label_gram(self) -> sp.csr_matrix:
        g = None
        for s in self.scatters:
            gg = (s.T @ s).tocsr()
            g = gg if g is None else g + gg
        return g

    PSI_FLOAT_BUDGET = 40_000_000  # switch to the lean path past ~320 MB

    def conjugated_gram(self, whalves, nullbasis: np.ndarray) -> np.ndarray:
        """H[k,l] = <scatter(N_k), W scatter(N_l) W> with W = half half^T per block.

        Uses G[m,m'] = <half^T A_m half, half^T A_m' half>, so the label Gram
        is one symmetric rank-k product of the per-label conjugated matrices.
        Falls back to a gather-based accumulation when the stacked conjugates
        would not fit comfortably in memory.
        """
        d = self.problem.nvars
        g = np.zeros((d, d))
        for b, n in enumerate(self.blocks):
            di, dj, dv, dc = self.directed[b]
            h = whalves[b]
            order = np.argsort(dv, kind="stable")
            oi, oj, ov, oc = di[order], dj[order], dv[order], dc[order]
            bounds = np.searchsorted(ov, np.arange(d + 1))
            ht = np.ascontiguousarray(h.T)
            if d * n * n <= self.PSI_FLOAT_BUDGET:
                psi = np.zeros((d, n * n))
                for m in range(d):
                    lo, hi = bounds[m], bounds[m + 1]
                    if lo == hi:
                        continue
                    left = ht[:, oi[lo:hi]] * oc[lo:hi]
                    psi[m] = (left @ h[oj[lo:hi], :]).reshape(-1)
                g += psi @ psi.T
            else:
                w = h @ ht
                for m in range(d):
                    lo, hi = bounds[m], bounds[m + 1]
                    if lo == hi:
                        continue
                    left = w[:, oi[lo:hi]] * oc[lo:hi]
                    t = left @ w[oj[lo:hi], :]
                    vals = t[di, dj] * dc
                    g[m] += np.bincount(dv, weights=vals, minlength=d)
        g = 0.5 * (g + g.T)
        return nullbasis.T @ g @ nullbasis


# ---------------------------------------------------------------------------
# reduction of the equality rows
# ---------------------------------------------------------------------------

class _Reduction:
    def __init__(self, p: SDPProblem):
        d = p.nvars
        rows = p.rows
        if rows.shape[0] == 0:
            self.y0 = np.zeros(d)
            self.nullbasis = np.eye(d)
            self.rank = 0
            self.consistent = True
            self.residual = 0.0
            return
        dense = rows.toarray()
        q, r, piv = sla.qr(dense.T, mode="full", pivoting=True)
        diag = np.abs(np.diag(r)) if r.size else np.array([])
        scale = diag[0] if diag.size and diag[0] > 0 else 1.0
        rank = int(np.sum(diag > RANK_TOL * scale))
        self.rank = rank
        self.nullbasis = q[:, rank:]
        y0, *_ = np.linalg.lstsq(dense, p.rhs, rcond=None)
        self.y0 = y0
        self.residual = float(np.abs(dense @ y0 - p.rhs).max()) if len(p.rhs) else 0.0
        self.consistent = self.residual <= 1e-8 * (1.0 + float(np.abs(p.rhs).max(initial=0.0)))


# ---------------------------------------------------------------------------
# solution containers
# ---------------------------------------------------------------------------

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
SLOW_PROGRESS = "slow_progress"


@dataclass
class Solution:
    status: str
    y: np.ndarray | None
    primal_blocks: list | None
    objective: float | None
    dual_objective: float | None
    dual_multipliers: np.ndarray | None
    dual_slack_blocks: list | None
    residuals: dict
    iterations: int
    infeasibility_certified: bool = False
    _ctx: object = field(default=None, repr=False)


@dataclass
class Certificate:
    bound: float
    multipliers: np.ndarray
    slack_shift: float
    residual_l1: float
    psd_margin: float
    refinements: int


# ---------------------------------------------------------------------------
# interior-point core
# ---------------------------------------------------------------------------

def _psd_factor(mat: np.ndarray):
    """Cholesky factor, falling back to a clipped eigendecomposition."""
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(mat)
        floor = max(vals.max(), 1.0) * 1e-14
        return vecs * np.sqrt(np.clip(vals, floor, None))


def _nt_scaling(x, s):
    """W with W S W = X via the stable Cholesky/SVD recipe.

    Returns (wmats, whalves) per block with W = half half^T.
    """
    wmats, whalves = [], []
    for xb, sb in zip(x, s):
        l = _psd_factor(xb)
        r = _psd_factor(sb)
        u, sig, vt = np.linalg.svd(r.T @ l)
        half = l @ vt.T / np.sqrt(sig)
        whalves.append(half)
        wmats.append(half @ half.T)
    return wmats, whalves


def _max_step(mats, deltas):
    """Largest alpha with M + alpha D psd, per block-diagonal pair."""
    alpha = np.inf
    for m, d in zip(mats, deltas):
        l = _psd_factor(m)
        b = sla.solve_triangular(l, d, lower=True, check_finite=False)
        b = sla.solve_triangular(l, b.T, lower=True, check_finite=False)
        b = 0.5 * (b + b.T)
        lam = np.linalg.eigvalsh(b).min()
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def solve(
    problem: SDPProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = 120,
    verbose: bool = False,
    step_fraction: float = STEP_FRACTION,
    patience: int = 30,
) -> Solution:
    """Solve the problem; residuals in the result are recomputed from the iterates.

    ``step_fraction`` is the fraction of the maximal cone step taken each
    iteration; lowering it (e.g. 0.9) trades iterations for better terminal
    accuracy on degenerate problems.  ``patience`` bounds the number of
    non-improving iterations before the best iterate is returned.
    """
    flip = problem.sense == "min"
    c = -problem.obj if flip else problem.obj

    ctx = _Structure(problem)
    red = _Reduction(problem)
    if not red.consistent:
        return Solution(
            status=INFEASIBLE,
            y=None,
            primal_blocks=None,
            objective=None,
            dual_objective=None,
            dual_multipliers=None,
            dual_slack_blocks=None,
            residuals={"equality_inconsistency": red.residual},
            iterations=0,
            infeasibility_certified=True,
            _ctx=(ctx, red),
        )

    nb = red.nullbasis
    p_free = nb.shape[1]
    y0 = red.y0
    ntot = problem.total_dim

    # internal standard pair: min <Cb, Xh> s.t. <A_k, Xh> = bb_k, Xh >= 0
    # whose dual slack S runs over the feasible face M(y0 + NB t), t = -u.
    cb = ctx.scatter(y0)
    qt = nb.T @ c
    bb = -qt

    if p_free == 0:
        y = y0
        xm = ctx.scatter(y)
        lam_min = min(np.linalg.eigvalsh(xb).min() for xb in xm) if xm else 0.0
        status = OPTIMAL if lam_min >= -1e-9 else INFEASIBLE
        val = float(c @ y)
        return Solution(
            status=status,
            y=y,
            primal_blocks=xm,
            objective=-val if flip else val,
            dual_objective=-val if flip else val,
            dual_multipliers=None,
            dual_slack_blocks=[np.zeros((n, n)) for n in problem.blocks],
            residuals={"primal_psd": max(0.0, -lam_min)},
            iterations=0,
            infeasibility_certified=status == INFEASIBLE and problem.var_cap is not None,
            _ctx=(ctx, red),
        )

    # data scaling
    c_scale = max(1.0, max(np.linalg.norm(m) for m in cb) if cb else 1.0)
    b_scale = max(1.0, float(np.abs(bb).max(initial=0.0)))
    cbs = [m / c_scale for m in cb]
    bbs = bb / b_scale

    def gather_nb(mats):
        return nb.T @ ctx.gather(mats)

    def scatter_nb(v):
        return ctx.scatter(nb @ v)

    xi_p = max(10.0, math.sqrt(ntot), float(np.abs(bbs).max(initial=0.0)) * math.sqrt(ntot))
    xi_d = max(10.0, math.sqrt(ntot))
    x = [xi_p * np.eye(n) for n in problem.blocks]
    s = [xi_d * np.eye(n) for n in problem.blocks]
    u = np.zeros(p_free)

    status = SLOW_PROGRESS
    it = 0
    mu = sum(np.vdot(xb, sb).real for xb, sb in zip(x, s)) / ntot
    b_norm = 1.0 + float(np.abs(bbs).max(initial=0.0))
    c_norm = 1.0 + math.sqrt(sum(np.linalg.norm(m) ** 2 for m in cbs))
    diverged = False
    best = None  # (composite, x, s, u)
    best_age = 0

    for it in range(1, max_iter + 1):
        norms = math.fsum(np.linalg.norm(m) for m in x) + math.fsum(np.linalg.norm(m) for m in s)
        if not math.isfinite(norms) or norms > 1e14:
            diverged = True
            break
        rp = bbs - gather_nb(x)
        au = scatter_nb(u)
        rd = [cbs[b] - s[b] - au[b] for b in range(len(x))]
        obj_p = sum(np.vdot(cbs[b], x[b]).real for b in range(len(x)))
        obj_d = float(bbs @ u)
        mu = sum(np.vdot(xb, sb).real for xb, sb in zip(x, s)) / ntot
        rp_rel = float(np.abs(rp).max(initial=0.0)) / b_norm
        rd_rel = math.sqrt(sum(np.linalg.norm(m) ** 2 for m in rd)) / c_norm
        gap_rel = abs(obj_p - obj_d) / (1.0 + abs(obj_p) + abs(obj_d))
        composite = max(rp_rel, rd_rel, gap_rel)
        if best is None or composite < 0.98 * best[0]:
            best = (composite, [m.copy() for m in x], [m.copy() for m in s], u.copy())
            best_age = 0
        else:
            best_age += 1
        if verbose:
            print(f"  it {it:3d}  mu {mu:9.2e}  rp {rp_rel:8.1e}  rd {rd_rel:8.1e}  gap {gap_rel:8.1e}")
        if rp_rel <= tol and rd_rel <= tol and gap_rel <= tol:
            status = OPTIMAL
            break
        if obj_p < -1e8 and rp_rel < 1e-6:
            diverged = True  # internal primal unbounded: original LMI infeasible
            break
        if best_age > patience:
            x, s, u = best[1], best[2], best[3]
            status = SLOW_PROGRESS
            break
        if mu < 1e-16 and max(rp_rel, rd_rel) < math.sqrt(tol):
            break

        wm, wh = _nt_scaling(x, s)
        h = ctx.conjugated_gram(wh, nb)
        h = 0.5 * (h + h.T)
        jitter = 1e-13 * (1.0 + np.trace(h) / max(1, p_free))
        for attempt in range(6):
            try:
                hf = sla.cho_factor(h + jitter * np.eye(p_free) * (10.0**attempt if attempt else 0.0), lower=True)
                break
            except np.linalg.LinAlgError:
                if attempt == 5:
                    status = SLOW_PROGRESS
                    break
        else:  # pragma: no cover
            break
        s_inv = []
        for sb in s:
            l = _psd_factor(sb)
            inv = sla.cho_solve((l, True), np.eye(sb.shape[0]), check_finite=False)
            s_inv.append(0.5 * (inv + inv.T))

        def newton(sigma_mu, second_order=None):
            rc = [sigma_mu * s_inv[b] - x[b] for b in range(len(x))]
            if second_order is not None:
                dxa, dsa = second_order
                for b in range(len(x)):
                    corr = dxa[b] @ dsa[b] @ s_inv[b]
                    rc[b] -= 0.5 * (corr + corr.T)
            wrdw = [wm[b] @ rd[b] @ wm[b] for b in range(len(x))]
            rhs_vec = rp - gather_nb(rc) + gather_nb(wrdw)
            du = sla.cho_solve(hf, rhs_vec, check_finite=False)
            adu = scatter_nb(du)
            ds = [rd[b] - adu[b] for b in range(len(x))]
            dx = [rc[b] - wm[b] @ ds[b] @ wm[b] for b in range(len(x))]
            dx = [0.5 * (m + m.T) for m in dx]
            return du, dx, ds

        # predictor
        _, dxa, dsa = newton(0.0)
        ap = min(1.0, step_fraction * _max_step(x, dxa))
        ad = min(1.0, step_fraction * _max_step(s, dsa))
        mu_aff = sum(
            np.vdot(x[b] + ap * dxa[b], s[b] + ad * dsa[b]).real for b in range(len(x))
        ) / ntot
        sigma = min(1.0, max(1e-10, (max(mu_aff, 0.0) / mu) ** 3))
        # corrector with the second-order cross term of the affine step
        du, dx, ds = newton(sigma * mu, second_order=(dxa, dsa))
        ap = min(1.0, step_fraction * _max_step(x, dx))
        ad = min(1.0, step_fraction * _max_step(s, ds))
        x = [x[b] + ap * dx[b] for b in range(len(x))]
        s = [s[b] + ad * ds[b] for b in range(len(x))]
        u = u + ad * du

    if status != OPTIMAL and best is not None and not diverged:
        x, s, u = best[1], best[2], best[3]

    # unscale
    xh = [m * b_scale for m in x]  # internal primal = original dual slack
    u_un = u * c_scale
    t = -u_un
    y = y0 + nb @ t

    if diverged:
        finite = all(np.all(np.isfinite(m)) for m in xh)
        witness = xh if finite else [m * b_scale for m in best[1]]
        attempt = _attempt_infeasibility_certificate(problem, ctx, red, witness, it)
        if attempt.infeasibility_certified:
            return attempt
        x, s, u = best[1], best[2], best[3]
        xh = [m * b_scale for m in x]
        u_un = u * c_scale
        t = -u_un
        y = y0 + nb @ t
        status = SLOW_PROGRESS

    xm = ctx.scatter(y)
    val = float(c @ y)
    # recover multipliers for the original rows from the dual slack
    g = ctx.gather(xh)
    if problem.rows.shape[0]:
        nu, *_ = np.linalg.lstsq(problem.rows.toarray().T, c + g, rcond=None)
        dual_res = c + g - problem.rows.T @ nu
        dual_obj = float(nu @ problem.rhs)
    else:
        nu = np.zeros(0)
        dual_res = c + g
        dual_obj = 0.0
    lam_primal = min(np.linalg.eigvalsh(b).min() for b in xm)
    lam_dual = min(np.linalg.eigvalsh(b).min() for b in xh)
    residuals = {
        "primal_equality": float(np.abs(problem.rows @ y - problem.rhs).max(initial=0.0)),
        "primal_psd": max(0.0, -float(lam_primal)),
        "dual_equality": float(np.abs(dual_res).max(initial=0.0)),
        "dual_psd": max(0.0, -float(lam_dual)),
        "gap": abs(dual_obj - val) / (1.0 + abs(val) + abs(dual_obj)),
    }
    return Solution(
        status=status,
        y=y,
        primal_blocks=xm,
        objective=-val if flip else val,
        dual_objective=-dual_obj if flip else dual_obj,
        dual_multipliers=nu,
        dual_slack_blocks=xh,
        residuals=residuals,
        iterations=it,
        _ctx=(ctx, red),
    )


def _attempt_infeasibility_certificate(problem, ctx, red, xh, iterations):
    """Scale the diverging multiplier matrix into a Farkas-type witness."""
    norm = math.sqrt(sum(np.linalg.norm(b) ** 2 for b in xh))
    xn = [b / norm for b in xh]
    xn = [_clip_psd(b)[0] for b in xn]
    g = ctx.gather(xn)
    drift = float(np.abs(red.nullbasis.T @ g).max(initial=0.0))
    offset = float(g @ red.y0)
    certified = False
    if problem.var_cap is not None:
        d = problem.nvars
        t_max = math.sqrt(d) * (problem.var_cap + float(np.abs(red.y0).max(initial=0.0)))
        certified = offset + drift * t_max < -1e-9
    return Solution(
        status=INFEASIBLE,
        y=None,
        primal_blocks=None,
        objective=None,
        dual_objective=None,
        dual_multipliers=None,
        dual_slack_blocks=xn,
        residuals={"farkas_offset": offset, "farkas_drift": drift},
        iterations=iterations,
        infeasibility_certified=certified,
    )


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def _clip_psd(mat: np.ndarray):
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    clipped = np.clip(vals, 0.0, None)
    out = (vecs * clipped) @ vecs.T
    return 0.5 * (out + out.T), float(vals.min())


def certify_upper_bound(
    problem: SDPProblem,
    sol: Solution,
    residual_threshold: float = 1e-6,
    refinements: int = 3,
) -> Certificate:
    """Rigorous upper bound on the optimum of a max-sense problem.

    Returns ``nu . rhs + var_cap * |residual|_1 + psd margin`` for the
    purified multiplier matrix: valid for every feasible point because the
    matrix is exactly PSD after clipping and every variable obeys the
    declared cap.  Raises :class:`CertificationError` when the remaining
    slack exceeds ``residual_threshold`` relative to the bound.
    """
    if problem.sense != "max":
        raise SDPError("certify_upper_bound expects a max-sense problem")
    if problem.var_cap is None:
        raise CertificationError("problem declares no variable cap; cannot absorb residuals")
    if sol.status == INFEASIBLE:
        raise CertificationError("cannot certify a bound for an infeasible problem")
    if sol.dual_slack_blocks is None:
        raise CertificationError("solution carries no multiplier matrix")

    if sol._ctx is not None:
        ctx, _ = sol._ctx
    else:
        ctx = _Structure(problem)
    c = problem.obj
    rows_t = problem.rows.toarray().T if problem.rows.shape[0] else np.zeros((problem.nvars, 0))

    xh = [b.copy() for b in sol.dual_slack_blocks]
    xh = [_clip_psd(b)[0] for b in xh]
    gram = None
    used_refinements = 0
    for k in range(max(1, refinements)):
        g = ctx.gather(xh)
        nu, *_ = np.linalg.lstsq(rows_t, c + g, rcond=None)
        rho = c + g - rows_t @ nu
        if float(np.abs(rho).sum()) < 1e-15 * (1.0 + float(np.abs(c).max(initial=0.0))):
            break
        if k == refinements - 1:
            break
        if gram is None:
            gram = ctx.label_gram().toarray()
            gram += 1e-12 * np.eye(len(gram)) * max(1.0, np.trace(gram) / max(1, len(gram)))
        delta = np.linalg.solve(gram, rho)
        xh = [xb - db for xb, db in zip(xh, ctx.scatter(delta))]
        xh = [_clip_psd(b)[0] for b in xh]
        used_refinements = k + 1

    g = ctx.gather(xh)
    nu, *_ = np.linalg.lstsq(rows_t, c + g, rcond=None)
    rho = c + g - rows_t @ nu
    res_l1 = math.fsum(abs(v) for v in rho)
    # allowance for eigendecomposition roundoff in the PSD clip: the matrix is
    # PSD up to machine-level reassembly error, charged against the trace cap
    fro = math.sqrt(sum(np.linalg.norm(b) ** 2 for b in xh))
    psd_margin = 64 * np.finfo(float).eps * fro * problem.total_dim * problem.var_cap
    base = math.fsum(float(a) * float(b) for a, b in zip(nu, problem.rhs))
    bound = base + problem.var_cap * res_l1 + psd_margin
    slack = problem.var_cap * res_l1 + psd_margin
    if slack > residual_threshold * (1.0 + abs(bound)):
        raise CertificationError(
            f"certificate slack {slack:.3e} exceeds threshold; re-solve with tighter tolerance"
        )
    return Certificate(
        bound=float(bound),
        multipliers=nu,
        slack_shift=float(slack),
        residual_l1=float(res_l1),
        psd_margin=float(psd_margin),
        refinements=used_refinements,
    )


# ---------------------------------------------------------------------------
# sparse text interchange format
# ---------------------------------------------------------------------------

def write_problem(problem: SDPProblem) -> str:
    """Serialize in the documented entry-form text format.

    Variables are flattened onto matrix entries: every non-representative
    entry of a variable is tied to its representative by an explicit row, so
    external tools see a plain standard-form SDP.  One line per nonzero:
    ``block i j value``.
    """
    rep = {}
    for k in range(len(problem.ent_var)):
        v = int(problem.ent_var[k])
        key = (v,)
        if v not in rep and problem.ent_coeff[k] == 1.0:
            rep[v] = k
    if len(rep) < problem.nvars:
        missing = set(range(problem.nvars)) - set(rep)
        raise SDPError(f"variables without a unit representative entry: {sorted(missing)[:5]}")

    def entry_of(k):
        return (int(problem.ent_block[k]), int(problem.ent_i[k]), int(problem.ent_j[k]))

    lines = ["dientropy-sdp 1", f"sense {problem.sense}", "blocks " + " ".join(map(str, problem.blocks))]
    lines.append(f"varcap {problem.var_cap if problem.var_cap is not None else 'none'}")
    lines.append("objective")
    for v in range(problem.nvars):
        cv = float(problem.obj[v])
        if cv != 0.0:
            b, i, j = entry_of(rep[v])
            w = cv if i == j else cv / 2.0  # symmetric-entry convention
            lines.append(f"{b} {i} {j} {w!r}")
    # tie rows for duplicate entries
    for k in range(len(problem.ent_var)):
        v = int(problem.ent_var[k])
        if k == rep[v]:
            continue
        lines.append("constraint 0.0")
        b, i, j = entry_of(k)
        cf = float(problem.ent_coeff[k])
        lines.append(f"{b} {i} {j} {(1.0 if i == j else 0.5)!r}")
        rb, ri, rj = entry_of(rep[v])
        lines.append(f"{rb} {ri} {rj} {(-cf if ri == rj else -cf / 2.0)!r}")
    # data rows
    coo = problem.rows.tocoo()
    by_row = {}
    for r, v, val in zip(coo.row, coo.col, coo.data):
        by_row.setdefault(int(r), []).append((int(v), float(val)))
    for r in range(problem.rows.shape[0]):
        lines.append(f"constraint {float(problem.rhs[r])!r}")
        for v, val in sorted(by_row.get(r, [])):
            b, i, j = entry_of(rep[v])
            w = val if i == j else val / 2.0
            lines.append(f"{b} {i} {j} {w!r}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def read_problem(text: str) -> SDPProblem:
    """Parse the text format back into an entry-labeled problem."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("dientropy-sdp"):
        raise SDPError("not a recognized SDP text file")
    sense = lines[1].split()[1]
    blocks = tuple(int(t) for t in lines[2].split()[1:])
    captok = lines[3].split()[1]
    var_cap = None if captok == "none" else float(captok)

    var_of = {}
    eb, ei, ej, ev, ec = [], [], [], [], []
    for b, n in enumerate(blocks):
        for i in range(n):
            for j in range(i, n):
                var_of[(b, i, j)] = len(var_of)
                eb.append(b)
                ei.append(i)
                ej.append(j)
                ev.append(var_of[(b, i, j)])
                ec.append(1.0)
    nvars = len(var_of)
    obj = np.zeros(nvars)
    rows_data, rhs = [], []
    mode = None
    current = None
    for ln in lines[4:]:
        if ln == "objective":
            mode = "obj"
        elif ln.startswith("constraint"):
            if current is not None:
                rows_data.append(current)
            current = {}
            rhs.append(float(ln.split()[1]))
            mode = "con"
        elif ln == "end":
            if current is not None:
                rows_data.append(current)
                current = None
        else:
            b, i, j, val = ln.split()
            b, i, j, val = int(b), int(i), int(j), float(val)
            v = var_of[(b, min(i, j), max(i, j))]
            weight = val if i == j else 2.0 * val  # undo the symmetric-entry halving
            if mode == "obj":
                obj[v] += weight
            else:
                current[v] = current.get(v, 0.0) + weight
    mat = sp.lil_matrix((len(rows_data), nvars))
    for r, d in enumerate(rows_data):
        for v, val in d.items():
            mat[r, v] = val
    return SDPProblem(
        blocks=blocks,
        sense=sense,
        nvars=nvars,
        ent_block=np.array(eb, dtype=np.int32),
        ent_i=np.array(ei, dtype=np.int32),
        ent_j=np.array(ej, dtype=np.int32),
        ent_var=np.array(ev, dtype=np.int32),
        ent_coeff=np.array(ec, dtype=float),
        rows=mat.tocsr(),
        rhs=np.array(rhs),
        obj=obj,
        var_cap=var_cap,
    )
