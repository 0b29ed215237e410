import numpy as np
import pytest

from dientropy.sdp import (
    Certificate,
    CertificationError,
    SDPProblem,
    certify_upper_bound,
    read_problem,
    solve,
    standard_problem,
    write_problem,
)


def max_eig_problem(diag=(1.0, 2.0)):
    """max <C, X> s.t. tr X = 1, X >= 0 with C diagonal: optimum max(diag)."""
    n = len(diag)
    return standard_problem(
        blocks=[n],
        objective_blocks=[np.diag(diag)],
        constraints=[[np.eye(n)]],
        rhs=[1.0],
        sense="max",
        var_cap=1.0,
    )


def test_max_eigenvalue():
    sol = solve(max_eig_problem(), tol=1e-10)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.0, abs=1e-8)
    assert sol.dual_objective >= sol.objective - 1e-8


def test_infeasible_negative_trace():
    p = standard_problem(
        blocks=[2],
        objective_blocks=[np.eye(2)],
        constraints=[[np.eye(2)]],
        rhs=[-1.0],
        sense="max",
        var_cap=1.0,
    )
    sol = solve(p, tol=1e-9)
    assert sol.status == "infeasible"
    assert sol.infeasibility_certified


def test_certificate_max_eigenvalue():
    p = max_eig_problem()
    sol = solve(p, tol=1e-10)
    cert = certify_upper_bound(p, sol)
    assert cert.bound >= 2.0 - 1e-12
    assert cert.bound == pytest.approx(2.0, abs=1e-6)


def test_certificate_with_artificial_residual():
    p = max_eig_problem()
    sol = solve(p, tol=1e-10)
    # perturb the multiplier matrix and certify WITHOUT refinement passes:
    # the bound may only move up by about the declared residual
    base = certify_upper_bound(p, sol, refinements=1)
    perturbed = [b + 1e-9 * np.eye(b.shape[0]) for b in sol.dual_slack_blocks]
    sol2 = Solution_copy(sol, perturbed)
    cert2 = certify_upper_bound(p, sol2, refinements=1)
    assert cert2.bound <= base.bound + 1e-9 * p.total_dim * 1.5 + 1e-12
    assert cert2.bound >= 2.0 - 1e-12


def Solution_copy(sol, new_slack):
    from dataclasses import replace

    return replace(sol, dual_slack_blocks=new_slack)


def test_weak_duality_random_feasible(rng):
    # random bounded SDPs built around a known interior point: the certified
    # bound must dominate the objective of every feasible primal point we know
    for trial in range(8):
        n, m = 5, 3
        x0 = rng.normal(size=(n, n))
        x0 = x0 @ x0.T + 0.5 * np.eye(n)
        cons = [[np.eye(n)]]  # trace pin keeps the feasible set bounded
        rhs = [float(np.trace(x0))]
        for _ in range(m):
            a = rng.normal(size=(n, n))
            a = 0.5 * (a + a.T)
            cons.append([a])
            rhs.append(float(np.vdot(a, x0).real))
        cmat = rng.normal(size=(n, n))
        cmat = 0.5 * (cmat + cmat.T)
        cap = float(np.trace(x0))  # psd with pinned trace: |X_ij| <= tr X
        p = standard_problem([n], [cmat], cons, rhs, sense="max", var_cap=cap)
        sol = solve(p, tol=1e-9)
        assert sol.status in ("optimal", "slow_progress")
        assert sol.residuals["gap"] < 1e-6
        cert = certify_upper_bound(p, sol, residual_threshold=1e-4)
        assert cert.bound >= float(np.vdot(cmat, x0).real) - 1e-9
        assert sol.objective <= cert.bound + 1e-9


def test_determinism():
    p = max_eig_problem((0.3, 1.7, 0.9))
    s1 = solve(p, tol=1e-9)
    s2 = solve(p, tol=1e-9)
    assert s1.objective == s2.objective
    c1 = certify_upper_bound(p, s1)
    c2 = certify_upper_bound(p, s2)
    assert c1.bound == c2.bound


def test_scaling_covariance():
    base = max_eig_problem((1.0, 2.0))
    scaled = standard_problem(
        blocks=[2],
        objective_blocks=[np.diag([7.0, 14.0])],
        constraints=[[np.eye(2)]],
        rhs=[1.0],
        sense="max",
        var_cap=1.0,
    )
    b1 = certify_upper_bound(base, solve(base, tol=1e-10)).bound
    b7 = certify_upper_bound(scaled, solve(scaled, tol=1e-10)).bound
    assert b7 == pytest.approx(7.0 * b1, rel=1e-10)


def test_min_sense():
    p = standard_problem(
        blocks=[2],
        objective_blocks=[np.diag([1.0, 2.0])],
        constraints=[[np.eye(2)]],
        rhs=[1.0],
        sense="min",
        var_cap=1.0,
    )
    sol = solve(p, tol=1e-10)
    assert sol.objective == pytest.approx(1.0, abs=1e-8)


def test_slow_progress_returns_best_iterate():
    sol = solve(max_eig_problem(), tol=1e-10, max_iter=2)
    assert sol.status in ("slow_progress", "optimal")
    assert sol.objective is not None


def test_multi_block():
    p = standard_problem(
        blocks=[2, 2],
        objective_blocks=[np.diag([1.0, 0.0]), np.diag([0.0, 3.0])],
        constraints=[[np.eye(2), np.eye(2)]],
        rhs=[1.0],
        sense="max",
        var_cap=1.0,
    )
    sol = solve(p, tol=1e-10)
    assert sol.objective == pytest.approx(3.0, abs=1e-8)


def test_text_roundtrip():
    p = max_eig_problem((0.5, 1.5))
    text = write_problem(p)
    p2 = read_problem(text)
    assert p2.sense == "max"
    assert p2.blocks == (2,)
    v1 = solve(p, tol=1e-10).objective
    v2 = solve(p2, tol=1e-10).objective
    assert v2 == pytest.approx(v1, abs=1e-8)


def test_certification_requires_cap():
    p = max_eig_problem()
    p.var_cap = None
    sol = solve(p, tol=1e-10)
    with pytest.raises(CertificationError):
        certify_upper_bound(p, sol)
