import numpy as np
import pytest
import scipy.sparse as sp

from conftest import central_fd, make_problem
from varimove.diagnostics import check_energy_inequality, energy_report
from varimove.errors import LineSearchStall
from varimove.minimizer.elforms import el_pairings, el_residual, reduce_to_bank
from varimove.minimizer.lbfgs import color_columns, fd_hessian, lbfgs, make_preconditioner
from varimove.minimizer.objective import TERMS
from varimove.minimizer.step import minimize_step
from varimove.config import ForceSpec
from varimove.scenarios import falling_disk_params


def random_states(ctx, fluid, n, seed=0, amp=2e-4):
    rng = np.random.default_rng(seed)
    p = falling_disk_params()
    out = []
    while len(out) < n:
        prob = make_problem(ctx, fluid, p, rng, moving=True)
        x = amp * rng.normal(size=prob.n_var)
        if prob.admissible(x):
            out.append((prob, x, rng.normal(size=prob.n_var)))
    return out


def rel_fd_error(prob, x, d, only=None, step=1e-6):
    """Relative error against the fourth-order central difference quotient."""
    f = lambda z: prob.evaluate(z, gradient=False, only=only)[0]
    _, g = prob.evaluate(x, only=only)
    an = float(g @ d)
    fd = central_fd(f, x, d, step)
    return abs(an - fd) / max(abs(an), abs(fd), 1e-300)


def test_full_objective_gradient(ctx, fluid):
    for prob, x, d in random_states(ctx, fluid, 20):
        assert rel_fd_error(prob, x, d, step=1e-6) <= 1e-6


@pytest.mark.parametrize("term", TERMS)
def test_term_gradients(ctx, fluid, term):
    for prob, x, d in random_states(ctx, fluid, 20, seed=TERMS.index(term)):
        assert rel_fd_error(prob, x, d, only=(term,), step=1e-6) <= 1e-6


def test_terms_sum_to_objective(ctx, fluid):
    prob, x, _ = random_states(ctx, fluid, 1)[0]
    assert sum(prob.terms(x).values()) == pytest.approx(prob.evaluate(x, gradient=False)[0], rel=1e-13)


def test_el_pairing_matches_gradient(ctx, fluid):
    # element-loop assembly of the stationarity conditions agrees with the objective gradient
    for prob, x, _ in random_states(ctx, fluid, 5, seed=3):
        solid, fl = el_pairings(prob, x)
        r = reduce_to_bank(prob, sum(solid.values()), sum(fl.values())).ravel()
        g = prob.evaluate(x)[1]
        assert np.max(np.abs(r - g)) <= 1e-10 * max(1.0, np.max(np.abs(g)))


def test_guard_rejects_inverted_fluid(falling_problem):
    prob = falling_problem
    x = np.zeros(prob.n_var)
    x[prob.n_var - 2:] = 10.0      # throw one interior fluid node far away
    assert prob.evaluate(x) == (np.inf, None)
    assert not prob.admissible(x)


def test_rest_state_is_stationary(rest_problem):
    f, g = rest_problem.evaluate(np.zeros(rest_problem.n_var))
    assert np.max(np.abs(g)) <= 1e-12


def test_minimize_rest_step(ctx, rest_problem):
    p = rest_problem.params
    res = minimize_step(ctx, rest_problem.state, p)
    assert res.iterations == 0
    assert np.max(np.abs(res.eta - rest_problem.state.eta)) <= 10 * p.grad_tol
    assert np.allclose(res.rho, rest_problem.state.rho, rtol=1e-12)


def test_minimize_falling_step(ctx, falling_problem):
    p = falling_problem.params
    res = minimize_step(ctx, falling_problem.state, p)
    assert res.el_residual <= 10 * p.grad_tol
    assert res.objective <= res.candidate
    assert res.cn_defect <= p.cn_tol * ctx.ref_area
    # the solid sags under gravity
    assert np.sum(res.eta[:, 1] - falling_problem.state.eta[:, 1]) < 0
    el0 = res.problem.ctx.space
    rep = energy_report(res, res.problem.evaluate(np.zeros(res.problem.n_var), only=("elastic",))[0])
    assert check_energy_inequality([rep]).ok
    assert min(rep.diss_solid, rep.diss_viscous, rep.diss_kappa_fluid, rep.diss_eps) >= 0


def test_hessian_pattern_covers_hessian(falling_problem):
    prob = falling_problem
    x = np.zeros(prob.n_var)
    n = prob.n_var
    grad = lambda z: prob.evaluate(z, guard=False)[1]
    g0 = grad(x)
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1e-6
        H[:, j] = (grad(x + e) - g0) / 1e-6
    mask = prob.hessian_pattern().toarray() != 0
    assert np.max(np.abs(H[~mask])) <= 1e-6 * np.max(np.abs(H))


def test_coloring_is_valid():
    rng = np.random.default_rng(0)
    A = sp.random(60, 60, density=0.05, random_state=1, format="csr")
    A = A + A.T + sp.eye(60)
    colors = color_columns(A)
    P = (A != 0).toarray()
    for c in np.unique(colors):
        cols = np.flatnonzero(colors == c)
        assert np.all(P[:, cols].sum(axis=1) <= 1)
    assert rng is not None


def test_fd_hessian_exact_for_quadratic():
    n = 40
    A = sp.diags([np.full(n - 1, -1.0), np.full(n, 4.0), np.full(n - 1, -1.0)], [-1, 0, 1]).tocsr()
    H = fd_hessian(lambda z: A @ z, np.zeros(n), A, color_columns(A))
    assert np.allclose(H.toarray(), A.toarray(), atol=1e-8)


def test_preconditioner_shifts_indefinite():
    H = sp.diags([1.0, -1.0, 2.0]).tocsr()
    g = np.array([0.0, 1.0, 0.0])   # unshifted solve points uphill
    pc = make_preconditioner(H, g)
    assert pc is not None and pc.shift > 0
    assert g @ pc(g) > 0


def test_lbfgs_rosenbrock():
    def rosen(z):
        x, y = z
        f = (1 - x) ** 2 + 100 * (y - x * x) ** 2
        return f, np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])

    res = lbfgs(rosen, np.array([-1.2, 1.0]), grad_tol=1e-10, max_iter=500)
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-8)


def test_lbfgs_respects_barrier():
    # minimum of the unconstrained quadratic lies in the forbidden region x < 0.5
    def fun(z):
        if z[0] <= 0.5:
            return np.inf, None
        return float(z @ z - np.log(z[0] - 0.5)), 2 * z - np.array([1 / (z[0] - 0.5), 0.0])

    res = lbfgs(fun, np.array([3.0, 1.0]), grad_tol=1e-10)
    assert res.x[0] > 0.5
    assert res.x[0] == pytest.approx((0.5 + np.sqrt(0.25 + 2)) / 2, rel=1e-8)


def test_lbfgs_stalls_on_nonsmooth_direction():
    with pytest.raises(LineSearchStall):
        lbfgs(lambda z: (float(z[0]), np.array([-1.0])), np.array([0.0]), max_backtracks=5)


def test_candidate_value_without_motion(ctx, fluid):
    from varimove import constitutive as cst
    from varimove.diagnostics import potential_energy
    prob = make_problem(ctx, fluid, falling_disk_params(solid_force=ForceSpec(), fluid_force=ForceSpec()))
    el = cst.elastic_energy_kappa(ctx.space, prob.eta_k, prob.params.elastic, False)[0]
    U = float(prob.mass_k @ cst.potential_delta(prob.rho_tilde, prob.params.fluid))
    assert prob.candidate_value() == pytest.approx(el + U, rel=1e-14)


def test_doubling_handoff_quadruples_w_part(ctx, fluid):
    rng = np.random.default_rng(9)
    prob = make_problem(ctx, fluid, falling_disk_params(), rng, moving=True)
    x = np.zeros(prob.n_var)
    a = prob.evaluate(x, gradient=False, only=("inertia_fluid",))[0]
    prob.w_tilde = 2 * prob.w_tilde
    b = prob.evaluate(x, gradient=False, only=("inertia_fluid",))[0]
    assert b == pytest.approx(4 * a, rel=1e-13)


def test_pressure_gradient_at_rest_velocity(falling_problem):
    from varimove import constitutive as cst
    prob = falling_problem
    rng = np.random.default_rng(4)
    d = rng.normal(size=prob.n_var)
    g = prob.evaluate(np.zeros(prob.n_var), only=("pressure",))[1]
    _, B = prob.unpack(d)
    gb = prob.fspace.element_gradients(B.reshape(-1, 2))
    div = gb[:, 0, 0] + gb[:, 1, 1]
    p = cst.pressure_delta(prob.rho_tilde, prob.params.fluid)[prob.state.fluid.triangles].mean(axis=1)
    assert float(g @ d) == pytest.approx(-float(prob.fspace.area @ (div * p)), rel=1e-12)


def test_pure_inertia_minimum(ctx, fluid):
    # with only the quadratic inertial terms active, the minimizer is the handoff velocity
    rng = np.random.default_rng(5)
    prob = make_problem(ctx, fluid, falling_disk_params(), rng, moving=True)
    prob.active = frozenset({"inertia_solid"})
    x = np.zeros(prob.n_var)
    D, _ = prob.unpack(x)
    target = prob.tau * prob.zeta
    xs = prob.Ps.T @ target        # free solid nodes take tau * zeta
    g = prob.evaluate(xs, guard=False)[1]
    D, _ = prob.unpack(xs)
    free = np.repeat(ctx.free, 2) * 2 + np.tile([0, 1], len(ctx.free))
    assert np.allclose(D[free], target[free])
    # the clamped rows of zeta were zero, so the restriction is exact
    assert np.max(np.abs(g)) <= 1e-12


def test_el_residual_scales_with_perturbation(ctx, falling_problem):
    p = falling_problem.params
    res = minimize_step(ctx, falling_problem.state, p)
    prob = res.problem
    rng = np.random.default_rng(1)
    e = rng.normal(size=prob.n_var)
    r1 = el_residual(prob, res.x + 1e-6 * e)
    r2 = el_residual(prob, res.x + 2e-6 * e)
    assert r2 / r1 == pytest.approx(2.0, rel=0.05)
