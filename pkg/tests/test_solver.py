import numpy as np
import pytest

from faultmg import grid as G
from faultmg.partition import DeadRankError, build_partition, erase_rank
from faultmg.solver import BoxMultigrid, CycleType, ParallelMultigrid, SolverConfig, solve

from conftest import dense_matrix, naive_gs


def _mg(n0, L, counts, **cfg):
    part = build_partition(G.build_hierarchy(n0, L), *counts, min_ranks=1)
    return ParallelMultigrid(part, SolverConfig(**cfg))


def test_config_validation():
    SolverConfig()
    for bad in ({"pre_smooth": 0}, {"post_smooth": 0}, {"stop_tol": 0.0},
                {"coarse_policy": "lu"}, {"cycle": "X"}):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_single_rank_smoother_is_classical_gs(rng):
    mg = _mg(2, 2, (1, 1, 1))
    u0 = mg.states.assemble("u").copy()
    G.set_interior(u0, rng.standard_normal(7**3))
    f = np.zeros_like(u0)
    G.set_interior(f, rng.standard_normal(7**3))
    mg.states.distribute(u0, "u")
    mg.states.distribute(f, "f")
    mg.smooth(2, 3)
    np.testing.assert_array_equal(mg.states.assemble("u"), naive_gs(u0, f, 0.125, 3))


def test_hybrid_smoother_is_jacobi_across_interfaces(rng):
    # two ranks: each side sweeps with the other's values frozen at sweep start
    mg = _mg(2, 2, (2, 1, 1))
    u0 = mg.states.assemble("u").copy()
    G.set_interior(u0, rng.standard_normal(7**3))
    mg.states.distribute(u0, "u")
    mg.smooth(2, 1)
    got = mg.states.assemble("u")
    f = np.zeros_like(u0)
    left = naive_gs(u0[:6], f[:6], 0.125)  # rank 0 owns x=1..4 and sees x=5 frozen
    right = naive_gs(u0[4:], f[4:], 0.125)  # rank 1 owns x=5..7 and sees x=4 frozen
    np.testing.assert_array_equal(got[1:5], left[1:5])
    np.testing.assert_array_equal(got[5:8], right[1:4])


def test_smoothing_exact_solution_is_fixed_point(rng):
    h = 0.125
    f = np.zeros((9, 9, 9))
    G.set_interior(f, rng.standard_normal(343))
    u = np.zeros_like(f)
    G.set_interior(u, np.linalg.solve(dense_matrix(u.shape, h), G.interior_values(f)))
    v = u.copy()
    G.gauss_seidel(v, f, h, 5)
    np.testing.assert_allclose(v, u, rtol=0, atol=1e-14 * np.abs(u).max())


def test_gs_error_non_increasing(rng):
    h = 0.125
    A = dense_matrix((9, 9, 9), h)
    f = np.zeros((9, 9, 9))
    G.set_interior(f, rng.standard_normal(343))
    exact = np.linalg.solve(A, G.interior_values(f))
    u = np.zeros_like(f)
    G.set_interior(u, exact + rng.standard_normal(343))
    e = G.interior_values(u) - exact
    l2, energy = [np.linalg.norm(e)], [e @ A @ e]
    for _ in range(20):
        G.gauss_seidel(u, f, h, 1)
        e = G.interior_values(u) - exact
        l2.append(np.linalg.norm(e))
        energy.append(e @ A @ e)
    assert all(b <= a for a, b in zip(energy, energy[1:]))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(l2, l2[1:]))


def test_v_cycle_reduces_residual_by_three():
    mg = _mg(4, 3, (2, 2, 2))
    r0 = mg.residual_norm()
    mg.cycle()
    assert r0 / mg.residual_norm() >= 3.0


def test_level_zero_cycle_is_coarse_solve(rng):
    mg = BoxMultigrid((4, 4, 4), 0, 0.25)
    G.set_interior(mg.f[0], rng.standard_normal(27))
    mg.cycle()
    r = G.residual(mg.f[0], mg.u[0], 0.25)
    assert G.norm(r, 0.25) <= 1e-12 * G.norm(mg.f[0], 0.25)
    assert mg.work == 1.0  # only the coarse solve was charged


def test_w_and_f_within_factor_two():
    res = {}
    for kind in ("W", "F"):
        mg = _mg(4, 3, (2, 2, 1))
        mg.cycle("V")
        mg.cycle(kind)
        res[kind] = mg.residual_norm()
    assert 0.5 <= res["W"] / res["F"] <= 2.0


def test_coarse_direct_solve_accuracy(rng):
    mg = _mg(4, 1, (2, 2, 1))
    lay = mg.layouts[0]
    f0 = np.zeros(lay.shape)
    G.set_interior(f0, rng.standard_normal(27))
    mg.states.fields["f"][0][:] = lay.distribute(f0)
    mg.coarse_solve()
    u0 = lay.assemble(mg.states.fields["u"][0])
    assert G.norm(G.residual(f0, u0, 0.25), 0.25) <= 1e-12 * G.norm(f0, 0.25)


def test_coarse_solution_layout_independent(rng):
    f0 = np.zeros((5, 5, 5))
    G.set_interior(f0, rng.standard_normal(27))
    out = []
    for counts in ((1, 1, 2), (2, 1, 1)):
        mg = _mg(4, 1, counts)
        lay = mg.layouts[0]
        mg.states.fields["f"][0][:] = lay.distribute(f0)
        mg.coarse_solve()
        out.append(lay.assemble(mg.states.fields["u"][0]))
    np.testing.assert_array_equal(out[0], out[1])


@pytest.mark.parametrize("policy", ["direct", "sweeps"])
def test_both_coarse_policies_converge(policy):
    mg = _mg(4, 2, (2, 2, 1), coarse_policy=policy)
    log = solve(mg)
    assert log.stop_reason == "converged" and log[-1] <= 1e-15


def test_max_cycles_zero():
    log = solve(_mg(4, 1, (2, 1, 1), max_cycles=0))
    assert log.residuals == [1.0] and log.cycles == 0


def test_dead_rank_blocks_global_operations():
    mg = _mg(4, 1, (2, 1, 1))
    erase_rank(mg.states, 1)
    with pytest.raises(DeadRankError):
        mg.smooth(1, 1)
    with pytest.raises(DeadRankError):
        mg.cycle()


def test_determinism_and_rank_order_independence():
    a = solve(_mg(4, 2, (2, 2, 2)))
    b = solve(_mg(4, 2, (2, 2, 2)))
    assert a.residuals == b.residuals
    mg = _mg(4, 2, (2, 2, 2))
    mg.rank_order = [5, 2, 7, 0, 3, 6, 1, 4]
    c = solve(mg)
    assert c.residuals == a.residuals
    np.testing.assert_array_equal(mg.states.assemble("u"), _solved_state((2, 2, 2)))


def _solved_state(counts):
    mg = _mg(4, 2, counts)
    solve(mg)
    return mg.states.assemble("u")


def test_monotone_tail():
    log = solve(_mg(4, 3, (2, 2, 2)))
    r = log.residuals
    for k in range(2, len(r) - 1):
        if r[k + 1] <= 1e-14:
            break
        assert r[k + 1] < r[k]


def test_smoother_only_is_much_slower_than_v_cycle():
    mg = _mg(4, 3, (2, 2, 2))
    cfg = mg.config
    r = [mg.residual_norm()]
    for _ in range(6):
        mg.smooth(3, cfg.pre_smooth + cfg.post_smooth)  # same sweep count as one V(3,3) finest visit
        r.append(mg.residual_norm())
    rate_smooth = (r[-1] / r[2]) ** (1 / 4)
    v = solve(_mg(4, 3, (2, 2, 2), max_cycles=6))
    rate_v = (v[6] / v[2]) ** (1 / 4)
    assert rate_smooth < 1.0
    assert rate_smooth >= 2 * rate_v


def test_f_cycle_cheaper_than_w():
    mg = _mg(4, 4, (2, 2, 2))
    w, f, v = (mg.cycle_work(k) for k in ("W", "F", "V"))
    assert v < f <= w
    assert 7 / 8 - 0.05 <= f / w <= 1.0


def test_cycle_work_probe_matches_charged_work():
    for kind in CycleType:
        mg = _mg(4, 2, (2, 1, 1))
        before = mg.work
        mg.cycle(kind)
        assert mg.work - before == pytest.approx(mg.cycle_work(kind), rel=1e-14)
