import json
import math

import numpy as np
import pytest

from helpers import audit_trace, completion_problem, dense_rank
from tuckervar import geometry, tenalg, tucker
from tuckervar.objectives import SampleSet, completion_objective, dense_lsq_objective
from tuckervar.solvers import (RESTARTING, RANK_DECREASE, RANK_INCREASE, RESTART, TIGHTEN, LineSearchConfig,
                               Monitor, RankIncreaseIneffective, SolverTrace, StoppingRules, TramConfig,
                               armijo_backtrack, grap_solve, rank_decrease, rank_increase, rfgrap_solve,
                               rgd_fixed_rank, rgd_solve, stationarity_snapshot, tram_solve)
from tuckervar.solvers.common import StopChecker
from tuckervar.tucker import TuckerTensor, random_tucker

NO_STOP = dict(train_tol=0.0, rel_change_tol=0.0)


# ---------------------------------------------------------------- line search

def test_armijo_scalar_oracle():
    cfg = LineSearchConfig(rho=0.5, a=1e-4)
    f = lambda x: x * x
    # from x = 1 along g = -2 (the antigradient), slope <-f'(1), g> = 4
    res = armijo_backtrack(f, 1.0, 4.0, lambda s: 1.0 - 2.0 * s, 1.0, cfg)
    l = 0
    while not f(1.0) - f(1.0 - 2.0 * 0.5 ** l) >= 0.5 ** l * 1e-4 * 4.0:
        l += 1
    assert res.accepted and res.backtracks == l == 1 and res.s == 0.5 and res.candidate == 0.0


def test_armijo_exact_step_accepted_first(rng):
    # quadratic q(s) = f0 - s*slope + s^2 * c with exact minimizer s* = slope / (2c)
    slope, c = 3.0, 0.7
    q = lambda s: 5.0 - slope * s + c * s * s
    res = armijo_backtrack(lambda v: v, 5.0, slope, q, slope / (2 * c), LineSearchConfig(a=0.5))
    assert res.accepted and res.backtracks == 0


def test_armijo_degenerate_and_errors():
    cfg = LineSearchConfig()
    res = armijo_backtrack(lambda v: v, 1.0, 0.0, lambda s: 1.0, 2.0, cfg)
    assert res.accepted and res.s == 2.0 and res.backtracks == 0
    with pytest.raises(ValueError):
        armijo_backtrack(lambda v: v, 1.0, -1.0, lambda s: 1.0, 1.0, cfg)
    with pytest.raises(ValueError):
        armijo_backtrack(lambda v: v, 1.0, 1.0, lambda s: 1.0, 0.0, cfg)
    with pytest.raises(FloatingPointError):
        armijo_backtrack(lambda v: v, 1.0, 1.0, lambda s: math.nan, 1.0, cfg)
    floor = armijo_backtrack(lambda v: v, 1.0, 1.0, lambda s: 2.0, 1.0, LineSearchConfig(s_min=1e-3))
    assert not floor.accepted and floor.backtracks == 10


def test_config_validation():
    for kw in ({"rho": 1.0}, {"a": 0.0}, {"s_min": 0.0}, {"s_init": "bogus"}, {"s_init": -1.0}):
        with pytest.raises(ValueError):
            LineSearchConfig(**kw)
    with pytest.raises(ValueError):
        StoppingRules(max_iters=-1)
    with pytest.raises(ValueError):
        StoppingRules(time_budget_seconds=0.0)
    with pytest.raises(ValueError):
        TramConfig(variant="x")
    with pytest.raises(ValueError):
        TramConfig(rho_R=1.5)


def test_stop_checker_rules():
    t = SolverTrace()
    X = TuckerTensor.zeros((2, 2))
    c = StopChecker(StoppingRules(train_tol=1e-3, rel_change_tol=1e-2, max_iters=5), t)
    assert c.check(t.add(0, 1.0, X, train_error=1.0)) is None
    assert c.check(t.add(1, 1.0, X, train_error=0.5)) is None
    assert c.check(t.add(2, 1.0, X, train_error=0.499)) == "rel_change"
    c = StopChecker(StoppingRules(max_iters=1), SolverTrace())
    assert c.check({"iter": 1}) == "max_iters"
    c = StopChecker(StoppingRules(), SolverTrace())
    assert c.check({"iter": 0, "train_error": 0.0}) == "train_tol"


# ---------------------------------------------------------------- apocalypse

def _apocalypse(n=10):
    e = [tenalg.unit(n, i) for i in range(3)]
    c = [tenalg.outer_rank1(v, v, v) for v in e]
    G = np.zeros((2, 2, 2))
    G[0, 0, 0] = G[1, 1, 1] = 1.0
    E = np.eye(n)[:, :2]
    return c, TuckerTensor(G, (E, E, E))


class _Iterates:
    """Monitor that keeps every iterate."""

    def __init__(self):
        self.X = []

    def __call__(self, X, fval):
        self.X.append(X)
        return {}


# at alpha = 0.6 the decrease drops below float resolution of f after about 20 steps
@pytest.mark.parametrize("alpha,iters", [(0.3, 30), (0.6, 15)])
def test_apocalypse_half_loss(alpha, iters):
    c, X0 = _apocalypse()
    f = dense_lsq_objective(c[0] + c[2], 0.5)
    it = _Iterates()
    X, tr = grap_solve(f, X0, (2, 2, 2), cfg=LineSearchConfig(s_init=alpha),
                       stops=StoppingRules(max_iters=iters, **NO_STOP), monitor=it)
    assert len(it.X) == iters + 1 and all(r["backtracks"] == 0 for r in tr.records)
    for t, Xt in enumerate(it.X):
        assert np.linalg.norm(Xt.to_dense() - c[0] - (1 - alpha) ** t * c[1]) <= 1e-10
    audit_trace(tr, (2, 2, 2))


def test_apocalypse_unit_loss_follows_doubled_rate():
    # with f = ||X - A||^2 the gradient doubles and the same constant step contracts by 1 - 2 alpha
    c, X0 = _apocalypse()
    f = dense_lsq_objective(c[0] + c[2])
    assert f(X0) == 2.0
    it = _Iterates()
    grap_solve(f, X0, (2, 2, 2), cfg=LineSearchConfig(s_init=0.3), stops=StoppingRules(max_iters=15, **NO_STOP),
               monitor=it)
    for t, Xt in enumerate(it.X):
        assert np.linalg.norm(Xt.to_dense() - c[0] - 0.4 ** t * c[1]) <= 1e-10


def test_apocalypse_stationarity_measures():
    c, X0 = _apocalypse()
    f = dense_lsq_objective(c[0] + c[2], 0.5)
    prev = np.inf
    X = X0
    for _ in range(3):
        X, _ = grap_solve(f, X, (2, 2, 2), cfg=LineSearchConfig(s_init=0.3), stops=StoppingRules(max_iters=10, **NO_STOP))
        snap = stationarity_snapshot(f, X, (2, 2, 2))
        assert snap.approx_cone_norm < prev and snap.ambient_grad_norm >= 1.0
        prev = snap.approx_cone_norm
    assert prev < 1e-4
    # the limit itself is rank deficient and non-stationary
    L = tucker.hosvd(c[0], (2, 2, 2))
    assert L.rank == (1, 1, 1)
    assert stationarity_snapshot(f, L, (2, 2, 2)).ambient_grad_norm == pytest.approx(1.0)


# ---------------------------------------------------------------- GRAP

def test_grap_at_minimizer_stops_immediately(rng):
    X0 = random_tucker((4, 5, 3), (2, 2, 2), rng)
    f = dense_lsq_objective(X0.to_dense())
    X, tr = grap_solve(f, X0, (2, 2, 2), stops=StoppingRules(**NO_STOP))
    assert tr.iterations <= 2 and stationarity_snapshot(f, X, (2, 2, 2)).riem_grad_norm < 1e-12


def test_grap_completion_and_audits():
    rng, A, f, mon = completion_problem(0)
    X0 = random_tucker(A.shape, (2, 2, 2), rng)
    X, tr = grap_solve(f, X0, (2, 2, 2), monitor=mon)
    assert tr.status == "train_tol"
    assert RESTART not in tr.events()
    assert all(rank == (2, 2, 2) for rank in tr.ranks())
    assert tr.records[-1]["test_error"] < 1e-8
    audit_trace(tr, (2, 2, 2))


def test_grap_iteration_bound():
    rng, A, f, _ = completion_problem(1, shape=(8, 8, 8), p=0.4)
    X0 = random_tucker(A.shape, (1, 1, 1), rng)
    r, omega = (2, 2, 2), 0.01
    cfg = LineSearchConfig()
    meas = lambda X, fv: {"g": geometry.approx_proj_cone(X, f.euclid_grad(X).scaled(-1.0), r).norm()}
    X, tr = grap_solve(f, X0, r, omega, cfg, StoppingRules(max_iters=200, **NO_STOP), monitor=meas)
    eps = 1e-6
    count = sum(rec["g"] >= eps for rec in tr.records[:-1])
    bound = math.ceil(tr.records[0]["f"] / (cfg.s_min * cfg.a * omega ** 2 * eps ** 2))
    assert count <= bound
    audit_trace(tr, r)


def test_grap_from_deficient_start_grows_rank():
    rng, A, f, mon = completion_problem(2)
    X0 = random_tucker(A.shape, (1, 1, 1), rng)
    X, tr = grap_solve(f, X0, (2, 2, 2), monitor=mon, stops=StoppingRules(max_iters=400))
    assert X.rank == (2, 2, 2) and tr.records[-1]["train_error"] < 1e-8
    audit_trace(tr, (2, 2, 2))


def test_grap_rejects_bad_input(rng):
    X0 = random_tucker((4, 4, 4), (2, 2, 2), rng)
    f = dense_lsq_objective(np.zeros((4, 4, 4)))
    with pytest.raises(ValueError):
        grap_solve(f, X0, (1, 2, 2))
    with pytest.raises(ValueError):
        grap_solve(f, X0, (2, 2, 2), omega=0.0)


# ---------------------------------------------------------------- rfGRAP

def test_rfgrap_single_block_step(rng):
    X = random_tucker((6, 5, 4), (2, 2, 2), rng)
    Y = rng.standard_normal((5, 2))
    Y -= X.factors[1] @ (X.factors[1].T @ Y)
    T = tenalg.multi_mode_product(X.core, [X.factors[0], Y, X.factors[2]])
    f = dense_lsq_objective(X.to_dense() + T)
    blocks = geometry.partial_blocks(X, f.euclid_grad(X).scaled(-1.0), (2, 2, 2))
    norms = [b.norm() for b in blocks]
    assert int(np.argmax(norms)) == 2 and sum(sorted(norms)[:-1]) < 1e-12
    calls = tucker.HOSVD_CALLS[0]
    Xr, tr = rfgrap_solve(f, X, (2, 2, 2), cfg=LineSearchConfig(s_init=0.25), stops=StoppingRules(max_iters=1, **NO_STOP))
    assert tucker.HOSVD_CALLS[0] == calls and tr.records[1]["block"] == 2
    assert f(Xr) < f(X)
    # the unretracted move X + 0.25 * 2T
    assert np.allclose(Xr.to_dense(), X.to_dense() + 0.5 * T, atol=1e-12)


def test_rfgrap_completion_no_retractions():
    rng, A, f, mon = completion_problem(3)
    X0 = random_tucker(A.shape, (2, 2, 2), rng)
    X, tr = rfgrap_solve(f, X0, (2, 2, 2), monitor=mon, stops=StoppingRules(max_iters=2000))
    assert tr.records[-1]["train_error"] <= 1e-10
    assert tr.hosvd_truncations == 0 and tr.restarts == 0
    assert tr.accepted_block_steps == tr.iterations
    audit_trace(tr, (2, 2, 2))


def test_rfgrap_feasible_from_deficient_start():
    rng, A, f, mon = completion_problem(4)
    X0 = random_tucker(A.shape, (1, 1, 1), rng)
    X, tr = rfgrap_solve(f, X0, (2, 2, 2), monitor=mon, stops=StoppingRules(max_iters=150))
    audit_trace(tr, (2, 2, 2))
    assert all(q <= 2 for q in dense_rank(X.to_dense(), 1e-8))


# ---------------------------------------------------------------- RGD and rank changes

def test_rgd_deficient_start():
    G = np.zeros((2, 2, 2))
    G[0, 0, 0], G[1, 1, 1] = 1.0, 1e-3
    E = np.eye(4)[:, :2]
    Y0 = TuckerTensor(G, (E, E, E))
    Y, status, tr = rgd_fixed_rank(dense_lsq_objective(np.ones((4, 4, 4))), Y0, Delta=0.01)
    assert status == "Deficient" and Y is Y0 and tr.iterations == 0


def test_rgd_reaches_stationarity():
    rng, A, f, mon = completion_problem(5)
    Y0 = random_tucker(A.shape, (2, 2, 2), rng)
    Y, status, tr = rgd_fixed_rank(f, Y0, eps_R=1e-6, max_inner=500, monitor=mon)
    assert status == "Stationary"
    assert geometry.proj_tangent_space(Y, f.euclid_grad(Y)).norm() <= 1e-6
    audit_trace(tr, (2, 2, 2))
    Y, status, tr = rgd_fixed_rank(f, Y0, eps_R=1e-12, max_inner=3)
    assert status == "Budget" and tr.iterations == 3


def test_rgd_solve_driver():
    rng, A, f, mon = completion_problem(6)
    X, tr = rgd_solve(f, random_tucker(A.shape, (2, 2, 2), rng), monitor=mon)
    assert tr.status == "train_tol"
    audit_trace(tr, (2, 2, 2))


def test_rank_decrease_threshold():
    G = np.zeros((2, 2, 2))
    G[0, 0, 0], G[1, 1, 1] = 1.0, 1e-9
    E = np.eye(5)[:, :2]
    X = TuckerTensor(G, (E, E, E))
    e = tenalg.unit(5, 0)
    f = dense_lsq_objective(tenalg.outer_rank1(e, e, e))
    Xn, rank = rank_decrease(X, f, 0.01, 0.5)
    assert rank == (1, 1, 1) and f(Xn) <= f(X)


def test_rank_decrease_noop_and_backoff(rng):
    X = random_tucker((5, 5, 5), (2, 2, 2), rng)
    f = dense_lsq_objective(np.zeros((5, 5, 5)))
    assert rank_decrease(X, f, 1e-6)[0] is X
    # trailing sigma 0.05 of a tensor that the objective wants to keep: Delta = 0.1 would cut it
    # and increase f, Delta backs off until the rank stays
    G = np.zeros((2, 2, 2))
    G[0, 0, 0], G[1, 1, 1] = 1.0, 0.05
    E = np.eye(5)[:, :2]
    Y = TuckerTensor(G, (E, E, E))
    Xn, rank = rank_decrease(Y, dense_lsq_objective(Y.to_dense()), 0.1, 0.5)
    assert rank == (2, 2, 2) and Xn is Y


def test_rank_decrease_overrank_singular_gap(rng):
    # stored rank (4,4,4) whose trailing two directions per mode are tiny
    G = np.zeros((4, 4, 4))
    G[:2, :2, :2] = rng.standard_normal((2, 2, 2)) + 3.0
    G[2:, 2:, 2:] = 1e-6 * rng.standard_normal((2, 2, 2))
    U = tuple(np.linalg.qr(rng.standard_normal((8, 4)))[0] for _ in range(3))
    X = tucker.reveal_rank(TuckerTensor(G, U))
    target = TuckerTensor(G[:2, :2, :2], tuple(u[:, :2] for u in U)).to_dense()
    Xn, rank = rank_decrease(X, dense_lsq_objective(target), 0.01)
    assert rank == (2, 2, 2)


def test_rank_increase_merge_oracle():
    rng, A, f, _ = completion_problem(7)
    X = random_tucker(A.shape, (1, 1, 1), rng)
    g = f.euclid_grad(X)
    N = geometry.normal_increase_direction(X, g, (1, 1, 1))
    Xn, rank, s, bt = rank_increase(X, f, (1, 1, 1), N=N)
    assert rank == (2, 2, 2) and f(Xn) < f(X)
    assert np.linalg.norm(Xn.to_dense() - X.to_dense() - s * N.to_dense()) <= 1e-11


def test_rank_increase_at_ambient_stationary_point(rng):
    X = random_tucker((5, 5, 5), (1, 1, 1), rng)
    f = dense_lsq_objective(X.to_dense())
    with pytest.raises(RankIncreaseIneffective):
        rank_increase(X, f, (1, 1, 1))


# ---------------------------------------------------------------- TRAM

def test_tram_at_minimizer_only_tightens(rng):
    X0 = random_tucker((5, 5, 5), (2, 2, 2), rng)
    f = dense_lsq_objective(X0.to_dense())
    X, tr = tram_solve(f, X0, (2, 2, 2), stops=StoppingRules(**NO_STOP))
    ev = set(tr.events())
    assert ev == {TIGHTEN} and tr.status == "eps_R_floor"


@pytest.mark.parametrize("variant", ["practical", RESTARTING])
def test_tram_overrank_small(variant, rng):
    # fully observed target: over-parameterized completion on tiny grids is not identifiable
    A = random_tucker((10, 9, 8), (2, 2, 2), rng).to_dense()
    f = dense_lsq_objective(A)
    X0 = random_tucker(A.shape, (4, 4, 4), rng)
    mon = lambda X, fv: {"train_error": np.linalg.norm(X.to_dense() - A) / np.linalg.norm(A)}
    X, tr = tram_solve(f, X0, (4, 4, 4), TramConfig(variant=variant), monitor=mon,
                       stops=StoppingRules(max_iters=1500))
    assert X.rank == (2, 2, 2) and tr.status == "train_tol"
    assert RANK_DECREASE in tr.events()
    audit_trace(tr, (4, 4, 4))


def test_tram_budget_exit_does_not_tighten():
    rng, A, f, mon = completion_problem(8, shape=(10, 10, 10))
    X0 = random_tucker(A.shape, (2, 2, 2), rng)
    X, tr = tram_solve(f, X0, (2, 2, 2), TramConfig(inner_max_iters=1), monitor=mon,
                       stops=StoppingRules(max_iters=10, **NO_STOP))
    assert tr.status == "max_iters" and TIGHTEN not in tr.events()


def test_tram_underrank_small():
    rng, A, f, mon = completion_problem(9, true_rank=(3, 3, 3))
    X0 = random_tucker(A.shape, (1, 1, 1), rng)
    X, tr = tram_solve(f, X0, (3, 3, 3), monitor=mon, stops=StoppingRules(max_iters=1500))
    ranks = [min(r) for r in tr.ranks()]
    assert np.all(np.diff(ranks) >= 0) and X.rank == (3, 3, 3)
    assert tr.events().count(RANK_INCREASE) >= 2
    assert tr.records[-1]["test_error"] < 1e-6
    audit_trace(tr, (3, 3, 3))


# ---------------------------------------------------------------- diagnostics and traces

def test_stationarity_snapshot(rng):
    X = random_tucker((5, 5, 5), (2, 2, 2), rng)
    S = SampleSet.full(X.to_dense())
    snap = stationarity_snapshot(completion_objective(S), X, (3, 3, 3))
    assert max(snap.as_dict().values()) < 1e-12
    for _ in range(10):
        Y = random_tucker((5, 5, 5), (1, 2, 2), rng)
        snap = stationarity_snapshot(completion_objective(S), Y, (2, 3, 3))
        assert snap.approx_cone_norm <= snap.ambient_grad_norm * (1 + 1e-12)


def test_trace_jsonl_roundtrip():
    rng, A, f, mon = completion_problem(10, shape=(8, 8, 8))
    X, tr = grap_solve(f, random_tucker(A.shape, (2, 2, 2), rng), (2, 2, 2), monitor=mon,
                       stops=StoppingRules(max_iters=5))
    lines = tr.to_jsonl().splitlines()
    assert len(lines) == len(tr.records)
    recs = [json.loads(l) for l in lines]
    assert [r["iter"] for r in recs] == list(range(len(recs)))
    assert all(r["f"] == q["f"] for r, q in zip(recs, tr.records))


def test_monitor_requires_nonzero_values():
    with pytest.raises(ValueError):
        Monitor(SampleSet((2, 2), [[0, 0]], [0.0]))
