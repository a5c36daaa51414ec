"""Rank-adaptive solver: fixed-rank RGD with rank-decreasing and rank-increasing steps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import geometry
from ..tucker import TuckerTensor, core_singular_values, hosvd, retract_hosvd, reveal_rank, sigma_ratios
from .common import (DEFICIENT, RANK_DECREASE, RANK_INCREASE, RESTART, TIGHTEN, LineSearchConfig,
                     SolverTrace, StopChecker, StoppingRules, armijo_backtrack, initial_step)
from .grap import DEFAULT_OMEGA, _restart_step

RESTARTING = "restart"
PRACTICAL = "practical"

DEFICIENT_STATUS = "Deficient"
STATIONARY_STATUS = "Stationary"
BUDGET_STATUS = "Budget"


class RankIncreaseIneffective(RuntimeError):
    """The rank-increasing direction vanishes or admits no acceptable stepsize."""


@dataclass(frozen=True)
class TramConfig:
    omega: float = DEFAULT_OMEGA
    eps_R0: float = 0.1
    rho_R: float = 0.5
    Delta: float = 0.01
    rho_1: float = 0.5
    ell: tuple | None = None
    eps_1: float = 0.01
    eps_2: float = 0.5
    inner_max_iters: int = 5
    variant: str = PRACTICAL
    eps_R_min: float = 1e-15
    max_outer: int = 100000
    recovery_iters: int = 20

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ValueError("omega must lie in (0, 1]")
        for name in ("rho_R", "rho_1"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        for name in ("eps_R0", "Delta", "eps_1", "eps_2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.recovery_iters < 0:
            raise ValueError("recovery_iters must be nonnegative")
        if self.inner_max_iters < 1:
            raise ValueError("inner_max_iters must be at least 1")
        if self.variant not in (RESTARTING, PRACTICAL):
            raise ValueError(f"unknown variant {self.variant!r}")

    def increments(self, d: int) -> tuple:
        return (1,) * d if self.ell is None else tuple(int(x) for x in self.ell)


class _RGDResult:
    __slots__ = ("X", "f", "status", "grad", "riem")

    def __init__(self, X, f, status, grad=None, riem=None):
        self.X, self.f, self.status, self.grad, self.riem = X, f, status, grad, riem


def _rgd(f, Y, fY, Delta, eps_R, cfg, max_inner, trace, monitor, it, checker):
    """Fixed-rank RGD used inside TRAM; returns (result, it, stop_status)."""
    prev_s = None
    for i in range(max_inner + 1):
        if sigma_ratios(Y).min() <= Delta:
            return _RGDResult(Y, fY, DEFICIENT_STATUS), it, None
        grad = f.euclid_grad(Y)
        T = geometry.proj_tangent_space(Y, grad.scaled(-1.0))
        tn = T.norm()
        if tn <= eps_R:
            return _RGDResult(Y, fY, STATIONARY_STATUS, grad, T), it, None
        if i == max_inner:
            return _RGDResult(Y, fY, BUDGET_STATUS, grad, T), it, None
        V = T.as_cone_element()
        s0 = initial_step(f, Y, V, cfg, prev_s)
        ls = armijo_backtrack(f, fY, tn * tn, lambda s: retract_hosvd(Y, V, s, Y.rank), s0, cfg)
        if not ls.accepted:
            return _RGDResult(Y, fY, STATIONARY_STATUS, grad, T), it, "line_search_floor"
        it += 1
        Y, fY, prev_s = ls.candidate, ls.f_candidate, ls.s
        if Y.rank != V.base.rank:
            # the HOSVD dropped a numerically null direction; treat as deficiency
            rec = trace.add(it, fY, Y, step=ls.s, backtracks=ls.backtracks, event=DEFICIENT,
                            monitor=monitor)
            stop = checker.check(rec)
            return _RGDResult(Y, fY, DEFICIENT_STATUS), it, stop
        rec = trace.add(it, fY, Y, step=ls.s, backtracks=ls.backtracks, monitor=monitor)
        stop = checker.check(rec)
        if stop is not None:
            return _RGDResult(Y, fY, BUDGET_STATUS), it, stop
    raise AssertionError("unreachable")


def rgd_fixed_rank(f, Y0: TuckerTensor, Delta: float = 0.01, eps_R: float = 0.1,
                   cfg: LineSearchConfig = LineSearchConfig(), max_inner: int = 5, monitor=None):
    """Riemannian gradient descent on the manifold of the stored rank of ``Y0``.

    Stops with ``"Deficient"`` when some core unfolding has
    ``sigma_min / sigma_max <= Delta`` (checked first), ``"Stationary"`` when
    the Riemannian gradient norm is at most ``eps_R``, or ``"Budget"`` after
    ``max_inner`` steps.  Returns ``(Y, status, trace)``.
    """
    trace = SolverTrace()
    checker = StopChecker(StoppingRules(train_tol=0.0, rel_change_tol=0.0, max_iters=max_inner), trace)
    fY = float(f(Y0))
    trace.add(0, fY, Y0, monitor=monitor)
    res, _, stop = _rgd(f, Y0, fY, Delta, eps_R, cfg, max_inner, trace, monitor, 0, checker)
    trace.status = stop or res.status
    return res.X, res.status, trace


def rgd_solve(f, X0: TuckerTensor, cfg: LineSearchConfig = LineSearchConfig(),
              stops: StoppingRules = StoppingRules(), monitor=None):
    """Plain fixed-rank RGD at the stored rank of ``X0`` under the usual stopping rules.

    Deficiency is only reported when a core unfolding becomes exactly singular.
    Returns ``(X, trace)``.
    """
    X = reveal_rank(X0)
    trace = SolverTrace()
    checker = StopChecker(stops, trace)
    fX = float(f(X))
    stop = checker.check(trace.add(0, fX, X, monitor=monitor))
    if stop is None:
        res, _, stop = _rgd(f, X, fX, 0.0, 0.0, cfg, stops.max_iters, trace, monitor, 0, checker)
        X = res.X
        if stop is None:
            stop = {DEFICIENT_STATUS: "deficient", STATIONARY_STATUS: "stationary"}.get(res.status, "max_iters")
    trace.status = stop
    return X, trace


def rank_decrease(X: TuckerTensor, f, Delta: float = 0.01, rho_1: float = 0.5, fX: float | None = None):
    """Truncate modes whose trailing core singular values fall below ``Delta * sigma_1``.

    The new rank keeps ``#{i : sigma_i >= Delta sigma_1}`` directions per mode
    (at least one); ``Delta`` shrinks by ``rho_1`` until the objective does
    not increase.  Returns ``(X_new, rank)``; ``X`` itself if nothing changes.
    """
    if fX is None:
        fX = float(f(X))
    svals = [core_singular_values(X, k) for k in range(X.ndim)]
    while Delta >= 1e-300:
        rhat = tuple(max(1, int(np.count_nonzero(s >= Delta * s[0]))) if s[0] > 0 else 1
                     for s in svals)
        if rhat == X.rank:
            return X, X.rank
        Xh = hosvd(X, rhat)
        fh = float(f(Xh))
        if fh <= fX:
            return Xh, Xh.rank
        Delta *= rho_1
    return X, X.rank


def rank_increase(X: TuckerTensor, f, ell, choice: geometry.ConeBasisChoice = geometry.DEFAULT_CHOICE,
                  cfg: LineSearchConfig = LineSearchConfig(), fX: float | None = None, grad=None,
                  N: TuckerTensor | None = None):
    """Add an Armijo step along the normal direction ``N`` and merge the representation.

    The result has core ``diag(G, s Ghat)`` and factors ``[U_k U_{k,1}]``.
    Returns ``(X_new, rank, stepsize, backtracks)``.
    """
    if fX is None:
        fX = float(f(X))
    if N is None:
        if grad is None:
            grad = f.euclid_grad(X)
        N = geometry.normal_increase_direction(X, grad, ell, choice)
    gh2 = float(np.sum(N.core ** 2))
    if gh2 == 0.0:
        raise RankIncreaseIneffective("normal direction vanishes")
    d = X.ndim
    dims = tuple(q + l for q, l in zip(X.rank, N.rank))
    factors = tuple(np.hstack([U, W]) for U, W in zip(X.factors, N.factors))
    base = np.zeros(dims)
    base[tuple(slice(0, q) for q in X.rank)] = X.core
    tail = tuple(slice(q, None) for q in X.rank)

    def step(s):
        core = base.copy()
        core[tail] = s * N.core
        return TuckerTensor(core, factors)

    s0 = initial_step(f, X, N, cfg, None)
    ls = armijo_backtrack(f, fX, gh2, step, s0, cfg)
    if not ls.accepted:
        raise RankIncreaseIneffective("no acceptable stepsize along the normal direction")
    Xn = reveal_rank(ls.candidate)
    if Xn.rank != dims:
        raise RankIncreaseIneffective("added directions are numerically zero")
    return Xn, Xn.rank, ls.s, ls.backtracks


def tram_solve(f, X0: TuckerTensor, r, tcfg: TramConfig = TramConfig(),
               cfg: LineSearchConfig = LineSearchConfig(), stops: StoppingRules = StoppingRules(),
               choice: geometry.ConeBasisChoice = geometry.DEFAULT_CHOICE, monitor=None):
    """Tucker rank-adaptive method.

    Alternates fixed-rank RGD with rank changes: rank decrease after a
    detected deficiency (the run ends if the rank cannot be lowered), an
    ``eps_R`` tightening at full rank ``r``, and otherwise a rank increase
    when ``||N|| >= eps_1 ||grad f||_R``.  A rejected increase tightens
    ``eps_R`` (``variant="practical"``) or, with ``variant="restart"``, takes a
    restart step along the antigradient when the Riemannian gradient is
    small relative to the ambient one.  ``RGD`` exits on its iteration budget
    are branched on like stationary exits.
    """
    r = tuple(int(x) for x in r)
    if len(r) != X0.ndim or any(q > b for q, b in zip(X0.rank, r)):
        raise ValueError(f"initial rank {X0.rank} is not below the bound {r}")
    ell = tcfg.increments(X0.ndim)
    X = reveal_rank(X0)
    trace = SolverTrace()
    checker = StopChecker(stops, trace)
    fX = float(f(X))
    status = checker.check(trace.add(0, fX, X, monitor=monitor))
    eps_R = tcfg.eps_R0
    it = 0
    outer = 0
    while status is None:
        outer += 1
        if outer > tcfg.max_outer:
            status = "max_outer"
            break
        res, it, stop = _rgd(f, X, fX, tcfg.Delta, eps_R, cfg, tcfg.inner_max_iters,
                             trace, monitor, it, checker)
        X, fX = res.X, res.f
        if stop is not None:
            status = stop
            break
        if res.status == DEFICIENT_STATUS:
            Xn, rank = rank_decrease(X, f, tcfg.Delta, tcfg.rho_1, fX)
            if rank == X.rank:
                Xn = _recover_decrease(X, f, fX, tcfg, cfg)
                if Xn is None:
                    status = "rank_decrease_stalled"
                    break
            X, fX = Xn, float(f(Xn))
            status = checker.check(trace.add(it, fX, X, event=RANK_DECREASE, monitor=monitor))
            continue
        headroom = tuple(b - q for b, q in zip(r, X.rank))
        if not any(headroom):
            if res.status == BUDGET_STATUS:
                # inner budget spent away from stationarity: keep descending
                continue
            eps_R = _tighten(eps_R, tcfg)
            trace.add(it, fX, X, event=TIGHTEN, monitor=monitor, eps_R=eps_R)
            if eps_R < tcfg.eps_R_min:
                status = "eps_R_floor"
            continue
        step_ell = tuple(min(l, h) for l, h in zip(ell, headroom))
        tn = res.riem.norm()
        gn = res.grad.norm()
        N = None
        if all(step_ell):
            N = geometry.normal_increase_direction(X, res.grad, step_ell, choice)
        nn = float(np.linalg.norm(N.core)) if N is not None else 0.0
        increase = N is not None and nn > 0 and nn >= tcfg.eps_1 * tn
        if tcfg.variant == RESTARTING:
            increase = increase and tcfg.eps_2 * gn <= tn
        if increase:
            try:
                Xn, rank, s, bt = rank_increase(X, f, step_ell, choice, cfg, fX, N=N)
            except RankIncreaseIneffective:
                Xn = None
            # an increase whose new directions are already below the deficiency
            # threshold would be undone by the next round; treat it as rejected
            if Xn is not None and sigma_ratios(Xn).min() <= tcfg.Delta:
                Xn = None
            if Xn is not None:
                X, fX = Xn, float(f(Xn))
                it += 1
                status = checker.check(trace.add(it, fX, X, step=s, backtracks=bt,
                                                 event=RANK_INCREASE, monitor=monitor))
                continue
        if tcfg.variant == RESTARTING and tcfg.eps_2 * gn > tn:
            neg = res.grad.scaled(-1.0)
            step_fn = _restart_step(X, neg, r)
            ls = armijo_backtrack(f, fX, gn * gn, step_fn, initial_step(f, X, neg, cfg, None), cfg)
            if ls.accepted:
                it += 1
                X, fX = reveal_rank(ls.candidate), ls.f_candidate
                trace.restarts += 1
                status = checker.check(trace.add(it, fX, X, step=ls.s, backtracks=ls.backtracks,
                                                 event=RESTART, monitor=monitor))
                continue
        if res.status == BUDGET_STATUS:
            continue
        eps_R = _tighten(eps_R, tcfg)
        trace.add(it, fX, X, event=TIGHTEN, monitor=monitor, eps_R=eps_R)
        if eps_R < tcfg.eps_R_min:
            status = "eps_R_floor"
    trace.status = status
    return X, trace


def _recover_decrease(X, f, fX, tcfg: TramConfig, cfg: LineSearchConfig):
    """Truncated point improved by RGD until it is no worse than ``X``, or None.

    Used when the monotone truncation search cannot lower the rank: the
    truncation at the threshold rank is followed by at most
    ``recovery_iters`` fixed-rank steps, and the composite move is accepted
    only if the objective does not increase.
    """
    if tcfg.recovery_iters == 0:
        return None
    svals = [core_singular_values(X, k) for k in range(X.ndim)]
    rhat = tuple(max(1, int(np.count_nonzero(s >= tcfg.Delta * s[0]))) if s[0] > 0 else 1
                 for s in svals)
    if rhat == X.rank:
        return None
    Y = hosvd(X, rhat)
    fY = float(f(Y))
    prev_s = None
    for _ in range(tcfg.recovery_iters):
        if fY <= fX:
            return Y
        grad = f.euclid_grad(Y)
        T = geometry.proj_tangent_space(Y, grad.scaled(-1.0))
        tn = T.norm()
        if tn == 0.0:
            return None
        V = T.as_cone_element()
        ls = armijo_backtrack(f, fY, tn * tn, lambda s: retract_hosvd(Y, V, s, Y.rank),
                              initial_step(f, Y, V, cfg, prev_s), cfg)
        if not ls.accepted:
            return None
        Y, fY, prev_s = ls.candidate, ls.f_candidate, ls.s
    return Y if fY <= fX else None


def _tighten(eps_R: float, tcfg: TramConfig) -> float:
    return eps_R * tcfg.rho_R
