"""Line-search methods on the Tucker variety: GRAP and its retraction-free variant."""

from __future__ import annotations

import numpy as np

from .. import geometry, tenalg, tucker
from ..tucker import TuckerTensor, hosvd, retract_hosvd, reveal_rank
from .common import (RESTART, LineSearchConfig, SolverTrace, StopChecker, StoppingRules,
                     armijo_backtrack, initial_step)

DEFAULT_OMEGA = 0.01


def _prepare(X0: TuckerTensor, r) -> tuple:
    r = tuple(int(x) for x in r)
    if len(r) != X0.ndim or any(q > b for q, b in zip(X0.rank, r)):
        raise ValueError(f"initial rank {X0.rank} is not below the bound {r}")
    return reveal_rank(X0), r


def _restart_step(X: TuckerTensor, neg_grad, r):
    """``s -> P^HO(X - s grad f)``, evaluated densely."""
    Xd = X.to_dense()
    Gd = neg_grad.to_dense()
    return lambda s: hosvd(Xd + s * Gd, r)


def grap_solve(f, X0: TuckerTensor, r, omega: float = DEFAULT_OMEGA,
               cfg: LineSearchConfig = LineSearchConfig(), stops: StoppingRules = StoppingRules(),
               choice: geometry.ConeBasisChoice = geometry.DEFAULT_CHOICE, monitor=None):
    """Gradient-related approximate projection method.

    Each step searches along ``g = P~(-grad f)`` and retracts by HOSVD.  If
    ``||g|| < omega * m`` the step restarts along ``-grad f``, where ``m`` is
    ``||g||`` itself at points of full rank ``r`` (so no restart occurs there)
    and the ambient gradient norm at rank-deficient points.
    Returns ``(X, trace)``.
    """
    if not 0 < omega <= 1:
        raise ValueError("omega must lie in (0, 1]")
    X, r = _prepare(X0, r)
    trace = SolverTrace()
    checker = StopChecker(stops, trace)
    fX = float(f(X))
    status = checker.check(trace.add(0, fX, X, monitor=monitor))
    prev_s = None
    it = 0
    while status is None:
        grad = f.euclid_grad(X)
        gn = grad.norm()
        if gn == 0.0:
            status = "stationary"
            break
        neg = grad.scaled(-1.0)
        g = geometry.approx_proj_cone(X, neg, r, choice)
        g_norm = g.norm()
        measure = g_norm if X.rank == r else gn
        restart = g_norm < omega * measure
        if not restart and g_norm == 0.0:
            status = "stationary"
            break
        if restart:
            direction, slope, step_fn = neg, gn * gn, _restart_step(X, neg, r)
        else:
            direction, slope = g, g_norm * g_norm
            step_fn = (lambda g_: lambda s: retract_hosvd(X, g_, s, r))(g)
        s0 = initial_step(f, X, direction, cfg, prev_s)
        before = tucker.HOSVD_CALLS[0]
        ls = armijo_backtrack(f, fX, slope, step_fn, s0, cfg)
        if not ls.accepted:
            status = "line_search_floor"
            break
        it += 1
        if restart:
            trace.restarts += 1
        else:
            trace.hosvd_truncations += tucker.HOSVD_CALLS[0] - before
        X, fX, prev_s = ls.candidate, ls.f_candidate, ls.s
        rec = trace.add(it, fX, X, step=ls.s, backtracks=ls.backtracks,
                        event=RESTART if restart else None, monitor=monitor)
        status = checker.check(rec)
    trace.status = status
    return X, trace


def _block_step(X: TuckerTensor, block: geometry.TangentConeElement, j: int):
    """``s -> X + s V_j`` for a single partial-projection block, kept in Tucker form exactly."""
    if j == 0:
        widths = block.C.shape
        base = np.zeros(widths)
        base[tuple(slice(0, q) for q in X.rank)] = X.core
        S = tuple(block.Ss())
        return lambda s: reveal_rank(TuckerTensor(base + s * block.C, S))
    k = j - 1
    U, Y = X.factors[k], block.Y[k]

    def step(s):
        Q, R = np.linalg.qr(U + s * Y)
        factors = list(X.factors)
        factors[k] = Q
        return TuckerTensor(tenalg.mode_product(X.core, k, R), tuple(factors))
    return step


def rfgrap_solve(f, X0: TuckerTensor, r, omega: float = DEFAULT_OMEGA,
                 cfg: LineSearchConfig = LineSearchConfig(), stops: StoppingRules = StoppingRules(),
                 choice: geometry.ConeBasisChoice = geometry.DEFAULT_CHOICE, monitor=None):
    """Retraction-free variant: ``X + s P^(-grad f)`` with the largest partial projection.

    Accepted non-restart steps never call HOSVD; ``trace.hosvd_truncations``
    counts any that would.  Restarts (angle condition violated) use the
    HOSVD of the dense antigradient step.
    """
    if not 0 < omega <= 1:
        raise ValueError("omega must lie in (0, 1]")
    X, r = _prepare(X0, r)
    trace = SolverTrace()
    checker = StopChecker(stops, trace)
    fX = float(f(X))
    status = checker.check(trace.add(0, fX, X, monitor=monitor))
    prev_s = None
    it = 0
    while status is None:
        grad = f.euclid_grad(X)
        gn = grad.norm()
        if gn == 0.0:
            status = "stationary"
            break
        neg = grad.scaled(-1.0)
        blocks = geometry.partial_blocks(X, neg, r, choice)
        norms = np.array([b.norm() for b in blocks])
        j = int(np.argmax(norms))
        g, g_norm = blocks[j], float(norms[j])
        measure = float(np.linalg.norm(norms)) if X.rank == r else gn
        restart = g_norm < omega * measure
        if not restart and g_norm == 0.0:
            status = "stationary"
            break
        if restart:
            direction, slope, step_fn = neg, gn * gn, _restart_step(X, neg, r)
        else:
            direction, slope, step_fn = g, g_norm * g_norm, _block_step(X, g, j)
        s0 = initial_step(f, X, direction, cfg, prev_s)
        before = tucker.HOSVD_CALLS[0]
        ls = armijo_backtrack(f, fX, slope, step_fn, s0, cfg)
        if not ls.accepted:
            status = "line_search_floor"
            break
        it += 1
        if restart:
            trace.restarts += 1
        else:
            trace.hosvd_truncations += tucker.HOSVD_CALLS[0] - before
            trace.accepted_block_steps += 1
        X, fX, prev_s = ls.candidate, ls.f_candidate, ls.s
        rec = trace.add(it, fX, X, step=ls.s, backtracks=ls.backtracks,
                        event=RESTART if restart else None, monitor=monitor, block=j)
        status = checker.check(rec)
    trace.status = status
    return X, trace
