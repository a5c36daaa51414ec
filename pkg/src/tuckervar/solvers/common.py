"""Line search, stopping rules, traces and stationarity diagnostics shared by all solvers."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .. import geometry
from ..objectives import SampleSet, sample_tucker
from ..tucker import TuckerTensor

EXACT = "exact"
PREVIOUS = "previous"

# trace events
RESTART = "Restart"
RANK_DECREASE = "RankDecrease"
RANK_INCREASE = "RankIncrease"
TIGHTEN = "TightenEpsR"
DEFICIENT = "DeficiencyDetected"


@dataclass(frozen=True)
class LineSearchConfig:
    """Armijo backtracking parameters.

    ``s_init`` is ``"exact"`` (closed-form quadratic stepsize when the
    objective provides one, else 1), ``"previous"`` (last accepted stepsize
    divided by ``rho``) or a positive number used as a constant initial step.
    """

    rho: float = 0.5
    a: float = 1e-4
    s_min: float = 1e-10
    s_init: object = EXACT

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.a < 1:
            raise ValueError("a must lie in (0, 1)")
        if not self.s_min > 0:
            raise ValueError("s_min must be positive")
        if self.s_init not in (EXACT, PREVIOUS):
            if not (isinstance(self.s_init, (int, float)) and self.s_init > 0):
                raise ValueError(f"invalid s_init {self.s_init!r}")


@dataclass(frozen=True)
class StoppingRules:
    train_tol: float = 1e-12
    rel_change_tol: float = 1e-8
    max_iters: int = 1000
    time_budget_seconds: float = math.inf

    def __post_init__(self):
        if self.max_iters < 0 or self.train_tol < 0 or self.rel_change_tol < 0:
            raise ValueError("stopping thresholds must be nonnegative")
        if not self.time_budget_seconds > 0:
            raise ValueError("time budget must be positive")


class LineSearchResult(NamedTuple):
    s: float
    candidate: object
    f_candidate: float
    backtracks: int
    accepted: bool


def armijo_backtrack(f: Callable, f0: float, slope: float, step_fn: Callable, s0: float,
                     cfg: LineSearchConfig) -> LineSearchResult:
    """Find the first ``s = rho^l s0 > s_min`` with ``f0 - f(step_fn(s)) >= s a slope``.

    ``slope`` is ``<-grad f, g>`` and must be nonnegative.  When the floor is
    reached the last candidate is returned with ``accepted=False``.
    """
    if slope < 0:
        raise ValueError("search direction is not a descent direction")
    if not s0 > 0:
        raise ValueError("initial stepsize must be positive")
    s = float(s0)
    l = 0
    cand, fc = None, math.inf
    while s > cfg.s_min:
        cand = step_fn(s)
        fc = float(f(cand))
        if not math.isfinite(fc):
            raise FloatingPointError(f"objective is not finite at stepsize {s:g}")
        if f0 - fc >= s * cfg.a * slope:
            return LineSearchResult(s, cand, fc, l, True)
        s *= cfg.rho
        l += 1
    return LineSearchResult(s / cfg.rho, cand, fc, l, False)


def initial_step(f, X, direction, cfg: LineSearchConfig, prev: float | None) -> float:
    if cfg.s_init == EXACT:
        fn = getattr(f, "initial_stepsize", None)
        if fn is not None:
            try:
                s0 = fn(X, direction)
            except ValueError:
                s0 = 0.0
            if s0 > cfg.s_min:
                return s0
        return 1.0
    if cfg.s_init == PREVIOUS:
        return 1.0 if prev is None else prev / cfg.rho
    return float(cfg.s_init)


class Monitor:
    """Training/test errors of completion iterates.

    The training error is derived from the objective value
    ``f = 1/2 ||P(X) - P(A)||^2``, so it costs nothing extra.
    """

    def __init__(self, train: SampleSet, test: SampleSet | None = None):
        self.train_norm = float(np.linalg.norm(train.values))
        if self.train_norm == 0:
            raise ValueError("training values are all zero")
        self.test = test if test is not None and len(test) else None
        self.test_norm = float(np.linalg.norm(test.values)) if self.test is not None else None

    def __call__(self, X: TuckerTensor, fval: float) -> dict:
        out = {"train_error": math.sqrt(max(2.0 * fval, 0.0)) / self.train_norm}
        if self.test is not None:
            res = sample_tucker(X, self.test) - self.test.values
            out["test_error"] = float(np.linalg.norm(res)) / self.test_norm
        return out


@dataclass
class SolverTrace:
    """Per-iteration records and run-level counters."""

    records: list = field(default_factory=list)
    status: str = ""
    hosvd_truncations: int = 0
    accepted_block_steps: int = 0
    restarts: int = 0
    t0: float = field(default_factory=time.perf_counter)

    def add(self, it: int, fval: float, X: TuckerTensor, step=None, backtracks=0, event=None,
            monitor=None, **extra) -> dict:
        rec = {"iter": int(it), "f": float(fval), "rank": list(X.rank), "step": step,
               "backtracks": int(backtracks), "time": time.perf_counter() - self.t0,
               "event": event}
        if monitor is not None:
            rec.update(monitor(X, fval))
        rec.update(extra)
        self.records.append(rec)
        return rec

    def f_values(self) -> np.ndarray:
        return np.array([r["f"] for r in self.records])

    def ranks(self) -> list:
        return [tuple(r["rank"]) for r in self.records]

    def events(self) -> list:
        return [r["event"] for r in self.records if r["event"]]

    @property
    def iterations(self) -> int:
        return max((r["iter"] for r in self.records), default=0)

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def to_jsonl(self) -> str:
        return "".join(json.dumps(_jsonable(r), sort_keys=True) + "\n" for r in self.records)


def _jsonable(rec: dict) -> dict:
    out = {}
    for k, v in rec.items():
        if isinstance(v, float) and not math.isfinite(v):
            v = repr(v)
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


class StopChecker:
    """Applies :class:`StoppingRules` to successive records."""

    def __init__(self, rules: StoppingRules, trace: SolverTrace):
        self.rules = rules
        self.trace = trace
        self.prev_err = None

    def check(self, rec: dict) -> str | None:
        err = rec.get("train_error")
        if err is not None:
            if err <= self.rules.train_tol:
                return "train_tol"
            if self.prev_err is not None and self.prev_err > 0:
                if abs(err - self.prev_err) / self.prev_err < self.rules.rel_change_tol:
                    return "rel_change"
            self.prev_err = err
        if rec["iter"] >= self.rules.max_iters:
            return "max_iters"
        if rec["iter"] > 0 and self.trace.elapsed() >= self.rules.time_budget_seconds:
            return "time_budget"
        return None


@dataclass(frozen=True)
class StationaritySnapshot:
    riem_grad_norm: float
    ambient_grad_norm: float
    approx_cone_norm: float

    def as_dict(self) -> dict:
        return asdict(self)


def stationarity_snapshot(f, X: TuckerTensor, r, choice=geometry.DEFAULT_CHOICE) -> StationaritySnapshot:
    """Stationarity measures at ``X``.

    ``riem_grad_norm`` is the tangent-space projection of the antigradient
    at the stored rank; at points below the bound ``r`` the ambient gradient
    norm is the actual certificate (zero iff stationary).
    """
    grad = f.euclid_grad(X)
    neg = grad.scaled(-1.0)
    riem = geometry.proj_tangent_space(X, neg).norm()
    approx = geometry.approx_proj_cone(X, neg, r, choice).norm()
    return StationaritySnapshot(riem, grad.norm(), approx)
