"""Command-line front end: synthetic problems, completion from sample files, the
apocalypse example, and trace reports.

Random numbers come from numpy's ``Philox`` bit generator (a counter-based
4x64 generator, stable across numpy versions and platforms) wrapped in a
``Generator``; normal variates use numpy's ziggurat transform.  A single
``--seed`` is split with ``SeedSequence.spawn`` into independent streams for
the ground truth, the sample sets and the initial guess.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__, solvers, tenalg
from .objectives import SampleSet, completion_objective, dense_lsq_objective, metrics
from .solvers.common import LineSearchConfig, Monitor, StoppingRules, stationarity_snapshot
from .tucker import TuckerTensor, random_tucker

TASKS = ("synthetic", "complete", "apocalypse")
SOLVERS = ("grap", "rfgrap", "rgd", "tram")
TRACE_FORMAT = "tuckervar-trace/1"


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _streams(seed: int) -> list:
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def gen_synthetic(shape, true_rank, seed) -> tuple:
    """Random Tucker tensor with Gaussian core and QR-orthonormalized Gaussian factors."""
    rng = seed if isinstance(seed, np.random.Generator) else _streams(seed)[0]
    X = random_tucker(shape, true_rank, rng)
    return X, X.to_dense()


def gen_samples(shape, p: float, seed) -> tuple:
    """Disjoint training and test index sets, each of size ``round(p * prod(shape))``."""
    shape = tuple(int(n) for n in shape)
    total = math.prod(shape)
    if not 0 < p <= 1:
        raise ValueError("sampling rate must lie in (0, 1]")
    if 2 * p > 1:
        raise ValueError(f"p={p} leaves no room for a disjoint test set of the same size")
    m = round(p * total)
    if m < 1:
        raise ValueError(f"p={p} selects no entries of a tensor with {total} entries")
    rng = seed if isinstance(seed, np.random.Generator) else _streams(seed)[1]
    lin = rng.choice(total, size=2 * m, replace=False)
    train = np.stack(np.unravel_index(np.sort(lin[:m]), shape), axis=1)
    test = np.stack(np.unravel_index(np.sort(lin[m:]), shape), axis=1)
    return train, test


# ---------------------------------------------------------------- sample files

def save_samples(path, S: SampleSet) -> None:
    lines = ["# shape " + " ".join(str(n) for n in S.shape)]
    for idx, v in zip(S.indices, S.values):
        lines.append(" ".join(str(int(i) + 1) for i in idx) + " " + format(float(v), ".17g"))
    Path(path).write_text("\n".join(lines) + "\n")


def load_samples(path, shape=None) -> SampleSet:
    """Parse the sample text format; errors name the offending line."""
    path = Path(path)
    file_shape = None
    rows, vals = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                parts = text[1:].split()
                if parts and parts[0] == "shape":
                    if file_shape is not None or rows:
                        raise ValueError(f"{path}:{lineno}: unexpected shape header")
                    try:
                        file_shape = tuple(int(x) for x in parts[1:])
                    except ValueError:
                        raise ValueError(f"{path}:{lineno}: malformed shape header") from None
                    if not file_shape or min(file_shape) < 1:
                        raise ValueError(f"{path}:{lineno}: malformed shape header")
                continue
            if file_shape is None:
                raise ValueError(f"{path}:{lineno}: sample before the '# shape' header")
            parts = text.split()
            d = len(file_shape)
            if len(parts) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d} indices and a value")
            try:
                idx = [int(x) - 1 for x in parts[:d]]
                v = float(parts[d])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed sample") from None
            if any(not 0 <= i < n for i, n in zip(idx, file_shape)):
                raise ValueError(f"{path}:{lineno}: index out of range for shape {file_shape}")
            if not math.isfinite(v):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            rows.append(idx)
            vals.append(v)
    if file_shape is None:
        raise ValueError(f"{path}: missing '# shape' header")
    if shape is not None and tuple(shape) != file_shape:
        raise ValueError(f"{path}: shape {file_shape} does not match expected {tuple(shape)}")
    idx = np.array(rows, dtype=np.int64).reshape(-1, len(file_shape))
    return SampleSet(file_shape, idx, np.array(vals, dtype=np.float64))


# ---------------------------------------------------------------- traces

def save_trace(path, header: dict, records: list, summary: dict) -> None:
    """JSON lines: a header, one record per iteration, then the summary."""
    out = [json.dumps({"kind": "header", **_clean(header)}, sort_keys=True)]
    out += [json.dumps({"kind": "record", **_clean(r)}, sort_keys=True) for r in records]
    out.append(json.dumps({"kind": "summary", **_clean(summary)}, sort_keys=True))
    Path(path).write_text("\n".join(out) + "\n")


def load_trace(path) -> tuple:
    header, records, summary = None, [], None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: {exc.msg}") from None
        kind = obj.pop("kind", None)
        if kind == "header":
            header = obj
        elif kind == "record":
            records.append(obj)
        elif kind == "summary":
            summary = obj
        else:
            raise ValueError(f"{path}:{lineno}: unknown record kind {kind!r}")
    if header is None:
        raise ValueError(f"{path}: missing header")
    its = [r["iter"] for r in records]
    if its != sorted(its):
        raise ValueError(f"{path}: records out of iteration order")
    return header, records, summary


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentConfig:
    task: str = "synthetic"
    shape: tuple | None = None
    true_rank: tuple = (4, 4, 4)
    rank: tuple = (4, 4, 4)
    init_rank: tuple | None = None
    p: float = 0.3
    samples_in: str | None = None
    test_in: str | None = None
    solver: str = "grap"
    seed: int = 0
    # line search
    rho: float = 0.5
    armijo_a: float = 1e-4
    s_min: float = 1e-10
    s_init: object = "exact"
    # stopping rules
    train_tol: float = 1e-12
    rel_change_tol: float = 1e-8
    max_iters: int = 1000
    time_budget: float = math.inf
    # GRAP / TRAM
    omega: float = solvers.DEFAULT_OMEGA
    eps_R0: float = 0.1
    rho_R: float = 0.5
    Delta: float = 0.01
    rho_1: float = 0.5
    ell: tuple | None = None
    eps_1: float = 0.01
    eps_2: float = 0.5
    inner_max_iters: int = 5
    variant: str = solvers.PRACTICAL
    # apocalypse
    n: int = 10
    alpha: float = 0.3
    # outputs
    trace_out: str | None = None
    samples_out: str | None = None
    test_out: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.task == "apocalypse":
            return
        self.rank = tuple(int(x) for x in self.rank)
        self.init_rank = self.rank if self.init_rank is None else tuple(int(x) for x in self.init_rank)
        if self.ell is not None:
            self.ell = tuple(int(x) for x in self.ell)
        if self.task == "synthetic":
            self.shape = (60, 60, 60) if self.shape is None else self.shape
            self.true_rank = tuple(int(x) for x in self.true_rank)
            if not 0 < self.p <= 1:
                raise ValueError("sampling rate must lie in (0, 1]")
        elif self.samples_in is None:
            raise ValueError("the complete task needs --samples-in")
        if self.shape is not None:
            self.shape = tuple(int(n) for n in self.shape)
            self.check_shape(self.shape)

    def check_shape(self, shape) -> None:
        if not (len(self.rank) == len(self.init_rank) == len(shape)):
            raise ValueError("shape, rank and initial rank must have the same length")
        if any(not 1 <= q <= b <= n for q, b, n in zip(self.init_rank, self.rank, shape)):
            raise ValueError(f"need 1 <= init_rank <= rank <= shape, got {self.init_rank}, "
                             f"{self.rank}, {tuple(shape)}")
        if self.task == "synthetic" and (len(self.true_rank) != len(shape) or any(
                not 1 <= q <= n for q, n in zip(self.true_rank, shape))):
            raise ValueError(f"true rank {self.true_rank} is incompatible with shape {tuple(shape)}")


def _line_search(cfg: ExperimentConfig) -> LineSearchConfig:
    return LineSearchConfig(rho=cfg.rho, a=cfg.armijo_a, s_min=cfg.s_min, s_init=cfg.s_init)


def _stops(cfg: ExperimentConfig) -> StoppingRules:
    return StoppingRules(cfg.train_tol, cfg.rel_change_tol, cfg.max_iters, cfg.time_budget)


def _solve(cfg: ExperimentConfig, f, X0, monitor):
    ls, stops = _line_search(cfg), _stops(cfg)
    if cfg.solver == "grap":
        return solvers.grap_solve(f, X0, cfg.rank, cfg.omega, ls, stops, monitor=monitor)
    if cfg.solver == "rfgrap":
        return solvers.rfgrap_solve(f, X0, cfg.rank, cfg.omega, ls, stops, monitor=monitor)
    if cfg.solver == "rgd":
        return solvers.rgd_solve(f, X0, ls, stops, monitor=monitor)
    tcfg = solvers.TramConfig(omega=cfg.omega, eps_R0=cfg.eps_R0, rho_R=cfg.rho_R, Delta=cfg.Delta,
                              rho_1=cfg.rho_1, ell=cfg.ell, eps_1=cfg.eps_1, eps_2=cfg.eps_2,
                              inner_max_iters=cfg.inner_max_iters, variant=cfg.variant)
    return solvers.tram_solve(f, X0, cfg.rank, tcfg, ls, stops, monitor=monitor)


def _header(cfg: ExperimentConfig) -> dict:
    return {"format": TRACE_FORMAT, "config": asdict(cfg), "seed": cfg.seed,
            "versions": {"tuckervar": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "rng": "numpy Philox via SeedSequence.spawn(3)"}


def _summary(X: TuckerTensor, trace, wall: float, fresh: dict) -> dict:
    events = Counter(trace.events())
    return {"status": trace.status, "final_rank": list(X.rank), "iterations": trace.iterations,
            "wall_time": wall, "events": dict(sorted(events.items())), "restarts": trace.restarts,
            "hosvd_truncations": trace.hosvd_truncations, **fresh}


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one configured experiment; returns header, records, summary and the final iterate."""
    if cfg.task == "apocalypse":
        return _run_apocalypse(cfg)
    truth_rng, sample_rng, init_rng = _streams(cfg.seed)
    A = None
    if cfg.task == "synthetic":
        _, A = gen_synthetic(cfg.shape, cfg.true_rank, truth_rng)
        tr, te = gen_samples(cfg.shape, cfg.p, sample_rng)
        train, test = SampleSet.from_dense(A, tr), SampleSet.from_dense(A, te)
    else:
        train = load_samples(cfg.samples_in, cfg.shape)
        test = load_samples(cfg.test_in, train.shape) if cfg.test_in else None
        cfg.check_shape(train.shape)
    if cfg.samples_out:
        save_samples(cfg.samples_out, train)
    if cfg.test_out and test is not None:
        save_samples(cfg.test_out, test)
    f = completion_objective(train)
    monitor = Monitor(train, test)
    X0 = random_tucker(train.shape, cfg.init_rank, init_rng)
    t0 = time.perf_counter()
    X, trace = _solve(cfg, f, X0, monitor)
    wall = time.perf_counter() - t0
    summary = _summary(X, trace, wall, _clean(metrics(X, train, test, A)))
    header = _header(cfg)
    if cfg.trace_out:
        save_trace(cfg.trace_out, header, trace.records, summary)
    return {"header": header, "records": trace.records, "summary": summary, "X": X}


def apocalypse_instance(n: int) -> tuple:
    """Target ``e1^3 + e3^3``, start ``e1^3 + e2^3`` and limit ``e1^3`` in ``R^{n x n x n}``."""
    if n < 3:
        raise ValueError("the apocalypse instance needs n >= 3")
    e = [tenalg.unit(n, i) for i in range(3)]
    cube = [tenalg.outer_rank1(v, v, v) for v in e]
    E = np.eye(n)[:, :2]
    X0 = TuckerTensor(tenalg.outer_rank1(tenalg.unit(2, 0), tenalg.unit(2, 0), tenalg.unit(2, 0))
                      + tenalg.outer_rank1(tenalg.unit(2, 1), tenalg.unit(2, 1), tenalg.unit(2, 1)),
                      (E, E, E))
    return cube[0] + cube[2], X0, cube[0]


def _run_apocalypse(cfg: ExperimentConfig) -> dict:
    """GRAP with a constant stepsize ``alpha`` on ``1/2 ||X - A||^2``.

    The iterates are ``e1^3 + (1 - alpha)^t e2^3``; they approach ``e1^3``,
    where the ambient gradient has norm 1 although the cone measures vanish.
    """
    if not 0 < cfg.alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    A, X0, limit = apocalypse_instance(int(cfg.n))
    r = (2, 2, 2)
    f = dense_lsq_objective(A, 0.5)
    ls = LineSearchConfig(rho=cfg.rho, a=cfg.armijo_a, s_min=cfg.s_min, s_init=cfg.alpha)
    stops = StoppingRules(0.0, 0.0, cfg.max_iters, cfg.time_budget)
    t0 = time.perf_counter()
    X, trace = solvers.grap_solve(f, X0, r, cfg.omega, ls, stops)
    wall = time.perf_counter() - t0
    t = trace.iterations
    e2 = np.zeros_like(A)
    e2[1, 1, 1] = 1.0
    closed = limit + (1.0 - cfg.alpha) ** t * e2
    snap = stationarity_snapshot(f, X, r)
    fresh = {"closed_form_error": float(np.linalg.norm(X.to_dense() - closed)),
             "ambient_grad_norm_at_limit": float(np.linalg.norm(limit - A)), **snap.as_dict()}
    summary = _summary(X, trace, wall, fresh)
    header = _header(cfg)
    if cfg.trace_out:
        save_trace(cfg.trace_out, header, trace.records, summary)
    return {"header": header, "records": trace.records, "summary": summary, "X": X}


# ---------------------------------------------------------------- command line

def _ints(text: str) -> tuple:
    try:
        out = tuple(int(x) for x in text.replace("x", ",").split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return out


def _s_init(text: str):
    if text in ("exact", "previous"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"s-init must be exact, previous or a number, got {text!r}") from None


def _solver_flags(p: argparse.ArgumentParser) -> None:
    d = ExperimentConfig
    p.add_argument("--solver", choices=SOLVERS, default=d.solver)
    p.add_argument("--rank", type=_ints, required=True, help="rank bound r, e.g. 4,4,4")
    p.add_argument("--init-rank", type=_ints, default=None, help="rank of the random initial guess (default r)")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--rho", type=float, default=d.rho, help="backtracking factor")
    p.add_argument("--armijo-a", type=float, default=d.armijo_a)
    p.add_argument("--s-min", type=float, default=d.s_min)
    p.add_argument("--s-init", type=_s_init, default=d.s_init)
    p.add_argument("--train-tol", type=float, default=d.train_tol)
    p.add_argument("--rel-change-tol", type=float, default=d.rel_change_tol)
    p.add_argument("--max-iters", type=int, default=d.max_iters)
    p.add_argument("--time-budget", type=float, default=d.time_budget, help="seconds")
    p.add_argument("--omega", type=float, default=d.omega)
    p.add_argument("--eps-R0", type=float, default=d.eps_R0)
    p.add_argument("--rho-R", type=float, default=d.rho_R)
    p.add_argument("--Delta", type=float, default=d.Delta)
    p.add_argument("--rho-1", type=float, default=d.rho_1)
    p.add_argument("--ell", type=_ints, default=None)
    p.add_argument("--eps-1", type=float, default=d.eps_1)
    p.add_argument("--eps-2", type=float, default=d.eps_2)
    p.add_argument("--inner-max-iters", type=int, default=d.inner_max_iters)
    p.add_argument("--variant", choices=(solvers.PRACTICAL, solvers.RESTARTING), default=d.variant)
    p.add_argument("--trace-out", default=None, help="write the JSON-lines trace here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tuckervar", description="Low-rank Tucker completion on Tucker varieties.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthetic", help="complete a random low-rank tensor from random samples")
    p.add_argument("--shape", type=_ints, default=(60, 60, 60))
    p.add_argument("--true-rank", type=_ints, required=True)
    p.add_argument("--p", type=float, default=ExperimentConfig.p, help="sampling rate of Omega and Gamma")
    p.add_argument("--samples-out", default=None, help="write the training samples here")
    p.add_argument("--test-out", default=None, help="write the test samples here")
    _solver_flags(p)

    p = sub.add_parser("complete", help="complete a tensor from a sample file")
    p.add_argument("--samples-in", required=True)
    p.add_argument("--test-in", default=None)
    p.add_argument("--shape", type=_ints, default=None, help="expected shape (checked against the file)")
    _solver_flags(p)

    p = sub.add_parser("apocalypse", help="GRAP on the apocalypse example with a constant stepsize")
    p.add_argument("--n", type=int, default=ExperimentConfig.n)
    p.add_argument("--alpha", type=float, default=ExperimentConfig.alpha)
    p.add_argument("--max-iters", type=int, default=30)
    p.add_argument("--trace-out", default=None)

    p = sub.add_parser("report", help="summarize a trace file")
    p.add_argument("trace")
    return ap


def _config(ns: argparse.Namespace) -> ExperimentConfig:
    keys = {f for f in ExperimentConfig.__dataclass_fields__}
    kw = {k: v for k, v in vars(ns).items() if k in keys}
    return ExperimentConfig(task=ns.command, **kw)


def report(path) -> dict:
    header, records, summary = load_trace(path)
    out = {"config": header.get("config"), "records": len(records)}
    if records:
        last = records[-1]
        out["final"] = {k: last[k] for k in ("iter", "f", "rank", "train_error", "test_error") if k in last}
    out["summary"] = summary
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            out = report(args.trace)
        else:
            out = run_experiment(_config(args))["summary"]
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"tuckervar: error: {exc}", file=sys.stderr)
        return 1
    json.dump(_clean(out), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
