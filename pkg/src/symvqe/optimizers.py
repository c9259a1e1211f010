"""Budgeted optimizers: DIRECT, Nelder-Mead, finite-difference L-BFGS, multistart.

Every driver counts each objective call, records it in the trace and never
exceeds its evaluation budget.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize


class StochasticObjectiveError(ValueError):
    """Gradient-based driver called on a noisy objective."""


class _BudgetExhausted(Exception):
    pass


@dataclass
class ObjectiveFunction:
    """Counted objective returning ``(value, std_error)``.

    ``fn`` may return a bare float (treated as exact) or a pair.
    """

    arity: int
    fn: Callable
    stochastic: bool = False
    n_calls: int = 0

    def __call__(self, x) -> tuple[float, float]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.arity,):
            raise ValueError(f"expected {self.arity} parameters, got shape {x.shape}")
        self.n_calls += 1
        out = self.fn(x)
        if isinstance(out, tuple):
            value, std = out
        else:
            value, std = out, 0.0
        return float(value), float(std)


@dataclass(frozen=True)
class Bounds:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("bounds need lo < hi in every dimension")

    @classmethod
    def box(cls, dim: int, lo: float, hi: float) -> Bounds:
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def scale(self, u) -> np.ndarray:
        lo, hi = np.array(self.lo), np.array(self.hi)
        return lo + np.asarray(u) * (hi - lo)

    def sample(self, rng) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)


@dataclass(frozen=True)
class TraceEntry:
    index: int
    value: float
    std_error: float
    params: tuple[float, ...]


@dataclass
class OptimizerResult:
    best_params: np.ndarray
    best_value: float
    n_evaluations: int
    trace: list[TraceEntry] = field(default_factory=list)
    message: str = ""

    def evaluations_to(self, threshold: float) -> int | None:
        """1-based count of calls until a value first reaches ``threshold``."""
        for k, entry in enumerate(self.trace):
            if entry.value <= threshold:
                return k + 1
        return None

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        dim = len(self.trace[0].params) if self.trace else 0
        writer.writerow(["eval_index", "value", "std_error"] + [f"p{i}" for i in range(dim)])
        for e in self.trace:
            writer.writerow([e.index, f"{e.value:.12g}", f"{e.std_error:.12g}"] + [f"{p:.12g}" for p in e.params])
        return buf.getvalue()


class _Recorder:
    """Budget-enforcing wrapper that logs every call."""

    def __init__(self, f: ObjectiveFunction, budget: int):
        self.f = f
        self.budget = budget
        self.trace: list[TraceEntry] = []
        self.best_x = None
        self.best = np.inf

    @property
    def remaining(self) -> int:
        return self.budget - len(self.trace)

    def __call__(self, x) -> float:
        if len(self.trace) >= self.budget:
            raise _BudgetExhausted
        x = np.array(x, dtype=float)
        value, std = self.f(x)
        self.trace.append(TraceEntry(len(self.trace), value, std, tuple(float(v) for v in x)))
        if value < self.best:
            self.best, self.best_x = value, x
        return value

    def result(self, message: str) -> OptimizerResult:
        return OptimizerResult(self.best_x, float(self.best), len(self.trace), self.trace, message)


# ---------------------------------------------------------------------------
# DIRECT


def _potentially_optimal(sizes: np.ndarray, values: np.ndarray, eps: float) -> list[int]:
    """Rectangles on the lower-right convex hull of (size, value)."""
    f_min = values.min()
    chosen = []
    uniq = np.unique(sizes)
    # per-size minima are the only hull candidates
    best_at = {d: values[sizes == d].min() for d in uniq}
    for d in uniq:
        fj = best_at[d]
        smaller = [(dd, best_at[dd]) for dd in uniq if dd < d]
        larger = [(dd, best_at[dd]) for dd in uniq if dd > d]
        k_low = max([(fj - fi) / (d - di) for di, fi in smaller], default=0.0)
        k_high = min([(fi - fj) / (di - d) for di, fi in larger], default=np.inf)
        if k_low > k_high:
            continue
        if np.isfinite(k_high) and fj - k_high * d > f_min - eps * abs(f_min):
            continue
        chosen.extend(int(i) for i in np.flatnonzero((sizes == d) & (values == fj)))
    return chosen


def direct_minimize(f: ObjectiveFunction, bounds: Bounds, budget: int = 300, eps: float = 1e-4) -> OptimizerResult:
    """DIviding RECTangles global search over a box.

    Works on the unit cube; each round trisects the potentially-optimal
    rectangles along their longest sides, best directions first. A division
    that would overrun the budget ends the search.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rec = _Recorder(f, budget)
    n = bounds.dim

    def g(u):
        return rec(bounds.scale(u))

    centers = [np.full(n, 0.5)]
    levels = [np.zeros(n, dtype=int)]  # side length = 3**-level
    values = [g(centers[0])]
    while True:
        # half-diagonal; summing sorted terms keeps equal shapes bit-identical
        sizes = np.array([0.5 * np.sqrt(np.sum(np.sort(9.0 ** -lv))) for lv in levels])
        selected = _potentially_optimal(sizes, np.array(values), eps)
        # largest rectangles first, index order breaks ties
        selected.sort(key=lambda i: (-sizes[i], i))
        stop = not selected
        for idx in selected:
            lv = levels[idx]
            dims = np.flatnonzero(lv == lv.min())
            if 2 * len(dims) > rec.remaining:
                stop = True
                break
            delta = 3.0 ** -(lv.min() + 1)
            probes = {}
            for d in dims:
                for sign in (1, -1):
                    c = centers[idx].copy()
                    c[d] += sign * delta
                    probes[(d, sign)] = (c, g(c))
            order = sorted(dims, key=lambda d: min(probes[(d, 1)][1], probes[(d, -1)][1]))
            new_lv = lv.copy()
            for d in order:
                new_lv[d] += 1
                for sign in (1, -1):
                    c, v = probes[(d, sign)]
                    centers.append(c)
                    levels.append(new_lv.copy())
                    values.append(v)
            levels[idx] = new_lv
        if stop:
            break
    return rec.result("budget exhausted" if rec.remaining == 0 else "next division would exceed budget")


# ---------------------------------------------------------------------------
# Nelder-Mead


def nelder_mead_minimize(
    f: ObjectiveFunction, x0, step: float = 0.5, budget: int = 400, tol: float = 1e-10
) -> OptimizerResult:
    """Downhill simplex with standard coefficients (1, 2, 0.5, 0.5)."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if budget < n + 1:
        raise ValueError(f"budget must be >= arity + 1 = {n + 1}")
    rec = _Recorder(f, budget)
    simplex = [x0] + [x0 + step * np.eye(n)[i] for i in range(n)]
    fvals = [rec(x) for x in simplex]
    message = "budget exhausted"
    try:
        while True:
            order = np.argsort(fvals, kind="stable")
            simplex = [simplex[i] for i in order]
            fvals = [fvals[i] for i in order]
            if fvals[-1] - fvals[0] < tol:
                message = "simplex value spread below tol"
                break
            centroid = np.mean(simplex[:-1], axis=0)
            worst = simplex[-1]
            xr = centroid + (centroid - worst)
            fr = rec(xr)
            if fr < fvals[0]:
                xe = centroid + 2 * (centroid - worst)
                fe = rec(xe)
                simplex[-1], fvals[-1] = (xe, fe) if fe < fr else (xr, fr)
            elif fr < fvals[-2]:
                simplex[-1], fvals[-1] = xr, fr
            else:
                if fr < fvals[-1]:
                    xc = centroid + 0.5 * (xr - centroid)
                else:
                    xc = centroid + 0.5 * (worst - centroid)
                fc = rec(xc)
                if fc < min(fr, fvals[-1]):
                    simplex[-1], fvals[-1] = xc, fc
                else:
                    for i in range(1, n + 1):
                        simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                        fvals[i] = rec(simplex[i])
    except _BudgetExhausted:
        pass
    return rec.result(message)


# ---------------------------------------------------------------------------
# L-BFGS with finite differences


def lbfgs_fd_minimize(
    f: ObjectiveFunction, x0, budget: int = 2000, grad_step: float = 1e-6, tol: float = 1e-12
) -> OptimizerResult:
    """L-BFGS-B driven by counted central-difference gradients.

    Each gradient costs ``2 * arity`` calls (the two points per coordinate);
    only exact objectives are accepted.
    """
    if f.stochastic:
        raise StochasticObjectiveError("finite-difference L-BFGS needs an exact objective")
    x0 = np.asarray(x0, dtype=float)
    rec = _Recorder(f, budget)

    def fun_and_grad(x):
        value = rec(x)
        if rec.trace[-1].std_error > 0:
            raise StochasticObjectiveError("objective reported a nonzero std_error")
        grad = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = grad_step
            grad[i] = (rec(x + e) - rec(x - e)) / (2 * grad_step)
        return value, grad

    try:
        out = minimize(fun_and_grad, x0, jac=True, method="L-BFGS-B", options={"maxiter": 10**6, "maxfun": 10**6, "gtol": tol, "ftol": tol})
        message = str(out.message)
    except _BudgetExhausted:
        message = "budget exhausted"
    return rec.result(message)


# ---------------------------------------------------------------------------
# Multistart


def multistart(
    run: Callable[[np.ndarray], OptimizerResult],
    n_starts: int,
    seed,
    bounds: Bounds,
    x0=None,
    perturbation: float | None = None,
    target: float | None = None,
) -> OptimizerResult:
    """Repeat ``run(start)`` from random starts and keep the lowest result.

    Starts are uniform in ``bounds``, or ``x0`` plus uniform noise of width
    ``perturbation`` when both are given. With ``target`` set, remaining
    starts are skipped once a run reaches it. Traces are concatenated.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    rng = np.random.default_rng(seed)
    best: OptimizerResult | None = None
    trace: list[TraceEntry] = []
    for _ in range(n_starts):
        if x0 is not None and perturbation is not None:
            start = np.asarray(x0, dtype=float) + rng.uniform(-perturbation, perturbation, bounds.dim)
        else:
            start = bounds.sample(rng)
        res = run(start)
        offset = len(trace)
        trace.extend(TraceEntry(offset + e.index, e.value, e.std_error, e.params) for e in res.trace)
        if best is None or res.best_value < best.best_value:
            best = res
        if target is not None and best.best_value <= target:
            break
    return OptimizerResult(best.best_params, best.best_value, len(trace), trace, best.message)
