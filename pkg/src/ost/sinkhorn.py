"""Entropy-regularized optimal transport between frames and descriptors.

Given a cost matrix C (T x N) and marginals (mu, nu), the solver finds

    P* = argmin_P  <P, C> - lam * H(P)    s.t.  P 1 = mu,  P^T 1 = nu

with the entropy convention H(P) = -sum_ij P_ij (log P_ij - 1).  The
minimizer has the scaling form P* = diag(a) K diag(b) with K = exp(-C/lam)
and is computed by alternating

    a <- mu / (K b),    b <- nu / (K^T a)

until the mean absolute change of ``a`` between successive sweeps drops
below ``thresh`` or ``max_iter`` sweeps have run.

Numerics: the kernel is built from the cost after subtracting row minima and
then column minima.  Those shifts are absorbed into the diagonal scalings,
so the fixed point is the plan of the original problem, but every row and
column of the kernel keeps an entry equal to 1, which prevents exp underflow
when ``lam`` is pushed far below the cost scale.

``exact_ot_oracle`` solves the unregularized problem with an LP solver on
desk-scale instances and exists purely to cross-check the iterative solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import EmbedMatrix, Marginals, SolverConfig
from .errors import DegenerateInputError, NumericError, SizeError, ValidationError

_UNDERFLOW_FLOOR = 1e-300
_ANNEAL_SWEEPS = 8
ORACLE_MAX_CELLS = 64


@dataclass(frozen=True)
class CostMatrix:
    """T x N matrix of 1 - cosine similarities; entries lie in [0, 2]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"cost matrix must be 2-D and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("cost matrix contains non-finite entries")
        if arr.min() < 0.0 or arr.max() > 2.0:
            raise ValidationError(
                f"cost entries must lie in [0, 2], got range [{arr.min()}, {arr.max()}]"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class SinkhornState:
    """Final scaling vectors and convergence trace of one solve."""

    gibbs_kernel: np.ndarray
    a: np.ndarray
    b: np.ndarray
    iterations_run: int
    final_err: float
    converged: bool


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative T x N matching flow with prescribed marginals."""

    values: np.ndarray
    marginals: Marginals
    lam: float
    state: SinkhornState

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if np.any(arr < 0.0):
            raise ValidationError("transport plan has negative entries")
        total = float(arr.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"transport plan mass {total!r} is not 1 within 1e-9")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def diagnostics(self) -> dict:
        return {
            "iterations": self.state.iterations_run,
            "final_err": self.state.final_err,
            "converged": self.state.converged,
            "lambda": self.lam,
        }


def cosine_matrix(v: np.ndarray, d: np.ndarray, what_rows: str, what_cols: str) -> np.ndarray:
    """All pairwise cosine similarities between rows of ``v`` and ``d``."""
    v_norm = np.linalg.norm(v, axis=1)
    d_norm = np.linalg.norm(d, axis=1)
    for name, norms in ((what_rows, v_norm), (what_cols, d_norm)):
        if np.any(norms == 0.0):
            row = int(np.argmin(norms))
            raise DegenerateInputError(f"zero-norm {name} row {row}")
    sims = (v / v_norm[:, None]) @ (d / d_norm[:, None]).T
    return np.clip(sims, -1.0, 1.0)


def build_cost_matrix(v: EmbedMatrix, d_emb: EmbedMatrix) -> CostMatrix:
    """Cost between every frame and descriptor: 1 - cosine similarity."""
    if v.dim != d_emb.dim:
        raise ValidationError(
            f"dimension mismatch: frames have dim {v.dim}, descriptors {d_emb.dim}"
        )
    sims = cosine_matrix(v.data, d_emb.data, "frame", "descriptor")
    return CostMatrix(np.clip(1.0 - sims, 0.0, 2.0))


def _reduced_cost(c: np.ndarray) -> np.ndarray:
    # Row then column min subtraction; leaves a zero in every row and column
    # so exp(-c'/lam) never underflows to an all-zero row or column.
    reduced = c - c.min(axis=1, keepdims=True)
    reduced -= reduced.min(axis=0, keepdims=True)
    return reduced


def sinkhorn_solve(
    c: CostMatrix,
    m: Marginals,
    cfg: SolverConfig,
    b_init: np.ndarray | None = None,
    stabilized: bool = False,
) -> TransportPlan:
    """Solve the entropic OT problem by alternating marginal scaling.

    The default runs the scaling updates directly and errors out if the
    kernel applications underflow (possible when ``lam`` is far below the
    cost scale).  ``stabilized=True`` switches to the log-domain form of the
    same fixed point, which tolerates arbitrarily small ``lam``; there the
    convergence measure is the largest row-marginal violation instead of the
    mean change of the row scaling, since the scaling vector itself can
    leave float range.

    When the alternating sweeps have not met ``thresh`` after a warmup
    budget, the dual potentials are polished with a damped Newton solve of
    the marginal-fit equations (same unique fixed point, quadratic local
    convergence), then one plain sweep runs so the reported error is the
    literal sweep-to-sweep measure.  Adversarially conditioned cost draws
    otherwise need 10^5-ish sweeps to reach tight thresholds.
    """
    t, n = c.shape
    if m.mu.size != t or m.nu.size != n:
        raise ValidationError(
            f"marginal lengths ({m.mu.size}, {m.nu.size}) do not match cost shape {c.shape}"
        )
    reduced = _reduced_cost(c.values)
    kernel = np.exp(-reduced / cfg.lam)
    if t == 1 and n == 1:
        state = SinkhornState(kernel, np.array([1.0 / kernel[0, 0]]), np.array([1.0]), 0, 0.0, True)
        return TransportPlan(np.array([[1.0]]), m, cfg.lam, state)

    if b_init is None:
        b = np.ones(n)
    else:
        b = np.asarray(b_init, dtype=np.float64).reshape(-1).copy()
        if b.size != n or np.any(b <= 0.0) or not np.all(np.isfinite(b)):
            raise ValidationError("b_init must be a strictly positive vector of length N")

    if stabilized:
        return _sinkhorn_log_domain(c, m, cfg, b)

    a = np.ones(t)
    err = np.inf
    iterations = 0
    warmup = _newton_trigger(cfg.max_iter)
    newton_budget = cfg.max_iter - warmup - 1
    for iterations in range(1, cfg.max_iter + 1):
        a_prev = a
        a = m.mu / _guarded(kernel @ b)
        b = m.nu / _guarded(kernel.T @ a)
        err = float(np.mean(np.abs(a - a_prev)))
        if err < cfg.thresh:
            break
        if iterations == warmup and newton_budget >= 3:
            # slow geometric tail: jump to the fixed point via Newton, then
            # take one literal sweep to measure the final error
            f = cfg.lam * np.log(a)
            g = cfg.lam * np.log(b)
            f, g, steps, ok = _newton_polish(
                reduced, cfg.lam, m.mu, m.nu, f, g, max_steps=min(_NEWTON_MAX_STEPS, newton_budget)
            )
            if ok:
                a = np.exp(f / cfg.lam)
                b = np.exp(g / cfg.lam)
                a_prev = a
                a = m.mu / _guarded(kernel @ b)
                b = m.nu / _guarded(kernel.T @ a)
                err = float(np.mean(np.abs(a - a_prev)))
                if err < cfg.thresh:
                    iterations += steps + 1
                    break
    converged = err < cfg.thresh
    plan = (a[:, None] * kernel) * b[None, :]
    state = SinkhornState(kernel, a, b, iterations, err, converged)
    return TransportPlan(plan, m, cfg.lam, state)


def _guarded(applied: np.ndarray) -> np.ndarray:
    if np.any(applied < _UNDERFLOW_FLOOR):
        raise NumericError(
            "kernel application underflowed; increase lambda or retry with stabilized=True"
        )
    return applied


def _newton_trigger(max_iter: int) -> int:
    # late enough that the cheap sweeps handle easy instances, early enough
    # to leave budget for the polish (~20 steps) and the final sweep
    return min(64, max(8, max_iter // 4))


def _sinkhorn_log_domain(
    c: CostMatrix, m: Marginals, cfg: SolverConfig, b_init: np.ndarray
) -> TransportPlan:
    # Same fixed point with the scalings kept as dual potentials f, g
    # (a = exp(f/lam), b = exp(g/lam)).  After the column update the column
    # sums equal nu exactly, so only the row violation is tracked.
    lam = cfg.lam
    cost = c.values
    log_mu = np.log(m.mu)
    log_nu = np.log(m.nu)
    f = np.zeros(c.shape[0])
    g = lam * np.log(b_init)

    def full_sweep(f, g, level):
        s = (f[:, None] + g[None, :] - cost) / level
        f = f + level * (log_mu - _logsumexp_rows(s))
        s = (f[:, None] + g[None, :] - cost) / level
        g = g + level * (log_nu - _logsumexp_rows(s.T))
        s = (f[:, None] + g[None, :] - cost) / level
        row_sums = np.exp(_logsumexp_rows(s))
        return f, g, float(np.max(np.abs(row_sums - m.mu)))

    # Far below the cost scale the alternating map stalls with oscillating
    # plan support; warming the duals down a regularization ladder keeps
    # every row alive and leaves Newton a healthy starting point.
    prelude = 0
    level = 1.0
    while level > 4.0 * lam:
        for _ in range(_ANNEAL_SWEEPS):
            f, g, _ = full_sweep(f, g, level)
            prelude += 1
        level /= 4.0

    err = np.inf
    iterations = prelude
    warmup = min(16, _newton_trigger(cfg.max_iter))
    newton_budget = cfg.max_iter - warmup - prelude - 1
    for iterations in range(prelude + 1, cfg.max_iter + 1):
        f, g, err = full_sweep(f, g, lam)
        if err < cfg.thresh:
            break
        if iterations == prelude + warmup and newton_budget >= 3:
            f, g, steps, ok = _newton_polish(
                cost, lam, m.mu, m.nu, f, g, max_steps=min(_NEWTON_MAX_STEPS, newton_budget)
            )
            if ok:
                f, g, err = full_sweep(f, g, lam)
                if err < cfg.thresh:
                    iterations += steps + 1
                    break
    converged = err < cfg.thresh
    plan = np.exp((f[:, None] + g[None, :] - cost) / lam)
    # both potentials absorbed into the kernel: plan = diag(1) K diag(1)
    state = SinkhornState(plan, np.ones(c.shape[0]), np.ones(c.shape[1]), iterations, err, converged)
    return TransportPlan(plan, m, cfg.lam, state)


def _logsumexp_rows(s: np.ndarray) -> np.ndarray:
    peak = s.max(axis=1)
    return peak + np.log(np.exp(s - peak[:, None]).sum(axis=1))


_NEWTON_MAX_STEPS = 20
_NEWTON_RESIDUAL = 1e-13


def _newton_polish(cost, lam, mu, nu, f, g, max_steps=_NEWTON_MAX_STEPS):
    """Damped Newton on the marginal-fit residual in the dual potentials.

    Solves r(f, g) = (P 1 - mu, P^T 1 - nu) = 0 with
    P = exp((f + g - C)/lam); the Jacobian is (1/lam) [[diag(P1), P],
    [P^T, diag(P^T 1)]] plus a tiny ridge for the additive null direction.
    Returns (f, g, steps, converged).
    """
    t, n = cost.shape

    def residual(f, g):
        s = (f[:, None] + g[None, :] - cost) / lam
        if s.max() > 50.0:  # plan entries must stay <= 1-ish; reject wild duals
            return None, None
        p = np.exp(s)
        return p, np.concatenate([p.sum(axis=1) - mu, p.sum(axis=0) - nu])

    p, res = residual(f, g)
    if p is None:
        return f, g, 0, False
    norm = np.linalg.norm(res)
    steps = 0
    for steps in range(1, max_steps + 1):
        if np.max(np.abs(res)) <= _NEWTON_RESIDUAL:
            return f, g, steps - 1, True
        jac = np.zeros((t + n, t + n))
        jac[:t, :t] = np.diag(p.sum(axis=1))
        jac[:t, t:] = p
        jac[t:, :t] = p.T
        jac[t:, t:] = np.diag(p.sum(axis=0))
        jac /= lam
        jac[np.diag_indices_from(jac)] += 1e-12
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            return f, g, steps, False
        step = 1.0
        for _ in range(30):
            f_new = f + step * delta[:t]
            g_new = g + step * delta[t:]
            p_new, res_new = residual(f_new, g_new)
            if p_new is not None and np.linalg.norm(res_new) < norm:
                f, g, p, res = f_new, g_new, p_new, res_new
                norm = np.linalg.norm(res)
                break
            step *= 0.5
        else:
            return f, g, steps, False
    return f, g, steps, bool(np.max(np.abs(res)) <= _NEWTON_RESIDUAL)


def exact_ot_oracle(c: CostMatrix, m: Marginals) -> tuple[np.ndarray, float]:
    """Exact minimizer of <P, C> over the transport polytope (LP).

    Restricted to T*N <= 64 cells; this is a verification oracle, not a
    production path.  When several vertices are optimal the solver's
    deterministic pivoting picks one; only the optimal cost is unique.
    """
    t, n = c.shape
    if t * n > ORACLE_MAX_CELLS:
        raise SizeError(f"oracle instance {t}x{n} exceeds {ORACLE_MAX_CELLS} cells")
    if m.mu.size != t or m.nu.size != n:
        raise ValidationError(
            f"marginal lengths ({m.mu.size}, {m.nu.size}) do not match cost shape {c.shape}"
        )
    # Equality constraints: T row sums then N column sums; one is redundant
    # but the LP solver tolerates that.
    a_eq = np.zeros((t + n, t * n))
    for i in range(t):
        a_eq[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        a_eq[t + j, j::n] = 1.0
    b_eq = np.concatenate([m.mu, m.nu])
    res = linprog(
        c.values.reshape(-1),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0.0, None),
        method="highs",
    )
    if not res.success:
        raise NumericError(f"exact OT solve failed: {res.message}")
    plan = res.x.reshape(t, n)
    return plan, float(res.fun)


def plan_entropy(p: np.ndarray) -> float:
    """H(P) = -sum P (log P - 1), with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    mask = p > 0.0
    return float(-(p[mask] * (np.log(p[mask]) - 1.0)).sum())


def regularized_objective(p: TransportPlan, c: CostMatrix, lam: float) -> float:
    """<P, C> - lam * H(P); the quantity the solver minimizes."""
    if p.values.shape != c.shape:
        raise ValidationError(
            f"plan shape {p.values.shape} does not match cost shape {c.shape}"
        )
    if lam <= 0:
        raise ValidationError(f"lambda must be > 0, got {lam}")
    if np.any(p.values < 0.0):
        raise ValidationError("plan has negative entries")
    transport = float((p.values * c.values).sum())
    return transport - lam * plan_entropy(p.values)
