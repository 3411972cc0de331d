"""Entropic optimal transport between trajectories of intent vectors.

Covers the lookahead cost matrix, the expert tail index, the log-domain
Sinkhorn solver, and a brute-force exact-OT oracle for square instances
(uniform equal-size marginals make exact OT an assignment problem).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .backend import BACKEND, sinkhorn_duals


class SinkhornNumericalError(RuntimeError):
    """A dual potential went non-finite during the solve."""


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    k: int


@dataclass(frozen=True)
class TransportPlan:
    values: np.ndarray
    epsilon: float
    iterations_run: int
    marginal_error: float
    duals: tuple[np.ndarray, np.ndarray] | None = None


def build_cost_matrix(agent_intents, expert_intents, k: int) -> CostMatrix:
    """Pairwise squared intent distance plus a k-step lookahead term.

    C[i, j] = ||a_i - e_j||^2 + ||a_{min(i+k, Ta)} - e_{min(j+k, Te)}||^2
    with 1-based clamping at the trajectory ends.
    """
    if k < 1:
        raise ValueError(f"lookahead k must be >= 1, got {k}")
    a = np.atleast_2d(np.asarray(agent_intents, dtype=float))
    e = np.atleast_2d(np.asarray(expert_intents, dtype=float))
    if a.shape[1] != e.shape[1]:
        raise ValueError(f"embedding dims differ: {a.shape[1]} vs {e.shape[1]}")
    ia = np.minimum(np.arange(a.shape[0]) + k, a.shape[0] - 1)
    ie = np.minimum(np.arange(e.shape[0]) + k, e.shape[0] - 1)
    diff = a[:, None, :] - e[None, :, :]
    diff_ahead = a[ia][:, None, :] - e[ie][None, :, :]
    values = np.einsum("ijd,ijd->ij", diff, diff) + np.einsum(
        "ijd,ijd->ij", diff_ahead, diff_ahead)
    return CostMatrix(values=values, k=k)


def tail_index(cost: CostMatrix) -> int:
    """1-based column of the minimum of the first row (ties to the left)."""
    values = cost.values
    if values.size == 0:
        raise ValueError("empty cost matrix")
    return int(np.argmin(values[0])) + 1


def _marginal_error(values, log_a, log_b, eps, f, g) -> float:
    """Max row/column plan-marginal deviation, evaluated in the log domain."""
    from scipy.special import logsumexp

    log_plan = (f[:, None] + g[None, :] - values) / eps
    row = np.max(np.abs(np.exp(logsumexp(log_plan, axis=1)) - np.exp(log_a)))
    col = np.max(np.abs(np.exp(logsumexp(log_plan, axis=0)) - np.exp(log_b)))
    return float(max(row, col))


def _newton_polish(values, log_a, log_b, eps, f, g, budget, tol):
    """Damped Newton ascent on the Sinkhorn semi-dual.

    Alternating dual sweeps stall on near-tied assignments: the slow
    mode contracts like 1 - exp(-gap/eps), which at small eps can need
    millions of sweeps. The semi-dual (f eliminated analytically) is
    smooth and concave in g, so a Levenberg-Marquardt-damped Newton step
    on it resolves those ties in a handful of iterations. One dual is
    pinned to remove the constant-shift gauge. Returns
    (f, g, iterations_used, marginal_error).
    """
    from scipy.special import logsumexp

    n, m = values.shape
    a, b = np.exp(log_a), np.exp(log_b)
    lam = 1e-10
    used = 0
    rejects = 0
    err = _marginal_error(values, log_a, log_b, eps, f, g)
    while used < budget and err > tol and m >= 2:
        used += 1
        f = eps * (log_a - logsumexp((g[None, :] - values) / eps, axis=1))
        plan = np.exp((f[:, None] + g[None, :] - values) / eps)
        col = plan.sum(axis=0)
        grad = b - col
        hess = (np.diag(col) - plan.T @ (plan / a[:, None])) / eps
        pin = int(np.argmax(col))
        idx = np.arange(m) != pin
        sub = hess[np.ix_(idx, idx)]
        scale = float(np.max(np.diag(sub)))
        h0 = float(f @ a + g @ b)
        accepted = False
        for _ in range(12):
            try:
                step = np.linalg.solve(
                    sub + lam * scale * np.eye(m - 1), grad[idx])
            except np.linalg.LinAlgError:
                lam *= 100.0
                continue
            if not np.all(np.isfinite(step)):
                lam *= 100.0
                continue
            damp = 1.0
            for _ in range(40):
                g_try = g.copy()
                g_try[idx] += damp * step
                f_try = eps * (log_a - logsumexp(
                    (g_try[None, :] - values) / eps, axis=1))
                h_try = float(f_try @ a + g_try @ b)
                if np.isfinite(h_try) and h_try > h0:
                    f, g = f_try, g_try
                    accepted = True
                    break
                damp *= 0.5
            if accepted:
                lam = max(lam / 10.0, 1e-14)
                rejects = 0
                break
            lam *= 100.0
        if not accepted:
            # no productive step; hand the remaining budget back to sweeps
            rejects += 1
            if rejects >= 2:
                break
        err = _marginal_error(values, log_a, log_b, eps, f, g)
    return f, g, used, err


def sinkhorn(cost, epsilon: float, max_iters: int = 200,
             tolerance: float = 1e-9) -> TransportPlan:
    """Entropy-regularized OT with uniform marginals 1/T_a and 1/T_e.

    Solved entirely in the log domain in three phases that share one
    iteration budget: a short epsilon-annealing warm start (one dual
    sweep per level, halving from the largest cost down to the target
    epsilon), plain alternating sweeps at the target, and — only if the
    sweeps stall above the tolerance — a damped Newton polish on the
    semi-dual that resolves near-tied assignments. All phases converge
    to the same entropic optimum; iterations_run counts every sweep and
    every Newton step.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    values = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    if values.ndim != 2 or values.size == 0:
        raise ValueError("cost must be a nonempty 2-D matrix")
    n, m = values.shape
    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    values = np.ascontiguousarray(values, dtype=np.float64)
    epsilon = float(epsilon)
    tolerance = float(tolerance)
    used = 0
    f = np.zeros(n)
    g = np.zeros(m)
    err = np.inf
    try:
        # phase 1: annealing warm start, one sweep per halved epsilon
        top = float(np.max(values)) if np.all(np.isfinite(values)) else 0.0
        eps_level = top / 2.0
        while eps_level > epsilon and used < max(0, max_iters - 2):
            f, g, _, _ = sinkhorn_duals(values, log_a, log_b, eps_level,
                                        1, 0.0, f, g)
            f, g = np.asarray(f), np.asarray(g)
            used += 1
            eps_level /= 2.0
        # phase 2: plain sweeps at the target epsilon (hot kernel)
        reserve = min(60, (max_iters - used) // 4)
        sweep_budget = max(1, max_iters - used - reserve)
        f, g, iters, err = sinkhorn_duals(values, log_a, log_b, epsilon,
                                          sweep_budget, tolerance, f, g)
        f, g = np.asarray(f), np.asarray(g)
        used += int(iters)
    except FloatingPointError as exc:
        raise SinkhornNumericalError(str(exc)) from exc
    # phase 3: Newton polish for stalled near-ties
    if err > tolerance and used < max_iters:
        f, g, newton_used, err = _newton_polish(
            values, log_a, log_b, epsilon, f, g, max_iters - used, tolerance)
        used += newton_used
        if err > tolerance and used < max_iters:
            try:
                f, g, iters, err = sinkhorn_duals(
                    values, log_a, log_b, epsilon, max_iters - used,
                    tolerance, f, g)
                f, g = np.asarray(f), np.asarray(g)
                used += int(iters)
            except FloatingPointError as exc:
                raise SinkhornNumericalError(str(exc)) from exc
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise SinkhornNumericalError("non-finite dual after solve")
    plan = np.exp((f[:, None] + g[None, :] - values) / epsilon)
    return TransportPlan(values=plan, epsilon=epsilon,
                         iterations_run=int(used), marginal_error=float(err),
                         duals=(f, g))


def transport_cost(plan: TransportPlan, cost) -> float:
    """Frobenius inner product <P, C>."""
    values = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    if plan.values.shape != values.shape:
        raise ValueError(
            f"plan shape {plan.values.shape} != cost shape {values.shape}")
    return float(np.sum(plan.values * values))


def exact_ot_bruteforce(cost) -> tuple[float, np.ndarray]:
    """Exhaustive exact OT for square costs with uniform marginals, n <= 8.

    Minimizes (1/n) * sum_i C[i, sigma(i)] over all permutations; ties
    break toward the lexicographically smallest permutation.
    """
    values = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("brute-force oracle requires a square cost matrix")
    n = values.shape[0]
    if n > 8:
        raise ValueError(f"brute-force oracle limited to n <= 8, got {n}")
    rows = np.arange(n)
    best_value = np.inf
    best_perm = None
    for perm in itertools.permutations(range(n)):
        v = values[rows, perm].sum() / n
        if v < best_value:
            best_value = v
            best_perm = perm
    plan = np.zeros((n, n))
    plan[rows, best_perm] = 1.0 / n
    return float(best_value), plan


__all__ = [
    "BACKEND",
    "CostMatrix",
    "TransportPlan",
    "SinkhornNumericalError",
    "build_cost_matrix",
    "tail_index",
    "sinkhorn",
    "transport_cost",
    "exact_ot_bruteforce",
]
