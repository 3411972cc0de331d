"""Pure NumPy log-domain Sinkhorn kernel (fallback backend)."""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def sinkhorn_duals(cost, log_a, log_b, eps, max_iters, tol, f0=None, g0=None):
    """Alternating dual updates in the log domain.

    Optionally warm-started from duals (f0, g0). Returns
    (f, g, iterations_run, marginal_error). Raises FloatingPointError
    naming the iteration if a dual goes non-finite.
    """
    f = np.zeros(cost.shape[0]) if f0 is None else np.array(f0, dtype=float)
    g = np.zeros(cost.shape[1]) if g0 is None else np.array(g0, dtype=float)
    a = np.exp(log_a)
    b = np.exp(log_b)
    err = np.inf
    iters = 0
    for it in range(1, max_iters + 1):
        f = eps * (log_a - logsumexp((g[None, :] - cost) / eps, axis=1))
        g = eps * (log_b - logsumexp((f[:, None] - cost) / eps, axis=0))
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise FloatingPointError(f"non-finite dual at iteration {it}")
        log_plan = (f[:, None] + g[None, :] - cost) / eps
        row_err = np.max(np.abs(np.exp(logsumexp(log_plan, axis=1)) - a))
        col_err = np.max(np.abs(np.exp(logsumexp(log_plan, axis=0)) - b))
        err = float(max(row_err, col_err))
        iters = it
        if err <= tol:
            break
    return f, g, iters, err
