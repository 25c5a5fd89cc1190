"""Pure-numpy implementation of the hot solver kernels.

This is the fallback backend used when the compiled extension is not
built. Function signatures and numerical behaviour match wtap._kernels;
everything operates on raw float64 arrays with no validation, so these
are internal entry points (the public API wraps them).
"""

import numpy as np

LN2 = float(np.log(2.0))

# Smallest backtracking step before an iterate is declared stationary.
ETA_MIN = 1e-14


def secrecy_rate_raw(H, G, Q):
    """Objective value in bits; Cholesky log-dets, no input checks."""
    A = np.eye(H.shape[0]) + H @ Q @ H.T
    B = np.eye(G.shape[0]) + G @ Q @ G.T
    la = 2.0 * np.sum(np.log(np.diag(np.linalg.cholesky(A))))
    lb = 2.0 * np.sum(np.log(np.diag(np.linalg.cholesky(B))))
    return float((la - lb) / (2.0 * LN2))


def rate_gradient_raw(H, G, Q):
    A = np.eye(H.shape[0]) + H @ Q @ H.T
    B = np.eye(G.shape[0]) + G @ Q @ G.T
    grad = (H.T @ np.linalg.solve(A, H) - G.T @ np.linalg.solve(B, G)) / (2.0 * LN2)
    return 0.5 * (grad + grad.T)


def project_feasible_raw(Q, P):
    """Eigenvalue clip to PSD, then uniform scale onto tr(Q) <= P."""
    lam, V = np.linalg.eigh(0.5 * (Q + Q.T))
    lam = np.maximum(lam, 0.0)
    tr = lam.sum()
    if tr > P:
        lam *= P / tr
    out = (V * lam) @ V.T
    return 0.5 * (out + out.T)


def pg_ascent(H, G, Q0, P, max_iters, step_init, tol_rate):
    """Monotone projected gradient ascent on the secrecy objective.

    Steps Q <- project(Q + eta * grad) with eta halved while the step
    would decrease the objective; eta recovers (doubling, capped at
    step_init) after each accepted step. Terminates once the accepted
    improvement drops below tol_rate, or the step collapses, or
    max_iters is exhausted.

    Returns (Q, rate, iters, converged, trace) where trace holds the
    retained (non-decreasing) objective values including the start.
    """
    Q = project_feasible_raw(np.asarray(Q0, dtype=np.float64), P)
    r = secrecy_rate_raw(H, G, Q)
    trace = np.empty(max_iters + 1)
    trace[0] = r
    n_trace = 1
    eta = step_init
    iters = 0
    converged = False
    for it in range(1, max_iters + 1):
        iters = it
        g = rate_gradient_raw(H, G, Q)
        stalled = False
        while True:
            Qn = project_feasible_raw(Q + eta * g, P)
            rn = secrecy_rate_raw(H, G, Qn)
            if rn >= r:
                break
            eta *= 0.5
            if eta < ETA_MIN:
                stalled = True
                break
        if stalled:
            converged = True
            break
        gain = rn - r
        Q, r = Qn, rn
        trace[n_trace] = r
        n_trace += 1
        if gain < tol_rate:
            converged = True
            break
        eta = min(eta * 2.0, step_init)
    return Q, r, iters, converged, trace[:n_trace].copy()
