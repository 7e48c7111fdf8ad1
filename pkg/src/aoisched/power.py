"""Per-slot minimum-power allocation for a fixed assignment.

The production solver is the standard interference-function iteration; a
dense two-phase simplex solves the same linear program for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PowerProblem:
    """``gains[i, l]`` is the received power at vehicle ``i`` from process ``l``
    per watt of transmit power; ``mu`` the per-vehicle assignment (0 = idle)."""

    gains: np.ndarray
    gamma_hat: np.ndarray
    mu: np.ndarray
    sigma2: float
    Pmax: float

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        mu = np.asarray(self.mu, dtype=int)
        gh = np.broadcast_to(np.asarray(self.gamma_hat, dtype=float), mu.shape)
        if np.any(g < 0):
            raise ValueError("gains must be nonnegative")
        if np.any(gh <= 0):
            raise ValueError("SINR thresholds must be positive")
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "gamma_hat", np.array(gh))

    @property
    def F(self) -> int:
        return self.gains.shape[1]

    def constraint_slack(self, p) -> np.ndarray:
        """Relative slack ``(lhs - rhs) / rhs`` of every assigned SINR constraint."""
        p = np.asarray(p, dtype=float)
        idx = np.flatnonzero(self.mu > 0)
        if idx.size == 0:
            return np.zeros(0)
        rx = self.gains[idx] * p[None, :]
        l = self.mu[idx] - 1
        sig = rx[np.arange(idx.size), l]
        rhs = self.gamma_hat[idx] * (rx.sum(axis=1) - sig + self.sigma2)
        return (sig - rhs) / rhs


@dataclass(frozen=True, eq=False)
class PowerSolution:
    p: np.ndarray
    feasible: bool
    iterations: int

    @property
    def total(self) -> float:
        return float(self.p.sum())


def _groups(problem: PowerProblem):
    return [np.flatnonzero(problem.mu == l + 1) for l in range(problem.F)]


def min_power_allocation(
    problem: PowerProblem, tol: float = 1e-10, max_iter: int = 10_000, divergence: float = 1e3
) -> PowerSolution:
    """Least total power meeting every assigned vehicle's SINR threshold.

    Iterates ``p_l <- max_i gamma_i (sum_{m != l} p_m g_im + sigma2) / g_il``
    from zero. The iterates increase monotonically to the minimal fixed
    point, so crossing the power budget already proves infeasibility. On
    convergence the binding constraints are solved exactly as a linear system.
    """
    F = problem.F
    g = problem.gains
    groups = _groups(problem)
    sched = [l for l in range(F) if groups[l].size]
    zero = PowerSolution(p=np.zeros(F), feasible=True, iterations=0)
    if not sched:
        return zero
    for l in sched:
        if np.any(g[groups[l], l] <= 0):
            return PowerSolution(p=np.zeros(F), feasible=False, iterations=0)

    # flat arrays over assigned vehicles
    veh = np.concatenate([groups[l] for l in sched])
    proc = np.concatenate([np.full(groups[l].size, l) for l in sched])
    gv = g[veh]
    own = gv[np.arange(veh.size), proc]
    scale = problem.gamma_hat[veh] / own
    sched_arr = np.array(sched)

    p = np.zeros(F)
    budget = problem.Pmax * (1 + 1e-9)
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        interference = gv @ p - own * p[proc] + problem.sigma2
        req = scale * interference
        new = np.zeros(F)
        np.maximum.at(new, proc, req)
        change = np.max(np.abs(new - p))
        p = new
        if p.sum() > min(budget, divergence * problem.Pmax):
            return PowerSolution(p=p, feasible=False, iterations=it)
        if change < tol:
            converged = True
            break
    if not converged:
        return PowerSolution(p=p, feasible=False, iterations=it)

    polished = _polish(problem, p, sched_arr, groups)
    if polished is not None:
        p = polished
    return PowerSolution(p=p, feasible=bool(p.sum() <= budget), iterations=it)


def _polish(problem, p, sched, groups):
    """Solve the binding constraints (one per process) exactly."""
    g = problem.gains
    n = sched.size
    binding = []
    for l in sched:
        vs = groups[l]
        others = g[vs] @ p - g[vs, l] * p[l] + problem.sigma2
        binding.append(vs[np.argmax(problem.gamma_hat[vs] * others / g[vs, l])])
    A = np.empty((n, n))
    b = np.empty(n)
    for r, (l, i) in enumerate(zip(sched, binding)):
        A[r] = -problem.gamma_hat[i] * g[i, sched]
        A[r, r] = g[i, l]
        b[r] = problem.gamma_hat[i] * problem.sigma2
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    if np.any(x < 0):
        return None
    out = np.zeros_like(p)
    out[sched] = x
    if problem.constraint_slack(out).min() < -1e-12:
        return None
    return out


def _simplex(c, A, b, max_iter=10_000, eps=1e-11):
    """Minimise ``c @ x`` subject to ``A x <= b``, ``x >= 0`` (two-phase, Bland's rule).

    Returns ``(x, status)`` with status ``"optimal"``, ``"infeasible"`` or ``"unbounded"``.
    """
    m, n = A.shape
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    n_art = int((sign < 0).sum())
    # columns: x (n), slack (m), artificial (n_art), rhs
    T = np.zeros((m + 1, n + m + n_art + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.diag(sign)
    T[:m, -1] = b
    basis = np.empty(m, dtype=int)
    k = 0
    for r in range(m):
        if sign[r] < 0:
            T[r, n + m + k] = 1.0
            basis[r] = n + m + k
            k += 1
        else:
            basis[r] = n + r

    def pivot(r, col):
        T[r] /= T[r, col]
        for rr in range(m + 1):
            if rr != r and T[rr, col] != 0:
                T[rr] -= T[rr, col] * T[r]
        basis[r] = col

    def run(ncols):
        for _ in range(max_iter):
            cost = T[m, :ncols]
            entering = np.flatnonzero(cost < -eps)
            if entering.size == 0:
                return "optimal"
            col = entering[0]
            column = T[:m, col]
            pos = np.flatnonzero(column > eps)
            if pos.size == 0:
                return "unbounded"
            ratios = T[pos, -1] / column[pos]
            best = ratios.min()
            ties = pos[ratios <= best + eps * max(1.0, abs(best))]
            r = ties[np.argmin(basis[ties])]
            pivot(r, col)
        raise RuntimeError("simplex iteration limit reached")

    total = n + m + n_art
    if n_art:
        T[m] = 0.0
        T[m, n + m : total] = 1.0
        for r in range(m):
            if basis[r] >= n + m:
                T[m] -= T[r]
        run(total)
        if T[m, -1] < -1e-9 * max(1.0, np.abs(b).max()):
            return None, "infeasible"
        # drive remaining artificials out of the basis
        for r in range(m):
            if basis[r] >= n + m:
                cand = np.flatnonzero(np.abs(T[r, : n + m]) > eps)
                if cand.size:
                    pivot(r, cand[0])
        T[:, n + m : total] = 0.0
    T[m] = 0.0
    T[m, :n] = c
    for r in range(m):
        if basis[r] < n and T[m, basis[r]] != 0:
            T[m] -= T[m, basis[r]] * T[r]
    status = run(n + m)
    x = np.zeros(n + m + n_art)
    x[basis] = T[:m, -1]
    return x[:n], status


def lp_oracle(problem: PowerProblem) -> PowerSolution:
    """Solve the minimum-power LP with a dense simplex method (small instances)."""
    F = problem.F
    groups = _groups(problem)
    sched = [l for l in range(F) if groups[l].size]
    if not sched:
        return PowerSolution(p=np.zeros(F), feasible=True, iterations=0)
    g = problem.gains
    rows, rhs = [], []
    for l_pos, l in enumerate(sched):
        for i in groups[l]:
            gh = problem.gamma_hat[i]
            row = gh * g[i, sched]
            row[l_pos] = -g[i, l]
            r = -gh * problem.sigma2
            s = np.abs(row).max()
            rows.append(row / s)
            rhs.append(r / s)
    rows.append(np.ones(len(sched)) / problem.Pmax)
    rhs.append(1.0)
    x, status = _simplex(np.ones(len(sched)), np.array(rows), np.array(rhs))
    p = np.zeros(F)
    if status != "optimal":
        return PowerSolution(p=p, feasible=False, iterations=0)
    p[sched] = np.maximum(x, 0.0)
    return PowerSolution(p=p, feasible=True, iterations=0)
