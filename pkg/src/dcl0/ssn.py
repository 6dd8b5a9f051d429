"""Solvers for the weighted-L1 quadratic subproblem

    min_u  0.5 u'Hu - (q + t)'u + sum_j c_j |u_j|,       c_j >= 0,

with H symmetric positive definite and an optional linear tilt t (the
subgradient term of the outer DC iteration).  The primal-dual optimality
condition is written as the projected residual

    F_tau(u) = g(u) - clip(g(u) - u/tau, -c, c) = 0,   g(u) = Hu - q - t,

and solved by a local semismooth Newton active-set method; an independent
proximal-gradient fixed-point iteration serves as a cross-check oracle.

The tilt is kept separate from q on purpose: where a component of the tilt
equals the corresponding L1 bound (the common case in the DC iteration,
where both are built from the same patch measures) the two cancel exactly
in floating point, so the residual and the active-set right-hand sides stay
at rounding level even for penalty factors around 1e9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "QuadraticOperator",
    "L1Weights",
    "SsnError",
    "f_tau_residual",
    "default_tau",
    "ssn_solve",
    "SsnResult",
    "prox_grad_oracle",
]

TAU_FLOOR = 1e-16


class SsnError(RuntimeError):
    """Subproblem solver failure (singular system, iteration cap)."""


class QuadraticOperator:
    """Symmetric positive definite operator with principal-subsystem solves.

    Either wraps an explicit sparse matrix (principal systems are solved by
    direct factorization plus one step of iterative refinement) or a
    matrix-free action (principal systems fall back to conjugate gradients
    on the restricted action, warm-started).
    """

    def __init__(self, apply, n, explicit=None, cg_rtol=1e-12, cg_maxiter=None):
        self.apply = apply
        self.n = n
        self.explicit = explicit
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter

    @classmethod
    def from_matrix(cls, H):
        H = sp.csr_matrix(H)
        return cls(apply=lambda u: H @ u, n=H.shape[0], explicit=H)

    @classmethod
    def from_action(cls, apply, n, **kwargs):
        return cls(apply=apply, n=n, explicit=None, **kwargs)

    def solve_principal(self, active, rhs, x0=None):
        """Solve ``H[active, active] x = rhs`` for the active index set."""
        active = np.asarray(active, dtype=int)
        rhs = np.asarray(rhs, dtype=float)
        if active.size == 0:
            return np.zeros(0)
        if self.explicit is not None:
            sub = self.explicit[active][:, active].tocsc()
            try:
                lu = spla.splu(sub)
            except RuntimeError as exc:
                raise SsnError(f"singular principal system: {exc}") from exc
            x = lu.solve(rhs)
            x += lu.solve(rhs - sub @ x)
            return x

        def restricted(v):
            full = np.zeros(self.n)
            full[active] = v
            return self.apply(full)[active]

        op = spla.LinearOperator((active.size, active.size),
                                 matvec=restricted, dtype=float)
        maxiter = self.cg_maxiter or max(2000, 20 * active.size)
        x, info = spla.cg(op, rhs, x0=x0, rtol=self.cg_rtol, atol=0.0,
                          maxiter=maxiter)
        if info > 0:
            raise SsnError(f"conjugate gradients stalled after {info} iterations")
        if info < 0:
            raise SsnError("conjugate gradients failed on the principal system")
        return x

    def norm_estimate(self, iters=60, seed=0):
        """Largest-eigenvalue estimate by power iteration."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.n)
        v /= np.linalg.norm(v)
        lam = 1.0
        for _ in range(iters):
            w = self.apply(v)
            lam = float(np.linalg.norm(w))
            if lam == 0.0:
                return 0.0
            v = w / lam
        return lam


@dataclass
class L1Weights:
    """Nonnegative per-component thresholds of the L1 term."""

    c: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if np.any(self.c < 0.0):
            raise ValueError("L1 thresholds must be nonnegative")


def _residual_parts(u, base_g, tilt, c, tau):
    """Classification and residual of the projected optimality system.

    Returns ``(F, inactive, shift)`` where ``shift = tilt + clamp`` on the
    clamped components (exactly zero where the tilt cancels the bound) and
    the residual is evaluated piecewise: ``u/tau`` on unclamped components,
    ``base_g - shift`` on clamped ones.
    """
    g = base_g - tilt if tilt is not None else base_g
    z = g - u / tau
    inactive = np.abs(z) <= c
    F = np.where(inactive, u / tau, 0.0)
    active = ~inactive
    sigma = np.sign(z[active]) * c[active]
    shift = np.zeros_like(u)
    shift[active] = tilt[active] + sigma if tilt is not None else sigma
    F[active] = base_g[active] - shift[active]
    return F, inactive, shift


def f_tau_residual(u, H: QuadraticOperator, q, weights: L1Weights, tau,
                   tilt=None):
    """Projected optimality residual of the weighted-L1 quadratic problem."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    u = np.asarray(u, dtype=float)
    base_g = H.apply(u) - q
    F, _, _ = _residual_parts(u, base_g, tilt, weights.c, tau)
    return F


def default_tau(warm_start, weights: L1Weights):
    """Scale parameter coupling the residual to the iterate and threshold
    magnitudes, evaluated once per outer iteration from the warm start."""
    cmax = float(weights.c.max()) if weights.c.size else 0.0
    if cmax <= 0.0:
        return 1.0
    umax = float(np.max(np.abs(warm_start))) if warm_start is not None else 0.0
    umax = max(umax, np.finfo(float).eps)
    return max(100.0 * umax / cmax, TAU_FLOOR)


@dataclass
class SsnResult:
    u: np.ndarray
    residual: float
    iters: int
    converged: bool


def ssn_solve(H: QuadraticOperator, q, weights: L1Weights, tau=None,
              tol=1e-14, max_newton=50, u0=None, tilt=None) -> SsnResult:
    """Semismooth Newton active-set iteration on ``F_tau(u) = 0``.

    Each step classifies components by the projection: where the projection
    is unclamped the component is fixed to zero, the clamped components keep
    their bound value and the corresponding principal quadratic system is
    solved.  A proximal-gradient fallback guards against cycling (the plain
    method is only locally convergent).
    """
    q = np.asarray(q, dtype=float)
    c = weights.c
    n = q.size
    u = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    if tilt is not None:
        tilt = np.asarray(tilt, dtype=float)
    if tau is None:
        tau = default_tau(u, weights)
    if tau <= 0.0:
        raise ValueError("tau must be positive")

    if not np.any(c > 0.0):
        rhs = q if tilt is None else q + tilt
        sol = H.solve_principal(np.arange(n), rhs, x0=u)
        res = float(np.linalg.norm(f_tau_residual(sol, H, q, weights, tau,
                                                  tilt=tilt)))
        return SsnResult(u=sol, residual=res, iters=1, converged=res <= tol)

    best_u, best_res = u, np.inf
    stall = 0
    lipschitz = None
    iters = 0
    for _ in range(max_newton):
        base_g = H.apply(u) - q
        F, inactive, shift = _residual_parts(u, base_g, tilt, c, tau)
        res = float(np.linalg.norm(F))
        if res < best_res:
            best_u, best_res = u, res
            stall = 0
        else:
            stall += 1
        if res <= tol:
            return SsnResult(u=u, residual=res, iters=iters, converged=True)

        if stall >= 5:
            # cycling guard: proximal-gradient steps until the residual halves
            if lipschitz is None:
                lipschitz = 1.01 * max(H.norm_estimate(), 1e-300)
            target = 0.5 * best_res
            v = u.copy()
            for _ in range(2000):
                grad = H.apply(v) - q
                if tilt is not None:
                    grad = grad - tilt
                v = _soft_threshold(v - grad / lipschitz, c / lipschitz)
                r = float(np.linalg.norm(f_tau_residual(v, H, q, weights, tau,
                                                        tilt=tilt)))
                if r <= target:
                    break
            u = v
            stall = 0
            continue

        active = np.flatnonzero(~inactive)
        u_new = np.zeros(n)
        if active.size:
            u_new[active] = H.solve_principal(
                active, q[active] + shift[active], x0=u[active])
        iters += 1
        u = u_new

    res = float(np.linalg.norm(f_tau_residual(best_u, H, q, weights, tau,
                                              tilt=tilt)))
    return SsnResult(u=best_u, residual=res, iters=iters, converged=False)


def _soft_threshold(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


def prox_grad_oracle(H: QuadraticOperator, q, weights: L1Weights, tol=1e-12,
                     max_iter=500_000, u0=None):
    """Independent proximal-gradient (ISTA) solver of the same subproblem.

    Iterates ``u <- soft(u - (Hu - q)/L, c/L)`` with ``L`` an upper bound on
    the largest eigenvalue of H, until the fixed-point update moves less
    than ``tol`` in the max norm.
    """
    q = np.asarray(q, dtype=float)
    c = weights.c
    lipschitz = 1.01 * max(H.norm_estimate(), 1e-300)
    u = np.zeros(q.size) if u0 is None else np.asarray(u0, dtype=float).copy()
    for _ in range(max_iter):
        grad = H.apply(u) - q
        u_next = _soft_threshold(u - grad / lipschitz, c / lipschitz)
        step = float(np.max(np.abs(u_next - u))) if u.size else 0.0
        u = u_next
        if step <= tol:
            return u
    raise SsnError(f"proximal gradient did not reach tol={tol} "
                   f"within {max_iter} iterations")
