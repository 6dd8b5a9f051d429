"""Nonmonotone Barzilai-Borwein proximal gradient (SpaRSA) for

    min_u  0.5 u'Hu - q'u + sum_j w_j |u_j|.

Serves as the weighted-L1 comparison baseline: candidate steps are
soft-threshold steps with a BB step length, accepted against the maximum of
the last few objective values minus a quadratic sufficient-decrease term.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .ssn import QuadraticOperator, _soft_threshold

__all__ = ["SparsaConfig", "SparsaResult", "SparsaError", "sparsa_solve",
           "node_l1_weights"]


class SparsaError(RuntimeError):
    """Iteration cap reached before the stopping test was met."""


@dataclass
class SparsaConfig:
    """Algorithm parameters; the defaults are the standard ones."""

    M: int = 5
    eta: float = 2.0
    sigma: float = 0.01
    alpha_min: float = 1e-20
    alpha_max: float = 1e20
    rel_tol: float = 1e-5
    max_iter: int = 20_000
    beta: float = None  # L1 penalty factor, used by callers building weights


@dataclass
class SparsaResult:
    u: np.ndarray
    iters: int
    objective: float
    history: list = field(default_factory=list)  # (objective, alpha, step)


def node_l1_weights(system, beta):
    """Per-node weights of the mesh-dependent L1 term on the free dofs:
    ``beta`` times the basis-function integrals."""
    return beta * system.basis_integral[system.free_nodes]


def sparsa_solve(H: QuadraticOperator, q, l1_weights, cfg: SparsaConfig,
                 u0) -> SparsaResult:
    """Run SpaRSA from ``u0``; stops when both the relative objective change
    and the relative step fall below ``cfg.rel_tol``."""
    q = np.asarray(q, dtype=float)
    w = np.asarray(l1_weights, dtype=float)
    u = np.asarray(u0, dtype=float).copy()

    def phi(v, grad_at=None):
        Hv = H.apply(v)
        return 0.5 * float(v @ Hv) - float(q @ v) + float(w @ np.abs(v)), Hv

    value, Hu = phi(u)
    grad = Hu - q
    window = deque([value], maxlen=cfg.M)
    history = [(value, np.nan, np.nan)]
    alpha = 1.0
    tiny = np.finfo(float).eps  # zero-denominator guard for the stop test
    for k in range(1, cfg.max_iter + 1):
        ref = max(window)
        while True:
            u_next = _soft_threshold(u - grad / alpha, w / alpha)
            step = u_next - u
            step_sq = float(step @ step)
            value_next, Hu_next = phi(u_next)
            if value_next <= ref - 0.5 * cfg.sigma * alpha * step_sq:
                break
            if alpha >= cfg.alpha_max:
                break
            alpha = min(alpha * cfg.eta, cfg.alpha_max)

        grad_next = Hu_next - q
        rel_obj = abs(value_next - value) / max(abs(value), tiny)
        rel_step = np.sqrt(step_sq) / max(float(np.linalg.norm(u_next)), tiny)
        history.append((value_next, alpha, float(np.sqrt(step_sq))))
        window.append(value_next)

        if step_sq > 0.0:
            dg = grad_next - grad
            alpha = float(step @ dg) / step_sq
            alpha = min(max(alpha, cfg.alpha_min), cfg.alpha_max)
        else:
            alpha = 1.0
        u, value, grad = u_next, value_next, grad_next
        if rel_obj <= cfg.rel_tol and rel_step <= cfg.rel_tol:
            return SparsaResult(u=u, iters=k, objective=value, history=history)
    raise SparsaError(f"no convergence within {cfg.max_iter} iterations")
