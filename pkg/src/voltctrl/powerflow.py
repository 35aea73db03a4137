"""Voltage evaluation under the linear DistFlow model and the full AC model.

The linear model is the analysis object of the control algorithms:
v = X q + v_par, with v_par collecting everything the controller does not
touch. The nonlinear branch-flow solver is the ground truth used to check
that conclusions drawn on the linear model survive on the real feeder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NonpositiveVoltage
from .network import RadialNetwork, SensitivityMatrices

AC_TOL = 1e-10
AC_MAX_ITER = 200


@dataclass(frozen=True)
class OperatingCondition:
    """Fixed injections and the squared-voltage profile they alone produce.

    v_par = R p + X q_ext + v0. Instances are immutable; build them with
    ``make_condition`` so the stored v_par always matches p and q_ext.
    """

    p: np.ndarray
    q_ext: np.ndarray
    v_par: np.ndarray


def make_condition(
    sens: SensitivityMatrices, v0: float, p, q_ext
) -> OperatingCondition:
    p = np.asarray(p, dtype=float)
    q_ext = np.asarray(q_ext, dtype=float)
    n = sens.n
    if p.shape != (n,) or q_ext.shape != (n,):
        raise DimensionMismatch(
            f"injections must have shape ({n},), got p{p.shape} q_ext{q_ext.shape}"
        )
    v_par = sens.R @ p + sens.X @ q_ext + v0
    return OperatingCondition(p=p, q_ext=q_ext, v_par=v_par)


def linear_voltage(
    sens: SensitivityMatrices, cond: OperatingCondition, q_ctrl
) -> np.ndarray:
    """v = X q_ctrl + v_par (one matrix-vector product plus add)."""
    q_ctrl = np.asarray(q_ctrl, dtype=float)
    if q_ctrl.shape != (sens.n,):
        raise DimensionMismatch(
            f"q_ctrl must have shape ({sens.n},), got {q_ctrl.shape}"
        )
    return sens.X @ q_ctrl + cond.v_par


@dataclass
class BranchFlowState:
    """Converged branch-flow solution.

    P, Q, ell are per-line, indexed by the line's to-bus minus one (the line
    feeding bus i sits at index i-1). v is per-bus including the substation
    (length n+1, v[0] = v0). residual is the largest equation residual at
    exit.
    """

    P: np.ndarray
    Q: np.ndarray
    ell: np.ndarray
    v: np.ndarray
    iterations: int
    residual: float


def solve_ac(
    net: RadialNetwork,
    p,
    q_total,
    tol: float = AC_TOL,
    max_iter: int = AC_MAX_ITER,
    neglect_losses: bool = False,
) -> BranchFlowState:
    """Backward/forward sweep for the branch-flow equations.

    The backward pass aggregates P, Q from the leaves up including the r*ell
    and x*ell loss terms; the forward pass propagates squared voltages from
    the substation; ell is then refreshed from (P, Q, v). Iterates until the
    largest residual of the four model equations drops below tol.

    With ``neglect_losses`` the loss terms are clamped to zero, which solves
    the linear (Simplified DistFlow) system exactly in one sweep.

    Raises NoConvergence after max_iter sweeps and NonpositiveVoltage if the
    iteration leaves the physical voltage branch.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be > 0 and max_iter >= 1")
    n = net.n
    p = np.asarray(p, dtype=float)
    q_total = np.asarray(q_total, dtype=float)
    if p.shape != (n,) or q_total.shape != (n,):
        raise DimensionMismatch(
            f"injections must have shape ({n},), got p{p.shape} q{q_total.shape}"
        )

    v = np.full(n + 1, net.v0)
    ell = np.zeros(n)
    P = np.zeros(n)
    Q = np.zeros(n)
    reverse_order = net.topo_order[::-1]

    for it in range(1, max_iter + 1):
        # backward: line into bus j carries the subtree demand plus losses
        for j in reverse_order:
            if j == 0:
                continue
            k = j - 1
            P[k] = -p[k] + net.line_r[k] * ell[k]
            Q[k] = -q_total[k] + net.line_x[k] * ell[k]
            for child in net.children[j]:
                P[k] += P[child - 1]
                Q[k] += Q[child - 1]

        # forward: propagate squared voltage from the substation
        for j in net.topo_order[1:]:
            k = j - 1
            i = net.parent[j]
            v[j] = (
                v[i]
                - 2.0 * (net.line_r[k] * P[k] + net.line_x[k] * Q[k])
                + (net.line_r[k] ** 2 + net.line_x[k] ** 2) * ell[k]
            )
        if np.any(v <= 0):
            bad = int(np.argmin(v))
            raise NonpositiveVoltage(
                f"squared voltage at bus {bad} fell to {v[bad]:.3e}"
            )

        if not neglect_losses:
            ell = (P**2 + Q**2) / v[net.parent[1:]]

        res = _residual(net, p, q_total, P, Q, ell, v, neglect_losses)
        if res < tol:
            return BranchFlowState(P=P, Q=Q, ell=ell, v=v, iterations=it, residual=res)

    raise NoConvergence(max_iter, f"last residual {res:.3e}")


def _residual(net, p, q_total, P, Q, ell, v, neglect_losses) -> float:
    n = net.n
    worst = 0.0
    for j in range(1, n + 1):
        k = j - 1
        i = net.parent[j]
        down_p = sum(P[c - 1] for c in net.children[j])
        down_q = sum(Q[c - 1] for c in net.children[j])
        worst = max(worst, abs(-p[k] - (P[k] - net.line_r[k] * ell[k] - down_p)))
        worst = max(worst, abs(-q_total[k] - (Q[k] - net.line_x[k] * ell[k] - down_q)))
        worst = max(
            worst,
            abs(
                v[j]
                - v[i]
                + 2.0 * (net.line_r[k] * P[k] + net.line_x[k] * Q[k])
                - (net.line_r[k] ** 2 + net.line_x[k] ** 2) * ell[k]
            ),
        )
        if not neglect_losses:
            worst = max(worst, abs(ell[k] - (P[k] ** 2 + Q[k] ** 2) / v[i]))
    return worst


def linearization_gap(
    net: RadialNetwork,
    sens: SensitivityMatrices,
    cond: OperatingCondition,
    q_ctrl,
    tol: float = AC_TOL,
    max_iter: int = AC_MAX_ITER,
) -> np.ndarray:
    """Per-bus v_ac - v_linear for the given control injection.

    Quantifies how far the feeder is from the regime where the linear model
    is trustworthy; the gap shrinks quadratically as loading goes to zero.
    """
    q_ctrl = np.asarray(q_ctrl, dtype=float)
    state = solve_ac(net, cond.p, cond.q_ext + q_ctrl, tol=tol, max_iter=max_iter)
    v_lin = linear_voltage(sens, cond, q_ctrl)
    return state.v[1:] - v_lin
