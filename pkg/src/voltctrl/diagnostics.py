"""Observable analysis quantities computed from traces.

* dist_to_band    -- Euclidean distance from a voltage profile to the band
* lyapunov        -- the quadratic energy (1/2) d_hat^T X^{-1} d_hat that the
                     deadband integrator dissipates in synchronous, delay-free
                     operation
* construct_counterexample -- an operating condition that no controller with
                     bounded output can ever bring inside the band
* annotate_trace  -- per-step diagnostics table with CSV export

Distances are reported over all monitored buses; the energy, dual value and
step norms are evaluated on the controlled subsystem, which is what the
convergence analysis addresses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controllers import VoltageLimits
from .network import SensitivityMatrices
from .powerflow import OperatingCondition
from .qp import dual_objective


def dist_to_band(v, limits: VoltageLimits) -> float:
    """Euclidean norm of the componentwise clip residual; zero iff v is
    inside [v_lo, v_hi] componentwise."""
    v = np.asarray(v, dtype=float)
    viol = np.maximum(v - limits.v_hi, 0.0) + np.maximum(limits.v_lo - v, 0.0)
    return float(np.linalg.norm(viol))


def band_violations(v: np.ndarray, limits: VoltageLimits) -> np.ndarray:
    """Per-bus nonnegative violation for each row of v (rows are steps)."""
    return np.maximum(v - limits.v_hi, 0.0) + np.maximum(limits.v_lo - v, 0.0)


def lyapunov(
    q, sens: SensitivityMatrices, cond: OperatingCondition, limits: VoltageLimits
) -> float:
    """(1/2) d_hat(v)^T X^{-1} d_hat(v) with v = X q + v_par and
    d_hat = v - band center. Nonnegative since X is positive definite."""
    q = np.asarray(q, dtype=float)
    d_hat = sens.X @ q + cond.v_par - limits.center
    return float(0.5 * d_hat @ np.linalg.solve(sens.X, d_hat))


def construct_counterexample(
    sens: SensitivityMatrices, limits: VoltageLimits, q_bound: float, margin: float
) -> np.ndarray:
    """Operating condition unreachable by any controller bounded by q_bound.

    Sets v_par = v_hi + (row sums of X) * q_bound + margin. Since X is
    entrywise nonnegative, |X u|_i <= (sum_j X_ij) * q_bound for any control
    u with |u|_inf <= q_bound, so every bus stays at least ``margin`` above
    its upper limit at every step, whatever such a controller does.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    if q_bound < 0:
        raise ValueError("q_bound must be nonnegative")
    row_sums = sens.X.sum(axis=1)
    return limits.v_hi + row_sums * q_bound + margin


@dataclass
class DiagnosticsRecord:
    """Diagnostics at one time step."""

    dist_to_band: float
    lyapunov_psi: float
    dual_D: float | None
    alpha_norm: float
    d_hat: np.ndarray


@dataclass
class DiagnosticsTable:
    """Per-step diagnostics as column arrays (index = time step)."""

    dist: np.ndarray
    psi: np.ndarray
    dual_D: np.ndarray | None
    alpha_norm: np.ndarray
    d_hat: np.ndarray

    def row(self, t: int) -> DiagnosticsRecord:
        return DiagnosticsRecord(
            dist_to_band=float(self.dist[t]),
            lyapunov_psi=float(self.psi[t]),
            dual_D=None if self.dual_D is None else float(self.dual_D[t]),
            alpha_norm=float(self.alpha_norm[t]),
            d_hat=self.d_hat[t],
        )

    def __len__(self) -> int:
        return len(self.dist)


def annotate_trace(
    trace, sens: SensitivityMatrices, cond: OperatingCondition, limits: VoltageLimits
) -> DiagnosticsTable:
    """Evaluate the diagnostics for every recorded step of a trace.

    ``dist`` covers all monitored buses. psi, dual_D and alpha_norm are
    computed on the controlled subsystem (full system when every bus is
    controlled). dual_D is populated only for dual-integrator traces.
    """
    v = trace.v
    steps = v.shape[0]
    cidx = np.nonzero(trace.controlled)[0]

    dist = np.linalg.norm(band_violations(v, limits), axis=1)
    d_hat = v - limits.center

    X_c = sens.X[np.ix_(cidx, cidx)]
    d_hat_c = d_hat[:, cidx]
    # one batched solve instead of a solve per step
    psi = 0.5 * np.einsum("ti,it->t", d_hat_c, np.linalg.solve(X_c, d_hat_c.T))

    alpha = np.zeros((steps, len(cidx)))
    alpha[1:] = np.diff(trace.q[:, cidx], axis=0)
    alpha_norm = np.linalg.norm(alpha, axis=1)

    dual_D = None
    if trace.controller == "alg2" and trace.lam_hi is not None:
        lam_hi_c = trace.lam_hi[:, cidx]
        lam_lo_c = trace.lam_lo[:, cidx]
        d = lam_lo_c - lam_hi_c
        quad = -0.5 * np.einsum("ti,ti->t", d, d @ X_c)
        v_par_c = cond.v_par[cidx]
        dual_D = (
            quad
            + lam_hi_c @ (v_par_c - limits.v_hi[cidx])
            + lam_lo_c @ (limits.v_lo[cidx] - v_par_c)
        )

    return DiagnosticsTable(
        dist=dist, psi=psi, dual_D=dual_D, alpha_norm=alpha_norm, d_hat=d_hat
    )


def lemma3_residuals(
    trace, cond: OperatingCondition, limits: VoltageLimits, epsilon: float
) -> np.ndarray:
    """Per-step residual of the exact inner-product identity satisfied by the
    synchronous, delay-free deadband integrator:

        d_hat(v(t))^T alpha(t) + (1/eps) |alpha(t)|^2
            + sum_i M_i |alpha_i(t)|  =  0

    where alpha(t) = q(t) - q(t-1) and M is the band half-width. Returns the
    absolute residual for t = 1..T on the controlled subsystem.
    """
    cidx = np.nonzero(trace.controlled)[0]
    v = trace.v[:, cidx]
    q = trace.q[:, cidx]
    m = limits.half_width[cidx]
    center = limits.center[cidx]
    alpha = np.diff(q, axis=0)
    gamma = v[1:] - center
    lhs = np.einsum("ti,ti->t", gamma, alpha)
    rhs = -np.sum(alpha**2, axis=1) / epsilon - np.abs(alpha) @ m
    return np.abs(lhs - rhs)


def write_diagnostics_csv(table: DiagnosticsTable, path) -> None:
    """CSV with header t,dist,psi,dual_D,alpha_norm; dual_D empty when absent,
    alpha_norm empty at t = 0 (no step has been taken yet)."""
    rows = ["t,dist,psi,dual_D,alpha_norm"]
    for t in range(len(table)):
        dual = "" if table.dual_D is None else repr(float(table.dual_D[t]))
        alpha = "" if t == 0 else repr(float(table.alpha_norm[t]))
        rows.append(
            f"{t},{float(table.dist[t])!r},{float(table.psi[t])!r},{dual},{alpha}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")
