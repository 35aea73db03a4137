"""Reference solver for the reactive-power QP and certification utilities.

The QP is  min_q (1/2) q^T X q  subject to  v_lo <= X q + v_par <= v_hi.
Its limit is what the dual-integrator controller should reach, so this module
solves it independently twice: by projected dual ascent (the synchronous,
delay-free controller iteration driven to a KKT tolerance) and, for n <= 8,
by exhaustive active-set enumeration. Their agreement is asserted whenever
both run.

Because the dual structure forces q = lam_lo - lam_hi, stationarity is
automatic; the KKT residual therefore measures primal feasibility violation
and complementary slackness violation (each in the infinity norm).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .controllers import VoltageLimits
from .errors import Infeasible, OracleError
from .network import SensitivityMatrices
from .powerflow import OperatingCondition

ENUMERATION_MAX_N = 8
LAMBDA_BLOWUP = 1e8


@dataclass
class QpSolution:
    q_star: np.ndarray
    lambda_hi_star: np.ndarray
    lambda_lo_star: np.ndarray
    objective: float
    kkt_residual: float
    feasible: bool
    method: str


def dual_objective(
    lambda_hi, lambda_lo, sens: SensitivityMatrices, cond: OperatingCondition,
    limits: VoltageLimits,
) -> float:
    """Concave dual of the QP, evaluated literally:
    -(1/2)(lam_lo - lam_hi)^T X (lam_lo - lam_hi)
    + lam_hi^T (v_par - v_hi) + lam_lo^T (v_lo - v_par).
    """
    lam_hi = np.asarray(lambda_hi, dtype=float)
    lam_lo = np.asarray(lambda_lo, dtype=float)
    d = lam_lo - lam_hi
    return float(
        -0.5 * d @ (sens.X @ d)
        + lam_hi @ (cond.v_par - limits.v_hi)
        + lam_lo @ (limits.v_lo - cond.v_par)
    )


def kkt_residual(X, v_par, v_lo, v_hi, q, lam_hi, lam_lo) -> float:
    """max of primal violation and complementary-slackness violation (inf-norm)."""
    v = X @ q + v_par
    primal = max(float(np.max(v - v_hi, initial=0.0)), float(np.max(v_lo - v, initial=0.0)))
    comp = max(
        float(np.max(np.abs(lam_hi * (v - v_hi)), initial=0.0)),
        float(np.max(np.abs(lam_lo * (v_lo - v)), initial=0.0)),
    )
    return max(primal, 0.0, comp)


def _check_band(limits: VoltageLimits) -> None:
    if np.any(limits.v_lo > limits.v_hi):
        bad = int(np.argmax(limits.v_lo - limits.v_hi)) + 1
        raise Infeasible(f"empty voltage band at bus {bad} (v_lo > v_hi)")


def dual_ascent(
    X: np.ndarray,
    v_par: np.ndarray,
    v_lo: np.ndarray,
    v_hi: np.ndarray,
    tol: float,
    epsilon: float | None = None,
    max_iter: int = 2_000_000,
    lam0: tuple[np.ndarray, np.ndarray] | None = None,
) -> QpSolution:
    """Projected gradient ascent on the dual, run to kkt_residual < tol.

    This is exactly the synchronous delay-free dual-integrator iteration with
    epsilon = 0.9 / sigma_max(X) unless overridden. Divergence of the
    multiplier norm signals an infeasible instance.
    """
    n = len(v_par)
    sigma = float(np.linalg.eigvalsh(X)[-1])
    eps = 0.9 / sigma if epsilon is None else float(epsilon)
    lam_hi = np.zeros(n) if lam0 is None else np.array(lam0[0], dtype=float)
    lam_lo = np.zeros(n) if lam0 is None else np.array(lam0[1], dtype=float)

    q = lam_lo - lam_hi
    stall = 0
    for _ in range(max_iter):
        v = X @ q + v_par
        new_hi = np.maximum(lam_hi + eps * (v - v_hi), 0.0)
        new_lo = np.maximum(lam_lo + eps * (v_lo - v), 0.0)
        step = max(np.max(np.abs(new_hi - lam_hi)), np.max(np.abs(new_lo - lam_lo)))
        lam_hi, lam_lo = new_hi, new_lo
        q = lam_lo - lam_hi
        if max(np.max(lam_hi), np.max(lam_lo)) > LAMBDA_BLOWUP:
            raise Infeasible(
                "dual multipliers diverged; no injection satisfies the band"
            )
        res = kkt_residual(X, v_par, v_lo, v_hi, q, lam_hi, lam_lo)
        if res < tol:
            return QpSolution(
                q_star=q, lambda_hi_star=lam_hi, lambda_lo_star=lam_lo,
                objective=float(0.5 * q @ (X @ q)), kkt_residual=res,
                feasible=True, method="dual_ascent",
            )
        # floating point floor reached: accept the residual we got
        stall = stall + 1 if step < 1e-15 else 0
        if stall > 50:
            return QpSolution(
                q_star=q, lambda_hi_star=lam_hi, lambda_lo_star=lam_lo,
                objective=float(0.5 * q @ (X @ q)), kkt_residual=res,
                feasible=True, method="dual_ascent",
            )
    raise OracleError(f"dual ascent did not reach residual {tol} in {max_iter} iterations")


def active_set_enumeration(
    X: np.ndarray,
    v_par: np.ndarray,
    v_lo: np.ndarray,
    v_hi: np.ndarray,
    feas_tol: float = 1e-9,
) -> QpSolution:
    """Brute-force oracle: try all 3^n per-bus activity patterns.

    Each pattern fixes which buses sit on their upper limit, lower limit, or
    strictly inside. Active multipliers solve the resulting square linear
    system; candidates with nonnegative multipliers and feasible voltages are
    kept and the minimum-objective one returned.
    """
    n = len(v_par)
    if n > ENUMERATION_MAX_N:
        raise OracleError(f"enumeration limited to n <= {ENUMERATION_MAX_N}, got {n}")
    best: QpSolution | None = None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        upper = [i for i in range(n) if pattern[i] == 1]
        lower = [i for i in range(n) if pattern[i] == 2]
        active = upper + lower
        lam_hi = np.zeros(n)
        lam_lo = np.zeros(n)
        if active:
            m = len(active)
            # unknowns: lam_hi on upper buses, lam_lo on lower buses;
            # q = lam_lo - lam_hi must pin each active bus to its limit
            A = np.zeros((m, m))
            A[:, : len(upper)] = -X[np.ix_(active, upper)]
            A[:, len(upper):] = X[np.ix_(active, lower)]
            rhs = np.concatenate([v_hi[upper], v_lo[lower]]) - v_par[active]
            try:
                mu = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(mu)) or np.any(mu < -1e-10):
                continue
            mu = np.maximum(mu, 0.0)
            lam_hi[upper] = mu[: len(upper)]
            lam_lo[lower] = mu[len(upper):]
        q = lam_lo - lam_hi
        v = X @ q + v_par
        if np.any(v > v_hi + feas_tol) or np.any(v < v_lo - feas_tol):
            continue
        obj = float(0.5 * q @ (X @ q))
        if best is None or obj < best.objective:
            best = QpSolution(
                q_star=q, lambda_hi_star=lam_hi, lambda_lo_star=lam_lo,
                objective=obj,
                kkt_residual=kkt_residual(X, v_par, v_lo, v_hi, q, lam_hi, lam_lo),
                feasible=True, method="enumeration",
            )
    if best is None:
        raise Infeasible("no activity pattern yields a feasible point")
    return best


def solve_qp(
    sens: SensitivityMatrices,
    cond: OperatingCondition,
    limits: VoltageLimits,
    tol: float = 1e-9,
    cross_check_tol: float = 1e-6,
) -> QpSolution:
    """Solve the QP by dual ascent, cross-checked against enumeration when
    n <= 8 (enumeration wins as the solution of record: it is exact).

    Raises Infeasible for an empty band and OracleError if the two methods
    disagree beyond cross_check_tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_band(limits)
    X, v_par = sens.X, cond.v_par
    ascent = dual_ascent(X, v_par, limits.v_lo, limits.v_hi, tol)
    if sens.n <= ENUMERATION_MAX_N:
        enum = active_set_enumeration(X, v_par, limits.v_lo, limits.v_hi)
        gap = float(np.max(np.abs(ascent.q_star - enum.q_star)))
        if gap > cross_check_tol:
            raise OracleError(
                f"dual ascent and enumeration disagree: |dq|_inf = {gap:.3e}"
            )
        return enum
    return ascent


def dual_hessian_sigma(sens: SensitivityMatrices) -> tuple[float, bool]:
    """Largest singular value of the stacked dual Hessian block matrix
    [[X, -X], [-X, X]], checked against 2 sigma_max(X)."""
    X = sens.X
    A = np.block([[X, -X], [-X, X]])
    sigma_a = float(np.linalg.svd(A, compute_uv=False)[0])
    return sigma_a, bool(abs(sigma_a - 2.0 * sens.sigma_max_X) <= 1e-10)


@dataclass
class CertifyReport:
    """Gap between a simulated trajectory endpoint and the QP reference."""

    q_gap: float | None
    lambda_gap: float | None
    passed: bool | None
    note: str | None = None

    def to_json_dict(self) -> dict:
        out = {"q_gap": self.q_gap, "lambda_gap": self.lambda_gap, "pass": self.passed}
        if self.note is not None:
            out["note"] = self.note
        return out


def certify_against_trace(trace, solution: QpSolution, tol: float) -> CertifyReport:
    """Compare the final (q, lambda) of a dual-integrator trace with the QP
    reference solution on the controlled subsystem.

    Traces from other controller families are flagged rather than judged:
    their limits need not coincide with the QP optimizer.
    """
    if trace.controller != "alg2":
        return CertifyReport(
            q_gap=None, lambda_gap=None, passed=None,
            note=f"controller mismatch: trace is '{trace.controller}', not 'alg2'",
        )
    if not solution.feasible:
        return CertifyReport(
            q_gap=None, lambda_gap=None, passed=None, note="reference QP infeasible"
        )
    cidx = np.nonzero(trace.controlled)[0]
    q_gap = float(np.max(np.abs(trace.q[-1, cidx] - solution.q_star)))
    lam_end = np.concatenate([trace.lam_hi[-1, cidx], trace.lam_lo[-1, cidx]])
    lam_star = np.concatenate([solution.lambda_hi_star, solution.lambda_lo_star])
    lambda_gap = float(np.max(np.abs(lam_end - lam_star)))
    return CertifyReport(
        q_gap=q_gap, lambda_gap=lambda_gap,
        passed=bool(q_gap <= tol and lambda_gap <= tol),
    )
