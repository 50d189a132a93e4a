"""Online Newton step over the product of two unit balls.

State carries the curvature matrix A_t = eps*I + sum of gradient outer
products together with its maintained inverse (rank-one Woodbury updates,
periodically re-verified against direct inversion).  A round applies the
rank-one update, takes the Newton step params - (1/gamma) * A^{-1} grad, and
projects back onto ball x ball in the A-induced norm by projected gradient
descent.  State objects are mutable and must stay confined to a single trial;
update functions mutate in place and return the same object.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .likelihood import ParamPair
from .link import PricingConstants

# Maintained-inverse drift policy: check every RESYNC_EVERY rank-one updates,
# re-invert when ||A A^{-1} - I||_inf exceeds RESYNC_TOL.
RESYNC_EVERY = 512
RESYNC_TOL = 1e-6

# A-norm projection loop bounds.
PROJECTION_MAX_STEPS = 10_000
PROJECTION_MOVE_TOL = 1e-10
_POWER_ITERATIONS = 50


class OnsError(RuntimeError):
    """Numerical failure inside the Newton-step machinery."""


@dataclass
class OnsState:
    """Mutable per-trial optimizer state (parameters, A, maintained inverse)."""

    params: ParamPair
    a_matrix: np.ndarray
    a_inv: np.ndarray
    gamma: float
    epsilon: float
    step_count: int = 0
    update_count: int = 0
    projection_failures: int = 0
    last_projection_residual: float = 0.0

    def copy(self) -> "OnsState":
        return OnsState(
            params=ParamPair(self.params.theta.copy(), self.params.eta.copy()),
            a_matrix=self.a_matrix.copy(),
            a_inv=self.a_inv.copy(),
            gamma=self.gamma,
            epsilon=self.epsilon,
            step_count=self.step_count,
            update_count=self.update_count,
            projection_failures=self.projection_failures,
            last_projection_residual=self.last_projection_residual,
        )


def default_gamma_epsilon(constants: PricingConstants) -> tuple[float, float]:
    """Worst-case step parameters gamma = min{1/(4GD), c_e}/2, eps = 1/(gamma D)^2."""
    gamma = 0.5 * min(1.0 / (4.0 * constants.g_bound * constants.d_diam), constants.c_e)
    return gamma, 1.0 / (gamma**2 * constants.d_diam**2)


def ons_init(
    constants: PricingConstants,
    d: int,
    start: ParamPair,
    gamma: float | None = None,
    epsilon: float | None = None,
) -> OnsState:
    """Fresh state at `start` with A_0 = epsilon * I on the 2d-dim stacked space.

    By default gamma = min{1/(4*G*D), c_e}/2 and epsilon = 1/(gamma^2 D^2)
    with G = g_bound and D = d_diam; both can be overridden explicitly (the
    defaults are extremely conservative for desk-scale horizons).
    """
    if start.d != d:
        raise ValueError(f"start has block dimension {start.d}, expected {d}")
    default_gamma, _ = default_gamma_epsilon(constants)
    if gamma is None:
        gamma = default_gamma
    if epsilon is None:
        epsilon = 1.0 / (gamma**2 * constants.d_diam**2)
    if not (gamma > 0.0 and epsilon > 0.0):
        raise ValueError(f"gamma and epsilon must be positive, got {gamma}, {epsilon}")
    n = 2 * d
    return OnsState(
        params=start,
        a_matrix=epsilon * np.eye(n),
        a_inv=(1.0 / epsilon) * np.eye(n),
        gamma=float(gamma),
        epsilon=float(epsilon),
    )


def woodbury_update(state: OnsState, grad: np.ndarray) -> OnsState:
    """Rank-one update A += grad grad' with O(d^2) maintenance of A^{-1}."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (state.a_matrix.shape[0],):
        raise ValueError(f"gradient shape {grad.shape} does not match A {state.a_matrix.shape}")
    state.a_matrix += np.outer(grad, grad)
    ag = state.a_inv @ grad
    denom = 1.0 + float(grad @ ag)
    if denom <= 0.0 or not math.isfinite(denom):
        # A is PSD so this is purely numerical; fall back to direct inversion.
        state.a_inv = np.linalg.inv(state.a_matrix)
    else:
        state.a_inv -= np.outer(ag, ag) / denom
    state.update_count += 1
    if state.update_count % RESYNC_EVERY == 0:
        drift = np.abs(state.a_matrix @ state.a_inv - np.eye(state.a_matrix.shape[0])).max()
        if drift > RESYNC_TOL:
            state.a_inv = np.linalg.inv(state.a_matrix)
    return state


def newton_step(state: OnsState, grad: np.ndarray) -> np.ndarray:
    """Unconstrained iterate params - (1/gamma) * A^{-1} grad (no mutation)."""
    grad = np.asarray(grad, dtype=float)
    return state.params.vec - (state.a_inv @ grad) / state.gamma


def _project_blocks(v: np.ndarray, d: int) -> np.ndarray:
    """Euclidean projection onto ball x ball, block-wise radial shrink."""
    out = v.copy()
    for block in (out[:d], out[d:]):
        nrm = float(np.linalg.norm(block))
        if nrm > 1.0:
            block /= nrm
    return out


def _max_eigenvalue(a: np.ndarray) -> float:
    """Largest eigenvalue of symmetric PSD a by fixed-iteration power method."""
    n = a.shape[0]
    v = np.full(n, 1.0 / math.sqrt(n))
    lam = 1.0
    for _ in range(_POWER_ITERATIONS):
        w = a @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 1.0
        v = w / lam
    return lam


def a_norm_project(state: OnsState, point: np.ndarray) -> ParamPair:
    """Projection of `point` onto ball x ball in the metric induced by A.

    Minimizes (z - point)' A (z - point) by projected gradient descent with
    step 1/lambda_max(A).  Terminates when the iterate moves less than
    PROJECTION_MOVE_TOL or after PROJECTION_MAX_STEPS steps; non-convergence
    is reported through a warning and counted on the state.
    """
    point = np.asarray(point, dtype=float)
    n = state.a_matrix.shape[0]
    if point.shape != (n,):
        raise ValueError(f"point shape {point.shape} does not match A {state.a_matrix.shape}")
    d = n // 2
    if point[:d] @ point[:d] <= 1.0 and point[d:] @ point[d:] <= 1.0:
        state.last_projection_residual = 0.0
        return ParamPair.from_vec(point)
    a = state.a_matrix
    step = 1.0 / _max_eigenvalue(a)
    b = a @ point
    z = _project_blocks(point, d)
    move_tol_sq = PROJECTION_MOVE_TOL * PROJECTION_MOVE_TOL
    converged = False
    move_sq = 0.0
    for _ in range(PROJECTION_MAX_STEPS):
        z_new = z - step * (a @ z - b)
        zb = z_new[:d]
        nsq = zb @ zb
        if nsq > 1.0:
            zb /= math.sqrt(nsq)
        zb = z_new[d:]
        nsq = zb @ zb
        if nsq > 1.0:
            zb /= math.sqrt(nsq)
        diff = z_new - z
        z = z_new
        move_sq = diff @ diff
        if move_sq <= move_tol_sq:
            converged = True
            break
    # The fixed-point movement of the last step; zero only counts as
    # converged when the loop hit the tolerance.
    state.last_projection_residual = math.sqrt(move_sq)
    if not converged:
        state.projection_failures += 1
        residual = float(np.linalg.norm(a @ z - b))
        warnings.warn(
            f"A-norm projection stopped at {PROJECTION_MAX_STEPS} steps "
            f"(gradient residual {residual:.3e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return ParamPair.from_vec(z)


def ons_round(state: OnsState, grad: np.ndarray) -> OnsState:
    """One full round: rank-one update, Newton step, A-norm projection."""
    woodbury_update(state, grad)
    state.params = a_norm_project(state, newton_step(state, grad))
    state.step_count += 1
    return state


def nll_regret_bound(constants: PricingConstants, d: int, horizon: int) -> float:
    """Cumulative-loss gap guarantee 5 * (1/c_e + G*D) * d * ln(horizon)."""
    return 5.0 * (1.0 / constants.c_e + constants.g_bound * constants.d_diam) * d * math.log(horizon)
