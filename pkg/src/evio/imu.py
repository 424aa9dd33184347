"""IMU preintegration and the 15-dimensional inter-keyframe residual.

Measurements are held constant over each sample interval (zero-order
hold).  Within an interval the relative-motion terms are integrated in
closed form for the constant input — quaternion exponential for the
rotation, the SO(3) left Jacobian and its double integral for velocity
and position — so the only approximation left is the hold itself.

The preintegrated terms (alpha, beta, gamma) depend only on the
measurements and the linearization biases, never on the absolute state;
bias Jacobians allow first-order correction when the estimated biases
move, and the 15x15 covariance (alpha, beta, theta, b_a, b_g order)
supplies the residual weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OrderingError, ParameterError
from .geometry import (
    Pose,
    quat_exp,
    quat_multiply,
    quat_normalize,
    quat_to_rotation,
    skew,
    so3_double_integral,
    so3_left_jacobian,
)

GRAVITY = 9.81


@dataclass
class ImuSample:
    t: float
    omega_hat: np.ndarray
    accel_hat: np.ndarray

    def __post_init__(self):
        self.omega_hat = np.asarray(self.omega_hat, dtype=float).reshape(3)
        self.accel_hat = np.asarray(self.accel_hat, dtype=float).reshape(3)


@dataclass
class ImuNoise:
    sigma_g: float = 1e-3
    sigma_a: float = 1e-2
    sigma_bg: float = 1e-5
    sigma_ba: float = 1e-4

    def __post_init__(self):
        if min(self.sigma_g, self.sigma_a, self.sigma_bg, self.sigma_ba) <= 0:
            raise ParameterError("noise densities must be positive")


@dataclass
class KeyframeState:
    """Body state: position, orientation (body to world), velocity, biases."""

    p_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q_w: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    v_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_g: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.p_w = np.asarray(self.p_w, dtype=float).reshape(3).copy()
        self.q_w = quat_normalize(np.asarray(self.q_w, dtype=float).reshape(4))
        self.v_w = np.asarray(self.v_w, dtype=float).reshape(3).copy()
        self.b_a = np.asarray(self.b_a, dtype=float).reshape(3).copy()
        self.b_g = np.asarray(self.b_g, dtype=float).reshape(3).copy()

    @property
    def R_w(self) -> np.ndarray:
        return quat_to_rotation(self.q_w)

    @property
    def pose(self) -> Pose:
        return Pose(self.q_w, self.p_w)

    def copy(self) -> "KeyframeState":
        return KeyframeState(self.p_w, self.q_w, self.v_w, self.b_a, self.b_g)

    def retract(self, delta: np.ndarray) -> "KeyframeState":
        """Apply [dp, dtheta, dv, dba, dbg] (15,) on the tangent."""
        return KeyframeState(
            self.p_w + delta[0:3],
            quat_multiply(self.q_w, quat_exp(delta[3:6])),
            self.v_w + delta[6:9],
            self.b_a + delta[9:12],
            self.b_g + delta[12:15],
        )


@dataclass
class ImuPreintegration:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    dt_total: float
    b_a_lin: np.ndarray
    b_g_lin: np.ndarray
    J_alpha_ba: np.ndarray
    J_alpha_bg: np.ndarray
    J_beta_ba: np.ndarray
    J_beta_bg: np.ndarray
    J_gamma_bg: np.ndarray
    covariance: np.ndarray

    def information(self, floor: float = 1e-12) -> np.ndarray:
        """Inverse covariance, regularized to stay positive definite."""
        cov = self.covariance + floor * np.eye(15)
        return np.linalg.inv(cov)


def integrate(
    samples: list[ImuSample],
    b_a_lin: np.ndarray,
    b_g_lin: np.ndarray,
    noise: ImuNoise,
) -> ImuPreintegration:
    """Preintegrate consecutive-sample intervals with held measurements.

    ``samples`` must be strictly increasing in time; sample ``i`` is held
    over [t_i, t_{i+1}).  Covariance and bias Jacobians propagate by
    first-order error-state linearization of the same recursion.
    """
    if len(samples) < 1:
        raise ParameterError("need at least one IMU sample")
    times = np.array([s.t for s in samples])
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise OrderingError("IMU sample timestamps must be strictly increasing")

    b_a_lin = np.asarray(b_a_lin, dtype=float).reshape(3)
    b_g_lin = np.asarray(b_g_lin, dtype=float).reshape(3)

    alpha = np.zeros(3)
    beta = np.zeros(3)
    gamma = np.array([1.0, 0.0, 0.0, 0.0])
    J_a_ba = np.zeros((3, 3))
    J_a_bg = np.zeros((3, 3))
    J_b_ba = np.zeros((3, 3))
    J_b_bg = np.zeros((3, 3))
    J_g_bg = np.zeros((3, 3))
    P = np.zeros((15, 15))
    # continuous-time noise densities; discretized per interval by 1/dt
    Qc = np.zeros((12, 12))
    Qc[0:3, 0:3] = noise.sigma_a**2 * np.eye(3)
    Qc[3:6, 3:6] = noise.sigma_g**2 * np.eye(3)
    Qc[6:9, 6:9] = noise.sigma_ba**2 * np.eye(3)
    Qc[9:12, 9:12] = noise.sigma_bg**2 * np.eye(3)

    for i in range(len(samples) - 1):
        dt = float(times[i + 1] - times[i])
        w = samples[i].omega_hat - b_g_lin
        a = samples[i].accel_hat - b_a_lin

        R_i = quat_to_rotation(gamma)
        theta = w * dt
        Jl = so3_left_jacobian(theta)
        Kd = so3_double_integral(theta)
        R_step = quat_to_rotation(quat_exp(theta))

        d_alpha = R_i @ (Kd @ a) * dt * dt
        d_beta = R_i @ (Jl @ a) * dt

        # error-state transition (alpha, beta, theta, b_a, b_g)
        F = np.eye(15)
        F[0:3, 3:6] = dt * np.eye(3)
        F[0:3, 6:9] = -R_i @ skew(Kd @ a) * dt * dt
        F[0:3, 9:12] = -R_i @ Kd * dt * dt
        F[3:6, 6:9] = -R_i @ skew(Jl @ a) * dt
        F[3:6, 9:12] = -R_i @ Jl * dt
        F[6:9, 6:9] = R_step.T
        F[6:9, 12:15] = -so3_left_jacobian(-theta) * dt

        G = np.zeros((15, 12))
        G[0:3, 0:3] = R_i @ Kd * dt * dt
        G[3:6, 0:3] = R_i @ Jl * dt
        G[6:9, 3:6] = so3_left_jacobian(-theta) * dt
        G[9:12, 6:9] = dt * np.eye(3)
        G[12:15, 9:12] = dt * np.eye(3)

        P = F @ P @ F.T + G @ (Qc / dt) @ G.T

        # bias jacobians follow the same linearization
        J_a_ba = J_a_ba + J_b_ba * dt - R_i @ Kd * dt * dt
        J_a_bg = J_a_bg + J_b_bg * dt - R_i @ skew(Kd @ a) @ J_g_bg * dt * dt
        J_b_ba = J_b_ba - R_i @ Jl * dt
        J_b_bg = J_b_bg - R_i @ skew(Jl @ a) @ J_g_bg * dt
        J_g_bg = R_step.T @ J_g_bg - so3_left_jacobian(-theta) * dt

        alpha = alpha + beta * dt + d_alpha
        beta = beta + d_beta
        gamma = quat_normalize(quat_multiply(gamma, quat_exp(theta)))

    return ImuPreintegration(
        alpha,
        beta,
        gamma,
        float(times[-1] - times[0]),
        b_a_lin,
        b_g_lin,
        J_a_ba,
        J_a_bg,
        J_b_ba,
        J_b_bg,
        J_g_bg,
        0.5 * (P + P.T),
    )


def correct_for_bias(pre: ImuPreintegration, b_a: np.ndarray, b_g: np.ndarray):
    """First-order corrected (alpha, beta, gamma) at new bias estimates."""
    dba = np.asarray(b_a, dtype=float) - pre.b_a_lin
    dbg = np.asarray(b_g, dtype=float) - pre.b_g_lin
    alpha = pre.alpha + pre.J_alpha_ba @ dba + pre.J_alpha_bg @ dbg
    beta = pre.beta + pre.J_beta_ba @ dba + pre.J_beta_bg @ dbg
    gamma = quat_normalize(
        quat_multiply(pre.gamma, quat_exp(pre.J_gamma_bg @ dbg))
    )
    return alpha, beta, gamma


def imu_residual(
    state_k: KeyframeState,
    state_k1: KeyframeState,
    pre: ImuPreintegration,
    gravity_w: np.ndarray,
    with_jacobians: bool = False,
):
    """15-vector residual [r_p, r_v, r_q, r_ba, r_bg] between two keyframe
    states bridged by a preintegration.

    The rotation block is twice the vector part of
    q_k^-1 * q_{k+1} * gamma_hat^-1 with the bias-corrected gamma_hat.
    With jacobians requested, returns (residual, J_k, J_k1) where each J
    is 15x15 over [dp, dtheta, dv, dba, dbg].
    """
    g = np.asarray(gravity_w, dtype=float).reshape(3)
    dt = pre.dt_total
    R_k = state_k.R_w

    alpha, beta, gamma = correct_for_bias(pre, state_k.b_a, state_k.b_g)

    dp = state_k1.p_w - state_k.p_w - state_k.v_w * dt - 0.5 * g * dt * dt
    dv = state_k1.v_w - state_k.v_w - g * dt
    r_p = R_k.T @ dp - alpha
    r_v = R_k.T @ dv - beta

    q_err = quat_multiply(
        quat_multiply(_quat_conj(state_k.q_w), state_k1.q_w), _quat_conj(gamma)
    )
    if q_err[0] < 0:
        q_err = -q_err
    r_q = 2.0 * q_err[1:]

    r_ba = state_k1.b_a - state_k.b_a
    r_bg = state_k1.b_g - state_k.b_g
    residual = np.concatenate([r_p, r_v, r_q, r_ba, r_bg])
    if not with_jacobians:
        return residual

    Qw, Qv = q_err[0], q_err[1:]
    W_plus = Qw * np.eye(3) + skew(Qv)  # d(2 vec(Q exp(w)))/dw
    W_minus = Qw * np.eye(3) - skew(Qv)  # d(2 vec(exp(-w) Q))/dw (negated below)
    R_gamma = quat_to_rotation(gamma)

    J_k = np.zeros((15, 15))
    J_k[0:3, 0:3] = -R_k.T
    J_k[0:3, 3:6] = skew(R_k.T @ dp)
    J_k[0:3, 6:9] = -R_k.T * dt
    J_k[0:3, 9:12] = -pre.J_alpha_ba
    J_k[0:3, 12:15] = -pre.J_alpha_bg
    J_k[3:6, 3:6] = skew(R_k.T @ dv)
    J_k[3:6, 6:9] = -R_k.T
    J_k[3:6, 9:12] = -pre.J_beta_ba
    J_k[3:6, 12:15] = -pre.J_beta_bg
    J_k[6:9, 3:6] = -W_minus
    J_k[6:9, 12:15] = -W_plus @ R_gamma @ pre.J_gamma_bg
    J_k[9:12, 9:12] = -np.eye(3)
    J_k[12:15, 12:15] = -np.eye(3)

    J_k1 = np.zeros((15, 15))
    J_k1[0:3, 0:3] = R_k.T
    J_k1[3:6, 6:9] = R_k.T
    J_k1[6:9, 3:6] = W_plus @ R_gamma
    J_k1[9:12, 9:12] = np.eye(3)
    J_k1[12:15, 12:15] = np.eye(3)
    return residual, J_k, J_k1


def _quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def propagate_state(
    state: KeyframeState,
    sample: ImuSample,
    gravity_w: np.ndarray,
    dt: float,
) -> KeyframeState:
    """Advance the state by one held-measurement interval.

    Uses the same exact constant-input integrals as ``integrate`` so a
    chain of propagations matches one preintegrated interval applied to
    the state.  Biases are held.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    g = np.asarray(gravity_w, dtype=float).reshape(3)
    w = sample.omega_hat - state.b_g
    a = sample.accel_hat - state.b_a
    R = state.R_w
    theta = w * dt

    a_int = R @ (so3_left_jacobian(theta) @ a)  # average world acceleration
    a_dbl = R @ (so3_double_integral(theta) @ a)
    p = state.p_w + state.v_w * dt + 0.5 * g * dt * dt + a_dbl * dt * dt
    v = state.v_w + g * dt + a_int * dt
    q = quat_normalize(quat_multiply(state.q_w, quat_exp(theta)))
    return KeyframeState(p, q, v, state.b_a, state.b_g)
