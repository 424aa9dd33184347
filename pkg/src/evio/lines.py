"""Plücker-coordinate line geometry: two-plane triangulation, frame
transforms, projection to the normalized image plane, the endpoint
point-to-line residual, and the minimal four-parameter orthonormal
parametrization used by the optimizer.

A line is (n, d): d is the direction, n the moment (p x d for any point
p on the line), with the constraint n . d = 0.  Projection to the
normalized plane of a camera reduces to the moment vector, so the
projected line l satisfies x^T l = 0 for every projected line point x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .geometry import Pose, skew, so3_exp, so3_log


@dataclass
class PluckerLine:
    n: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=float).reshape(3)
        self.d = np.asarray(self.d, dtype=float).reshape(3)
        scale = np.linalg.norm(self.n) * np.linalg.norm(self.d)
        if np.linalg.norm(self.n) == 0 and np.linalg.norm(self.d) == 0:
            raise DegenerateGeometryError("Plücker coordinates are all zero")
        if scale > 0 and abs(np.dot(self.n, self.d)) > 1e-9 * scale:
            raise DegenerateGeometryError(
                f"Plücker constraint violated: n.d = {np.dot(self.n, self.d):g}"
            )

    @property
    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.n, self.d])

    def normalized(self) -> "PluckerLine":
        """Scale so |n|^2 + |d|^2 = 1 (the orthonormal convention)."""
        s = np.linalg.norm(self.as_vector)
        return PluckerLine(self.n / s, self.d / s)

    @staticmethod
    def through_points(p1: np.ndarray, p2: np.ndarray) -> "PluckerLine":
        p1 = np.asarray(p1, dtype=float)
        p2 = np.asarray(p2, dtype=float)
        d = p2 - p1
        if np.linalg.norm(d) < 1e-12:
            raise DegenerateGeometryError("coincident points define no line")
        return PluckerLine(np.cross(p1, p2), d)

    def point_distance(self, p: np.ndarray) -> float:
        """Euclidean distance of a 3D point to the line."""
        d_unit = self.d / np.linalg.norm(self.d)
        p0 = np.cross(self.d, self.n) / np.dot(self.d, self.d)  # closest to origin
        r = np.asarray(p, dtype=float) - p0
        return float(np.linalg.norm(r - np.dot(r, d_unit) * d_unit))


@dataclass
class OrthonormalLine:
    """Minimal parametrization: rotation vector of the (n, d, n x d)
    frame plus the angle phi with tan(phi) = |d| / |n|."""

    theta: np.ndarray
    phi: float

    @property
    def frame(self) -> np.ndarray:
        return so3_exp(np.asarray(self.theta, dtype=float))


@dataclass
class LineObservation:
    """One sighting of a line: homogeneous endpoints on the undistorted
    normalized plane plus the binary band descriptor."""

    keyframe_id: int
    S: np.ndarray
    E: np.ndarray
    descriptor: np.ndarray | None = None

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float).reshape(3)
        self.E = np.asarray(self.E, dtype=float).reshape(3)


def triangulate_line(
    obs_i: LineObservation,
    obs_k: LineObservation,
    world_from_cam_i: Pose,
    world_from_cam_k: Pose,
    min_plane_angle_rad: float = np.deg2rad(1.0),
) -> PluckerLine:
    """Intersect the two observation planes (camera center + segment)
    via the dual Plücker matrix L* = pi_i pi_k^T - pi_k pi_i^T."""
    pi_i = _observation_plane(obs_i, world_from_cam_i)
    pi_k = _observation_plane(obs_k, world_from_cam_k)

    n_i, n_k = pi_i[:3], pi_k[:3]
    cos_angle = abs(np.dot(n_i, n_k)) / (np.linalg.norm(n_i) * np.linalg.norm(n_k))
    if np.arccos(np.clip(cos_angle, 0.0, 1.0)) < min_plane_angle_rad:
        raise DegenerateGeometryError("observation planes are nearly parallel")

    dual = np.outer(pi_i, pi_k) - np.outer(pi_k, pi_i)
    d = np.array([dual[2, 1], dual[0, 2], dual[1, 0]])
    n = dual[:3, 3]
    return PluckerLine(n, d)


def _observation_plane(obs: LineObservation, world_from_cam: Pose) -> np.ndarray:
    """World plane through the camera center containing the viewed segment."""
    normal_cam = np.cross(obs.S, obs.E)
    if np.linalg.norm(normal_cam) < 1e-12:
        raise DegenerateGeometryError("line observation endpoints coincide")
    normal_w = world_from_cam.R @ normal_cam
    center = world_from_cam.t
    return np.append(normal_w, -np.dot(normal_w, center))


def plucker_transform_matrix(target_from_source: Pose) -> np.ndarray:
    """6x6 matrix mapping (n, d) between frames: n' = Rn + [t]x R d, d' = Rd."""
    R, t = target_from_source.R, target_from_source.t
    M = np.zeros((6, 6))
    M[:3, :3] = R
    M[:3, 3:] = skew(t) @ R
    M[3:, 3:] = R
    return M


def transform_line(line_w: PluckerLine, world_from_cam: Pose) -> PluckerLine:
    """Map a world-frame line into the camera frame of ``world_from_cam``."""
    M = plucker_transform_matrix(world_from_cam.inverse())
    v = M @ line_w.as_vector
    return PluckerLine(v[:3], v[3:])


def project_line(line_cam: PluckerLine) -> np.ndarray:
    """Project a camera-frame line to the normalized plane: l = n.

    Any point of the 3D line projects onto l (x^T l = 0); residuals live
    in normalized coordinates so the line intrinsic matrix is identity.
    """
    if np.linalg.norm(line_cam.n) < 1e-12:
        raise DegenerateGeometryError("line passes through the camera center")
    return line_cam.n.copy()


def point_line_distance(m: np.ndarray, l: np.ndarray) -> float:
    """Signed distance of homogeneous image point m to line l."""
    return float(np.dot(m, l) / np.hypot(l[0], l[1]))


def line_residual(
    obs_k: LineObservation,
    line_w: PluckerLine,
    state_k,
    body_from_cam: Pose,
    with_jacobians: bool = False,
):
    """Endpoint distances of an observation to the projected line.

    Returns (residual, valid) or (residual, valid, jacobians); jacobians
    hold d(residual)/d(dp_k, dtheta_k, dline) with ``dline`` the
    4-vector orthonormal perturbation evaluated at the normalized line.
    ``valid`` is False when the line projects degenerately (residual
    dropped by the caller).
    """
    world_from_body = Pose(state_k.q_w, state_k.p_w)
    world_from_cam = world_from_body * body_from_cam

    # scale invariance lets us work at the unit representative, which is
    # also where the orthonormal-perturbation jacobian lives
    line_w = line_w.normalized()
    line_c = transform_line(line_w, world_from_cam)
    if np.linalg.norm(line_c.n) < 1e-12:
        if with_jacobians:
            return np.zeros(2), False, {}
        return np.zeros(2), False
    l = line_c.n
    ln = np.hypot(l[0], l[1])
    if ln < 1e-12:
        if with_jacobians:
            return np.zeros(2), False, {}
        return np.zeros(2), False

    residual = np.array(
        [np.dot(obs_k.S, l) / ln, np.dot(obs_k.E, l) / ln]
    )
    if not with_jacobians:
        return residual, True

    # d(residual)/dl for both endpoints
    dr_dl = np.zeros((2, 3))
    for row, m in enumerate((obs_k.S, obs_k.E)):
        dr_dl[row] = m / ln
        dr_dl[row, :2] -= np.dot(m, l) * l[:2] / ln**3

    # l = n_c; go through the body frame so the pose perturbation is local
    M_cb = plucker_transform_matrix(body_from_cam.inverse())
    body_from_world = world_from_body.inverse()
    M_bw = plucker_transform_matrix(body_from_world)
    lb = M_bw @ line_w.as_vector
    n_b, d_b = lb[:3], lb[3:]

    # right-perturbing the body orientation rotates both body-frame vectors:
    # n_b' = exp(-dtheta) n_b, d_b' = exp(-dtheta) d_b
    d_lb = np.zeros((6, 6))
    d_lb[:3, 3:] = skew(n_b)
    d_lb[3:, 3:] = skew(d_b)
    # translating the body shifts the moment: dn_b = [d_b]x R_bw dp
    d_lb[:3, :3] = skew(d_b) @ body_from_world.R

    dl_dpose = (M_cb @ d_lb)[:3, :]  # only n_c feeds the residual

    # orthonormal perturbation at the unit-norm world line
    cphi, sphi = np.linalg.norm(line_w.n), np.linalg.norm(line_w.d)
    if cphi < 1e-12 or sphi < 1e-12:
        return residual, False, {}
    u1 = line_w.n / cphi
    u2 = line_w.d / sphi
    u3 = np.cross(u1, u2)
    d_lw = np.zeros((6, 4))
    d_lw[:3, 1] = -cphi * u3
    d_lw[:3, 2] = cphi * u2
    d_lw[:3, 3] = -sphi * u1
    d_lw[3:, 0] = sphi * u3
    d_lw[3:, 2] = -sphi * u1
    d_lw[3:, 3] = cphi * u2

    M_cw = plucker_transform_matrix(world_from_cam.inverse())
    dl_dline = (M_cw @ d_lw)[:3, :]

    J = {
        "dp_k": dr_dl @ dl_dpose[:, :3],
        "dtheta_k": dr_dl @ dl_dpose[:, 3:],
        "dline": dr_dl @ dl_dline,
    }
    return residual, True, J


def plucker_to_orthonormal(line: PluckerLine) -> OrthonormalLine:
    """Build the orthonormal (U, phi) parametrization of a line."""
    n_norm = np.linalg.norm(line.n)
    d_norm = np.linalg.norm(line.d)
    cross = np.cross(line.n, line.d)
    if np.linalg.norm(cross) < 1e-12 * max(n_norm * d_norm, 1.0) or n_norm == 0:
        raise DegenerateGeometryError(
            "degenerate line: moment and direction do not span a frame"
        )
    U = np.stack(
        [line.n / n_norm, line.d / d_norm, cross / np.linalg.norm(cross)], axis=1
    )
    return OrthonormalLine(so3_log(U), float(np.arctan2(d_norm, n_norm)))


def orthonormal_to_plucker(o: OrthonormalLine) -> PluckerLine:
    """Inverse of ``plucker_to_orthonormal`` up to positive scale
    (returns the |n|^2 + |d|^2 = 1 representative)."""
    U = o.frame
    return PluckerLine(np.cos(o.phi) * U[:, 0], np.sin(o.phi) * U[:, 1])


def update_orthonormal(o: OrthonormalLine, delta: np.ndarray) -> OrthonormalLine:
    """Retract a 4-vector increment: U <- U exp(delta[:3]), phi += delta[3]."""
    delta = np.asarray(delta, dtype=float).reshape(4)
    U = o.frame @ so3_exp(delta[:3])
    return OrthonormalLine(so3_log(U), float(o.phi + delta[3]))
