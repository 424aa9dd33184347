"""Pinhole camera with radial-tangential distortion, two-view point
triangulation, and the point reprojection residual shared by the event
and image channels.

Feature observations are kept in undistorted normalized-plane
coordinates (undistortion happens once at ingestion); the residual is
therefore the difference of normalized coordinates and measurement
noise in pixels maps through the focal length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CheiralityError, DegenerateGeometryError, ParameterError
from .geometry import Pose, skew

_UNDISTORT_ITERS = 8


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    width: int = 346
    height: int = 240

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError("focal lengths must be positive")

    @property
    def has_distortion(self) -> bool:
        return any(c != 0.0 for c in (self.k1, self.k2, self.p1, self.p2))

    def distort(self, xy: np.ndarray) -> np.ndarray:
        """Apply the radial-tangential model on normalized coordinates (N, 2)."""
        x, y = xy[..., 0], xy[..., 1]
        r2 = x * x + y * y
        radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
        xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x)
        yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y
        return np.stack([xd, yd], axis=-1)

    def undistort(self, xy_dist: np.ndarray) -> np.ndarray:
        """Invert ``distort`` by fixed-point iteration (8 rounds)."""
        xy_dist = np.asarray(xy_dist, dtype=float)
        xy = xy_dist.copy()
        for _ in range(_UNDISTORT_ITERS):
            delta = self.distort(xy) - xy
            xy = xy_dist - delta
        return xy

    def project(self, point_cam: np.ndarray) -> np.ndarray:
        """Project one camera-frame point (meters) to pixels."""
        point_cam = np.asarray(point_cam, dtype=float)
        if point_cam[2] <= 0:
            raise CheiralityError(f"point depth must be positive, got {point_cam[2]}")
        return self.project_many(point_cam[None, :])[0]

    def project_many(self, points_cam: np.ndarray) -> np.ndarray:
        """Project (N, 3) camera-frame points; caller guarantees z > 0."""
        xy = points_cam[:, :2] / points_cam[:, 2:3]
        xyd = self.distort(xy)
        return np.stack(
            [self.fx * xyd[:, 0] + self.cx, self.fy * xyd[:, 1] + self.cy], axis=-1
        )

    def pixel_to_normalized(self, pixel: np.ndarray) -> np.ndarray:
        pixel = np.asarray(pixel, dtype=float)
        return np.stack(
            [
                (pixel[..., 0] - self.cx) / self.fx,
                (pixel[..., 1] - self.cy) / self.fy,
            ],
            axis=-1,
        )

    def undistort_pixels(self, pixels: np.ndarray) -> np.ndarray:
        """Pixels -> undistorted normalized-plane coordinates."""
        xy = self.pixel_to_normalized(pixels)
        if not self.has_distortion:
            return xy
        return self.undistort(xy)

    def back_project(self, pixel: np.ndarray, inv_depth: float) -> np.ndarray:
        """Pixel + inverse depth -> camera-frame point at depth 1/inv_depth."""
        if inv_depth <= 0:
            raise ParameterError(f"inverse depth must be positive, got {inv_depth}")
        xy = self.undistort_pixels(np.asarray(pixel, dtype=float))
        return np.array([xy[0], xy[1], 1.0]) / inv_depth


@dataclass
class PointObservation:
    """One sighting of a point feature, in undistorted normalized coordinates."""

    keyframe_id: int
    u: float
    v: float
    raw_u: float = np.nan
    raw_v: float = np.nan

    @property
    def normalized(self) -> np.ndarray:
        return np.array([self.u, self.v])

    @staticmethod
    def from_pixel(keyframe_id: int, pixel, camera: CameraModel) -> "PointObservation":
        uv = camera.undistort_pixels(np.asarray(pixel, dtype=float))
        return PointObservation(keyframe_id, uv[0], uv[1], float(pixel[0]), float(pixel[1]))


def _perspective(p: np.ndarray):
    """Perspective division and its Jacobian w.r.t. the 3D point."""
    x, y, z = p
    J = np.array([[1.0 / z, 0.0, -x / z**2], [0.0, 1.0 / z, -y / z**2]])
    return np.array([x / z, y / z]), J


def point_reprojection_residual(
    obs_i: PointObservation,
    obs_k: PointObservation,
    state_i,
    state_k,
    body_from_cam: Pose,
    inv_depth: float,
    with_jacobians: bool = False,
):
    """Reprojection residual of a point anchored at keyframe ``i`` and
    observed at keyframe ``k``: observed minus predicted normalized
    coordinates.

    ``state_i``/``state_k`` expose ``p_w`` and rotation ``R_w`` (body to
    world).  Returns the 2-vector residual, or
    ``(residual, valid, jacobians)`` when ``with_jacobians`` is set, where
    ``jacobians`` maps to d(residual)/d(dp_i, dtheta_i, dp_k, dtheta_k,
    dtheta_ext, inv_depth) with rotation perturbations applied on the
    right.  ``valid`` is False when the prediction lands behind camera k
    (the factor is then dropped).
    """
    if inv_depth <= 0:
        raise ParameterError("inverse depth must be positive")

    R_bc, t_bc = body_from_cam.R, body_from_cam.t
    R_i, p_i = state_i.R_w, state_i.p_w
    R_k, p_k = state_k.R_w, state_k.p_w

    f_ci = np.array([obs_i.u, obs_i.v, 1.0]) / inv_depth
    f_bi = R_bc @ f_ci + t_bc
    f_w = R_i @ f_bi + p_i
    f_bk = R_k.T @ (f_w - p_k)
    f_ck = R_bc.T @ (f_bk - t_bc)

    valid = f_ck[2] > 1e-6
    if not valid:
        bad = np.zeros(2)
        if with_jacobians:
            return bad, False, {}
        return bad, False

    pred, J_proj = _perspective(f_ck)
    residual = np.array([obs_k.u, obs_k.v]) - pred
    if not with_jacobians:
        return residual, True

    # residual = obs - h(f_ck); chain d(f_ck) back through each frame change
    d_ck = -J_proj  # d(residual)/d(f_ck)
    d_bk = d_ck @ R_bc.T  # through f_ck = R_bc^T (f_bk - t_bc)
    d_w = d_bk @ R_k.T

    J = {
        "dp_i": d_w,
        "dtheta_i": d_w @ (-R_i @ skew(f_bi)),
        "dp_k": -d_w,
        "dtheta_k": d_bk @ skew(f_bk),
        "inv_depth": (d_w @ (R_i @ R_bc) @ (-f_ci / inv_depth)).reshape(2, 1),
        # extrinsic enters twice (anchor and observer legs)
        "dtheta_ext": d_w @ (R_i @ R_bc) @ (-skew(f_ci)) + d_ck @ skew(R_bc.T @ (f_bk - t_bc)),
        "dt_ext": d_w @ R_i + d_ck @ (-R_bc.T),
    }
    return residual, True, J


def triangulate_point(
    obs_i: PointObservation,
    obs_k: PointObservation,
    world_from_cam_i: Pose,
    world_from_cam_k: Pose,
    min_parallax_rad: float = np.deg2rad(0.5),
) -> float:
    """Two-view DLT triangulation; returns inverse depth in camera ``i``.

    Raises DegenerateGeometryError when the observation rays subtend less
    than ``min_parallax_rad`` and CheiralityError when the solution lies
    behind either camera.  The result is clamped to [1e-3, 1e3] 1/m.
    """
    Ti = world_from_cam_i.inverse().matrix()[:3, :]
    Tk = world_from_cam_k.inverse().matrix()[:3, :]

    ray_i = np.array([obs_i.u, obs_i.v, 1.0])
    ray_k = np.array([obs_k.u, obs_k.v, 1.0])
    ray_i_w = world_from_cam_i.R @ (ray_i / np.linalg.norm(ray_i))
    ray_k_w = world_from_cam_k.R @ (ray_k / np.linalg.norm(ray_k))
    cos_angle = np.clip(np.dot(ray_i_w, ray_k_w), -1.0, 1.0)
    if np.arccos(cos_angle) < min_parallax_rad:
        raise DegenerateGeometryError(
            "observation rays are nearly parallel; triangulation is degenerate"
        )

    A = np.vstack(
        [
            ray_i[0] * Ti[2] - Ti[0],
            ray_i[1] * Ti[2] - Ti[1],
            ray_k[0] * Tk[2] - Tk[0],
            ray_k[1] * Tk[2] - Tk[1],
        ]
    )
    _, _, vt = np.linalg.svd(A)
    Xh = vt[-1]
    if abs(Xh[3]) < 1e-12:
        raise DegenerateGeometryError("triangulated point at infinity")
    X = Xh[:3] / Xh[3]

    z_i = (Ti @ np.append(X, 1.0))[2]
    z_k = (Tk @ np.append(X, 1.0))[2]
    if z_i <= 0 or z_k <= 0:
        raise CheiralityError("triangulated point behind a camera")
    return float(np.clip(1.0 / z_i, 1e-3, 1e3))
