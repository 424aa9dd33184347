"""Synthetic world, trajectory, event/frame/IMU generation.

Events follow the contrast-threshold crossing model: each world feature
(point blob or segment ridge) contributes a smooth log-intensity bump;
whenever a pixel's log intensity moves by the threshold since its last
event, an event of the matching sign is emitted with its timestamp
linearly interpolated between render steps.

IMU measurements are fitted per sample interval so that zero-order-hold
integration reproduces the trajectory: the gyro reading is the log of
the relative rotation over the interval and the accelerometer reading
solves the velocity increment exactly.  They match the instantaneous
body rates to O(dt).  The ground-truth state file is produced by
propagating the noise-free measurement stream, which makes measurements
and ground truth mutually consistent to floating-point-level precision
in rotation and velocity (position to ~1e-8 per interval).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel
from .errors import ParameterError
from .geometry import Pose, rotation_to_quat, so3_left_jacobian, so3_log
from .imu import GRAVITY, ImuNoise, ImuSample, KeyframeState, propagate_state


@dataclass
class World:
    """Static scene: 3D points and line segments with log-contrast."""

    points: np.ndarray  # (Np, 3) meters
    segments: np.ndarray  # (Ns, 2, 3) meters, endpoint pairs
    point_contrast: np.ndarray  # (Np,) log-intensity step
    segment_contrast: np.ndarray  # (Ns,)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.segments = np.asarray(self.segments, dtype=float).reshape(-1, 2, 3)
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.segments))):
            raise ParameterError("world geometry must be finite")
        lengths = np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1)
        if len(lengths) and lengths.min() < 1e-6:
            raise ParameterError("degenerate world segment")


def default_world(seed: int = 0, n_points: int = 200, n_segments: int = 40) -> World:
    """Feature wall about 3 m in front of the origin-centered workspace."""
    rng = np.random.default_rng(seed)
    pts = np.stack(
        [
            rng.uniform(-3.2, 3.2, n_points),
            rng.uniform(-1.9, 1.9, n_points),
            rng.uniform(2.5, 3.5, n_points),
        ],
        axis=1,
    )
    segs = []
    for _ in range(n_segments):
        anchor = np.array(
            [rng.uniform(-3.0, 3.0), rng.uniform(-1.7, 1.7), rng.uniform(2.6, 3.4)]
        )
        if rng.random() < 0.5:
            direction = np.array([1.0, 0.0, 0.0])
        else:
            direction = np.array([0.0, 1.0, 0.0])
        if rng.random() < 0.25:
            direction = np.array([rng.normal(), rng.normal(), 0.0])
            direction /= np.linalg.norm(direction)
        length = rng.uniform(0.6, 1.6)
        segs.append([anchor - 0.5 * length * direction, anchor + 0.5 * length * direction])
    return World(
        pts,
        np.array(segs),
        rng.uniform(0.45, 0.8, n_points),
        rng.uniform(0.5, 0.85, n_segments),
    )


class AnalyticTrajectory:
    """Closed-form pose/velocity/acceleration/body-rate trajectory.

    Position is a per-axis sum of sinusoids around a center, orientation
    is yaw-pitch-roll sums of sinusoids (ZYX convention); everything is
    multiplied by a smoothstep ramp so the motion starts from rest.
    Derivative consistency is verified against finite differences at
    construction.
    """

    def __init__(
        self,
        center=(0.0, 0.0, 0.0),
        pos_amplitude=((0.6,), (0.3,), (0.15,)),
        pos_omega=((0.9,), (1.8,), (0.9,)),
        pos_phase=((0.0,), (0.0,), (1.2,)),
        euler_amplitude=((0.06,), (0.08,), (0.25,)),
        euler_omega=((1.0,), (1.2,), (0.63,)),
        euler_phase=((1.0,), (0.5,), (0.0,)),
        ramp_duration: float = 1.5,
        check: bool = True,
    ):
        self.center = np.asarray(center, dtype=float)
        self.pos_terms = _sinusoid_terms(pos_amplitude, pos_omega, pos_phase)
        self.euler_terms = _sinusoid_terms(euler_amplitude, euler_omega, euler_phase)
        self.ramp_duration = float(ramp_duration)
        if check:
            self._check_derivatives()

    # smoothstep ramp and its two derivatives
    def _ramp(self, t: float):
        T = self.ramp_duration
        if T <= 0 or t >= T:
            return 1.0, 0.0, 0.0
        if t <= 0:
            return 0.0, 0.0, 0.0
        u = t / T
        return 3 * u**2 - 2 * u**3, (6 * u - 6 * u**2) / T, (6 - 12 * u) / T**2

    def position(self, t: float, order: int = 0) -> np.ndarray:
        s, ds, dds = self._ramp(t)
        f, df, ddf = _eval_sinusoids(self.pos_terms, t)
        if order == 0:
            return self.center + s * f
        if order == 1:
            return ds * f + s * df
        return dds * f + 2 * ds * df + s * ddf

    def euler(self, t: float, order: int = 0) -> np.ndarray:
        s, ds, _ = self._ramp(t)
        f, df, _ = _eval_sinusoids(self.euler_terms, t)
        if order == 0:
            return s * f
        return ds * f + s * df

    def rotation(self, t: float) -> np.ndarray:
        roll, pitch, yaw = self.euler(t)
        return _rot_z(yaw) @ _rot_y(pitch) @ _rot_x(roll)

    def pose(self, t: float) -> Pose:
        return Pose(rotation_to_quat(self.rotation(t)), self.position(t))

    def velocity(self, t: float) -> np.ndarray:
        return self.position(t, order=1)

    def acceleration(self, t: float) -> np.ndarray:
        return self.position(t, order=2)

    def body_rate(self, t: float) -> np.ndarray:
        """Angular velocity in the body frame from ZYX Euler kinematics."""
        roll, pitch, yaw = self.euler(t)
        droll, dpitch, dyaw = self.euler(t, order=1)
        sr, cr = math.sin(roll), math.cos(roll)
        sp, cp = math.sin(pitch), math.cos(pitch)
        return np.array(
            [
                droll - dyaw * sp,
                dpitch * cr + dyaw * cp * sr,
                dyaw * cp * cr - dpitch * sr,
            ]
        )

    def state(self, t: float) -> KeyframeState:
        return KeyframeState(
            self.position(t),
            rotation_to_quat(self.rotation(t)),
            self.velocity(t),
            np.zeros(3),
            np.zeros(3),
        )

    def _check_derivatives(self, times=(0.37, 1.1, 2.9, 7.3), h: float = 1e-6):
        for t in times:
            v_fd = (self.position(t + h) - self.position(t - h)) / (2 * h)
            a_fd = (self.velocity(t + h) - self.velocity(t - h)) / (2 * h)
            if np.linalg.norm(v_fd - self.velocity(t)) > 1e-6 * (1 + np.linalg.norm(v_fd)):
                raise ParameterError("trajectory velocity inconsistent with position")
            if np.linalg.norm(a_fd - self.acceleration(t)) > 1e-5 * (1 + np.linalg.norm(a_fd)):
                raise ParameterError("trajectory acceleration inconsistent with velocity")
            w_fd = so3_log(self.rotation(t).T @ self.rotation(t + h)) / h
            w_mid = 0.5 * (self.body_rate(t) + self.body_rate(t + h))
            if np.linalg.norm(w_fd - w_mid) > 1e-5 * (1 + np.linalg.norm(w_fd)):
                raise ParameterError("trajectory body rate inconsistent with rotation")


def _sinusoid_terms(amplitudes, omegas, phases):
    terms = []
    for amp, om, ph in zip(amplitudes, omegas, phases):
        terms.append(
            (np.asarray(amp, dtype=float), np.asarray(om, dtype=float), np.asarray(ph, dtype=float))
        )
    if len(terms) != 3:
        raise ParameterError("expected one sinusoid list per axis")
    return terms


def _eval_sinusoids(terms, t: float):
    f = np.zeros(3)
    df = np.zeros(3)
    ddf = np.zeros(3)
    for axis, (amp, om, ph) in enumerate(terms):
        arg = om * t + ph
        f[axis] = np.sum(amp * np.sin(arg))
        df[axis] = np.sum(amp * om * np.cos(arg))
        ddf[axis] = -np.sum(amp * om * om * np.sin(arg))
    return f, df, ddf


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


@dataclass
class SimConfig:
    camera: CameraModel = field(default_factory=lambda: CameraModel(200.0, 200.0, 173.0, 120.0, width=346, height=240))
    body_from_cam: Pose = field(default_factory=Pose.identity)
    contrast_threshold: float = 0.1
    event_noise_rate: float = 0.0  # events / pixel / second
    event_jitter_px: float = 0.0  # gaussian pixel jitter on emitted events
    imu_noise: ImuNoise = field(default_factory=ImuNoise)
    imu_noise_on: bool = False
    imu_rate: float = 200.0
    frame_rate: float = 25.0
    render_rate: float = 200.0
    point_sigma_px: float = 1.1
    line_sigma_px: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise ParameterError("contrast threshold must be positive")
        if min(self.imu_rate, self.frame_rate, self.render_rate) <= 0:
            raise ParameterError("rates must be positive")


def gravity_world() -> np.ndarray:
    return np.array([0.0, 0.0, -GRAVITY])


def _render_sparse(world: World, cam_from_world: Pose, cfg: SimConfig):
    """Log-intensity contributions of all visible features.

    Returns (flat_pixel_indices, values); contributions of overlapping
    features add up.  Only pixels within a few sigmas of a feature are
    touched.
    """
    cam = cfg.camera
    idx_chunks = []
    val_chunks = []

    pts_c = cam_from_world.transform(world.points)
    vis = pts_c[:, 2] > 0.2
    if np.any(vis):
        pix = cam.project_many(pts_c[vis])
        idx, val = _stamp_gaussians(
            pix, world.point_contrast[vis], cfg.point_sigma_px, 3, cam.width, cam.height
        )
        idx_chunks.append(idx)
        val_chunks.append(val)

    for seg, contrast in zip(world.segments, world.segment_contrast):
        a_c = cam_from_world.transform(seg[0])
        b_c = cam_from_world.transform(seg[1])
        if a_c[2] <= 0.2 or b_c[2] <= 0.2:
            continue
        pa = cam.project_many(a_c[None])[0]
        pb = cam.project_many(b_c[None])[0]
        length = np.hypot(*(pb - pa))
        if length < 1.0:
            continue
        n_samp = max(int(length / 0.7) + 1, 2)
        u = np.linspace(0.0, 1.0, n_samp)[:, None]
        pts3 = a_c[None, :] * (1 - u) + b_c[None, :] * u
        pix = cam.project_many(pts3)
        # scale each sample so the ridge integrates to the full contrast
        w = np.full(n_samp, contrast * (length / n_samp) / (cfg.line_sigma_px * math.sqrt(2 * math.pi)))
        idx, val = _stamp_gaussians(pix, w, cfg.line_sigma_px, 3, cam.width, cam.height)
        idx_chunks.append(idx)
        val_chunks.append(val)

    if not idx_chunks:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return np.concatenate(idx_chunks), np.concatenate(val_chunks)


_STAMP_CACHE = {}


def _stamp_offsets(radius: int):
    if radius not in _STAMP_CACHE:
        r = np.arange(-radius, radius + 1)
        oy, ox = np.meshgrid(r, r, indexing="ij")
        _STAMP_CACHE[radius] = (ox.ravel(), oy.ravel())
    return _STAMP_CACHE[radius]


def _stamp_gaussians(pix, weights, sigma, radius, width, height):
    ox, oy = _stamp_offsets(radius)
    cx = np.round(pix[:, 0]).astype(np.int64)
    cy = np.round(pix[:, 1]).astype(np.int64)
    fx = pix[:, 0] - cx
    fy = pix[:, 1] - cy
    px = cx[:, None] + ox[None, :]
    py = cy[:, None] + oy[None, :]
    dx = ox[None, :] - fx[:, None]
    dy = oy[None, :] - fy[:, None]
    val = weights[:, None] * np.exp(-(dx * dx + dy * dy) / (2 * sigma * sigma))
    ok = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    flat = (py * width + px)[ok]
    return flat, val[ok]


def generate_events(world: World, traj: AnalyticTrajectory, cfg: SimConfig, t0: float, t1: float):
    """Simulate the event stream over [t0, t1].

    Returns arrays (t, x, y, p) sorted by time, p in {-1, +1}.
    """
    if t1 <= t0:
        raise ParameterError("t1 must exceed t0")
    rng = np.random.default_rng(cfg.seed + 101)
    cam = cfg.camera
    npx = cam.width * cam.height
    T = cfg.contrast_threshold

    dt = 1.0 / cfg.render_rate
    n_steps = int(round((t1 - t0) / dt))

    log_prev = np.zeros(npx)
    ref = np.zeros(npx)
    touched_prev = np.empty(0, dtype=np.int64)

    cam_from_body = cfg.body_from_cam.inverse()
    idx0, val0 = _render_sparse(world, cam_from_body * traj.pose(t0).inverse(), cfg)
    if len(idx0):
        np.add.at(log_prev, idx0, val0)
        ref[:] = log_prev
        touched_prev = np.unique(idx0)

    ts_out, xs_out, ys_out, ps_out = [], [], [], []

    for step in range(1, n_steps + 1):
        t_now = t0 + step * dt
        t_prev = t_now - dt
        idx, val = _render_sparse(world, cam_from_body * traj.pose(t_now).inverse(), cfg)
        if len(idx):
            contrib = np.bincount(idx, weights=val, minlength=npx)
            touched_now = np.unique(idx)
        else:
            contrib = np.zeros(npx)
            touched_now = np.empty(0, dtype=np.int64)

        active = np.union1d(touched_prev, touched_now)
        if len(active):
            l_new = contrib[active]
            l_old = log_prev[active]
            r = ref[active]

            up = np.floor((l_new - r) / T + 1e-9).astype(np.int64)
            dn = np.floor((r - l_new) / T + 1e-9).astype(np.int64)
            for counts, sign in ((np.maximum(up, 0), 1), (np.maximum(dn, 0), -1)):
                total = int(counts.sum())
                if total == 0:
                    continue
                sel = counts > 0
                reps = counts[sel]
                pix_flat = np.repeat(active[sel], reps)
                base_ref = np.repeat(r[sel], reps)
                k = _ragged_arange(reps) + 1.0
                level = base_ref + sign * k * T
                l0 = np.repeat(l_old[sel], reps)
                l1 = np.repeat(l_new[sel], reps)
                denom = np.where(np.abs(l1 - l0) < 1e-15, 1.0, l1 - l0)
                frac = np.clip((level - l0) / denom, 0.0, 1.0)
                ts_out.append(t_prev + frac * dt)
                xs_out.append((pix_flat % cam.width).astype(np.int32))
                ys_out.append((pix_flat // cam.width).astype(np.int32))
                ps_out.append(np.full(total, sign, dtype=np.int8))

            ref[active] = r + np.maximum(up, 0) * T - np.maximum(dn, 0) * T
            log_prev[active] = l_new
        touched_prev = touched_now

    if ts_out:
        t = np.concatenate(ts_out)
        x = np.concatenate(xs_out)
        y = np.concatenate(ys_out)
        p = np.concatenate(ps_out)
    else:
        t = np.empty(0)
        x = np.empty(0, dtype=np.int32)
        y = np.empty(0, dtype=np.int32)
        p = np.empty(0, dtype=np.int8)

    if cfg.event_jitter_px > 0 and len(t):
        x = x + np.rint(rng.normal(0, cfg.event_jitter_px, len(t))).astype(np.int32)
        y = y + np.rint(rng.normal(0, cfg.event_jitter_px, len(t))).astype(np.int32)
        keep = (x >= 0) & (x < cam.width) & (y >= 0) & (y < cam.height)
        t, x, y, p = t[keep], x[keep], y[keep], p[keep]

    if cfg.event_noise_rate > 0:
        n_noise = rng.poisson(cfg.event_noise_rate * npx * (t1 - t0))
        if n_noise:
            t = np.concatenate([t, rng.uniform(t0, t1, n_noise)])
            x = np.concatenate([x, rng.integers(0, cam.width, n_noise, dtype=np.int32)])
            y = np.concatenate([y, rng.integers(0, cam.height, n_noise, dtype=np.int32)])
            p = np.concatenate([p, rng.choice(np.array([-1, 1], dtype=np.int8), n_noise)])

    order = np.argsort(t, kind="stable")
    return t[order], x[order], y[order], p[order]


def _ragged_arange(counts: np.ndarray) -> np.ndarray:
    """[0..c0-1, 0..c1-1, ...] for positive counts."""
    total = int(counts.sum())
    out = np.arange(total)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    return (out - starts).astype(float)


def generate_imu(traj: AnalyticTrajectory, cfg: SimConfig, t0: float, t1: float):
    """IMU samples over [t0, t1] plus the ground-truth bias trace and the
    discrete ground-truth states (one per sample time).

    Sample i is valid over [t_i, t_{i+1}); the final sample repeats the
    last interval's fit so consumers can hold it.
    """
    if t1 <= t0:
        raise ParameterError("t1 must exceed t0")
    rng = np.random.default_rng(cfg.seed + 202)
    dt = 1.0 / cfg.imu_rate
    n = int(round((t1 - t0) / dt))
    times = t0 + np.arange(n + 1) * dt
    g = gravity_world()

    sigma_g = cfg.imu_noise.sigma_g if cfg.imu_noise_on else 0.0
    sigma_a = cfg.imu_noise.sigma_a if cfg.imu_noise_on else 0.0
    sigma_bg = cfg.imu_noise.sigma_bg if cfg.imu_noise_on else 0.0
    sigma_ba = cfg.imu_noise.sigma_ba if cfg.imu_noise_on else 0.0

    b_g = np.zeros((n + 1, 3))
    b_a = np.zeros((n + 1, 3))
    for i in range(n):
        b_g[i + 1] = b_g[i] + rng.normal(0, sigma_bg * math.sqrt(dt), 3)
        b_a[i + 1] = b_a[i] + rng.normal(0, sigma_ba * math.sqrt(dt), 3)

    omega_true = np.zeros((n + 1, 3))
    accel_true = np.zeros((n + 1, 3))
    R_prev = traj.rotation(times[0])
    v_prev = traj.velocity(times[0])
    for i in range(n):
        R_next = traj.rotation(times[i + 1])
        v_next = traj.velocity(times[i + 1])
        theta = so3_log(R_prev.T @ R_next)
        omega_true[i] = theta / dt
        Jl = so3_left_jacobian(theta)
        accel_true[i] = np.linalg.solve(Jl, R_prev.T @ ((v_next - v_prev) / dt - g))
        R_prev, v_prev = R_next, v_next
    omega_true[n] = omega_true[n - 1]
    accel_true[n] = accel_true[n - 1]

    noise_g = rng.normal(0, 1.0, (n + 1, 3)) * (sigma_g / math.sqrt(dt))
    noise_a = rng.normal(0, 1.0, (n + 1, 3)) * (sigma_a / math.sqrt(dt))
    omega_meas = omega_true + b_g + noise_g
    accel_meas = accel_true + b_a + noise_a

    samples = [
        ImuSample(float(times[i]), omega_meas[i], accel_meas[i]) for i in range(n + 1)
    ]

    # discrete ground truth: exact hold-propagation of the noise-free stream
    states = [traj.state(times[0])]
    for i in range(n):
        states.append(
            propagate_state(
                states[-1],
                ImuSample(float(times[i]), omega_true[i], accel_true[i]),
                g,
                dt,
            )
        )
    bias_trace = {"t": times, "b_g": b_g, "b_a": b_a}
    return samples, bias_trace, states


def generate_frame(world: World, traj: AnalyticTrajectory, cfg: SimConfig, t: float) -> np.ndarray:
    """Render one 8-bit intensity image at time ``t``.

    Features darken a light, faintly textured background so both the
    events (log changes) and the frames describe the same scene.
    """
    cam = cfg.camera
    npx = cam.width * cam.height
    idx, val = _render_sparse(world, cfg.body_from_cam.inverse() * traj.pose(t).inverse(), cfg)
    log_img = np.bincount(idx, weights=val, minlength=npx).reshape(cam.height, cam.width)

    yy, xx = np.mgrid[0 : cam.height, 0 : cam.width]
    background = 205.0 + 2.0 * np.sin(xx / 23.0) * np.sin(yy / 17.0)
    img = background - 170.0 * np.clip(log_img, 0.0, 1.0)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
