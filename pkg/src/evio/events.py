"""Event containers, the surface of active events, time surfaces, and
IMU-based motion compensation of event batches.

An event batch is stored as parallel numpy arrays (``t`` float seconds,
``x``/``y`` int16 pixels, ``p`` int8 polarity in {-1, +1}) sorted by
timestamp.  The surface of active events (SAE) keeps, per pixel and per
polarity, the timestamp of the most recent event; never-fired pixels carry
``-inf`` so they render at full decay.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .camera import CameraModel
from .errors import BoundsError, ParameterError
from .geometry import so3_exp


@dataclass
class Event:
    """A single brightness-change report."""

    t: float
    x: int
    y: int
    p: int


class EventBatch:
    """A time-sorted slice of the event stream."""

    def __init__(self, t, x, y, p, copy: bool = True):
        self.t = np.array(t, dtype=np.float64, copy=copy).reshape(-1)
        self.x = np.array(x, dtype=np.int32, copy=copy).reshape(-1)
        self.y = np.array(y, dtype=np.int32, copy=copy).reshape(-1)
        self.p = np.array(p, dtype=np.int8, copy=copy).reshape(-1)
        if not (len(self.t) == len(self.x) == len(self.y) == len(self.p)):
            raise ParameterError("event arrays must have equal length")
        if len(self.t) > 1 and np.any(np.diff(self.t) < 0):
            raise ParameterError("event timestamps must be non-decreasing")
        if len(self.t) and not np.all(np.isin(self.p, (-1, 1))):
            raise ParameterError("polarity must be -1 or +1")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def t_first(self) -> float:
        return float(self.t[0])

    @property
    def t_last(self) -> float:
        return float(self.t[-1])

    @staticmethod
    def empty() -> "EventBatch":
        return EventBatch([], [], [], [])

    @staticmethod
    def from_events(events) -> "EventBatch":
        return EventBatch(
            [e.t for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.p for e in events],
        )


class TimeSurfaceKind(Enum):
    WITH_POLARITY = "with_polarity"
    NORMALIZED_NO_POLARITY = "normalized_no_polarity"


@dataclass
class TimeSurface:
    """8-bit exponential-decay rendering of an SAE at time ``t_render``.

    WITH_POLARITY pixels are 128 + p * 127 * exp(-dt/eta) (no event: 128);
    NORMALIZED_NO_POLARITY pixels are 255 * exp(-dt/eta) (no event: 0).
    Ties in rounding follow numpy's round-half-to-even.
    """

    width: int
    height: int
    values: np.ndarray
    kind: TimeSurfaceKind
    t_render: float
    eta: float

    def as_float(self) -> np.ndarray:
        return self.values.astype(np.float64)


@dataclass
class EventFrame:
    """Per-pixel signed polarity accumulation over one batch."""

    width: int
    height: int
    counts: np.ndarray


class SurfaceOfActiveEvents:
    """Per-pixel last-event-time maps, split by polarity."""

    def __init__(self, width: int, height: int):
        self.width = int(width)
        self.height = int(height)
        shape = (self.height, self.width)
        self.t_last_pos = np.full(shape, -np.inf)
        self.t_last_neg = np.full(shape, -np.inf)
        self.p_last = np.zeros(shape, dtype=np.int8)

    @property
    def t_last_any(self) -> np.ndarray:
        return np.maximum(self.t_last_pos, self.t_last_neg)

    def copy(self) -> "SurfaceOfActiveEvents":
        out = SurfaceOfActiveEvents(self.width, self.height)
        out.t_last_pos = self.t_last_pos.copy()
        out.t_last_neg = self.t_last_neg.copy()
        out.p_last = self.p_last.copy()
        return out


def update_sae(sae: SurfaceOfActiveEvents, batch: EventBatch) -> SurfaceOfActiveEvents:
    """Fold a batch into the SAE in place (and return it).

    Same-timestamp ties at one pixel resolve by batch order: the later
    entry wins the polarity map.
    """
    if len(batch) == 0:
        return sae
    if (
        batch.x.min() < 0
        or batch.y.min() < 0
        or batch.x.max() >= sae.width
        or batch.y.max() >= sae.height
    ):
        raise BoundsError("event batch contains out-of-sensor coordinates")

    pos = batch.p > 0
    np.maximum.at(sae.t_last_pos, (batch.y[pos], batch.x[pos]), batch.t[pos])
    np.maximum.at(sae.t_last_neg, (batch.y[~pos], batch.x[~pos]), batch.t[~pos])

    # last event per touched pixel decides p_last; batch order breaks ties
    flat = batch.y.astype(np.int64) * sae.width + batch.x
    order = np.full(sae.height * sae.width, -1, dtype=np.int64)
    np.maximum.at(order, flat, np.arange(len(batch)))
    touched = np.unique(flat)
    sae.p_last.ravel()[touched] = batch.p[order[touched]]
    return sae


def render_time_surface(
    sae: SurfaceOfActiveEvents, t_render: float, eta: float, kind: TimeSurfaceKind
) -> TimeSurface:
    """Render the SAE into an 8-bit time surface at ``t_render``."""
    if eta <= 0:
        raise ParameterError(f"decay rate eta must be positive, got {eta}")
    t_any = sae.t_last_any
    finite = np.isfinite(t_any)
    if np.any(t_any[finite] > t_render):
        raise ParameterError("t_render precedes stored event timestamps")

    decay = np.zeros_like(t_any)
    decay[finite] = np.exp(-(t_render - t_any[finite]) / eta)
    if kind is TimeSurfaceKind.WITH_POLARITY:
        vals = 128.0 + sae.p_last * 127.0 * decay
    else:
        vals = 255.0 * decay
    values = np.rint(vals).astype(np.uint8)
    return TimeSurface(sae.width, sae.height, values, kind, float(t_render), float(eta))


def accumulate_event_frame(
    batch: EventBatch, width: int, height: int
) -> EventFrame:
    """Sum signed polarities per pixel over the batch."""
    counts = np.zeros((height, width), dtype=np.int32)
    if len(batch):
        np.add.at(counts, (batch.y, batch.x), batch.p.astype(np.int32))
    return EventFrame(width, height, counts)


def motion_compensate(
    batch: EventBatch,
    omega: np.ndarray,
    accel: np.ndarray,
    camera: CameraModel,
    nominal_depth: float = 3.0,
):
    """Warp every event to the batch's first timestamp using constant
    IMU rates.

    The camera rotates by R(omega * dt) and translates by 0.5 * accel *
    dt^2 between the first event and an event at ``dt = t_i - t_first``;
    each event is mapped back through that motion: rotation exactly on
    the undistorted normalized plane, translation by shifting the point
    back-projected at ``nominal_depth``.  Warped events are re-projected,
    rounded to the nearest pixel, and dropped when they leave the sensor;
    all output timestamps equal ``t_first``.

    Returns ``(warped_batch, dropped_count)``.
    """
    if nominal_depth <= 0:
        raise ParameterError("nominal_depth must be positive")
    if len(batch) == 0:
        return batch, 0

    omega = np.asarray(omega, dtype=float)
    accel = np.asarray(accel, dtype=float)
    dt = batch.t - batch.t_first

    norm = camera.undistort_pixels(np.stack([batch.x, batch.y], axis=1).astype(float))
    rays = np.concatenate([norm, np.ones((len(batch), 1))], axis=1)

    if np.allclose(omega, 0.0) and np.allclose(accel, 0.0):
        warped = rays
    else:
        # Rodrigues with a fixed axis and per-event angle |omega| * dt
        speed = np.linalg.norm(omega)
        if speed > 0:
            k = omega / speed
            theta = speed * dt
            c = np.cos(theta)[:, None]
            s = np.sin(theta)[:, None]
            k_cross = np.cross(np.broadcast_to(k, rays.shape), rays, axis=1)
            k_dot = rays @ k
            warped = rays * c + k_cross * s + np.outer(k_dot * (1.0 - c[:, 0]), k)
        else:
            warped = rays.copy()
        warped = warped / warped[:, 2:3] * nominal_depth
        warped = warped + 0.5 * np.outer(dt * dt, accel)

    in_front = warped[:, 2] > 1e-9
    pix = np.full((len(batch), 2), -1.0)
    pix[in_front] = camera.project_many(warped[in_front])
    px = np.rint(pix[:, 0]).astype(np.int32)
    py = np.rint(pix[:, 1]).astype(np.int32)
    keep = (
        in_front
        & (px >= 0)
        & (px < camera.width)
        & (py >= 0)
        & (py < camera.height)
    )
    dropped = int(len(batch) - keep.sum())
    out = EventBatch(
        np.full(int(keep.sum()), batch.t_first),
        px[keep],
        py[keep],
        batch.p[keep],
        copy=False,
    )
    return out, dropped
