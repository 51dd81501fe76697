"""Planar rigid-body arithmetic.

Poses are SE(2) elements ``(x, y, theta)`` with ``theta`` kept in the
half-open interval (-pi, pi].  Scalar helpers operate on :class:`Pose2`;
the ``*_arrays`` variants operate on ``(N, 3)`` arrays and are what the
solver uses in its inner loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(t: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if not math.isfinite(t):
        raise ValueError(f"cannot normalize non-finite angle {t!r}")
    r = math.remainder(t, TWO_PI)
    if r <= -math.pi:
        r = math.pi
    return r


def normalize_angles(t: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize_angle` (no finiteness check)."""
    # fmod and the single +-2pi correction are both exact, so this agrees
    # bit-for-bit with math.remainder in the scalar path
    r = np.fmod(t, TWO_PI)
    r = np.where(r > math.pi, r - TWO_PI, r)
    return np.where(r <= -math.pi, r + TWO_PI, r)


@dataclass(frozen=True, slots=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def from_array(cls, a) -> Pose2:
        return cls(a[0], a[1], a[2])

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def matrix(self) -> np.ndarray:
        """Homogeneous 3x3 matrix."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])

    def __matmul__(self, other: Pose2) -> Pose2:
        return compose(self, other)


IDENTITY = Pose2()


@dataclass(frozen=True, slots=True)
class ErrorVec3:
    """Local-frame pose difference; ``dtheta`` is wrapped to (-pi, pi]."""

    dx: float
    dy: float
    dtheta: float

    def __post_init__(self):
        for v in (self.dx, self.dy, self.dtheta):
            if not math.isfinite(v):
                raise ValueError("error vector components must be finite")
        object.__setattr__(self, "dtheta", normalize_angle(self.dtheta))

    def to_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta])


def compose(a: Pose2, b: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)


def inverse(a: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def relative(a: Pose2, b: Pose2) -> Pose2:
    """The transform taking frame ``a`` to frame ``b``, i.e. ``inverse(a) o b``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    dx, dy = b.x - a.x, b.y - a.y
    return Pose2(c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta)


def boxminus(p: Pose2, z: Pose2) -> ErrorVec3:
    """Difference of ``p`` from ``z`` expressed in the frame of ``z``.

    Returns the components of ``inverse(z) o p``, so that
    ``compose(z, boxminus(p, z))`` reproduces ``p``.
    """
    d = relative(z, p)
    return ErrorVec3(d.x, d.y, d.theta)


def boxplus(z: Pose2, e: ErrorVec3) -> Pose2:
    return compose(z, Pose2(e.dx, e.dy, e.dtheta))


def adjoint(p: Pose2) -> np.ndarray:
    """Adjoint of ``p`` acting on ``(dx, dy, dtheta)`` vectors."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return np.array([[c, -s, p.y], [s, c, -p.x], [0.0, 0.0, 1.0]])


# -- vectorized kernels -----------------------------------------------------


def compose_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 0] + c * b[..., 0] - s * b[..., 1]
    out[..., 1] = a[..., 1] + s * b[..., 0] + c * b[..., 1]
    out[..., 2] = normalize_angles(a[..., 2] + b[..., 2])
    return out


def inverse_arrays(a: np.ndarray) -> np.ndarray:
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    out = np.empty_like(a, dtype=float)
    out[..., 0] = -c * a[..., 0] - s * a[..., 1]
    out[..., 1] = s * a[..., 0] - c * a[..., 1]
    out[..., 2] = normalize_angles(-a[..., 2])
    return out


def relative_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, s = np.cos(a[..., 2]), np.sin(a[..., 2])
    dx = b[..., 0] - a[..., 0]
    dy = b[..., 1] - a[..., 1]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    out[..., 2] = normalize_angles(b[..., 2] - a[..., 2])
    return out
