"""Rigid-body pose algebra and point-set registration.

A pose is a unit quaternion plus a translation in meters and maps points
from its body frame into its reference frame: p_ref = R @ p_body + t.
Registration is the classic SVD solution for the least-squares rigid
transform between matched point sets (Kabsch / Arun et al.), with the
determinant sign corrected so a reflection is never returned.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateGeometryError",
    "Pose",
    "PointCorrespondences",
    "RpeSample",
    "kabsch",
    "relative_displacement",
    "rpe",
    "align_trajectory",
    "write_trajectory",
    "read_trajectory",
]


class DegenerateGeometryError(ValueError):
    """Point configuration does not pin down a unique rigid transform."""


def _quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _matrix_to_quat(m):
    # Shepperd's method: branch on the largest squared component so the
    # divisor stays well away from zero.
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return np.array([w, x, y, z])


class Pose:
    """Rigid transform: unit quaternion (w, x, y, z) plus translation.

    Maps body-frame points into the reference frame. The quaternion is
    renormalized on construction and kept with w >= 0 so equal rotations
    serialize identically.
    """

    __slots__ = ("_q", "_t")

    def __init__(self, q=(1.0, 0.0, 0.0, 0.0), t=(0.0, 0.0, 0.0)):
        q = np.asarray(q, dtype=float)
        t = np.array(t, dtype=float)
        if q.shape != (4,) or t.shape != (3,):
            raise ValueError("pose needs a 4-quaternion and a 3-translation")
        if not (np.isfinite(q).all() and np.isfinite(t).all()):
            raise ValueError("pose components must be finite")
        norm = float(np.linalg.norm(q))
        if norm < 1e-9:
            raise ValueError("zero quaternion carries no orientation")
        if abs(norm - 1.0) > 1e-12:   # keep already-unit inputs byte-stable
            q = q / norm
        else:
            q = q.copy()
        if q[0] < 0.0:
            q = -q
        q.flags.writeable = False
        t.flags.writeable = False
        self._q = q
        self._t = t

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float,
                        t=(0.0, 0.0, 0.0)) -> Pose:
        axis = np.asarray(axis, dtype=float)
        norm = float(np.linalg.norm(axis))
        if norm == 0.0:
            raise ValueError("rotation axis must be nonzero")
        half = 0.5 * angle_rad
        q = np.empty(4)
        q[0] = math.cos(half)
        q[1:] = math.sin(half) / norm * axis
        return cls(q, t)

    @classmethod
    def from_matrix(cls, r, t=(0.0, 0.0, 0.0)) -> Pose:
        r = np.asarray(r, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        if (not np.allclose(r @ r.T, np.eye(3), atol=1e-6)
                or np.linalg.det(r) < 0.0):
            raise ValueError("not a proper rotation matrix")
        return cls(_matrix_to_quat(r), t)

    @property
    def q(self) -> np.ndarray:
        return self._q

    @property
    def t(self) -> np.ndarray:
        return self._t

    def rotation_matrix(self) -> np.ndarray:
        return _quat_to_matrix(self._q)

    def compose(self, other: Pose) -> Pose:
        return Pose(_quat_multiply(self._q, other._q),
                    _quat_to_matrix(self._q) @ other._t + self._t)

    __mul__ = compose

    def inverse(self) -> Pose:
        w, x, y, z = self._q
        conj = np.array([w, -x, -y, -z])
        return Pose(conj, -(_quat_to_matrix(conj) @ self._t))

    def transform_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return _quat_to_matrix(self._q) @ p + self._t

    def transform_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ _quat_to_matrix(self._q).T + self._t

    def angle_to(self, other: Pose) -> float:
        """Geodesic angle between the two orientations, degrees."""
        w, x, y, z = _quat_multiply(self._q * (1.0, -1.0, -1.0, -1.0),
                                    other._q)
        return math.degrees(2.0 * math.atan2(math.hypot(x, y, z), abs(w)))

    def almost_equal(self, other: Pose, tol_m: float = 1e-9,
                     tol_deg: float = 1e-9) -> bool:
        return (float(np.linalg.norm(self._t - other._t)) <= tol_m
                and self.angle_to(other) <= tol_deg)

    def to_json(self) -> dict:
        return {"q": [float(v) for v in self._q],
                "t": [float(v) for v in self._t]}

    @classmethod
    def from_json(cls, obj: dict) -> Pose:
        return cls(obj["q"], obj["t"])

    def __repr__(self):
        q = ", ".join(f"{v:.6f}" for v in self._q)
        t = ", ".join(f"{v:.3f}" for v in self._t)
        return f"Pose(q=[{q}], t=[{t}])"


class PointCorrespondences:
    """Matched points p_i (frame A) and q_i (frame B), meters."""

    __slots__ = ("p", "q")

    def __init__(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape != q.shape:
            raise ValueError("need two (n, 3) point arrays of equal length")
        if not (np.isfinite(p).all() and np.isfinite(q).all()):
            raise ValueError("points must be finite")
        self.p = p
        self.q = q

    @classmethod
    def from_pairs(cls, pairs) -> PointCorrespondences:
        pairs = list(pairs)
        return cls([a for a, _ in pairs], [b for _, b in pairs])

    def __len__(self):
        return self.p.shape[0]


def kabsch(c: PointCorrespondences) -> tuple[Pose, float]:
    """Best proper rigid transform T minimizing sum |q_i - T(p_i)|^2.

    Centroid subtraction, cross-covariance, SVD, determinant sign
    correction (no reflections). Returns (pose, rmsd in meters).
    """
    if len(c) < 3:
        raise DegenerateGeometryError(f"need at least 3 pairs, have {len(c)}")
    centroid_p = c.p.mean(axis=0)
    centroid_q = c.q.mean(axis=0)
    h = (c.p - centroid_p).T @ (c.q - centroid_q)
    u, s, vt = np.linalg.svd(h)
    # collinear or coincident points leave a rotation axis unconstrained
    if s[1] <= 1e-12 * s[0]:
        raise DegenerateGeometryError("points are collinear or coincident")
    d = 1.0 if np.linalg.det(vt.T @ u.T) >= 0.0 else -1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = centroid_q - r @ centroid_p
    residual = c.q - (c.p @ r.T + t)
    rmsd = float(np.sqrt(np.mean(np.sum(residual * residual, axis=1))))
    return Pose(_matrix_to_quat(r), t), rmsd


def relative_displacement(a: Pose, b: Pose) -> float:
    """Straight-line distance between two pose positions, meters."""
    return float(np.linalg.norm(a.t - b.t))


@dataclass(frozen=True)
class RpeSample:
    translational_m: float
    rotational_deg: float


def rpe(ref, est) -> list[RpeSample]:
    """Per-step position and orientation error between two trajectories.

    Expects equal-length, time-aligned pose lists; register the estimate
    onto the reference first (align_trajectory) so only residual error
    remains.
    """
    if len(ref) != len(est):
        raise ValueError(
            f"trajectory lengths differ: {len(ref)} != {len(est)}")
    return [RpeSample(relative_displacement(a, b), a.angle_to(b))
            for a, b in zip(ref, est)]


def align_trajectory(ref, est) -> tuple[list[Pose], Pose]:
    """Rigidly register `est` onto `ref` using their positions.

    Returns (aligned, transform) with aligned[i] = transform * est[i].
    """
    fit, _ = kabsch(PointCorrespondences([p.t for p in est],
                                         [p.t for p in ref]))
    return [fit.compose(p) for p in est], fit


def write_trajectory(fp, samples) -> None:
    """Write (time_s, Pose) samples as JSON lines; times must ascend."""
    last = None
    for time_s, pose in samples:
        if last is not None and time_s <= last:
            raise ValueError(f"timestamps must increase: {time_s} after {last}")
        last = time_s
        rec = {"time_s": float(time_s)}
        rec.update(pose.to_json())
        fp.write(json.dumps(rec) + "\n")


def read_trajectory(fp) -> list[tuple[float, Pose]]:
    samples = []
    for line in fp:
        line = line.strip()
        if line:
            rec = json.loads(line)
            samples.append((rec["time_s"], Pose(rec["q"], rec["t"])))
    return samples
