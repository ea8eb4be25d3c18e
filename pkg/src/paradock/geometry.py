"""Rigid motions and quadric surfaces.

Everything here runs in float64 torch tensors, differentiable where the inputs
carry gradients. Points are row-stacked ``(N, 3)`` arrays; transforms follow the
column-vector convention ``x' = Q x + t``, which for row storage means
``X' = X @ Q.T + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import (
    DegenerateConfiguration,
    DegenerateMatrix,
    NearSingular,
    NotPSD,
    TooFewPoints,
)

Tensor = torch.Tensor

ORTHO_TOL = 1e-9


def _f64(x) -> Tensor:
    """Coerce array-likes (and tensors of any float dtype) to float64 tensors."""
    if isinstance(x, torch.Tensor):
        return x.to(torch.float64)
    return torch.as_tensor(np.asarray(x), dtype=torch.float64)


@dataclass
class RigidTransform:
    """A proper rigid motion ``x' = rotation @ x + translation``.

    rotation: (3, 3) with ``Q.T Q = I`` and ``det Q = +1``, both within 1e-9.
    translation: (3,) vector.
    """

    rotation: Tensor
    translation: Tensor

    def __post_init__(self):
        self.rotation = _f64(self.rotation)
        self.translation = _f64(self.translation)
        if self.rotation.shape != (3, 3):
            raise DegenerateMatrix(f"rotation must be 3x3, got {tuple(self.rotation.shape)}")
        if self.translation.shape != (3,):
            raise DegenerateMatrix(
                f"translation must be a 3-vector, got {tuple(self.translation.shape)}"
            )
        with torch.no_grad():
            q = self.rotation
            ortho = (q.T @ q - torch.eye(3, dtype=torch.float64)).abs().max().item()
            det = torch.linalg.det(q).item()
        if ortho > ORTHO_TOL:
            raise DegenerateMatrix(f"rotation is not orthogonal (|Q^T Q - I| = {ortho:.3e})")
        if abs(det - 1.0) > ORTHO_TOL:
            raise DegenerateMatrix(f"rotation must have det +1, got {det:.12f}")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(torch.eye(3, dtype=torch.float64), torch.zeros(3, dtype=torch.float64))

    def apply(self, points) -> Tensor:
        """Transform row-stacked points: ``(..., 3) -> (..., 3)``."""
        pts = _f64(points)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        q = self.rotation.T
        return RigidTransform(q, -(q @ self.translation))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return self applied after other: ``(self . other)(x) = self(other(x))``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def numpy(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.rotation.detach().cpu().numpy(),
            self.translation.detach().cpu().numpy(),
        )


@dataclass
class Quadric:
    """Level set ``{x : <A x, x> + <b, x> + c = 0}`` with signed field phi(x)."""

    A: Tensor
    b: Tensor
    c: Tensor

    def __post_init__(self):
        self.A = _f64(self.A)
        self.b = _f64(self.b)
        self.c = _f64(self.c).reshape(())
        if self.A.shape != (3, 3) or self.b.shape != (3,):
            raise DegenerateMatrix("quadric needs A (3,3) and b (3,)")

    def evaluate(self, points) -> Tensor:
        """Signed field values phi at row-stacked points, shape ``(N,)``."""
        x = _f64(points)
        if x.dim() == 1:
            x = x.unsqueeze(0)
        quad = torch.einsum("ni,ij,nj->n", x, self.A, x)
        return quad + x @ self.b + self.c


@dataclass
class StandardParaboloid:
    """Elliptic paraboloid in standard position: ``l1 x^2 + l2 y^2 + beta z = 0``.

    ``l1, l2 > 0``; beta may take either sign (it fixes which side is "inside",
    i.e. where phi < 0).
    """

    lambda1: Tensor
    lambda2: Tensor
    beta: Tensor

    def __post_init__(self):
        self.lambda1 = _f64(self.lambda1).reshape(())
        self.lambda2 = _f64(self.lambda2).reshape(())
        self.beta = _f64(self.beta).reshape(())

    def as_quadric(self) -> Quadric:
        zero = torch.zeros((), dtype=torch.float64)
        diag = torch.stack([self.lambda1, self.lambda2, zero])
        a = torch.diag_embed(diag)
        b = torch.stack([zero, zero, self.beta])
        return Quadric(a, b, zero)


def transform_quadric(q: Quadric, t: RigidTransform) -> Quadric:
    """Push a quadric forward through a rigid motion.

    The returned quadric satisfies ``phi'(T x) = phi(x)`` for symmetric A, so a
    point lies on the surface exactly when its image lies on the transformed
    surface, and signed field values transport unchanged.
    """
    rot, tr = t.rotation, t.translation
    a2 = rot @ q.A @ rot.T
    b2 = rot @ q.b - rot @ (q.A + q.A.T) @ rot.T @ tr
    c2 = q.c + tr @ rot @ q.A @ rot.T @ tr - tr @ rot @ q.b
    return Quadric(a2, b2, c2)


def to_general_form(std: StandardParaboloid, pose: RigidTransform) -> Quadric:
    """General-form quadric of a standard paraboloid placed at ``pose``."""
    return transform_quadric(std.as_quadric(), pose)


def sqrt_psd3(mat) -> Tensor:
    """Symmetric square root of a symmetric PSD 3x3 matrix.

    Eigenvalues in [-1e-10, 0) are clamped to zero; anything lower raises
    NotPSD. Asymmetric input (beyond 1e-9) raises ValueError.
    """
    m = _f64(mat)
    if m.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got {tuple(m.shape)}")
    asym = (m - m.T).abs().max().item()
    if asym > 1e-9:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    w, s = torch.linalg.eigh(m)
    if w.min().item() < -1e-10:
        raise NotPSD(f"negative eigenvalue {w.min().item():.3e}")
    w = torch.clamp(w, min=0.0)
    return (s * torch.sqrt(w)) @ s.T


def polar_rotation(mat) -> Tensor:
    """Closest rotation to an arbitrary 3x3 matrix via polar decomposition.

    Computes ``(M M^T)^(-1/2) M`` through the eigendecomposition of the
    symmetric factor. Requires ``det M > 0`` (DegenerateMatrix otherwise) and
    sigma_min >= 1e-8 * sigma_max (NearSingular otherwise).
    """
    m = _f64(mat)
    if m.shape != (3, 3):
        raise ValueError(f"expected 3x3 matrix, got {tuple(m.shape)}")
    det = torch.linalg.det(m)
    if det.item() <= 0.0:
        raise DegenerateMatrix(f"polar rotation needs det > 0, got {det.item():.3e}")
    w, s = torch.linalg.eigh(m @ m.T)
    sing = torch.sqrt(torch.clamp(w, min=0.0))
    if sing.min().item() < 1e-8 * sing.max().item():
        raise NearSingular(
            f"singular values span {sing.min().item():.3e} .. {sing.max().item():.3e}"
        )
    inv_sqrt = (s / sing) @ s.T
    q = inv_sqrt @ m
    # one Newton-Schulz pass: squares the orthogonality error left by an
    # ill-conditioned input, without moving the polar factor
    return 0.5 * q @ (3.0 * torch.eye(3, dtype=q.dtype) - q.T @ q)


def compose_relative(
    t1: RigidTransform, t2: RigidTransform, refine_rot=None
) -> RigidTransform:
    """Rigid motion carrying frame 1 onto frame 2, with an optional in-plane twist.

    Returns ``(Q2 R Q1^T, t2 - Q2 R Q1^T t1)`` where R defaults to the identity.
    Points expressed in frame 1 land on the matching points of frame 2.
    """
    rot_r = torch.eye(3, dtype=torch.float64) if refine_rot is None else _f64(refine_rot)
    q = t2.rotation @ rot_r @ t1.rotation.T
    return RigidTransform(q, t2.translation - q @ t1.translation)


def refinement_rotation(theta) -> Tensor:
    """In-plane rotation about the z axis, in the layout used by the pose head."""
    th = _f64(theta).reshape(())
    c, s = torch.cos(th), torch.sin(th)
    zero = torch.zeros((), dtype=torch.float64)
    one = torch.ones((), dtype=torch.float64)
    return torch.stack(
        [
            torch.stack([c, s, zero]),
            torch.stack([-s, c, zero]),
            torch.stack([zero, zero, one]),
        ]
    )


def _check_spread(centered: Tensor, label: str) -> None:
    sing = torch.linalg.svdvals(centered)
    scale = max(sing[0].item(), 1e-300)
    if sing[1].item() <= 1e-10 * scale:
        raise DegenerateConfiguration(f"{label} points are collinear or coincident")


def kabsch(p, q) -> RigidTransform:
    """Least-squares rigid motion taking point set p onto point set q.

    Both sets are ``(N, 3)`` with rows in correspondence, N >= 3 and neither set
    collinear/coincident. Reflections are excluded by construction.
    """
    pp, qq = _f64(p), _f64(q)
    if pp.shape != qq.shape or pp.dim() != 2 or pp.shape[1] != 3:
        raise ValueError("kabsch needs two (N, 3) sets of equal shape")
    n = pp.shape[0]
    if n < 3:
        raise TooFewPoints(f"kabsch needs at least 3 points, got {n}")
    p_mean, q_mean = pp.mean(0), qq.mean(0)
    pc, qc = pp - p_mean, qq - q_mean
    _check_spread(pc, "source")
    _check_spread(qc, "target")
    h = pc.T @ qc
    u, _, vt = torch.linalg.svd(h)
    v = vt.T
    d = torch.linalg.det(v @ u.T)
    flip = torch.diag(torch.tensor([1.0, 1.0, float(torch.sign(d))], dtype=torch.float64))
    rot = v @ flip @ u.T
    return RigidTransform(rot, q_mean - rot @ p_mean)


def kabsch2d(p, q) -> Tensor:
    """Optimal 2D rotation aligning centered p onto centered q, shape ``(2, 2)``.

    Inputs are ``(N, 2)`` with N >= 2; fully coincident points raise
    DegenerateConfiguration.
    """
    pp, qq = _f64(p), _f64(q)
    if pp.shape != qq.shape or pp.dim() != 2 or pp.shape[1] != 2:
        raise ValueError("kabsch2d needs two (N, 2) sets of equal shape")
    if pp.shape[0] < 2:
        raise TooFewPoints(f"kabsch2d needs at least 2 points, got {pp.shape[0]}")
    pc = pp - pp.mean(0)
    qc = qq - qq.mean(0)
    spread = max(pc.abs().max().item(), qc.abs().max().item())
    if spread <= 1e-12:
        raise DegenerateConfiguration("2d point sets are coincident")
    h = pc.T @ qc
    u, sing, vt = torch.linalg.svd(h)
    if sing[0].item() <= 1e-12 * max(spread, 1.0):
        raise DegenerateConfiguration("2d cross-covariance vanishes")
    v = vt.T
    d = torch.linalg.det(v @ u.T)
    flip = torch.diag(torch.tensor([1.0, float(torch.sign(d))], dtype=torch.float64))
    return v @ flip @ u.T


def random_rotation(rng: np.random.Generator) -> Tensor:
    """Rotation drawn from the uniform (Haar) distribution on SO(3).

    The caller owns the generator; this function draws exactly four normals.
    """
    quat = rng.normal(size=4)
    quat = quat / np.linalg.norm(quat)
    w, x, y, z = quat
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return torch.as_tensor(rot, dtype=torch.float64)


def random_transform(rng: np.random.Generator, max_translation: float = 10.0) -> RigidTransform:
    """Haar rotation plus a translation uniform in the centered cube."""
    rot = random_rotation(rng)
    tr = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform(rot, torch.as_tensor(tr, dtype=torch.float64))


def rotation_angle(rot) -> float:
    """Geodesic distance of a rotation from the identity, in radians.

    Uses atan2 of the skew norm against the trace instead of arccos of the
    trace alone; the arccos form loses half the significant digits for
    angles near zero.
    """
    r = _f64(rot)
    cos = (torch.einsum("ii->", r) - 1.0) / 2.0
    sin = torch.linalg.matrix_norm(r - r.T) / (2.0 * math.sqrt(2.0))
    return float(torch.atan2(sin, cos).item())


def rotation_geodesic(rot_a, rot_b) -> float:
    """Angle of the relative rotation between two rotation matrices, radians."""
    return rotation_angle(_f64(rot_a).T @ _f64(rot_b))
