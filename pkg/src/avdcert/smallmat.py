"""Closed-form spectral kernels for stacks of 2x2 and 3x3 matrices.

Eigenvalues of symmetric matrices are computed from characteristic-polynomial
roots (analytic in 2D, trigonometric in 3D), so no iterative solver tolerance
enters any downstream bound. All functions accept arrays of shape (..., n, n)
and are vectorized over leading axes.
"""

from __future__ import annotations

import numpy as np

from .errors import NotSpdError

_TWO_PI_3 = 2.0 * np.pi / 3.0


def sym_eigvalues(a: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric matrices, ascending along the last axis."""
    n = a.shape[-1]
    if a.shape[-2] != n or n not in (2, 3):
        raise ValueError(f"expected stacked 2x2 or 3x3 matrices, got shape {a.shape}")
    return _eigvals2(a) if n == 2 else _eigvals3(a)


def _eigvals2(a):
    a00, a01, a11 = a[..., 0, 0], a[..., 0, 1], a[..., 1, 1]
    mid = 0.5 * (a00 + a11)
    d = np.sqrt((0.5 * (a00 - a11)) ** 2 + a01 * a01)
    return np.stack([mid - d, mid + d], axis=-1)


def _eigvals3(a):
    a00, a01, a02 = a[..., 0, 0], a[..., 0, 1], a[..., 0, 2]
    a11, a12, a22 = a[..., 1, 1], a[..., 1, 2], a[..., 2, 2]
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    q = (a00 + a11 + a22) / 3.0
    d0, d1, d2 = a00 - q, a11 - q, a22 - q
    p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    # p == 0 only for multiples of the identity; guard the division.
    safe = np.where(p > 0.0, p, 1.0)
    b00, b11, b22 = d0 / safe, d1 / safe, d2 / safe
    b01, b02, b12 = a01 / safe, a02 / safe, a12 / safe
    half_det = 0.5 * (
        b00 * (b11 * b22 - b12 * b12)
        - b01 * (b01 * b22 - b12 * b02)
        + b02 * (b01 * b12 - b11 * b02)
    )
    r = np.clip(half_det, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + _TWO_PI_3)
    mid = 3.0 * q - hi - lo
    return np.stack([lo, mid, hi], axis=-1)


def sym_min_eigvalue(a: np.ndarray) -> np.ndarray:
    return sym_eigvalues(a)[..., 0]


def sym_max_eigvalue(a: np.ndarray) -> np.ndarray:
    return sym_eigvalues(a)[..., -1]


def is_symmetric(a: np.ndarray) -> bool:
    return bool(np.array_equal(a, np.swapaxes(a, -1, -2)))


def spectral_norm(a: np.ndarray) -> np.ndarray:
    """Largest singular value. Exactly symmetric input uses max |eigenvalue|."""
    if is_symmetric(a):
        lam = sym_eigvalues(a)
        return np.maximum(np.abs(lam[..., 0]), np.abs(lam[..., -1]))
    gram = np.swapaxes(a, -1, -2) @ a
    return np.sqrt(np.maximum(sym_max_eigvalue(gram), 0.0))


def min_singular_value(a: np.ndarray) -> np.ndarray:
    """Smallest singular value; equals the smallest eigenvalue on SPD input."""
    if is_symmetric(a):
        lam = sym_eigvalues(a)
        return np.minimum(np.abs(lam[..., 0]), np.abs(lam[..., -1]))
    gram = np.swapaxes(a, -1, -2) @ a
    return np.sqrt(np.maximum(sym_min_eigvalue(gram), 0.0))


def assert_spd(a: np.ndarray, what: str = "matrix") -> None:
    """Raise NotSpdError unless every stacked matrix is symmetric positive-definite."""
    if not is_symmetric(a):
        raise NotSpdError(f"{what} is not exactly symmetric")
    lam_min = sym_min_eigvalue(a)
    if np.any(lam_min <= 0.0):
        worst = float(np.min(lam_min))
        raise NotSpdError(
            f"{what} is not positive-definite: smallest eigenvalue {worst:.6g} <= 0"
        )


def sqrt_spd_array(q: np.ndarray) -> np.ndarray:
    """Principal square root of stacked SPD matrices.

    Uses the invariant identity M = (t1*Q + t3*I) (Q + t2*I)^-1 where t1, t2,
    t3 are the elementary symmetric functions of the eigenvalue square roots.
    Exact for repeated eigenvalues, no eigenvectors needed.
    """
    n = q.shape[-1]
    lam = sym_eigvalues(q)
    if np.any(lam[..., 0] <= 0.0):
        worst = float(np.min(lam[..., 0]))
        raise NotSpdError(
            f"matrix square root needs SPD input: smallest eigenvalue {worst:.6g} <= 0"
        )
    rt = np.sqrt(lam)
    eye = np.eye(n)
    if n == 2:
        s = rt[..., 0] * rt[..., 1]
        t = np.sqrt(q[..., 0, 0] + q[..., 1, 1] + 2.0 * s)
        m = (q + s[..., None, None] * eye) / t[..., None, None]
    else:
        t1 = rt.sum(axis=-1)
        t3 = rt.prod(axis=-1)
        t2 = 0.5 * (t1 * t1 - lam.sum(axis=-1))
        lhs = q + t2[..., None, None] * eye
        rhs = t1[..., None, None] * q + t3[..., None, None] * eye
        m = np.linalg.solve(lhs, rhs)
        m = 0.5 * (m + np.swapaxes(m, -1, -2))
    return m


def inv_spd(a: np.ndarray) -> np.ndarray:
    """Inverse of stacked SPD matrices, symmetrized exactly."""
    inv = np.linalg.inv(a)
    return 0.5 * (inv + np.swapaxes(inv, -1, -2))
