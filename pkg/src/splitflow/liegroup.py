"""Unitary group and Lie algebra primitives.

The bi-invariant inner product is <X, Y> = -kappa Re tr(XY) on skew-Hermitian
matrices.  With kappa = 1 (the default) the loop module's energy normalization
makes a geodesic loop with integer weights d have energy exactly sum(d_i^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, _matfun
from .errors import ValidationError

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class GroupSpec:
    """Structure group U(r) (or SU(r) when ``special``) with metric scale kappa."""

    rank: int
    special: bool = False
    metric_scale: float = 1.0

    def __post_init__(self):
        if self.rank < 1:
            raise ValidationError(f"rank must be >= 1, got {self.rank}")
        if self.metric_scale <= 0:
            raise ValidationError("metric_scale must be positive")

    @property
    def algebra_dim(self) -> int:
        r = self.rank
        return r * r - 1 if self.special else r * r


def dagger(a: np.ndarray) -> np.ndarray:
    return _matfun.dagger(a)


def skewness_defect(x: np.ndarray) -> float:
    x = np.asarray(x)
    return float(np.max(np.abs(x + dagger(x)))) if x.size else 0.0


def unitarity_defect(u: np.ndarray) -> float:
    u = np.asarray(u)
    eye = np.eye(u.shape[-1], dtype=complex)
    return float(np.max(np.abs(dagger(u) @ u - eye))) if u.size else 0.0


def check_skew(x: np.ndarray, tol: float = DEFAULT_TOL, what: str = "input") -> None:
    d = skewness_defect(x)
    if d > tol:
        raise ValidationError(f"{what} is not skew-Hermitian (defect {d:.3e} > {tol:g})")


def check_unitary(u: np.ndarray, tol: float = DEFAULT_TOL, what: str = "input") -> None:
    d = unitarity_defect(u)
    if d > tol:
        raise ValidationError(f"{what} is not unitary (defect {d:.3e} > {tol:g})")


def check_traceless(x: np.ndarray, tol: float = DEFAULT_TOL, what: str = "input") -> None:
    d = float(np.max(np.abs(np.trace(np.asarray(x), axis1=-2, axis2=-1))))
    if d > tol:
        raise ValidationError(f"{what} is not traceless (defect {d:.3e} > {tol:g})")


def algebra_inner(x: np.ndarray, y: np.ndarray, spec: GroupSpec, tol: float = DEFAULT_TOL):
    """Bi-invariant inner product -kappa Re tr(XY); batched over leading axes."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    check_skew(x, tol, "first argument")
    check_skew(y, tol, "second argument")
    if spec.special:
        check_traceless(x, tol, "first argument")
        check_traceless(y, tol, "second argument")
    val = -spec.metric_scale * np.real(np.einsum("...ij,...ji->...", x, y))
    return float(val) if np.ndim(val) == 0 else val


def algebra_norm(x: np.ndarray, spec: GroupSpec) -> float:
    v = -spec.metric_scale * np.real(np.einsum("...ij,...ji->...", x, x))
    return np.sqrt(np.maximum(v, 0.0))


def group_exp(x: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Matrix exponential of skew-Hermitian input; the result is unitary."""
    x = np.asarray(x, dtype=complex)
    check_skew(x, tol)
    return _kernels.exp_skew(x)


def group_log(g: np.ndarray, tol: float = DEFAULT_TOL, branch_margin: float = 1e-6) -> np.ndarray:
    """Principal matrix log of unitary input, eigenphases in (-pi, pi).

    Raises BranchCutError when an eigenvalue sits within ``branch_margin`` of -1;
    callers holding a too-coarse loop discretization should refine and retry.
    """
    g = np.asarray(g, dtype=complex)
    check_unitary(g, tol)
    return _kernels.log_unitary(g, branch_margin)


def operator_norm(x: np.ndarray) -> float:
    return float(np.max(np.linalg.svd(np.asarray(x), compute_uv=False)))


def project_skew(x: np.ndarray) -> np.ndarray:
    return _matfun.skew_part(np.asarray(x, dtype=complex))


def random_unitary(rng: np.random.Generator, r: int, special: bool = False) -> np.ndarray:
    """Haar-ish random unitary (QR of a Ginibre matrix, phases fixed)."""
    a = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    q, rr = np.linalg.qr(a)
    q = q * (np.diagonal(rr) / np.abs(np.diagonal(rr)))
    if special:
        q = q * np.linalg.det(q) ** (-1.0 / r)
    return q


def random_skew(rng: np.random.Generator, r: int, scale: float = 1.0,
                special: bool = False) -> np.ndarray:
    a = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
    x = scale * _matfun.skew_part(a)
    if special:
        x = x - np.trace(x) / r * np.eye(r)
    return x


def algebra_basis(spec: GroupSpec) -> np.ndarray:
    """Orthonormal real basis of u(r) or su(r) for the kappa-metric, shape (d, r, r)."""
    r = spec.rank
    s = 1.0 / np.sqrt(spec.metric_scale)
    out = []
    for j in range(r):
        for k in range(j + 1, r):
            e = np.zeros((r, r), dtype=complex)
            e[j, k] = 1.0
            e[k, j] = -1.0
            out.append(s * e / np.sqrt(2.0))
            e = np.zeros((r, r), dtype=complex)
            e[j, k] = 1j
            e[k, j] = 1j
            out.append(s * e / np.sqrt(2.0))
    if spec.special:
        # traceless diagonal directions: i * diag patterns, orthonormalized
        for m in range(1, r):
            d = np.zeros(r)
            d[:m] = 1.0
            d[m] = -m
            d = d / np.linalg.norm(d)
            out.append(s * 1j * np.diag(d).astype(complex))
    else:
        for j in range(r):
            e = np.zeros((r, r), dtype=complex)
            e[j, j] = 1j
            out.append(s * e)
    return np.stack(out)
