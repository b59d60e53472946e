"""Batched small-matrix functions built on Hermitian eigendecompositions.

Everything here operates on stacks of r x r matrices (leading axes arbitrary)
and is shared by the kernels fallback, the loop Hessian, and the bundle module.
"""

from __future__ import annotations

import numpy as np

from .errors import BranchCutError


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conjugate(np.swapaxes(a, -1, -2))


def skew_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - dagger(a))


def herm_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + dagger(a))


def exp_skew_eigh(x: np.ndarray) -> np.ndarray:
    """exp of skew-Hermitian stacks: diagonalize -iX (Hermitian) and rebuild."""
    w, v = np.linalg.eigh(-1j * x)
    phase = np.exp(1j * w)
    return np.einsum("...ik,...k,...jk->...ij", v, phase, v.conj())


def exp_herm(x: np.ndarray) -> np.ndarray:
    """exp of Hermitian stacks (positive results), via eigh."""
    w, v = np.linalg.eigh(x)
    return np.einsum("...ik,...k,...jk->...ij", v, np.exp(w), v.conj())


def log_unitary_eigh(u: np.ndarray, branch_margin: float = 1e-6):
    """Principal log of unitary stacks via the Cayley transform.

    H = i (I - U)(I + U)^{-1} is Hermitian with eigenvalues tan(theta/2),
    so a batched eigh gives orthonormal eigenvectors and theta = 2 atan(.)
    lands on the principal branch automatically.  Raises BranchCutError if
    any eigenphase is within ``branch_margin`` of +-pi.

    Returns (log, max_abs_phase).
    """
    n = u.shape[-1]
    eye = np.eye(n, dtype=u.dtype)
    try:
        c = np.linalg.solve(eye + u, eye - u)
    except np.linalg.LinAlgError as exc:
        raise BranchCutError("unitary matrix has an eigenvalue at -1") from exc
    h = herm_part(1j * c)
    w, v = np.linalg.eigh(h)
    theta = 2.0 * np.arctan(w)
    max_phase = float(np.max(np.abs(theta))) if theta.size else 0.0
    if max_phase >= np.pi - branch_margin:
        raise BranchCutError(
            f"eigenphase {max_phase:.6f} within {branch_margin:g} of the branch cut at pi"
        )
    out = np.einsum("...ik,...k,...jk->...ij", v, 1j * theta, v.conj())
    return skew_part(out), max_phase


def polar_unitary(a: np.ndarray) -> np.ndarray:
    """Unitary factor of the polar decomposition, batched (SVD based)."""
    u, _, vh = np.linalg.svd(a)
    return u @ vh


def unitary_eigphases(u: np.ndarray):
    """Eigen-decomposition of unitary stacks with orthonormal vectors.

    Returns (theta, V) with U = V diag(e^{i theta}) V^dagger, theta in (-pi, pi].
    Uses the Cayley trick; falls back to generic eig when -1 is an eigenvalue.
    """
    n = u.shape[-1]
    eye = np.eye(n, dtype=u.dtype)
    try:
        c = np.linalg.solve(eye + u, eye - u)
    except np.linalg.LinAlgError:
        lam, v = np.linalg.eig(u)
        return np.angle(lam), v
    h = herm_part(1j * c)
    w, v = np.linalg.eigh(h)
    return 2.0 * np.arctan(w), v


def _pair_halfdiff(theta: np.ndarray):
    """d[i,j] = (theta_i - theta_j)/2 and s[i,j] = (theta_i + theta_j)/2 as stacks."""
    d = 0.5 * (theta[..., :, None] - theta[..., None, :])
    s = 0.5 * (theta[..., :, None] + theta[..., None, :])
    return d, s


def log_divided_diff(theta: np.ndarray) -> np.ndarray:
    """First divided difference of log at unit-circle points e^{i theta}.

    psi1[i,j] = (log l_i - log l_j)/(l_i - l_j) = (d/sin d) e^{-i(t_i+t_j)/2},
    with d = (t_i - t_j)/2; the i = j limit is 1/l_i.
    """
    d, s = _pair_halfdiff(theta)
    ratio = np.where(np.abs(d) < 1e-8, 1.0 + d * d / 6.0, d / np.where(d == 0, 1.0, np.sin(d)))
    return ratio * np.exp(-1j * s)


def log_second_divided_diff_sym(theta: np.ndarray) -> np.ndarray:
    """Second divided difference log[l_i, l_k, l_i] as a stack over (i, k).

    With a = t_i, b = t_k, d = a - b:
        psi2 = (1 - e^{-id} - id) / (-4 sin^2(d/2) e^{i(a+b)})
    and the coincident limit is -e^{-2 i t}/2.
    """
    a = theta[..., :, None]
    b = theta[..., None, :]
    d = a - b
    small = np.abs(d) < 1e-4
    num = (1.0 - np.cos(d)) - 1j * (d - np.sin(d))
    den = -4.0 * np.sin(0.5 * d) ** 2
    den_safe = np.where(small, 1.0, den)
    generic = num / den_safe
    # series of num/den around d = 0: -(1/2 - i d/6 - d^2/24 + i d^3/120)(1 + d^2/12)
    series = -(0.5 - 1j * d / 6.0 - d * d / 24.0 + 1j * d**3 / 120.0) * (1.0 + d * d / 12.0)
    return np.where(small, series, generic) * np.exp(-1j * (a + b))
