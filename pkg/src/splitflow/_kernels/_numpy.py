"""Pure-numpy implementation of the hot kernels.

Rank 2 takes a fully vectorized closed-form route (eigenprojectors from the
characteristic polynomial); other ranks go through batched Hermitian
eigendecompositions.  The compiled backend in ``_core.pyx`` mirrors this API.
"""

from __future__ import annotations

import numpy as np

from .. import _matfun
from ..errors import BranchCutError

BACKEND = "numpy"


def _log_unitary_2x2(u: np.ndarray, branch_margin: float) -> np.ndarray:
    tr = u[..., 0, 0] + u[..., 1, 1]
    det = u[..., 0, 0] * u[..., 1, 1] - u[..., 0, 1] * u[..., 1, 0]
    disc = np.sqrt(tr * tr - 4.0 * det)
    lam1 = 0.5 * (tr + disc)
    lam2 = 0.5 * (tr - disc)
    th1 = np.angle(lam1)
    th2 = np.angle(lam2)
    max_phase = max(np.max(np.abs(th1), initial=0.0), np.max(np.abs(th2), initial=0.0))
    if max_phase >= np.pi - branch_margin:
        raise BranchCutError(
            f"eigenphase {max_phase:.6f} within {branch_margin:g} of the branch cut at pi"
        )
    eye = np.eye(2, dtype=u.dtype)
    degenerate = np.abs(disc) < 1e-8
    disc_safe = np.where(degenerate, 1.0, disc)[..., None, None]
    p1 = (u - lam2[..., None, None] * eye) / disc_safe
    log1 = (np.log(np.abs(lam1)) + 1j * th1)[..., None, None]
    log2 = (np.log(np.abs(lam2)) + 1j * th2)[..., None, None]
    generic = log1 * p1 + log2 * (eye - p1)
    # nearly scalar: U = lam (I + eps), log = log(lam) I + eps to first order
    lam_m = 0.5 * tr
    lam_m = lam_m / np.abs(lam_m)
    deg = (np.log(lam_m)[..., None, None] * eye) + (u / lam_m[..., None, None] - eye)
    out = np.where(degenerate[..., None, None], deg, generic)
    return _matfun.skew_part(out)


def _exp_skew_2x2(x: np.ndarray) -> np.ndarray:
    phi = -0.5j * (x[..., 0, 0] + x[..., 1, 1])  # real
    eye = np.eye(2, dtype=x.dtype)
    k = x - (1j * phi)[..., None, None] * eye
    det_k = k[..., 0, 0] * k[..., 1, 1] - k[..., 0, 1] * k[..., 1, 0]
    omega = np.sqrt(np.maximum(det_k.real, 0.0))
    small = omega < 1e-8
    om_safe = np.where(small, 1.0, omega)
    sinc = np.where(small, 1.0 - omega * omega / 6.0, np.sin(omega) / om_safe)
    out = np.cos(omega)[..., None, None] * eye + sinc[..., None, None] * k
    return np.exp(1j * phi)[..., None, None] * out


def log_unitary(u: np.ndarray, branch_margin: float = 1e-6) -> np.ndarray:
    """Principal matrix log of a stack of unitary matrices (skew-Hermitian result)."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape[-1] == 2:
        return _log_unitary_2x2(u, branch_margin)
    out, _ = _matfun.log_unitary_eigh(u, branch_margin)
    return out


def exp_skew(x: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack of skew-Hermitian matrices (unitary result)."""
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[-1] == 2:
        return _exp_skew_2x2(x)
    return _matfun.exp_skew_eigh(x)


def transition_logs(g: np.ndarray, branch_margin: float = 1e-6) -> np.ndarray:
    """L_k = log(g_k^dagger g_{k+1 mod N}) along axis -3 of a sample stack."""
    g = np.asarray(g, dtype=np.complex128)
    g_next = np.roll(g, -1, axis=-3)
    return log_unitary(_matfun.dagger(g) @ g_next, branch_margin)
