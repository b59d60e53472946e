"""Flow-free splitting-type oracle for matrix loops via Toeplitz kernel ranks.

Conventions (pinned; see the README):
  * a LaurentLoop is gamma(z) = sum_{|k| <= m} A_k z^k, invertible on |z| = 1;
  * the loop diag(z^{-d_1}, ..., z^{-d_r}) clutches O(d_1) + ... + O(d_r);
  * h^0 of the k-twist is Sigma_i max(0, d_i + k + 1), computed as the kernel
    dimension of p -> (coefficients of z^j in gamma p, j > k) on polynomial
    vectors p of degree <= K;
  * sum(d_i) = -det_winding(gamma);
  * a DiscreteLoop sample g(t) corresponds to z = exp(-2 pi i t), so the
    geodesic loop with weights d is the Laurent loop q z^{-diag(d)} q^{-1}
    and both the flow path and this oracle report the same multiset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import liegroup, loopspace
from .errors import (DiscretizationError, SmoothnessError, TruncationError,
                     ValidationError)
from .loopspace import DiscreteLoop, WeightVector, as_weights

RANK_RTOL = 1e-7          # numerical-rank threshold relative to sigma_max
UNIT_SAMPLES = 1024


@dataclass(frozen=True)
class LaurentLoop:
    """Matrix loop with finite Laurent expansion, coeffs[j] = A_{j - m}."""

    rank: int
    coeffs: np.ndarray  # (2m + 1, r, r) complex

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=complex)
        if c.ndim != 3 or c.shape[1] != self.rank or c.shape[2] != self.rank:
            raise ValidationError(f"coefficient array shape {c.shape} invalid for rank {self.rank}")
        if c.shape[0] % 2 == 0:
            raise ValidationError("need coefficients for k in [-m, m] (odd count)")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        powers = z[..., None] ** np.arange(-self.degree, self.degree + 1)
        return np.einsum("...k,kij->...ij", powers, self.coeffs)

    def validate(self, cond_cap: float = 1e8, samples: int = UNIT_SAMPLES) -> None:
        z = np.exp(2j * np.pi * np.arange(samples) / samples)
        vals = self(z)
        cond = np.linalg.cond(vals)
        worst = float(np.max(cond))
        if not np.isfinite(worst) or worst > cond_cap:
            raise ValidationError(
                f"loop not safely invertible on |z|=1 (condition number {worst:.3e})")


def laurent_from_function(fn, degree: int, rank: int, samples: int = UNIT_SAMPLES) -> LaurentLoop:
    """Project a circle-sampled matrix function onto Laurent degree <= degree."""
    z = np.exp(2j * np.pi * np.arange(samples) / samples)
    vals = fn(z)
    coef = np.fft.ifft(vals, axis=0)  # index q holds A_{-q mod samples}
    out = np.empty((2 * degree + 1, rank, rank), dtype=complex)
    for k in range(-degree, degree + 1):
        out[k + degree] = coef[(-k) % samples]
    return LaurentLoop(rank, out)


def det_winding(gamma: LaurentLoop, samples: int = UNIT_SAMPLES) -> int:
    """Winding number of det gamma around 0 by principal-branch phase summation."""
    z = np.exp(2j * np.pi * np.arange(samples + 1) / samples)
    det = np.linalg.det(gamma(z))
    if np.min(np.abs(det)) < 1e-12:
        raise ValidationError("determinant vanishes on the circle")
    inc = np.angle(det[1:] / det[:-1])
    if np.max(np.abs(inc)) >= np.pi / 2:
        raise DiscretizationError(
            "phase increment >= pi/2 between adjacent samples; resample denser")
    total = float(np.sum(inc))
    winding = round(total / (2.0 * np.pi))
    if abs(total - 2.0 * np.pi * winding) > 1e-3:
        raise ValidationError(f"phase increment {total:.6f} not near a multiple of 2 pi")
    return int(winding)


def _twist_kernel_dim(gamma: LaurentLoop, k: int, big_k: int) -> int:
    """dim { p in C[z]^r, deg <= K : coefficient of z^j in gamma p is 0 for j > k }."""
    m, r = gamma.degree, gamma.rank
    n_cols = r * (big_k + 1)
    j_min, j_max = k + 1, m + big_k
    if j_max < j_min:
        return n_cols
    rows = j_max - j_min + 1
    mat = np.zeros((rows * r, n_cols), dtype=complex)
    for s in range(big_k + 1):
        for kk in range(-m, m + 1):
            j = kk + s
            if j_min <= j <= j_max:
                blk = j - j_min
                mat[blk * r:(blk + 1) * r, s * r:(s + 1) * r] = gamma.coeffs[kk + m]
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0:
        return n_cols
    tol = RANK_RTOL * sv[0]
    rank = int(np.sum(sv > tol))
    return n_cols - rank


def h0_twisted(gamma: LaurentLoop, k: int, big_k: int | None = None) -> int:
    """h^0 of the clutched bundle twisted by k, stable under K -> K + 2."""
    m = gamma.degree
    if big_k is None:
        big_k = m + abs(k) + gamma.rank * m + 4
    if big_k < m + abs(k) + 1:
        raise ValidationError(f"truncation K = {big_k} too small (need >= {m + abs(k) + 1})")
    first = _twist_kernel_dim(gamma, k, big_k)
    second = _twist_kernel_dim(gamma, k, big_k + 2)
    if first != second:
        raise TruncationError(
            f"h^0(k={k}) unstable under K -> K+2 ({first} vs {second}); raise K")
    return first


def splitting_type(gamma: LaurentLoop, cond_cap: float = 1e8,
                   max_index: int | None = None) -> WeightVector:
    """Birkhoff-Grothendieck splitting type from the h^0 jump pattern.

    h^0(k) - h^0(k-1) = #{i : d_i >= -k}; scanning k upward recovers the
    multiset.  The result satisfies sum d_i = -det_winding(gamma).
    ``max_index`` optionally narrows the scan when a bound on |d_i| is known.
    """
    gamma.validate(cond_cap)
    m, r = gamma.degree, gamma.rank
    cap = m if max_index is None else min(m, max_index)
    lo = -(cap + 2)
    hi = cap + 2
    h_prev = h0_twisted(gamma, lo - 1)
    if h_prev != 0:
        raise ValidationError(f"h^0 at twist {lo - 1} is {h_prev}, expected 0; "
                              "partial indices out of the scanned range")
    weights: list[int] = []
    jump_prev = 0
    k = lo
    while k <= hi + 2:
        h_cur = h0_twisted(gamma, k)
        jump = h_cur - h_prev
        if jump < jump_prev or jump > r:
            raise ValidationError(
                f"inconsistent h^0 jump pattern at twist k={k}: jump {jump} after {jump_prev}")
        weights.extend([-k] * (jump - jump_prev))
        jump_prev, h_prev = jump, h_cur
        if jump == r:
            break
        k += 1
    else:
        raise ValidationError("h^0 jumps never reached full rank; raise the scan range")
    d = WeightVector(tuple(weights))
    if len(d) != r:
        raise ValidationError(f"recovered {len(d)} indices for rank {r}")
    if d.trace != -det_winding(gamma):
        raise ValidationError(
            f"splitting {d.entries} violates sum d = -winding ({det_winding(gamma)})")
    return d


def loop_to_laurent(loop: DiscreteLoop, degree: int | None = None,
                    decay_tol: float = 1e-8, recon_tol: float = 1e-6) -> LaurentLoop:
    """DFT bridge from sampled loops to Laurent loops, z = exp(-2 pi i t).

    A_k = (1/N) sum_j g_j e^{+2 pi i k j / N}; coefficients beyond the chosen
    degree must decay below ``decay_tol``.
    """
    g = loop.samples
    n = loop.n_samples
    coef = np.fft.fft(g, axis=0) / n  # index q holds (1/N) sum_j g_j e^{-2pi i q j/N}
    # our A_k is the fft coefficient at q = -k mod N
    mags = np.linalg.norm(coef, axis=(1, 2))
    half = n // 2
    nyquist_mag = float(max(mags[half - 1], mags[half], mags[(n - half + 1) % n]))
    if nyquist_mag > decay_tol:
        raise SmoothnessError(
            f"Fourier magnitude {nyquist_mag:.3e} at the Nyquist band exceeds {decay_tol:g}; "
            "the loop is too rough for this sample count")
    if degree is None:
        degree = 1
        for k in range(1, half):
            if mags[k] > decay_tol or mags[n - k] > decay_tol:
                degree = k
        degree = min(degree + 2, half - 1)
    if degree >= half:
        raise SmoothnessError(f"requested degree {degree} >= Nyquist {half}")
    tail = 0.0
    for k in range(degree + 1, half):
        tail = max(tail, mags[k], mags[n - k])
    if tail > decay_tol:
        raise SmoothnessError(
            f"Fourier tail {tail:.3e} beyond |k| = {degree} exceeds {decay_tol:g}; "
            "raise the degree or sample count")
    out = np.empty((2 * degree + 1, loop.spec.rank, loop.spec.rank), dtype=complex)
    for k in range(-degree, degree + 1):
        out[k + degree] = coef[(-k) % n]
    lau = LaurentLoop(loop.spec.rank, out)
    t = np.arange(n) / n
    recon = lau(np.exp(-2j * np.pi * t))
    err = float(np.max(np.abs(recon - g)))
    if err > recon_tol:
        raise SmoothnessError(f"Laurent reconstruction error {err:.3e} > {recon_tol:g}")
    return lau


def splitting_of_loop(loop: DiscreteLoop, degree: int | None = None) -> WeightVector:
    return splitting_type(loop_to_laurent(loop, degree))


# ---------------------------------------------------------------------------
# planted factorizations and the unitary stratum representative
# ---------------------------------------------------------------------------

def planted_factorization(rng: np.random.Generator, d, poly_degree: int = 2,
                          amplitude: float = 0.3) -> LaurentLoop:
    """gamma_- z^{-diag(d)} gamma_+ with random unipotent triangular factors.

    gamma_- is lower unipotent in 1/z (identity at infinity), gamma_+ upper
    unipotent in z, so the planted d is the exact splitting type.
    """
    d = as_weights(d)
    r = d.rank
    def unipotent(lower: bool):
        coeffs = np.zeros((poly_degree + 1, r, r), dtype=complex)
        coeffs[0] = np.eye(r)
        for p in range(1, poly_degree + 1):
            m = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r)))
            m *= amplitude / p
            coeffs[p] = np.tril(m, -1) if lower else np.triu(m, 1)
        return coeffs
    lo = unipotent(True)    # in 1/z
    up = unipotent(False)   # in z
    m_tot = poly_degree + max(d.sup(), 0) + poly_degree
    def fn(z):
        zm = z[..., None, None]
        gm = sum(lo[p] * zm ** (-p) for p in range(poly_degree + 1))
        gp = sum(up[p] * zm ** p for p in range(poly_degree + 1))
        diag = np.zeros(z.shape + (r, r), dtype=complex)
        idx = np.arange(r)
        diag[..., idx, idx] = z[..., None] ** (-np.array(d.entries))
        return gm @ diag @ gp
    return laurent_from_function(fn, m_tot, r)


def spectral_factor(gamma: LaurentLoop, n_blocks: int | None = None,
                    tol: float = 1e-9, max_blocks: int = 400):
    """Canonical factor of Phi = gamma^* gamma by Bauer's block-Toeplitz method.

    Returns polynomial coefficients C_s of gamma_+(z) = sum C_s z^s with
    gamma_+ invertible on the closed unit disk and gamma_+^* gamma_+ = Phi.
    """
    m, r = gamma.degree, gamma.rank
    a = gamma.coeffs
    # Phi_j = sum_k A_k^* A_{k+j}, j in [-2m, 2m]
    phi = np.zeros((4 * m + 1, r, r), dtype=complex)
    for j in range(-2 * m, 2 * m + 1):
        acc = np.zeros((r, r), dtype=complex)
        for k in range(-m, m + 1):
            if -m <= k + j <= m:
                acc += a[k + m].conj().T @ a[k + j + m]
        phi[j + 2 * m] = acc
    if n_blocks is None:
        n_blocks = max(8 * m + 8, 32)
    last = None
    while n_blocks <= max_blocks:
        n = n_blocks
        big = np.zeros((n * r, n * r), dtype=complex)
        for i in range(n):
            for j in range(n):
                jj = j - i
                if -2 * m <= jj <= 2 * m:
                    big[i * r:(i + 1) * r, j * r:(j + 1) * r] = phi[jj + 2 * m]
        try:
            chol = scipy.linalg.cholesky(big, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ValidationError("loop Gram symbol is not positive definite") from exc
        row = chol[(n - 1) * r:n * r]
        c = [row[:, (n - 1 - s) * r:(n - s) * r].conj().T for s in range(min(n, 4 * m + 4))]
        c = np.stack(c)
        if last is not None and last.shape == c.shape:
            if float(np.max(np.abs(c - last))) < tol:
                return c
        last = c
        n_blocks *= 2
    raise ValidationError("Bauer spectral factorization did not stabilize")


def unitary_stratum_loop(gamma: LaurentLoop, n_samples: int = 256,
                         spec: liegroup.GroupSpec | None = None,
                         unitarity_tol: float = 1e-6) -> DiscreteLoop:
    """Based unitary loop in the same Birkhoff stratum as gamma.

    Uses the loop-group Iwasawa decomposition gamma = u . gamma_+ with
    gamma_+ holomorphic and invertible on the closed 0-disk (computed by
    spectral factorization of gamma^* gamma); right multiplication by such a
    factor preserves partial indices, so u has the same splitting type.
    """
    c = spectral_factor(gamma)
    r = gamma.rank
    # check gamma_+ invertibility on the closed disk: winding of det on the circle is 0
    def gp(z):
        zm = z[..., None, None]
        return sum(c[s] * zm ** s for s in range(c.shape[0]))
    zs = np.exp(2j * np.pi * np.arange(UNIT_SAMPLES) / UNIT_SAMPLES)
    det = np.linalg.det(gp(zs))
    if np.min(np.abs(det)) < 1e-10:
        raise ValidationError("spectral factor nearly singular on the circle")
    inc = np.angle(np.roll(det, -1) / det)
    if abs(float(np.sum(inc))) > 1e-3:
        raise ValidationError("spectral factor has zeros inside the disk")
    t = np.arange(n_samples) / n_samples
    z = np.exp(-2j * np.pi * t)
    vals = gamma(z) @ np.linalg.inv(gp(z))
    defect = liegroup.unitarity_defect(vals)
    if defect > unitarity_tol:
        raise ValidationError(f"Iwasawa unitary part off unitary by {defect:.2e}")
    from ._matfun import polar_unitary
    vals = polar_unitary(vals)
    vals = np.linalg.inv(vals[0])[None] @ vals  # base the loop at the identity
    if spec is None:
        spec = liegroup.GroupSpec(r, special=False)
    return DiscreteLoop(spec, vals)
