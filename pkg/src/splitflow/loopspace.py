"""Discrete based loops in U(r)/SU(r): energy, gradient, Hessian, geodesics.

A loop is sampled at t_k = k/N.  The energy of a loop is the chordal Riemann
sum

    E = (kappa / 4 pi^2) * N * sum_k || log(g_k^{-1} g_{k+1}) ||^2 ,

whose critical points are exactly the sampled geodesic loops
t -> q exp(2 pi i t diag(d)) q^{-1} with integer weights d, of energy
kappa * sum d_i^2 (exactly, at any admissible N).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, _matfun, liegroup
from .errors import DiscretizationError, ValidationError

FOUR_PI_SQ = 4.0 * np.pi**2


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightVector:
    """Unordered multiset of r integers, stored sorted descending."""

    entries: tuple

    def __post_init__(self):
        ent = tuple(sorted((int(d) for d in self.entries), reverse=True))
        object.__setattr__(self, "entries", ent)

    @property
    def rank(self) -> int:
        return len(self.entries)

    @property
    def trace(self) -> int:
        return sum(self.entries)

    def energy(self) -> int:
        """|u|_A: sum of squared weights."""
        return sum(d * d for d in self.entries)

    def sup(self) -> int:
        """|u|_{A,infty}: max |d_i|."""
        return max((abs(d) for d in self.entries), default=0)

    def is_zero(self) -> bool:
        return all(d == 0 for d in self.entries)

    def check_traceless(self) -> None:
        if self.trace != 0:
            raise ValidationError(f"weights {self.entries} are not traceless")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def as_weights(d) -> WeightVector:
    return d if isinstance(d, WeightVector) else WeightVector(tuple(d))


@dataclass(frozen=True)
class DiscreteLoop:
    """Based loop sampled at N points; samples[0] must be the identity."""

    spec: liegroup.GroupSpec
    samples: np.ndarray  # (N, r, r) complex

    def __post_init__(self):
        object.__setattr__(self, "samples", np.ascontiguousarray(self.samples, dtype=complex))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def validate(self, tol: float = liegroup.DEFAULT_TOL, adjacency: bool = True) -> None:
        n, r = self.samples.shape[0], self.samples.shape[-1]
        if r != self.spec.rank or self.samples.shape != (n, r, r):
            raise ValidationError(f"sample array shape {self.samples.shape} does not match rank {self.spec.rank}")
        liegroup.check_unitary(self.samples, tol, "loop samples")
        if np.max(np.abs(self.samples[0] - np.eye(r))) > tol:
            raise ValidationError("loop is not based: g_0 != identity")
        if self.spec.special:
            det = np.linalg.det(self.samples)
            if np.max(np.abs(det - 1.0)) > 10 * tol:
                raise ValidationError("special loop has non-unit determinant")
        if adjacency:
            logs = transition_logs(self)
            phases = np.max(np.abs(np.linalg.eigvalsh(-1j * logs)), axis=-1)
            worst = float(np.max(phases))
            if worst >= np.pi / 2:
                raise ValidationError(
                    f"adjacent samples {worst:.3f} apart (>= pi/2); discretization inadequate")

    def transitions(self) -> np.ndarray:
        return _matfun.dagger(self.samples) @ np.roll(self.samples, -1, axis=0)

    def subsample(self, factor: int = 2) -> "DiscreteLoop":
        if self.n_samples % factor != 0:
            raise DiscretizationError("sample count not divisible by coarsening factor")
        return DiscreteLoop(self.spec, self.samples[::factor])

    def refine_midpoints(self) -> "DiscreteLoop":
        """Insert geodesic midpoints; preserves the discrete energy exactly."""
        logs = transition_logs(self)
        mid = self.samples @ _kernels.exp_skew(0.5 * logs)
        out = np.empty((2 * self.n_samples,) + self.samples.shape[1:], dtype=complex)
        out[0::2] = self.samples
        out[1::2] = mid
        return DiscreteLoop(self.spec, out)


@dataclass(frozen=True)
class LoopTangent:
    """Based variation field: skew-Hermitian xi_k with xi_0 = 0."""

    fields: np.ndarray  # (N, r, r) complex

    def __post_init__(self):
        object.__setattr__(self, "fields", np.ascontiguousarray(self.fields, dtype=complex))

    def validate(self, tol: float = liegroup.DEFAULT_TOL) -> None:
        liegroup.check_skew(self.fields, tol, "tangent fields")
        if np.max(np.abs(self.fields[0])) > tol:
            raise ValidationError("tangent is not based: xi_0 != 0")

    def norm(self) -> float:
        v = -np.real(np.einsum("kij,kji->", self.fields, self.fields))
        return float(np.sqrt(max(v, 0.0) / self.fields.shape[0]))


def tangent_pairing(a: LoopTangent, b: LoopTangent) -> float:
    """Discrete L^2 pairing (1/N) sum_k <a_k, b_k> with the kappa = 1 metric."""
    v = -np.real(np.einsum("kij,kji->", a.fields, b.fields))
    return float(v / a.fields.shape[0])


# ---------------------------------------------------------------------------
# energy, gradient, geodesics
# ---------------------------------------------------------------------------

def transition_logs(loop: DiscreteLoop, branch_margin: float = 1e-6) -> np.ndarray:
    return _kernels.transition_logs(loop.samples, branch_margin)


def loop_energy(loop: DiscreteLoop, branch_margin: float = 1e-6) -> float:
    logs = transition_logs(loop, branch_margin)
    n = loop.n_samples
    sq = -np.real(np.einsum("kij,kji->", logs, logs))
    return float(loop.spec.metric_scale * n * sq / FOUR_PI_SQ)


def energy_gradient(loop: DiscreteLoop, branch_margin: float = 1e-6) -> LoopTangent:
    """Discrete L^2 gradient; exact first variation of ``loop_energy``.

    With L_k = log(g_k^{-1} g_{k+1}), the pairing of the gradient with any
    based tangent eta equals d/de E(gamma exp(e eta)):

        grad_k = (N^2 / 2 pi^2) (L_{k-1} - L_k),  grad_0 = 0 .
    """
    logs = transition_logs(loop, branch_margin)
    n = loop.n_samples
    grad = (n * n / (2.0 * np.pi**2)) * (np.roll(logs, 1, axis=0) - logs)
    grad[0] = 0.0
    return LoopTangent(grad)


def retract(loop: DiscreteLoop, tangent: LoopTangent, scale: float = 1.0) -> DiscreteLoop:
    """Pointwise right-translated retraction g_k -> g_k exp(scale xi_k)."""
    return DiscreteLoop(loop.spec, loop.samples @ _kernels.exp_skew(scale * tangent.fields))


def geodesic_loop(d, conjugator: np.ndarray | None = None, n_samples: int = 256,
                  spec: liegroup.GroupSpec | None = None) -> DiscreteLoop:
    """Samples of t -> q exp(2 pi i t diag(d)) q^{-1}; energy sum(d_i^2) exactly."""
    d = as_weights(d)
    if n_samples < 8 * (d.sup() + 1):
        raise DiscretizationError(
            f"N = {n_samples} too small for weights {d.entries}; need >= {8 * (d.sup() + 1)}")
    r = d.rank
    if spec is None:
        spec = liegroup.GroupSpec(r, special=(d.trace == 0))
    q = np.eye(r, dtype=complex) if conjugator is None else np.asarray(conjugator, dtype=complex)
    liegroup.check_unitary(q, what="conjugator")
    t = np.arange(n_samples) / n_samples
    phases = np.exp(2j * np.pi * np.outer(t, np.array(d.entries)))
    diag = np.zeros((n_samples, r, r), dtype=complex)
    idx = np.arange(r)
    diag[:, idx, idx] = phases
    return DiscreteLoop(spec, q @ diag @ q.conj().T)


def constant_loop(spec: liegroup.GroupSpec, n_samples: int = 256) -> DiscreteLoop:
    eye = np.eye(spec.rank, dtype=complex)
    return DiscreteLoop(spec, np.broadcast_to(eye, (n_samples, spec.rank, spec.rank)).copy())


def random_loop(rng: np.random.Generator, spec: liegroup.GroupSpec, n_samples: int = 256,
                modes: int = 3, amplitude: float = 0.3) -> DiscreteLoop:
    """Smooth random based loop: g(t) = exp(S(t)) with S a low-mode trig field, S(0) = 0."""
    t = np.arange(n_samples) / n_samples
    s = np.zeros((n_samples, spec.rank, spec.rank), dtype=complex)
    for m in range(1, modes + 1):
        a = liegroup.random_skew(rng, spec.rank, amplitude / m, spec.special)
        b = liegroup.random_skew(rng, spec.rank, amplitude / m, spec.special)
        s += np.sin(2 * np.pi * m * t)[:, None, None] * a
        s += (np.cos(2 * np.pi * m * t) - 1.0)[:, None, None] * b
    return DiscreteLoop(spec, _kernels.exp_skew(s))


def random_tangent(rng: np.random.Generator, loop: DiscreteLoop, modes: int = 4,
                   amplitude: float = 1.0) -> LoopTangent:
    n, r = loop.n_samples, loop.spec.rank
    t = np.arange(n) / n
    xi = np.zeros((n, r, r), dtype=complex)
    for m in range(1, modes + 1):
        a = liegroup.random_skew(rng, r, amplitude / m, loop.spec.special)
        b = liegroup.random_skew(rng, r, amplitude / m, loop.spec.special)
        xi += np.sin(2 * np.pi * m * t)[:, None, None] * a
        xi += (np.cos(2 * np.pi * m * t) - 1.0)[:, None, None] * b
    xi[0] = 0.0
    return LoopTangent(xi)


# ---------------------------------------------------------------------------
# second variation and Morse indices
# ---------------------------------------------------------------------------

def second_variation_matrix(loop: DiscreteLoop) -> np.ndarray:
    """Dense symmetric matrix of the second variation on based tangents.

    The quadratic form is d^2/de^2 E(gamma exp(e xi)) expressed in the
    orthonormal basis sqrt(N) * (E_alpha at node k), k = 1..N-1, i.e. with
    respect to the discrete L^2 metric used by ``tangent_pairing``.  Exact
    (Daleckii-Krein) derivatives of the matrix log are used, so the assembly
    is valid at any loop, critical or not.
    """
    spec = loop.spec
    n, r = loop.n_samples, spec.rank
    basis = liegroup.algebra_basis(spec)
    dim = basis.shape[0]

    trans = loop.transitions()
    theta, vecs = _matfun.unitary_eigphases(trans)  # (n, r), (n, r, r)
    lam = np.exp(1j * theta)
    u = 1j * theta

    p1 = _matfun.log_divided_diff(theta)            # (n, r, r) over pairs (i, j)
    w2 = _matfun.log_second_divided_diff_sym(theta)  # psi2(i, k, i) over (i, k)

    li = lam[:, :, None]
    lj = lam[:, None, :]
    ui = u[:, :, None]
    uj = u[:, None, :]
    # bracket coefficients of the quadratic expansion of -tr(log^2 T(e))
    br_aa = ui + 2.0 * ui * w2 * li * lj + p1**2 * li * lj
    br_ab = -2.0 * ui * lj / li - 2.0 * lj**2 * (ui * w2 + uj * np.swapaxes(w2, -1, -2)) \
        - 2.0 * p1**2 * lj**2

    # basis transported to the transition eigenbases: (n, dim, r, r)
    vme = np.einsum("nqi,aqp,npj->naij", vecs.conj(), basis, vecs)
    vme_swap = np.swapaxes(vme, -1, -2)

    # quadratic form pieces per transition: S_ab = sum_ij coeff_ij A_ij B_ji
    s_aa = np.einsum("nij,naij,nbji->nab", br_aa, vme, vme)
    s_ab = np.einsum("nij,naij,nbji->nab", br_ab, vme, vme)

    scale = spec.metric_scale * n / FOUR_PI_SQ
    blk_diag = -2.0 * scale * 0.5 * (s_aa + np.swapaxes(s_aa, -1, -2))
    blk_cross = -2.0 * scale * s_ab

    imag_defect = max(np.max(np.abs(blk_diag.imag)), np.max(np.abs(blk_cross.imag)))
    if imag_defect > 1e-8:
        raise ValidationError(f"Hessian assembly lost symmetry (imag defect {imag_defect:.2e})")
    blk_diag = blk_diag.real
    blk_cross = blk_cross.real

    size = (n - 1) * dim
    h = np.zeros((size, size))

    def sl(k):  # node k in 1..n-1
        return slice((k - 1) * dim, k * dim)

    for k in range(n):
        a, b = k, (k + 1) % n  # transition k couples nodes k and k+1
        if a != 0:
            h[sl(a), sl(a)] += blk_diag[k]
        if b != 0:
            h[sl(b), sl(b)] += blk_diag[k]
        if a != 0 and b != 0:
            h[sl(a), sl(b)] += 0.5 * blk_cross[k]
            h[sl(b), sl(a)] += 0.5 * blk_cross[k].T
    # the quadratic form is x^T H x with H as assembled; normalize to the
    # L^2 metric (basis vectors have plain norm 1/sqrt(N)) and symmetrize
    h = n * 0.5 * (h + h.T)
    return h


def second_variation_form(loop: DiscreteLoop, tangent: LoopTangent) -> float:
    """Evaluate the second variation d^2/de^2 E(gamma exp(e xi)) directly."""
    spec = loop.spec
    basis = liegroup.algebra_basis(spec)
    h = second_variation_matrix(loop)
    # coordinates of xi in the plain node basis
    coords = np.real(-np.einsum("kij,aji->ka", tangent.fields[1:], basis)) * spec.metric_scale
    x = coords.reshape(-1)
    return float(x @ h @ x) / loop.n_samples


@dataclass(frozen=True)
class HessianReport:
    negative: int
    near_zero: int
    expected_null: int
    eigenvalues: np.ndarray = field(repr=False)
    threshold: float = 0.0


def critical_manifold_dim(d: WeightVector, special: bool = True) -> int:
    """dim of the conjugation orbit of diag geodesics: r^2 - sum (multiplicities^2)."""
    mult = {}
    for x in d.entries:
        mult[x] = mult.get(x, 0) + 1
    return d.rank**2 - sum(m * m for m in mult.values())


def loop_hessian_report(loop: DiscreteLoop, grad_tol: float = 1e-4,
                        eps_index: float | None = None,
                        expected_null: int | None = None) -> HessianReport:
    gn = energy_gradient(loop).norm()
    if gn > grad_tol:
        raise ValidationError(
            f"loop is not critical: gradient norm {gn:.3e} > {grad_tol:g}")
    n = loop.n_samples
    if eps_index is None:
        eps_index = 1e-6 * n
    h = second_variation_matrix(loop)
    evals = np.linalg.eigvalsh(h)
    negative = int(np.sum(evals < -eps_index))
    near_zero = int(np.sum(np.abs(evals) <= eps_index))
    if expected_null is None:
        expected_null = 0
    return HessianReport(negative, near_zero, expected_null, evals, eps_index)


def loop_hessian_negative_count(loop: DiscreteLoop, grad_tol: float = 1e-4,
                                eps_index: float | None = None) -> int:
    """Morse index oracle: count of second-variation eigenvalues below -eps_index."""
    return loop_hessian_report(loop, grad_tol, eps_index).negative


# ---------------------------------------------------------------------------
# printed index formula, calibration, enumeration
# ---------------------------------------------------------------------------

def _reading_active_pairs(d: WeightVector) -> int:
    return sum(2 * abs(a - b) - 2 for a, b in itertools.combinations(d.entries, 2) if a != b)


def _reading_all_pairs(d: WeightVector) -> int:
    return sum(2 * abs(a - b) - 2 for a, b in itertools.combinations(d.entries, 2))


def _reading_global(d: WeightVector) -> int:
    return sum(2 * abs(a - b) for a, b in itertools.combinations(d.entries, 2)) - 2

INDEX_READINGS = {
    "active-pairs": _reading_active_pairs,
    "all-pairs": _reading_all_pairs,
    "global-minus-two": _reading_global,
}

# selected against the Hessian oracle; see calibrate_index_formula and the tests
CALIBRATED_READING = "active-pairs"


def formula_morse_index(d, reading: str | None = None) -> int:
    """Morse index of the weight-d geodesic by the calibrated pairwise formula."""
    d = as_weights(d)
    if len(set(d.entries)) < 2:
        raise ValidationError(
            f"index formula undefined on constant weights {d.entries}; the minimum has index 0")
    return INDEX_READINGS[reading or CALIBRATED_READING](d)


def calibrate_index_formula(oracle_values: dict) -> str:
    """Pick the formula reading that reproduces every oracle value exactly.

    ``oracle_values`` maps weight tuples to Hessian-oracle indices.  Raises
    ConvergenceError if no reading (or more than one) survives.
    """
    survivors = []
    for name, fn in INDEX_READINGS.items():
        if all(fn(as_weights(d)) == v for d, v in oracle_values.items()):
            survivors.append(name)
    if not survivors:
        raise ValidationError(f"no formula reading matches the oracle data {oracle_values}")
    return survivors[0]


def morse_index(d, reading: str | None = None) -> int:
    """Calibrated index extended to constant weights (index 0 at minima)."""
    d = as_weights(d)
    if len(set(d.entries)) < 2:
        return 0
    return formula_morse_index(d, reading)


def enumerate_low_index_weights(r: int, bound: int, reading: str | None = None):
    """All traceless weight vectors with calibrated Morse index <= bound.

    Bounded search over max|d_i| <= bound + 2: traceless vectors with a
    larger entry have index >= 2 max|d_i| - 2 > bound.
    """
    if bound < 0:
        raise ValidationError("bound must be >= 0")
    cap = bound + 2
    seen = set()
    out = []
    for combo in itertools.combinations_with_replacement(range(-cap, cap + 1), r):
        if sum(combo) != 0:
            continue
        d = WeightVector(combo)
        if d.entries in seen:
            continue
        seen.add(d.entries)
        if morse_index(d, reading) <= bound:
            out.append(d)
    out.sort(key=lambda w: (w.energy(), w.entries))
    return out
