"""Negative energy-gradient flow on discrete loops and weight extraction.

``run_flow`` is the plain explicit scheme gamma <- gamma exp(-step grad) with
adaptive step halving.  Explicit stepping is stability-limited by step ~ pi^2/N^2,
so pipelines use ``run_flow_multilevel``: coarsen the loop, flow, prolong by
geodesic midpoints (which preserves the discrete energy exactly) and polish.
Every recorded energy sequence stays non-increasing across levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, _matfun, liegroup, loopspace
from .errors import ConvergenceError, SnapError, ValidationError
from .loopspace import DiscreteLoop, LoopTangent, WeightVector

TWO_PI_SQ = 2.0 * np.pi**2


@dataclass(frozen=True)
class FlowConfig:
    step_size: float = 2e-2
    max_steps: int = 60000
    grad_tol: float = 1e-5
    snap_tol: float = 0.25
    adaptive: bool = True
    coarse_samples: int = 32       # coarsest level used by the multilevel driver
    branch_margin: float = 1e-6

    def __post_init__(self):
        if self.step_size <= 0 or self.grad_tol <= 0:
            raise ValidationError("step_size and grad_tol must be positive")
        if not (0.0 < self.snap_tol < 0.5):
            raise ValidationError("snap_tol must lie in (0, 0.5)")


@dataclass(frozen=True)
class FlowTrace:
    energies: np.ndarray
    final_loop: DiscreteLoop
    steps_taken: int
    converged: bool
    grad_norm: float = np.inf
    levels: tuple = ()

    def validate_monotone(self, slack: float = 1e-12) -> None:
        e = self.energies
        if e.size and np.any(np.diff(e) > slack * np.maximum(1.0, e[:-1])):
            raise ValidationError("energy sequence is not non-increasing")


def _energy_and_logs(samples: np.ndarray, kappa: float, branch_margin: float):
    """Batched energy and transition logs for a (B, N, r, r) sample stack."""
    logs = _kernels.transition_logs(samples, branch_margin)
    n = samples.shape[-3]
    sq = -np.real(np.einsum("...kij,...kji->...", logs, logs))
    return kappa * n * sq / loopspace.FOUR_PI_SQ, logs


def _gradient_from_logs(logs: np.ndarray) -> np.ndarray:
    n = logs.shape[-3]
    grad = (n * n / TWO_PI_SQ) * (np.roll(logs, 1, axis=-3) - logs)
    grad[..., 0, :, :] = 0.0
    return grad


def _grad_norms(grad: np.ndarray) -> np.ndarray:
    n = grad.shape[-3]
    sq = -np.real(np.einsum("...kij,...kji->...", grad, grad))
    return np.sqrt(np.maximum(sq / n, 0.0))


def _descend_batch(samples: np.ndarray, cfg: FlowConfig, kappa: float,
                   max_steps: int, record: list | None = None):
    """Vectorized adaptive descent on a (B, N, r, r) stack.

    Returns (samples, energy, grad_norm, steps, converged mask).  Converged
    samples are frozen.  ``record`` (single-sample runs) collects accepted
    energies in order.
    """
    b = samples.shape[0]
    steps = np.full(b, cfg.step_size)
    energy, logs = _energy_and_logs(samples, kappa, cfg.branch_margin)
    if record is not None:
        record.append(energy.copy())
    grad = _gradient_from_logs(logs)
    gnorm = _grad_norms(grad)
    active = gnorm > cfg.grad_tol
    taken = 0
    for _ in range(max_steps):
        if not np.any(active):
            break
        taken += 1
        proposal = samples.copy()
        idx = np.nonzero(active)[0]
        upd = _kernels.exp_skew(-steps[idx, None, None, None] * grad[idx])
        proposal[idx] = samples[idx] @ upd
        new_energy, new_logs = _energy_and_logs(proposal, kappa, cfg.branch_margin)
        if cfg.adaptive:
            worse = active & (new_energy > energy)
            good = active & ~worse
            steps[worse] *= 0.5
            steps[good] *= 1.02
        else:
            good = active
        gi = np.nonzero(good)[0]
        if gi.size:
            samples[gi] = proposal[gi]
            energy[gi] = new_energy[gi]
            grad[gi] = _gradient_from_logs(new_logs[gi])
            gnorm[gi] = _grad_norms(grad[gi])
        if record is not None:
            record.append(energy.copy())
        active = gnorm > cfg.grad_tol
    return samples, energy, gnorm, taken, ~ (gnorm > cfg.grad_tol)


def run_flow(loop: DiscreteLoop, cfg: FlowConfig = FlowConfig()) -> FlowTrace:
    """Explicit negative-gradient flow at fixed resolution."""
    record: list = []
    samples = loop.samples[None].copy()
    samples, energy, gnorm, steps, conv = _descend_batch(
        samples, cfg, loop.spec.metric_scale, cfg.max_steps, record)
    energies = np.array([e[0] for e in record])
    final = DiscreteLoop(loop.spec, samples[0])
    return FlowTrace(energies, final, steps, bool(conv[0]), float(gnorm[0]), (loop.n_samples,))


def _spectral_floor(samples: np.ndarray, decay_tol: float = 1e-6) -> int:
    """Smallest admissible coarse level: 4x the effective Fourier bandwidth.

    Coarsening below the bandwidth aliases the loop and can silently move it
    across Birkhoff strata, which the flow must not do.
    """
    coef = np.fft.fft(samples, axis=-3) / samples.shape[-3]
    mags = np.linalg.norm(coef, axis=(-1, -2))
    if mags.ndim > 1:
        mags = mags.max(axis=tuple(range(mags.ndim - 1)))
    n = mags.shape[0]
    band = 1
    for k in range(1, n // 2):
        if mags[k] > decay_tol or mags[n - k] > decay_tol:
            band = k
    return 4 * band


def _level_schedule(n: int, coarse: int, floor: int = 8):
    coarse = max(coarse, floor, 8)
    levels = [n]
    while levels[-1] % 2 == 0 and levels[-1] // 2 >= coarse:
        levels.append(levels[-1] // 2)
    return levels[::-1]


def run_flow_multilevel(loop: DiscreteLoop, cfg: FlowConfig = FlowConfig()) -> FlowTrace:
    """Coarsen-flow-prolong driver around ``run_flow``'s scheme.

    Coarsening (subsampling) never increases the discrete energy and midpoint
    prolongation preserves it exactly, so the concatenated energy record is
    still non-increasing.
    """
    levels = _level_schedule(loop.n_samples, cfg.coarse_samples,
                             _spectral_floor(loop.samples))
    current = loop
    while current.n_samples > levels[0]:
        current = current.subsample(2)
    energies = []
    total_steps = 0
    converged = False
    gnorm = np.inf
    for i, lv in enumerate(levels):
        rec: list = []
        samples = current.samples[None].copy()
        samples, energy, gn, steps, conv = _descend_batch(
            samples, cfg, loop.spec.metric_scale, cfg.max_steps, rec)
        energies.extend(e[0] for e in rec)
        total_steps += steps
        current = DiscreteLoop(loop.spec, samples[0])
        converged, gnorm = bool(conv[0]), float(gn[0])
        if i + 1 < len(levels):
            current = current.refine_midpoints()
    return FlowTrace(np.array(energies), current, total_steps, converged, gnorm, tuple(levels))


def average_velocity(loop: DiscreteLoop, branch_margin: float = 1e-6):
    """(xi, defect): xi = N * mean_k log(g_k^{-1} g_{k+1}), defect = max_k |N L_k - xi|."""
    logs = loopspace.transition_logs(loop, branch_margin)
    n = loop.n_samples
    xi = n * logs.mean(axis=0)
    defect = float(np.max(np.linalg.norm(n * logs - xi, axis=(1, 2))))
    return xi, defect


def extract_weights(loop: DiscreteLoop, snap_tol: float = 0.25,
                    vel_tol: float | None = None) -> WeightVector:
    """Integer weights of a (numerically) critical loop.

    Averages the log-velocity, takes eigenvalues of xi/(2 pi i) and snaps them
    to integers; fails if velocities are non-constant beyond tolerance or an
    eigenvalue is farther than ``snap_tol`` from an integer.
    """
    if vel_tol is None:
        vel_tol = 2.0 * np.pi * snap_tol
    xi, defect = average_velocity(loop)
    if defect > vel_tol:
        raise SnapError(
            f"loop has non-constant velocity (defect {defect:.3e} > {vel_tol:.3e}); "
            "not converged to a geodesic")
    w = np.linalg.eigvalsh(-1j * xi) / (2.0 * np.pi)
    ints = np.rint(w)
    miss = float(np.max(np.abs(w - ints))) if w.size else 0.0
    if miss > snap_tol:
        raise SnapError(f"eigenvalue {miss:.3f} away from the nearest integer (> {snap_tol})")
    return WeightVector(tuple(int(x) for x in ints))


def flow_to_weights(loop: DiscreteLoop, cfg: FlowConfig = FlowConfig(),
                    max_rounds: int = 4):
    """Multilevel flow followed by weight extraction with limit-consistency.

    Convergence near an unstable critical manifold can make the gradient small
    prematurely; when snapping or the energy identity |E - sum d^2| <= 10 grad_tol
    fails, the flow is resumed with a tighter tolerance.
    """
    trace = run_flow_multilevel(loop, cfg)
    rounds = 0
    while True:
        try:
            weights = extract_weights(trace.final_loop, cfg.snap_tol)
            e = trace.energies[-1]
            if abs(e - weights.energy() * loop.spec.metric_scale) <= 10 * cfg.grad_tol:
                return weights, trace
            err = ConvergenceError(
                f"limit energy {e:.6f} inconsistent with weights {weights.entries}")
        except SnapError as exc:
            err = exc
        rounds += 1
        if rounds > max_rounds:
            raise ConvergenceError(f"flow limit not a clean geodesic after {rounds} rounds: {err}")
        tighter = replace(cfg, grad_tol=cfg.grad_tol * 0.1,
                          step_size=cfg.step_size)
        cont = run_flow_multilevel(trace.final_loop, tighter)
        trace = FlowTrace(np.concatenate([trace.energies, cont.energies]),
                          cont.final_loop, trace.steps_taken + cont.steps_taken,
                          cont.converged, cont.grad_norm, trace.levels + cont.levels)
        cfg = tighter


@dataclass(frozen=True)
class ProfileEntry:
    index: int
    weights: WeightVector | None
    energy_uA: float | None
    sup_uAinf: int | None
    error: str | None = None


def _flow_group_batched(samples: np.ndarray, spec, cfg: FlowConfig):
    """Multilevel batched descent for a (B, N, r, r) stack; returns final samples."""
    levels = _level_schedule(samples.shape[1], cfg.coarse_samples,
                             _spectral_floor(samples))
    cur = samples[:, ::samples.shape[1] // levels[0]].copy()
    for i, lv in enumerate(levels):
        cur, _, _, _, _ = _descend_batch(cur, cfg, spec.metric_scale, cfg.max_steps)
        if i + 1 < len(levels):
            logs = _kernels.transition_logs(cur, cfg.branch_margin)
            mid = cur @ _kernels.exp_skew(0.5 * logs)
            nxt = np.empty((cur.shape[0], 2 * cur.shape[1]) + cur.shape[2:], dtype=complex)
            nxt[:, 0::2] = cur
            nxt[:, 1::2] = mid
            cur = nxt
    return cur


def energy_profile_of_family(family, cfg: FlowConfig = FlowConfig(),
                             chunk: int = 512):
    """Per-sample flow + weight extraction + |u|_A over a list of loops.

    Failures are reported per sample and do not abort the batch.  Samples are
    processed in deterministic chunks of equal-shape stacks.
    """
    out: list[ProfileEntry | None] = [None] * len(family)
    groups: dict = {}
    for i, loop in enumerate(family):
        groups.setdefault((loop.n_samples, loop.spec.rank, loop.spec.special), []).append(i)
    for key, idxs in sorted(groups.items()):
        spec = family[idxs[0]].spec
        for start in range(0, len(idxs), chunk):
            part = idxs[start:start + chunk]
            stack = np.stack([family[i].samples for i in part])
            final = _flow_group_batched(stack, spec, cfg)
            for j, i in enumerate(part):
                loop = DiscreteLoop(spec, final[j])
                try:
                    w, _ = flow_to_weights(loop, cfg, max_rounds=2)
                    out[i] = ProfileEntry(i, w, float(w.energy()), w.sup())
                except (ConvergenceError, SnapError, ValidationError) as exc:
                    out[i] = ProfileEntry(i, None, None, None, str(exc))
    return out
