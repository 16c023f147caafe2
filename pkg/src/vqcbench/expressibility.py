"""Expressibility as KL divergence from the Haar fidelity distribution.

Pairs of independent random parameter draws are run from the all-zero input;
the histogram of their state fidelities is compared with the distribution
of fidelities between Haar-random states, ``P(F) = (N-1)(1-F)^(N-2)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .engine import BlockSpec, block_states
from .exceptions import ConfigurationError
from .seeding import make_rng

N_BINS = 75
N_SAMPLES = 10_000
MIN_SAMPLES = 1000


def _pair_fidelities(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.clip(np.abs(np.einsum("si,si->s", a.conj(), b)) ** 2, 0.0, 1.0)


def sample_fidelities(n: int, d: int, n_samples: int = N_SAMPLES, rng: np.random.Generator | None = None,
                      chunk: int = 2000) -> np.ndarray:
    """Fidelities of ``n_samples`` pairs of random-angle ``(n, d)`` blocks."""
    if n_samples < MIN_SAMPLES:
        raise ConfigurationError(f"need at least {MIN_SAMPLES} samples, got {n_samples}")
    rng = rng if rng is not None else make_rng(0, "expressibility")
    spec = BlockSpec(n, d)
    out = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        theta = rng.uniform(0.0, 2 * np.pi, size=(2, m, d, n, 3))
        s1 = block_states(theta[0], spec)
        s2 = block_states(theta[1], spec)
        out[start:start + m] = _pair_fidelities(s1, s2)
    return out


def product_ry_states(angles: np.ndarray) -> np.ndarray:
    """States ``RY(a_0) x ... x RY(a_{n-1}) |0...0>`` for angle rows ``(S, n)``, little-endian."""
    angles = np.atleast_2d(angles)
    S, n = angles.shape
    state = np.ones((S, 1))
    for q in range(n):
        c, s = np.cos(angles[:, q] / 2), np.sin(angles[:, q] / 2)
        single = np.stack([c, s], axis=1)  # qubit q becomes the next-higher bit
        state = (single[:, :, None] * state[:, None, :]).reshape(S, -1)
    return state


def linear_baseline_fidelities(n: int, n_samples: int = N_SAMPLES, rng: np.random.Generator | None = None) -> np.ndarray:
    """Fidelities of product states embedding ``W x0`` for random ``W ~ N(0, 1)^{n x n}``.

    ``x0`` is one fixed random probe direction with unit norm, so ``W x0`` has
    i.i.d. standard normal entries whatever the probe; every sample draws two
    independent maps ``W``.
    """
    if n_samples < MIN_SAMPLES:
        raise ConfigurationError(f"need at least {MIN_SAMPLES} samples, got {n_samples}")
    rng = rng if rng is not None else make_rng(0, "baseline")
    x0 = rng.standard_normal(n)
    x0 /= np.linalg.norm(x0)
    W = rng.standard_normal((2, n_samples, n, n))
    angles = W @ x0
    return _pair_fidelities(product_ry_states(angles[0]), product_ry_states(angles[1]))


def haar_bin_masses(n: int, n_bins: int = N_BINS) -> np.ndarray:
    """Exact Haar mass per equal-width bin from the CDF ``1 - (1 - F)^(N-1)``."""
    N = 2**n
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    cdf = 1.0 - (1.0 - edges) ** (N - 1)
    return np.diff(cdf)


def fidelity_histogram(fidelities, n_bins: int = N_BINS) -> np.ndarray:
    f = np.asarray(fidelities, dtype=float)
    if f.size == 0:
        raise ConfigurationError("no fidelities to histogram")
    if f.min() < 0 or f.max() > 1:
        raise ConfigurationError("fidelities must lie in [0, 1]")
    counts, _ = np.histogram(f, bins=n_bins, range=(0.0, 1.0))
    return counts / f.size


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """``sum p ln(p/q)`` over bins with ``p > 0``."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_vs_haar(fidelities, n: int, n_bins: int = N_BINS) -> float:
    return kl_divergence(fidelity_histogram(fidelities, n_bins), haar_bin_masses(n, n_bins))


@dataclass
class ExpressibilityReport:
    label: str
    n_qubits: int
    depth: int | None
    n_samples: int
    n_bins: int
    seed: int
    histogram: list
    haar: list
    kl: float
    mean_fidelity: float

    def to_dict(self) -> dict:
        return asdict(self)


def _report(label, fids, n, depth, n_bins, seed) -> ExpressibilityReport:
    p = fidelity_histogram(fids, n_bins)
    q = haar_bin_masses(n, n_bins)
    return ExpressibilityReport(label, n, depth, int(fids.size), n_bins, int(seed),
                                p.tolist(), q.tolist(), kl_divergence(p, q), float(np.mean(fids)))


def expressibility_report(n: int, depth: int, n_samples: int = N_SAMPLES, n_bins: int = N_BINS,
                          seed: int = 0) -> ExpressibilityReport:
    # Each depth gets its own stream so adding depths never changes earlier values.
    rng = make_rng(seed * 1000 + depth, "expressibility")
    return _report(f"vqc_depth{depth}", sample_fidelities(n, depth, n_samples, rng), n, depth, n_bins, seed)


def linear_baseline_report(n: int, n_samples: int = N_SAMPLES, n_bins: int = N_BINS,
                           seed: int = 0) -> ExpressibilityReport:
    fids = linear_baseline_fidelities(n, n_samples, make_rng(seed, "baseline"))
    return _report("linear_projection", fids, n, None, n_bins, seed)
