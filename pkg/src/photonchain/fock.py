"""Diagonal Fock-basis states, quadrature marginals, channels, and photon statistics.

Quadrature convention: one quadrature of the vacuum state has variance 1/4.
Every marginal density, channel, and fit model in the toolkit shares this
convention, so the marginal of a phase-averaged state with populations p_n is

    P(x) = sum_n p_n * P_n(x),   P_n(x) = sqrt(2/pi) / (2^n n!) * H_n(sqrt(2) x)^2 * exp(-2 x^2),

with H_n the physicists' Hermite polynomial.  Hermite values are produced by a
normalized three-term recurrence (never by factorial closed forms), with the
Gaussian weight folded into the seed so no intermediate overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

VACUUM_VARIANCE = 0.25
MAX_FOCK = 20  # supported range of the marginal recurrence


def _check_fock(n):
    if not 0 <= int(n) <= MAX_FOCK:
        raise ValueError(f"photon number {n} outside supported range 0..{MAX_FOCK}")
    return int(n)


@dataclass(frozen=True, eq=False)
class DiagonalDensityMatrix:
    """Phase-averaged state: populations over photon numbers 0..n_max.

    Populations are validated to be nonnegative and sum to one within 1e-9.
    Fitted instances may carry a per-element statistical error and asymmetric
    systematic bounds (low, high); these are metadata and never enter channel
    arithmetic.  Instances are immutable after construction.
    """

    populations: np.ndarray
    stat_err: np.ndarray | None = None
    sys_lo: np.ndarray | None = None
    sys_hi: np.ndarray | None = None

    def __post_init__(self):
        pops = np.array(self.populations, dtype=float)
        if pops.ndim != 1 or pops.size == 0:
            raise ValueError("populations must form a non-empty 1-d vector")
        if pops.min() < -1e-12:
            raise ValueError(f"negative population {pops.min()!r}")
        pops = np.clip(pops, 0.0, None)
        total = float(pops.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"populations sum to {total!r}, expected 1 within 1e-9")
        pops.setflags(write=False)
        object.__setattr__(self, "populations", pops)
        for name in ("stat_err", "sys_lo", "sys_hi"):
            vec = getattr(self, name)
            if vec is None:
                continue
            vec = np.array(vec, dtype=float)
            if vec.shape != pops.shape:
                raise ValueError(f"{name} must have one entry per population")
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    @property
    def n_max(self) -> int:
        return self.populations.size - 1

    def mean_photon(self) -> float:
        return float(np.arange(self.populations.size) @ self.populations)

    def quadrature_variance(self) -> float:
        """Variance of the phase-averaged marginal: 1/4 + <n>/2."""
        return VACUUM_VARIANCE + 0.5 * self.mean_photon()

    def padded(self, n_max: int) -> "DiagonalDensityMatrix":
        """Same state on a basis truncated at ``n_max`` (pad with zeros)."""
        if n_max < self.n_max:
            raise ValueError("cannot truncate populations; pad only")
        extra = n_max - self.n_max

        def _pad(vec):
            return None if vec is None else np.pad(vec, (0, extra))

        return DiagonalDensityMatrix(
            np.pad(self.populations, (0, extra)),
            stat_err=_pad(self.stat_err),
            sys_lo=_pad(self.sys_lo),
            sys_hi=_pad(self.sys_hi),
        )

    def with_errors(self, stat_err=None, sys_lo=None, sys_hi=None):
        return DiagonalDensityMatrix(self.populations, stat_err, sys_lo, sys_hi)

    @classmethod
    def pure(cls, n: int, n_max: int | None = None) -> "DiagonalDensityMatrix":
        n_max = n if n_max is None else n_max
        pops = np.zeros(n_max + 1)
        pops[n] = 1.0
        return cls(pops)

    def to_record(self) -> dict:
        """Flat key-value form: n_max, p0..pN plus optional error vectors."""
        rec = {"n_max": float(self.n_max)}
        for i, p in enumerate(self.populations):
            rec[f"p{i}"] = float(p)
        for prefix, vec in (("stat", self.stat_err), ("sys_lo", self.sys_lo), ("sys_hi", self.sys_hi)):
            if vec is not None:
                for i, v in enumerate(vec):
                    rec[f"{prefix}{i}"] = float(v)
        return rec

    @classmethod
    def from_record(cls, record: dict) -> "DiagonalDensityMatrix":
        n_max = int(float(record["n_max"]))
        pops = [float(record[f"p{i}"]) for i in range(n_max + 1)]

        def _vec(prefix):
            if f"{prefix}0" not in record:
                return None
            return [float(record[f"{prefix}{i}"]) for i in range(n_max + 1)]

        return cls(np.array(pops), _vec("stat"), _vec("sys_lo"), _vec("sys_hi"))


def _marginal_amplitudes(n_max, x):
    """Gauss-weighted normalized Hermite ladder g_n; P_n = sqrt(2/pi) g_n^2.

    g_n(x) = H_n(sqrt(2) x) / sqrt(2^n n!) * exp(-x^2), built by the stable
    recurrence g_{n+1} = sqrt(2/(n+1)) z g_n - sqrt(n/(n+1)) g_{n-1} with
    z = sqrt(2) x.  The per-step normalization keeps every g_n of order unity.
    """
    x = np.asarray(x, dtype=float)
    z = math.sqrt(2.0) * x
    g = np.empty((n_max + 1,) + x.shape)
    g[0] = np.exp(-x * x)
    if n_max >= 1:
        g[1] = math.sqrt(2.0) * z * g[0]
    for k in range(1, n_max):
        g[k + 1] = math.sqrt(2.0 / (k + 1)) * z * g[k] - math.sqrt(k / (k + 1)) * g[k - 1]
    return g


def fock_marginal_pdf(n, x):
    """Quadrature marginal density of the n-photon state at x."""
    n = _check_fock(n)
    xs = np.asarray(x, dtype=float)
    g = _marginal_amplitudes(n, xs)
    out = math.sqrt(2.0 / math.pi) * g[n] ** 2
    return out if out.shape else float(out)


def fock_marginal_matrix(n_max, x) -> np.ndarray:
    """All marginals P_0..P_{n_max} at the points x; shape (..., n_max + 1)."""
    n_max = _check_fock(n_max)
    g = _marginal_amplitudes(n_max, np.asarray(x, dtype=float))
    return math.sqrt(2.0 / math.pi) * np.moveaxis(g * g, 0, -1)


def mixture_pdf(rho: DiagonalDensityMatrix, x):
    """Marginal density sum_n p_n P_n(x) of a phase-averaged state."""
    out = fock_marginal_matrix(rho.n_max, x) @ rho.populations
    return out if np.ndim(x) else float(out)


def loss_channel(rho: DiagonalDensityMatrix, transmissivity: float) -> DiagonalDensityMatrix:
    """Binomial redistribution of populations under a beam-splitter loss.

    p'_m = sum_{n>=m} C(n, m) t^m (1-t)^(n-m) p_n; trace preserving.
    """
    t = float(transmissivity)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmissivity {t} outside [0, 1]")
    ns = np.arange(rho.n_max + 1)
    m = ns[:, None]
    k = ns[None, :]
    mat = comb(k, m) * t**m * (1.0 - t) ** np.maximum(k - m, 0) * (k >= m)
    return DiagonalDensityMatrix(mat @ rho.populations)


def thermal_state(nbar: float, n_max: int) -> DiagonalDensityMatrix:
    """Thermal populations p_n ~ nbar^n / (nbar+1)^(n+1), renormalized after truncation."""
    if nbar < 0:
        raise ValueError(f"mean occupation {nbar} must be >= 0")
    if nbar == 0:
        return DiagonalDensityMatrix.pure(0, n_max)
    ratio = nbar / (1.0 + nbar)
    pops = ratio ** np.arange(n_max + 1)
    return DiagonalDensityMatrix(pops / pops.sum())


def fidelity_diagonal(rho_a: DiagonalDensityMatrix, rho_b: DiagonalDensityMatrix) -> float:
    """State fidelity of two diagonal states: the Bhattacharyya sum sum_n sqrt(a_n b_n).

    The shorter state is padded with zeros; the result is symmetric and in [0, 1].
    """
    n_max = max(rho_a.n_max, rho_b.n_max)
    a = rho_a.padded(n_max).populations
    b = rho_b.padded(n_max).populations
    return float(min(np.sqrt(a * b).sum(), 1.0))


def g2_zero(rho: DiagonalDensityMatrix) -> float:
    """Zero-delay intensity correlation sum_n n(n-1) p_n / (sum_n n p_n)^2."""
    n = np.arange(rho.n_max + 1)
    mean = float(n @ rho.populations)
    if mean <= 0:
        raise ValueError("g2(0) undefined for zero mean photon number")
    return float((n * (n - 1)) @ rho.populations) / mean**2


def g2_zero_shorthand(rho: DiagonalDensityMatrix) -> float:
    """Two-photon shorthand 2 p_2 / p_1, reported alongside the full formula."""
    pops = rho.padded(max(rho.n_max, 2)).populations
    if pops[1] <= 0:
        raise ValueError("shorthand g2(0) undefined for p1 = 0")
    return float(2.0 * pops[2] / pops[1])


def expected_measured_state(kappa, kappa_out, eta_m) -> DiagonalDensityMatrix:
    """Measured-state expectation for pure one-photon generation in the cavity.

    The output-port branching kappa_out/kappa and a detection efficiency eta_m
    act on |1><1|, leaving {1 - (kappa_out/kappa) eta_m, (kappa_out/kappa) eta_m}.
    """
    if not 0 < kappa_out <= kappa:
        raise ValueError(f"rates must satisfy 0 < kappa_out <= kappa, got {kappa_out}, {kappa}")
    if not 0.0 <= eta_m <= 1.0:
        raise ValueError(f"efficiency {eta_m} outside [0, 1]")
    p1 = (kappa_out / kappa) * eta_m
    return DiagonalDensityMatrix(np.array([1.0 - p1, p1]))


def sample_fock_marginal(n, size, rng) -> np.ndarray:
    """Draw ``size`` quadrature values from the n-photon marginal P_n.

    n = 0 and n = 1 use exact closed-form samplers; larger n uses exact
    rejection from a Gaussian envelope.
    """
    n = _check_fock(n)
    if n == 0:
        return rng.normal(0.0, 0.5, size)
    if n == 1:
        radius = 0.5 * np.sqrt(rng.chisquare(3, size))
        return radius * (2.0 * rng.integers(0, 2, size) - 1.0)

    sd = math.sqrt(1.5 * (2 * n + 1) / 4.0)
    grid = np.linspace(-8.0 * sd, 8.0 * sd, 8001)
    envelope = np.exp(-0.5 * (grid / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
    bound = 1.02 * float(np.max(fock_marginal_pdf(n, grid) / envelope))

    out = np.empty(size)
    filled = 0
    while filled < size:
        m = max(int((size - filled) * bound * 1.2) + 16, 32)
        cand = rng.normal(0.0, sd, m)
        q = np.exp(-0.5 * (cand / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
        keep = cand[rng.random(m) * bound * q < fock_marginal_pdf(n, cand)]
        take = min(keep.size, size - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def sample_diagonal_state(rho: DiagonalDensityMatrix, size, rng) -> np.ndarray:
    """Draw quadrature values from the marginal of a phase-averaged state."""
    ns = rng.choice(rho.n_max + 1, size=size, p=rho.populations)
    out = np.empty(size)
    for n in np.unique(ns):
        idx = ns == n
        out[idx] = sample_fock_marginal(int(n), int(idx.sum()), rng)
    return out
