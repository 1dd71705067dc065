"""Independent oracles used by the test suite.

Everything here recomputes expected values through routes that do not share
code with the paths under test: direct quadrature, brute-force linear algebra,
explicit normal equations, and an infinite-sample limiting fit built on FFT
convolution plus an SLSQP simplex optimizer (the production fit uses EM).
"""

import numpy as np
from scipy.integrate import quad
from scipy.linalg import sqrtm
from scipy.optimize import minimize
from scipy.signal import fftconvolve

from photonchain import (
    DiagonalDensityMatrix,
    fock_marginal_matrix,
    fock_marginal_pdf,
    loss_channel,
    mixture_pdf,
    nbar_from_gain,
    thermal_state,
)


def pdf_norm_by_quadrature(n):
    value, _ = quad(lambda x: fock_marginal_pdf(n, x), -np.inf, np.inf, limit=400)
    return value


def pdf_variance_by_quadrature(n):
    value, _ = quad(lambda x: x * x * fock_marginal_pdf(n, x), -np.inf, np.inf, limit=400)
    return value


def convolved_rescaled_fock1(x, n_add):
    """P_1 convolved with Gaussian noise of variance n_add/2, then the axis
    rescaled by 1/sqrt(2 n_add + 1); evaluated by direct quadrature."""
    scale = np.sqrt(2.0 * n_add + 1.0)
    sigma2 = 0.5 * n_add

    def conv(y):
        val, _ = quad(
            lambda u: fock_marginal_pdf(1, u)
            * np.exp(-((y - u) ** 2) / (2.0 * sigma2))
            / np.sqrt(2.0 * np.pi * sigma2),
            y - 30.0 * np.sqrt(sigma2) - 6.0,
            y + 30.0 * np.sqrt(sigma2) + 6.0,
            limit=400,
            epsabs=1e-13,
            epsrel=1e-12,
        )
        return val

    return np.array([scale * conv(scale * xi) for xi in np.atleast_1d(x)])


def brute_force_fidelity(pops_a, pops_b):
    """tr sqrt(sqrt(B) A sqrt(B)) on dense diagonal matrices."""
    a = np.diag(np.asarray(pops_a, dtype=float))
    b = np.diag(np.asarray(pops_b, dtype=float))
    rb = sqrtm(b)
    inner = sqrtm(rb @ a @ rb)
    return float(np.real(np.trace(inner)))


def normal_equation_quadrature(trace, mode_samples, window_samples):
    """Brute-force two-regressor least squares for (V_q, V_dc)."""
    design = np.column_stack([mode_samples, window_samples])
    coef, *_ = np.linalg.lstsq(design, trace, rcond=None)
    return float(coef[0])


def binomial_loss_populations(pops, t):
    """Explicit binomial expansion, written independently of the channel code."""
    from math import comb

    pops = np.asarray(pops, dtype=float)
    out = np.zeros_like(pops)
    for n, p in enumerate(pops):
        for m in range(n + 1):
            out[m] += comb(n, m) * t**m * (1 - t) ** (n - m) * p
    return out


def output_state(protocol, chain, n_cav=12):
    """Emitted-state populations for retained photon trials: one intended
    photon plus thermal backaction, both through the output-port branching."""
    nbar = nbar_from_gain(chain.isolation_l, chain.g_jpa_db)
    th = thermal_state(nbar, n_cav - 1)
    cav = np.zeros(n_cav + 1)
    cav[1:] = th.populations
    return loss_channel(DiagonalDensityMatrix(cav), protocol.branching_ratio), nbar


def limiting_reconstruction(protocol, chain, n_max=3, dx=2e-3, span=12.0):
    """Infinite-sample expectation of the calibrated diagonal-state fit.

    Builds the exact distribution of calibrated quadrature values (emitted
    state marginal, convolved with the chain's added noise, rescaled by the
    squeezed-assumption control calibration including the control set's own
    backaction emission) and fits the (n_max+1)-element model to it by SLSQP
    over the probability simplex.
    """
    rho_out, nbar = output_state(protocol, chain)
    t_out = protocol.branching_ratio
    n_add = chain.added_noise

    v_control = 0.25 + t_out * nbar / 2.0 + n_add / 2.0
    scale = np.sqrt(v_control / 0.25)

    y = np.arange(-span, span + dx / 2, dx)
    p_out = mixture_pdf(rho_out, y)
    gauss = np.exp(-(y**2) / n_add) / np.sqrt(np.pi * n_add)
    conv = fftconvolve(p_out, gauss, mode="same") * dx
    z = y / scale
    pdf_z = scale * conv
    dz = dx / scale

    design = fock_marginal_matrix(n_max, z)

    def nll(p):
        w = np.maximum(design @ p, 1e-300)
        return -float(np.sum(pdf_z * np.log(w)) * dz)

    res = minimize(
        nll,
        np.full(n_max + 1, 1.0 / (n_max + 1)),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * (n_max + 1),
        constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1.0}],
        options={"maxiter": 500, "ftol": 1e-14},
    )
    assert res.success, res.message
    pops = np.clip(res.x, 0.0, None)
    return DiagonalDensityMatrix(pops / pops.sum())
