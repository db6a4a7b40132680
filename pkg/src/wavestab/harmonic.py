"""Two-dimensional harmonic-extension oracle for energy and momentum.

This is a verification component, deliberately independent of the surface
Fourier-multiplier shortcuts used in production.  It solves the Dirichlet
problem for the wave part of the stream function on the conformal strip
with a generic spectral Poisson method (Fourier in xi, Chebyshev
collocation in the vertical), then evaluates

* kinetic energy as the Dirichlet integral 1/2 int |grad psi|^2, which is
  conformally invariant so it can be taken over the flat strip directly;
* momentum as int w d(phi)/dxi dxi using the Cauchy-Riemann relation
  d(phi)/dxi = d(psi)/dsigma on the surface;
* potential energy as g/2 int w^2 (dx/dxi) dxi with the map stretch
  dx/dxi read off the same vertical derivative.

The boundary data are only the definition of the conformal variables: the
wave stream function equals -c*w on the surface and vanishes on the bottom.
"""

from __future__ import annotations

import numpy as np

from .babenko import WaveState


def chebyshev_lobatto(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes, differentiation matrix and Clenshaw-Curtis weights on [-1, 1]."""
    if n < 2:
        raise ValueError("need at least 3 Chebyshev points")
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))

    # Clenshaw-Curtis weights
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    for k in range(1, n // 2 + 1):
        factor = 2.0 if 2 * k < n else 1.0
        v -= factor * np.cos(2.0 * k * np.pi * j[1:-1] / n) / (4.0 * k * k - 1.0)
    w[1:-1] = 2.0 * v / n
    w[0] = w[-1] = 1.0 / (n * n - (n % 2 == 0) * 1.0 + (n % 2) * 0.0)
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n * n - 1.0)
    else:
        w[0] = w[-1] = 1.0 / (n * n)
    return x, d, w


def stream_extension(wave: WaveState, n_cheb: int = 64):
    """Wave stream function on the strip grid, plus vertical derivative.

    Returns (psi, psi_sigma, cc_weights_scaled): arrays of shape
    (n_cheb+1, M) on the tensor grid (sigma levels, xi nodes), sigma from
    0 (surface, row 0) down to -h.
    """
    grid = wave.grid
    h = grid.depth
    x, d, wcc = chebyshev_lobatto(n_cheb)
    # map [-1,1] -> [-h, 0], sigma = h*(x-1)/2
    dmat = (2.0 / h) * d
    weights = wcc * (h / 2.0)

    top = -wave.c * np.fft.rfft(wave.w)
    k = grid.wavenumbers
    nmodes = k.size
    ncol = n_cheb + 1

    d2 = dmat @ dmat
    systems = np.broadcast_to(d2, (nmodes, ncol, ncol)).copy()
    systems -= (k ** 2)[:, None, None] * np.eye(ncol)
    systems[:, 0, :] = 0.0
    systems[:, 0, 0] = 1.0
    systems[:, -1, :] = 0.0
    systems[:, -1, -1] = 1.0

    rhs = np.zeros((nmodes, ncol), dtype=complex)
    rhs[:, 0] = top
    sol = np.linalg.solve(systems, rhs[..., None])[..., 0]   # (nmodes, ncol)

    psi_hat = sol.T                       # (ncol, nmodes)
    psi = np.fft.irfft(psi_hat, grid.modes, axis=1)
    psi_sigma = np.fft.irfft((dmat @ sol.T).reshape(ncol, nmodes),
                             grid.modes, axis=1)
    return psi, psi_sigma, weights


def energy_momentum(wave: WaveState, n_cheb: int = 64) -> tuple[float, float]:
    """(energy, momentum) by direct quadrature over the conformal strip."""
    grid = wave.grid
    g = grid.gravity
    psi, psi_sigma, weights = stream_extension(wave, n_cheb)

    psi_xi = np.fft.irfft(np.fft.rfft(psi, axis=1) * (1j * grid.wavenumbers)[None, :],
                          grid.modes, axis=1)
    density = psi_xi ** 2 + psi_sigma ** 2
    kinetic = 0.5 * grid.spacing * float(weights @ density.sum(axis=1))

    dphi_dxi_surface = psi_sigma[0]
    momentum = grid.spacing * float(np.dot(wave.w, dphi_dxi_surface))

    stretch = 1.0 - dphi_dxi_surface / wave.c      # dx/dxi on the surface
    potential = 0.5 * g * grid.spacing * float(np.dot(wave.w ** 2, stretch))
    return kinetic + potential, momentum
