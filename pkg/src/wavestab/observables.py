"""Physical observables of a converged solitary wave.

Closed surface-trace forms are used throughout (the 2D quadrature oracle in
:mod:`wavestab.harmonic` cross-checks them in the verification suite):

    E = c^2/2 * int w Nw dxi  +  g/2 * int w^2 (1 + Nw) dxi
    P = -c * int w Nw dxi

The frame has the wave travelling toward negative x, so the fluid drifts
backward beneath the crest and P < 0 while E > 0; only the product relation
dE/dc = -c dP/dc is frame independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .babenko import WaveState

NEAR_SINGULAR_SPEED = 1e-3   # crest speed fraction of c flagged as near-limiting


@dataclass(frozen=True)
class Observables:
    c: float
    froude: float
    q_c: float
    omega: float          # 1 - (q_c/c)^2; equals 2 g eta(0)/c^2 by Bernoulli
    omega_alt: float      # 1 - q_c^2/(g h): crest speed in long-wave units
    mu: float             # 6 g h c / (pi q_c^3); infinite at the highest wave
    alpha: float          # crest elevation over depth
    energy: float
    momentum: float
    kinetic: float
    potential: float
    delta0: float         # 1/h - g/c^2, essential-spectrum threshold
    near_singular: bool


def observables(wave: WaveState, dealias: str = "2/3") -> Observables:
    grid = wave.grid
    g, h = grid.gravity, grid.depth
    c = wave.c
    w = wave.w

    nw = spectral.dirichlet_neumann(grid, w)
    wp = spectral.deriv(grid, w)
    i = grid.crest_index
    abs_w2_crest = (1.0 + nw[i]) ** 2 + wp[i] ** 2
    q_c = c / np.sqrt(abs_w2_crest)

    quad = spectral.inner(grid, w, nw)
    w2 = spectral.dealias_product(grid, w, w, dealias)
    w2nw = spectral.dealias_product(grid, w2, nw, dealias)
    kinetic = 0.5 * c ** 2 * quad
    potential = 0.5 * g * (spectral.integrate(grid, w2)
                           + spectral.integrate(grid, w2nw))
    momentum = -c * quad

    near_singular = q_c < NEAR_SINGULAR_SPEED * c
    mu = 6.0 * g * h * c / (np.pi * q_c ** 3) if q_c > 0 else np.inf

    return Observables(
        c=c,
        froude=wave.froude,
        q_c=float(q_c),
        omega=float(1.0 - (q_c / c) ** 2),
        omega_alt=float(1.0 - q_c ** 2 / (g * h)),
        mu=float(mu),
        alpha=float(wave.amplitude / h),
        energy=kinetic + potential,
        momentum=momentum,
        kinetic=kinetic,
        potential=potential,
        delta0=float(1.0 / h - g / c ** 2),
        near_singular=bool(near_singular),
    )
