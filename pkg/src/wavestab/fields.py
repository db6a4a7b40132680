"""Surface traces of the flow quantities entering the dispersion operators.

All traces are evaluated on the conformal surface grid of a converged wave.
With b = 1 + Nw and the complex map derivative W = b + i w', the surface
speed is q = c/|W|, the relative velocity components are

    psi_ey = u_e + c = c b / |W|^2,      psi_ex = -v_e = -c w' / |W|^2,

and the vertical pressure gradient splits as P_ey = -g + psi_ey * a_tilde
with a_tilde the physical-x derivative of psi_ex.  The hodograph form of
the same potential is a_plot = lam e^{3 tau} cos(theta) + theta' where
exp(tau + i theta) = W; for a steady wave b * P_ey / psi_ey^2 = -a_plot
pointwise, which the test suite uses as a structural check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral
from .babenko import WaveState
from .errors import NearSingularError
from .spectral import Grid

W_FLOOR = 1e-8


@dataclass(frozen=True)
class SurfaceFields:
    """Traces on the surface grid needed by the stability operators."""

    grid: Grid
    lambda_p: float
    c: float
    w: np.ndarray
    wprime: np.ndarray
    b: np.ndarray           # 1 + Nw, the xi-derivative of physical x
    w_re: np.ndarray        # real part of the map derivative (= b)
    w_im: np.ndarray        # imaginary part of the map derivative (= w')
    abs_w2: np.ndarray      # |W|^2
    tau: np.ndarray
    theta: np.ndarray
    psi_ey: np.ndarray      # u_e + c
    psi_ex: np.ndarray      # -v_e
    a_tilde: np.ndarray     # d(psi_ex)/dx
    p_ey: np.ndarray        # -g + psi_ey * a_tilde
    b_tilde: np.ndarray     # b - 1
    c_tilde: np.ndarray     # 1/psi_ey - 1/c
    e: np.ndarray           # max(|a_tilde|, |b_tilde|, |c_tilde|)
    a_plot: np.ndarray      # hodograph potential

    @property
    def u_e(self) -> np.ndarray:
        return self.psi_ey - self.c

    @property
    def eta(self) -> np.ndarray:
        return self.w

    @property
    def gravity(self) -> float:
        return self.grid.gravity

    @property
    def delta0(self) -> float:
        return 1.0 / self.grid.depth - self.grid.gravity / self.c ** 2

    def crest_speed(self) -> float:
        i = self.grid.crest_index
        return float(self.c / np.sqrt(self.abs_w2[i]))


def surface_fields(wave: WaveState) -> SurfaceFields:
    """Evaluate every surface trace of a converged wave.

    Raises NearSingularError when the map derivative drops below the floor,
    which only happens for waves very close to the limiting one.
    """
    grid = wave.grid
    g = grid.gravity
    c = wave.c
    w = wave.w
    wp = spectral.deriv(grid, w)
    b = 1.0 + spectral.dirichlet_neumann(grid, w)
    abs_w2 = b ** 2 + wp ** 2
    if np.min(abs_w2) < W_FLOOR ** 2 or np.min(b) <= 0.0:
        raise NearSingularError(
            f"surface map derivative below floor (min |W|^2 = {np.min(abs_w2):.2e})")

    tau = 0.5 * np.log(abs_w2)
    theta = np.unwrap(np.arctan2(wp, b))
    psi_ey = c * b / abs_w2
    psi_ex = -c * wp / abs_w2
    a_tilde = spectral.deriv(grid, psi_ex) / b
    p_ey = -g + psi_ey * a_tilde
    b_tilde = b - 1.0
    c_tilde = 1.0 / psi_ey - 1.0 / c
    e = np.maximum(np.abs(a_tilde), np.maximum(np.abs(b_tilde), np.abs(c_tilde)))
    lam_eq = wave.lambda_p / grid.depth
    a_plot = lam_eq * np.exp(3.0 * tau) * np.cos(theta) + spectral.deriv(grid, theta)

    return SurfaceFields(grid=grid, lambda_p=wave.lambda_p, c=c, w=w,
                         wprime=wp, b=b, w_re=b, w_im=wp, abs_w2=abs_w2,
                         tau=tau, theta=theta, psi_ey=psi_ey, psi_ex=psi_ex,
                         a_tilde=a_tilde, p_ey=p_ey, b_tilde=b_tilde,
                         c_tilde=c_tilde, e=e, a_plot=a_plot)


def physical_x(wave: WaveState) -> np.ndarray:
    """Physical horizontal coordinate of the surface nodes, crest at x = 0.

    The conformal map stretch has a secular part carried by the mean of the
    elevation: x(xi) = xi (1 + mean(w)/h) + conjugate(w).
    """
    grid = wave.grid
    slope = 1.0 + float(np.mean(wave.w)) / grid.depth
    return slope * grid.nodes + spectral.harmonic_conjugate(grid, wave.w)


def map_multiply(sf: SurfaceFields, f: np.ndarray) -> np.ndarray:
    """Real part of (map derivative) * (analytic completion of f).

    The analytic completion pairs f with its conjugate trace pinned at the
    domain edge, the periodic stand-in for decay at infinity.  Applied to
    the odd velocity trace psi_ex this returns -c w', which the invariant
    suite checks.
    """
    grid = sf.grid
    return f * sf.b + sf.wprime * spectral.conjugate_pinned(grid, f)
