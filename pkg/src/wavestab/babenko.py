"""Steady solitary-wave equation in conformal surface variables.

A wave of speed c is a critical point of

    J(lam, w) = 1/2 * integral( w Nw - (lam/h) w^2 (1 + Nw) ) dxi,

where N is the Dirichlet-Neumann operator of the strip and
lam = g h / c^2 = 1/F^2 is the inverse squared Froude number.  The
gradient (the residual driven to zero by Newton) is

    R(w) = Nw - (lam/h) * ( w + w Nw + 1/2 N(w^2) ),

and its derivative in the direction v (the symmetric second-variation
operator, whose kernel contains w' by translation invariance) is

    R'(w) v = Nv - (lam/h) * ( v + v Nw + w Nv + N(w v) ).

Solitary waves are even; the solver enforces evenness by explicit
symmetrization each iteration and solves the Newton systems on the even
subspace, where the translation kernel is absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import spectral
from .errors import ConvergenceError, ResolutionError
from .spectral import Grid

DEFAULT_TOL = 1e-11
DEFAULT_TAIL_TOL = 1e-10
MAX_ITER = 40


@dataclass(frozen=True)
class WaveState:
    """A converged solitary wave on its grid.

    ``w`` is the surface elevation in conformal coordinates (units of the
    depth); ``lambda_p`` = 1/F^2 is the continuation parameter.
    """

    grid: Grid
    w: np.ndarray
    lambda_p: float
    residual_norm: float
    newton_iterations: int

    @property
    def c(self) -> float:
        return float(np.sqrt(self.grid.gravity * self.grid.depth / self.lambda_p))

    @property
    def froude(self) -> float:
        return float(1.0 / np.sqrt(self.lambda_p))

    @property
    def amplitude(self) -> float:
        return float(self.w[self.grid.crest_index])

    def tail_ratio(self) -> float:
        return spectral.tail_ratio(self.grid, self.w)

    def decay_ratio(self) -> float:
        return spectral.decay_ratio(self.grid, self.w)


def _lam_eq(grid: Grid, lambda_p: float) -> float:
    # equation-scale multiplier: g/c^2 = lambda_p / h
    return lambda_p / grid.depth


def functional(grid: Grid, w: np.ndarray, lambda_p: float,
               dealias: str = "2/3") -> float:
    """Value of the steady-wave action J(lam, w)."""
    w = grid.check_field(w)
    lam = _lam_eq(grid, lambda_p)
    nw = spectral.dirichlet_neumann(grid, w)
    w2 = spectral.dealias_product(grid, w, w, dealias)
    w2nw = spectral.dealias_product(grid, w2, nw, dealias)
    quad = spectral.inner(grid, w, nw)
    cubic = spectral.integrate(grid, w2) + spectral.integrate(grid, w2nw)
    return 0.5 * (quad - lam * cubic)


def residual(grid: Grid, w: np.ndarray, lambda_p: float,
             dealias: str = "2/3") -> np.ndarray:
    """Gradient of the action; zero exactly at a discrete solitary wave."""
    w = grid.check_field(w)
    lam = _lam_eq(grid, lambda_p)
    nw = spectral.dirichlet_neumann(grid, w)
    wnw = spectral.dealias_product(grid, w, nw, dealias)
    w2 = spectral.dealias_product(grid, w, w, dealias)
    return nw - lam * (w + wnw + 0.5 * spectral.dirichlet_neumann(grid, w2))


def residual_lambda_derivative(grid: Grid, w: np.ndarray,
                               dealias: str = "2/3") -> np.ndarray:
    """d(residual)/d(lambda_p) at fixed w."""
    nw = spectral.dirichlet_neumann(grid, w)
    wnw = spectral.dealias_product(grid, w, nw, dealias)
    w2 = spectral.dealias_product(grid, w, w, dealias)
    return -(w + wnw + 0.5 * spectral.dirichlet_neumann(grid, w2)) / grid.depth


def hessian_apply(grid: Grid, w: np.ndarray, lambda_p: float, v: np.ndarray,
                  dealias: str = "2/3") -> np.ndarray:
    """Second-variation operator applied to v (symmetric; annihilates w')."""
    v = grid.check_field(v)
    lam = _lam_eq(grid, lambda_p)
    nw = spectral.dirichlet_neumann(grid, w)
    nv = spectral.dirichlet_neumann(grid, v)
    term = (v + spectral.dealias_product(grid, v, nw, dealias)
            + spectral.dealias_product(grid, w, nv, dealias)
            + spectral.dirichlet_neumann(
                grid, spectral.dealias_product(grid, w, v, dealias)))
    return nv - lam * term


# ---------------------------------------------------------------------------
# cosine-band representation
#
# Even real fields have real rfft coefficients, so an even wave truncated to
# the 2/3 band is the vector of its cosine coefficients x_m, m = 0..band.
# Working there keeps evenness and band-limitation exact by construction,
# and since products of two band-limited fields alias only onto discarded
# modes, the band Jacobian below is the exact derivative of the dealiased
# residual.  It is also a third the size of the collocation system.
# ---------------------------------------------------------------------------

def to_coeffs(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Cosine coefficients on the kept band (exact symmetrization)."""
    return np.fft.rfft(w).real[: grid.band + 1].copy()


def to_field(grid: Grid, x: np.ndarray) -> np.ndarray:
    spec = np.zeros(grid.modes // 2 + 1, dtype=complex)
    spec[: x.size] = x
    return np.fft.irfft(spec, grid.modes)


def crest_row(grid: Grid) -> np.ndarray:
    """Linear functional giving w(0) from band coefficients."""
    m = np.arange(grid.band + 1)
    row = 2.0 * np.where(m % 2 == 0, 1.0, -1.0) / grid.modes
    row[0] = 1.0 / grid.modes
    return row


def cosine_product_matrix(grid: Grid, a: np.ndarray) -> np.ndarray:
    """Band matrix of v -> a*v in cosine-coefficient space.

    ``a`` must be band-limited; the entries follow from the product rule
    for cosines, with coefficients beyond the band identically zero.
    """
    nb = grid.band
    ahat = np.zeros(2 * nb + 1)
    raw = np.fft.rfft(a).real
    take = min(raw.size, 2 * nb + 1)
    ahat[:take] = raw[:take]
    p = np.arange(nb + 1)[:, None]
    n = np.arange(nb + 1)[None, :]
    t = ahat[np.abs(p - n)] + ahat[p + n]
    t[:, 0] = ahat[p[:, 0]]
    return t / grid.modes


def band_jacobian(grid: Grid, w: np.ndarray, lambda_p: float) -> np.ndarray:
    """Exact Jacobian of the dealiased residual on the cosine band."""
    lam = _lam_eq(grid, lambda_p)
    nb = grid.band
    nmult = grid.dn_multiplier[: nb + 1]
    nw = spectral.dirichlet_neumann(grid, w)
    t_nw = cosine_product_matrix(grid, nw)
    t_w = cosine_product_matrix(grid, w)
    jac = np.diag(nmult) - lam * (np.eye(nb + 1) + t_nw
                                  + t_w * nmult[None, :]
                                  + nmult[:, None] * t_w)
    return jac


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------

def kdv_profile(grid: Grid, froude: float) -> np.ndarray:
    """First-order long-wave predictor: a*sech^2 with a = h (F^2 - 1)."""
    h = grid.depth
    a = h * (froude ** 2 - 1.0)
    if a <= 0:
        return np.zeros(grid.modes)
    kappa = np.sqrt(0.75 * a / h ** 3)
    return a / np.cosh(kappa * grid.nodes) ** 2


def check_resolution(grid: Grid, w: np.ndarray, tail_tol: float | None,
                     decay_tol: float | None) -> None:
    tr = spectral.tail_ratio(grid, w)
    dr = spectral.decay_ratio(grid, w)
    if tail_tol is not None and tr > tail_tol:
        raise ResolutionError(
            f"tail ratio {tr:.2e} exceeds tolerance {tail_tol:.1e}; "
            "enlarge the period", tail_ratio=tr, decay_ratio=dr)
    if decay_tol is not None and dr > decay_tol:
        raise ResolutionError(
            f"spectral decay ratio {dr:.2e} exceeds tolerance {decay_tol:.1e}; "
            "raise the mode count", tail_ratio=tr, decay_ratio=dr)


def newton_solve(grid: Grid, w0: np.ndarray, lambda_p: float,
                 tol: float = DEFAULT_TOL,
                 max_iter: int = MAX_ITER,
                 tail_tol: float | None = DEFAULT_TAIL_TOL,
                 decay_tol: float | None = None,
                 dealias: str = "2/3") -> WaveState:
    """Converge the steady-wave equation at fixed lambda_p.

    The caller is responsible for a predictor inside the basin of
    attraction (continuation provides those).  Raises ConvergenceError on
    iteration exhaustion and ResolutionError if the converged wave violates
    the tail or spectral-decay tolerances.
    """
    if not 0.0 < lambda_p:
        raise ValueError(f"lambda_p must be positive, got {lambda_p}")
    x = to_coeffs(grid, grid.symmetrize(grid.check_field(w0)))
    w = to_field(grid, x)

    res = residual(grid, w, lambda_p, dealias)
    res_norm = float(np.abs(res).max())
    for iteration in range(1, max_iter + 1):
        if res_norm <= tol:
            check_resolution(grid, w, tail_tol, decay_tol)
            return WaveState(grid, w, lambda_p, res_norm, iteration - 1)
        jac = band_jacobian(grid, w, lambda_p)
        try:
            step = scipy.linalg.solve(jac, -to_coeffs(grid, res))
        except scipy.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Newton system: {exc}",
                                   residual_norm=res_norm,
                                   iterations=iteration) from exc
        x = x + step
        w = to_field(grid, x)
        res = residual(grid, w, lambda_p, dealias)
        new_norm = float(np.abs(res).max())
        if not np.isfinite(new_norm):
            raise ConvergenceError("Newton iterate diverged",
                                   residual_norm=res_norm,
                                   iterations=iteration)
        res_norm = new_norm

    if res_norm <= tol:
        check_resolution(grid, w, tail_tol, decay_tol)
        return WaveState(grid, w, lambda_p, res_norm, max_iter)
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations (residual {res_norm:.2e})",
        residual_norm=res_norm, iterations=max_iter)
