"""Periodic pseudospectral toolbox on the conformal strip surface.

The package approximates the real line by a periodic interval of length L.
All surface fields live on the uniform nodes

    xi_j = -L/2 + j L / M,   j = 0 .. M-1,

so the crest of an even wave sits at index M//2 (xi = 0) and the domain
edge, the stand-in for infinity, at index 0 (xi = -L/2).  Wavenumbers are
k_m = 2 pi m / L with m in {-M/2+1, ..., M/2}; real fields are transformed
with rfft/irfft.

Operator conventions (these carry physical meaning, do not change them):

* ``dirichlet_neumann`` has the multiplier n(k) = k / tanh(k h), and
  n(0) = 1/h, the continuous limit.  The zero mode is physical: it is the
  mean horizontal stretch of the conformal map, and dropping it would make
  the truncated problem inconsistent with the line problem by O(1/L).

* ``harmonic_conjugate`` returns the surface trace of the harmonic
  conjugate of the bottom-vanishing harmonic extension: multiplier
  n(k)/(i k) for k != 0, zero for the mean.  Its output has zero mean by
  construction.  In identities that on the line calibrate the conjugate
  trace by decay at infinity (the surface map, the analytic-completion
  operator of :mod:`wavestab.fields`), use ``conjugate_pinned``, which
  subtracts the domain-edge value instead; the difference is exponentially
  small only when the input decays, which is exactly when those identities
  hold.

* The spectral derivative multiplier is i k, with the Nyquist derivative
  set to zero (the usual real-transform convention).

Quadratic products are dealiased with the 2/3 rule by default: inputs and
output are truncated to modes |m| <= M//3.  Exact zero-padded products are
available for callers that prefer them.  All integrals use the periodic
trapezoid rule, which is spectrally accurate.

Everything here is a pure function of immutable inputs; the Grid caches
derived arrays but never mutates them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import InvalidFieldError


@dataclass(frozen=True)
class Grid:
    """Periodic surface grid of the conformal strip.

    Parameters
    ----------
    length : period L of the truncated domain, in units of the depth.
    modes : number of collocation nodes M (even, at least 64).
    depth : strip depth h (default 1).
    gravity : gravitational acceleration g (default 1).
    """

    length: float
    modes: int
    depth: float = 1.0
    gravity: float = 1.0

    def __post_init__(self):
        if self.modes % 2 != 0 or self.modes < 64:
            raise ValueError(f"mode count must be even and >= 64, got {self.modes}")
        if not (self.length > 0 and self.depth > 0 and self.gravity > 0):
            raise ValueError("length, depth and gravity must be positive")

    # -- derived arrays ----------------------------------------------------

    @cached_property
    def nodes(self) -> np.ndarray:
        return -0.5 * self.length + np.arange(self.modes) * self.spacing

    @property
    def spacing(self) -> float:
        return self.length / self.modes

    @property
    def crest_index(self) -> int:
        return self.modes // 2

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Non-negative wavenumbers k_m = 2 pi m / L, m = 0 .. M/2 (rfft order)."""
        return 2.0 * np.pi * np.arange(self.modes // 2 + 1) / self.length

    @cached_property
    def dn_multiplier(self) -> np.ndarray:
        k = self.wavenumbers
        out = np.empty_like(k)
        out[0] = 1.0 / self.depth
        kh = k[1:] * self.depth
        out[1:] = k[1:] / np.tanh(kh)
        return out

    @cached_property
    def deriv_multiplier(self) -> np.ndarray:
        mult = 1j * self.wavenumbers
        mult[-1] = 0.0  # Nyquist derivative of a real field
        return mult

    @cached_property
    def conj_multiplier(self) -> np.ndarray:
        """Multiplier of the harmonic-conjugate trace: n(k)/(ik), zero mean."""
        out = np.zeros(self.modes // 2 + 1, dtype=complex)
        k = self.wavenumbers[1:-1]
        out[1:-1] = self.dn_multiplier[1:-1] / (1j * k)
        # Nyquist: derivative convention zeroes it, keep the pair consistent
        out[-1] = 0.0
        return out

    @property
    def band(self) -> int:
        """Top mode index kept by the 2/3 rule.

        (M-1)//3 rather than M//3: with this choice products of two kept
        fields alias only onto discarded modes, so truncated products are
        exact on the grid.
        """
        return (self.modes - 1) // 3

    @cached_property
    def dealias_keep(self) -> np.ndarray:
        return np.arange(self.modes // 2 + 1) <= self.band

    @cached_property
    def reflection(self) -> np.ndarray:
        """Index permutation realizing xi -> -xi on the node set."""
        return (-np.arange(self.modes)) % self.modes

    # -- dense operator matrices (cached, built on first use) --------------

    def _circulant(self, multiplier: np.ndarray) -> np.ndarray:
        full = np.zeros(self.modes, dtype=complex)
        half = self.modes // 2
        full[: half + 1] = multiplier
        full[half + 1:] = np.conj(multiplier[1:half][::-1])
        column = np.fft.ifft(full).real
        return scipy.linalg.circulant(column)

    @cached_property
    def dn_matrix(self) -> np.ndarray:
        mat = self._circulant(self.dn_multiplier.astype(complex))
        return 0.5 * (mat + mat.T)

    @cached_property
    def deriv_matrix(self) -> np.ndarray:
        mat = self._circulant(self.deriv_multiplier)
        return 0.5 * (mat - mat.T)

    # -- field helpers ------------------------------------------------------

    def check_field(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.modes,):
            raise InvalidFieldError(
                f"field has shape {f.shape}, expected ({self.modes},)")
        if not np.all(np.isfinite(f)):
            raise InvalidFieldError("field contains non-finite entries")
        return f

    def symmetrize(self, f: np.ndarray) -> np.ndarray:
        """Even part of f about xi = 0."""
        return 0.5 * (f + f[self.reflection])


# ---------------------------------------------------------------------------
# multiplier operators
# ---------------------------------------------------------------------------

def _apply(grid: Grid, f: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(f) * multiplier, grid.modes)


def dirichlet_neumann(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Normal derivative at the surface of the bottom-vanishing extension of f."""
    return _apply(grid, grid.check_field(f), grid.dn_multiplier)


def harmonic_conjugate(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Zero-mean conjugate trace; its derivative is the Dirichlet-Neumann image."""
    return _apply(grid, grid.check_field(f), grid.conj_multiplier)


def conjugate_pinned(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Conjugate trace calibrated to vanish at the domain edge xi = -L/2.

    For decaying inputs this is the periodic stand-in for the antiderivative
    of the Dirichlet-Neumann image that vanishes at infinity.
    """
    g = harmonic_conjugate(grid, f)
    return g - g[0]


def deriv(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Spectral derivative d/dxi."""
    return _apply(grid, grid.check_field(f), grid.deriv_multiplier)


def lowpass(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Truncate to the 2/3-rule band."""
    spec = np.fft.rfft(f)
    spec[~grid.dealias_keep] = 0.0
    return np.fft.irfft(spec, grid.modes)


def dealias_product(grid: Grid, f: np.ndarray, g: np.ndarray,
                    mode: str = "2/3") -> np.ndarray:
    """Pointwise product of two fields, dealiased.

    mode "2/3": truncate inputs and output to |m| <= M//3 (default).
    mode "pad": exact quadratic product via zero-padding to 2M nodes.
    """
    if mode == "2/3":
        return lowpass(grid, lowpass(grid, f) * lowpass(grid, g))
    if mode == "pad":
        m = grid.modes
        fpad = np.fft.irfft(np.fft.rfft(f), 2 * m) * 2.0
        gpad = np.fft.irfft(np.fft.rfft(g), 2 * m) * 2.0
        spec = np.fft.rfft(fpad * gpad)[: m // 2 + 1] / 2.0
        spec[-1] = spec[-1].real
        return np.fft.irfft(spec, m)
    raise ValueError(f"unknown dealias mode {mode!r}")


# ---------------------------------------------------------------------------
# quadrature and norms (periodic trapezoid rule throughout)
# ---------------------------------------------------------------------------

def integrate(grid: Grid, f: np.ndarray) -> float:
    return float(grid.spacing * np.sum(f))


def inner(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    return float(grid.spacing * np.dot(f, g))


def norm(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(grid.spacing) * np.linalg.norm(f))


# ---------------------------------------------------------------------------
# resolution diagnostics
# ---------------------------------------------------------------------------

def tail_ratio(grid: Grid, f: np.ndarray) -> float:
    """Edge magnitude relative to the peak; measures how well L truncates."""
    peak = np.max(np.abs(f))
    if peak == 0.0:
        return 0.0
    m = grid.modes
    edge = np.abs(np.concatenate([f[: m // 16], f[-m // 16:]])).max()
    return float(edge / peak)


def decay_ratio(grid: Grid, f: np.ndarray) -> float:
    """Spectral amplitude near the 2/3 boundary relative to the peak."""
    spec = np.abs(np.fft.rfft(f))
    peak = spec.max()
    if peak == 0.0:
        return 0.0
    cut = grid.band
    lo = max(1, int(0.85 * cut))
    return float(spec[lo: cut + 1].max() / peak)


# ---------------------------------------------------------------------------
# interpolation and regridding
# ---------------------------------------------------------------------------

def trig_eval(grid: Grid, f: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the band-limited interpolant of f at arbitrary points."""
    spec = np.fft.rfft(f)
    m = grid.modes
    rel = np.atleast_1d(np.asarray(points, dtype=float)) - grid.nodes[0]
    k = grid.wavenumbers
    phases = np.exp(1j * np.outer(rel, k[:-1]))
    out = (phases[:, 0].real * spec[0].real
           + 2.0 * (phases[:, 1:] * spec[1:-1]).real.sum(axis=1)
           + spec[-1].real * np.cos(k[-1] * rel))
    return out / m


def resample(src: Grid, f: np.ndarray, dst: Grid) -> np.ndarray:
    """Move a field between grids.

    Same period: exact spectral pad/truncate.  Different period: evaluate
    the source interpolant at the destination nodes, which is the right
    operation for localized fields whose tails are negligible.
    """
    if np.isclose(src.length, dst.length):
        spec = np.fft.rfft(f)
        out = np.zeros(dst.modes // 2 + 1, dtype=complex)
        n = min(spec.size, out.size)
        out[:n] = spec[:n]
        if dst.modes < src.modes:
            out[-1] = out[-1].real
        return np.fft.irfft(out, dst.modes) * (dst.modes / src.modes)
    return trig_eval(src, f, dst.nodes)
