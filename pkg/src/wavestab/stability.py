"""Spectral analysis of the dispersion operators and growing-mode search.

The instability mechanism detected here: the zero-rate operator has a
translation kernel; switching on a growth rate r moves that eigenvalue by
k(r) ~ r^2 * [-(1/c) dE/dc / ||psi_ex||^2], so past the energy maximum
(where dE/dc < 0 before the speed maximum) an odd number of eigenvalues
sits in the left half plane for small r while none remain there for large
r.  Somewhere in between a real eigenvalue crosses zero, and the crossing
rate is a purely growing mode.

All spectra are taken on dense matrices.  Eigenvalues near zero come from
shift-inverted Arnoldi iterations seeded and tracked by eigenvector
overlap; left-half-plane counts come from full dense spectra, optionally
on a decimated grid since counts are integers and survive mild truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import operators, spectral
from .babenko import WaveState
from .errors import BracketingError, TrackingError
from .fields import SurfaceFields, physical_x, surface_fields

REAL_IMAG_FACTOR = 1e-8   # |Im| threshold relative to the spectral radius


# ---------------------------------------------------------------------------
# eigenvalues near zero, tracked by eigenvector overlap
# ---------------------------------------------------------------------------

def _spectral_radius_estimate(mat: np.ndarray, iterations: int = 12) -> float:
    rng = np.random.default_rng(1)
    v = rng.standard_normal(mat.shape[0])
    v /= np.linalg.norm(v)
    est = 1.0
    for _ in range(iterations):
        v = mat @ v
        est = np.linalg.norm(v)
        if est == 0.0:
            return 1.0
        v /= est
    return float(est)


def eigs_near_zero(mat: np.ndarray, count: int = 10,
                   seed_vector: np.ndarray | None = None):
    """Eigenpairs of smallest magnitude via LU-based shift inversion."""
    n = mat.shape[0]
    lu = scipy.linalg.lu_factor(mat)
    op = scipy.sparse.linalg.LinearOperator(
        (n, n), matvec=lambda v: scipy.linalg.lu_solve(lu, v))
    v0 = None if seed_vector is None else np.real(seed_vector)
    inv_vals, vecs = scipy.sparse.linalg.eigs(op, k=count, which="LM", v0=v0)
    vals = 1.0 / inv_vals
    order = np.argsort(np.abs(vals))
    return vals[order], vecs[:, order]


@dataclass
class TrackedEigenvalue:
    rate: float
    value: complex
    is_real: bool
    vector: np.ndarray
    overlap: float


def tracked_eigenvalue(sf: SurfaceFields, rate: float, reference: np.ndarray,
                       count: int = 10) -> TrackedEigenvalue:
    """Near-zero eigenvalue of A(rate) with largest overlap against a vector."""
    bundle = operators.assemble(sf, rate)
    vals, vecs = eigs_near_zero(bundle.matrix, count=count,
                                seed_vector=reference)
    ref = reference / np.linalg.norm(reference)
    overlaps = np.abs(ref.conj() @ vecs) / np.linalg.norm(vecs, axis=0)
    best = int(np.argmax(overlaps))
    radius = _spectral_radius_estimate(bundle.matrix)
    val = vals[best]
    is_real = abs(val.imag) <= REAL_IMAG_FACTOR * radius
    vec = vecs[:, best]
    if is_real:
        vec = np.real(vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))])))
        nv = np.linalg.norm(vec)
        if nv > 0:
            vec = vec / nv
    return TrackedEigenvalue(rate=rate, value=complex(val), is_real=is_real,
                             vector=vec, overlap=float(overlaps[best]))


# ---------------------------------------------------------------------------
# kernel-drift samples and their extrapolation to rate -> 0
# ---------------------------------------------------------------------------

@dataclass
class KernelDrift:
    samples: list                     # (rate, k) pairs, rate decreasing
    extrapolated: float               # lim k/rate^2
    error_bar: float
    rhs: float | None = None          # -(1/c) dE/dc / ||psi_ex||^2
    relative_mismatch: float | None = None


def track_kernel_eigenvalue(sf: SurfaceFields, rates=None,
                            min_overlap: float = 0.3,
                            strict: bool = False) -> list:
    """Real eigenvalue of A(rate) continued from the translation kernel.

    Default rates are 0.1*c/h halved seven times, tracked upward from the
    smallest (where the eigenvector is the translation kernel itself).  At
    larger rates the continued eigenvalue may collide with another one and
    leave the real axis; the sample list is truncated there, which is fine
    for the rate -> 0 extrapolation.  Raises TrackingError when fewer than
    three clean samples exist (or on any loss, when strict).
    """
    if rates is None:
        base = 0.1 * sf.c / sf.grid.depth
        rates = [base * 0.5 ** j for j in range(7)]
    rates = sorted(rates)
    reference = sf.psi_ex / spectral.norm(sf.grid, sf.psi_ex)
    samples = []
    for rate in rates:
        tracked = tracked_eigenvalue(sf, rate, reference)
        problem = None
        if tracked.overlap < min_overlap:
            problem = (f"kernel eigenvector overlap fell to "
                       f"{tracked.overlap:.3f} at rate {rate:g}")
        elif not tracked.is_real:
            problem = (f"kernel eigenvalue left the real axis at rate "
                       f"{rate:g} (value {tracked.value:.3e})")
        if problem is not None:
            if strict or len(samples) < 3:
                raise TrackingError(problem)
            break
        samples.append((float(rate), float(tracked.value.real)))
        reference = tracked.vector
    return samples


def extrapolate_drift(samples) -> tuple[float, float]:
    """Richardson extrapolation of k/rate^2 using the three smallest rates.

    The residual after the quadratic law is first order in the rate, so one
    halving step cancels it; the spread of the last two extrapolants is the
    reported error bar.
    """
    smallest = sorted(samples)[:3]
    if len(smallest) < 3:
        raise ValueError("need at least three samples")
    ratios = [(r, k / r ** 2) for r, k in smallest]
    (r2, q2), (r1, q1), (r0, q0) = sorted(ratios, reverse=True)
    ex1 = q1 + (q1 - q2) * r1 / (r2 - r1)
    ex0 = q0 + (q0 - q1) * r0 / (r1 - r0)
    return float(ex0), float(abs(ex0 - ex1))


def kernel_drift(sf: SurfaceFields, dEdc: float | None = None,
                 rates=None) -> KernelDrift:
    samples = track_kernel_eigenvalue(sf, rates=rates)
    extrapolated, error_bar = extrapolate_drift(samples)
    drift = KernelDrift(samples=samples, extrapolated=extrapolated,
                        error_bar=error_bar)
    if dEdc is not None:
        norm2 = spectral.inner(sf.grid, sf.psi_ex, sf.psi_ex)
        drift.rhs = float(-(dEdc / sf.c) / norm2)
        drift.relative_mismatch = float(
            abs(drift.extrapolated - drift.rhs) / abs(drift.rhs))
    return drift


# ---------------------------------------------------------------------------
# full spectrum report
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    alpha: float
    c: float
    delta0: float
    eigenvalues_zero_rate: np.ndarray
    n_minus: int
    kernel_residual: float
    smallest_singular_pair: tuple
    potential_far_field_defect: float
    k_rate_samples: list = field(default_factory=list)
    moving_kernel_lhs: float | None = None
    moving_kernel_error_bar: float | None = None
    moving_kernel_rhs: float | None = None
    n_left_per_rate: dict = field(default_factory=dict)
    perturbation_bound: float | None = None
    lambda_star: float | None = None
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "c": self.c,
            "delta0": self.delta0,
            "eigenvalues_zero_rate": list(map(float, self.eigenvalues_zero_rate)),
            "n_minus": self.n_minus,
            "kernel_residual": self.kernel_residual,
            "smallest_singular_pair": list(self.smallest_singular_pair),
            "potential_far_field_defect": self.potential_far_field_defect,
            "k_rate_samples": self.k_rate_samples,
            "moving_kernel_lhs": self.moving_kernel_lhs,
            "moving_kernel_error_bar": self.moving_kernel_error_bar,
            "moving_kernel_rhs": self.moving_kernel_rhs,
            "n_left_per_rate": {f"{k:.10g}": v
                                for k, v in self.n_left_per_rate.items()},
            "perturbation_bound": self.perturbation_bound,
            "lambda_star": self.lambda_star,
            "failure": self.failure,
        }


NEGATIVE_FLOOR_FACTOR = 1e-5


def zero_rate_spectrum(sf: SurfaceFields):
    """(all eigenvalues, negative count, two smallest magnitudes).

    The translation kernel is identified by eigenvector overlap with the
    velocity trace and excluded from the negative count: its exact value is
    zero, and counting its numerical displacement as a negative eigenvalue
    would corrupt the bookkeeping precisely where it matters.
    """
    mat = operators.zero_rate_matrix(sf)
    vals, vecs = np.linalg.eigh(mat)
    ref = sf.psi_ex / np.linalg.norm(sf.psi_ex)
    kernel_idx = int(np.argmax(np.abs(ref @ vecs)))
    scale = max(abs(vals[0]), abs(vals[-1]))
    negative = vals < -NEGATIVE_FLOOR_FACTOR * scale
    negative[kernel_idx] = False
    n_minus = int(np.sum(negative))
    small = np.sort(np.abs(vals))[:2]
    return vals, n_minus, (float(small[0]), float(small[1]))


def left_half_count(sf: SurfaceFields, rate: float,
                    bound: float | None = None) -> int:
    """Number of eigenvalues of A(rate) with negative real part.

    The count is restricted to the box |Im z| < 2*bound, Re z > -2*bound
    with the perturbation-norm bound estimated by power iteration; all
    discrete left-half-plane eigenvalues live there.
    """
    bundle = operators.assemble(sf, rate)
    if bound is None:
        bound = operators.perturbation_norm_bound(sf, bundle)
    vals = scipy.linalg.eigvals(bundle.matrix)
    box = ((vals.real < 0.0) & (vals.real > -2.0 * bound)
           & (np.abs(vals.imag) < 2.0 * bound))
    return int(np.sum(box))


def decimate_wave(wave: WaveState, modes: int,
                  polish: bool = True) -> WaveState:
    """Spectral truncation of a wave onto a coarser grid with the same period.

    With ``polish`` the truncated profile is re-converged on the coarse
    grid, so it is an exact discrete solution there and keeps the exact
    translation kernel; the physical bias of the coarser resolution remains
    but the structural bookkeeping stays clean.  The polish pins the crest
    height and leaves the speed free: near the speed fold a fixed-speed
    solve could land on the other sheet of the branch.
    """
    if modes >= wave.grid.modes:
        return wave
    grid = spectral.Grid(length=wave.grid.length, modes=modes,
                         depth=wave.grid.depth, gravity=wave.grid.gravity)
    w = spectral.resample(wave.grid, wave.w, grid)
    if polish:
        from . import babenko
        from .branch import StepControl, _bordered_solve
        from .errors import ConvergenceError
        x0 = babenko.to_coeffs(grid, w)
        anchor = (float(wave.amplitude), wave.lambda_p)
        try:
            return _bordered_solve(grid, x0, wave.lambda_p, (1.0, 0.0),
                                   anchor, StepControl())
        except ConvergenceError:
            pass
    return WaveState(grid, w, wave.lambda_p, wave.residual_norm,
                     wave.newton_iterations)


def spectrum_report(wave: WaveState, rate_grid=None, dEdc: float | None = None,
                    count_modes: int | None = 1024,
                    eig_modes: int | None = 2048,
                    with_drift: bool = True) -> StabilityReport:
    """Assemble the full stability diagnostics of one wave.

    Identity residuals are evaluated at the wave's full resolution; dense
    matrix work runs on a spectrally decimated copy (``eig_modes``), which
    loses only the coefficients already at the decimation level.
    """
    sf_full = surface_fields(wave)
    sf = (surface_fields(decimate_wave(wave, eig_modes))
          if eig_modes else sf_full)
    vals, n_minus, smallest = zero_rate_spectrum(sf)
    kernel_res = (spectral.norm(sf_full.grid,
                                operators.zero_rate_apply(sf_full, sf_full.psi_ex))
                  / spectral.norm(sf_full.grid, sf_full.psi_ex))
    potential = sf_full.b * sf_full.p_ey / sf_full.psi_ey ** 2
    far_defect = float(abs(potential[0] + sf_full.gravity / sf_full.c ** 2))

    from .observables import observables
    report = StabilityReport(
        alpha=observables(wave).alpha, c=sf.c, delta0=sf.delta0,
        eigenvalues_zero_rate=vals, n_minus=n_minus,
        kernel_residual=float(kernel_res),
        smallest_singular_pair=smallest,
        potential_far_field_defect=far_defect)

    try:
        if with_drift:
            drift = kernel_drift(sf, dEdc=dEdc)
            report.k_rate_samples = drift.samples
            report.moving_kernel_lhs = drift.extrapolated
            report.moving_kernel_error_bar = drift.error_bar
            report.moving_kernel_rhs = drift.rhs
        if rate_grid is not None:
            count_wave = (decimate_wave(wave, count_modes)
                          if count_modes else wave)
            sf_count = surface_fields(count_wave)
            for rate in rate_grid:
                bundle = operators.assemble(sf_count, rate)
                bound = operators.perturbation_norm_bound(sf_count, bundle)
                report.perturbation_bound = bound
                vals_r = scipy.linalg.eigvals(bundle.matrix)
                box = ((vals_r.real < 0.0) & (vals_r.real > -2.0 * bound)
                       & (np.abs(vals_r.imag) < 2.0 * bound))
                report.n_left_per_rate[float(rate)] = int(np.sum(box))
    except (TrackingError, BracketingError, np.linalg.LinAlgError,
            scipy.sparse.linalg.ArpackError) as exc:
        report.failure = str(exc)
    return report


# ---------------------------------------------------------------------------
# growing-mode search
# ---------------------------------------------------------------------------

@dataclass
class GrowingMode:
    lambda_star: float
    f: np.ndarray            # stream-function trace of the mode
    eta: np.ndarray          # elevation trace
    p_trace: np.ndarray      # pressure trace
    physical_x: np.ndarray
    kernel_residual: float
    normal_residual: float

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "f": self.f.tolist(),
            "eta": self.eta.tolist(),
            "p_trace": self.p_trace.tolist(),
            "physical_x": self.physical_x.tolist(),
            "kernel_residual": self.kernel_residual,
            "normal_residual": self.normal_residual,
        }


def _real_negative_candidates(sf, rate, reference, count=12):
    """Real eigenvalues near zero with vectors, sorted by |value|."""
    bundle = operators.assemble(sf, rate)
    vals, vecs = eigs_near_zero(bundle.matrix, count=count,
                                seed_vector=reference)
    radius = _spectral_radius_estimate(bundle.matrix)
    out = []
    for i, val in enumerate(vals):
        if abs(val.imag) <= REAL_IMAG_FACTOR * radius:
            vec = vecs[:, i]
            vec = np.real(vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))])))
            nv = np.linalg.norm(vec)
            out.append((float(val.real), vec / nv if nv > 0 else vec))
    return out


def _mode_from_vector(sf: SurfaceFields, wave: WaveState, rate: float,
                      vector: np.ndarray) -> GrowingMode:
    bundle = operators.assemble(sf, rate)
    f = vector / spectral.norm(sf.grid, vector)
    eta = bundle.eta_op @ f
    p_trace = -sf.p_ey * eta
    kernel_res = (spectral.norm(sf.grid, bundle.matrix @ f)
                  / spectral.norm(sf.grid, f))
    # normal-derivative form of the same equation, in surface coordinates
    psi_n = spectral.dirichlet_neumann(sf.grid, f) / sf.b
    normal = psi_n + bundle.eta_op @ (sf.p_ey * (bundle.eta_op @ f))
    normal_res = spectral.norm(sf.grid, normal) / spectral.norm(sf.grid, f)
    return GrowingMode(lambda_star=float(rate), f=f, eta=eta, p_trace=p_trace,
                       physical_x=physical_x(wave),
                       kernel_residual=float(kernel_res),
                       normal_residual=float(normal_res))


def _kernel_displacement(sf: SurfaceFields) -> tuple[float, np.ndarray]:
    """Zero-rate eigenvalue and vector of the (numerical) translation kernel.

    Exactly zero for a perfectly resolved wave; at finite resolution the
    displacement sets the noise floor for the kernel-child tracking, and
    referencing the tracked curve to it removes the leading truncation bias.
    """
    mat = operators.zero_rate_matrix(sf)
    vals, vecs = np.linalg.eigh(mat)
    ref = sf.psi_ex / np.linalg.norm(sf.psi_ex)
    idx = int(np.argmax(np.abs(ref @ vecs)))
    return float(vals[idx]), vecs[:, idx]


@dataclass
class ChildCrossing:
    rate_star: float
    vector: np.ndarray
    samples: list


def _kernel_child_crossing(sf: SurfaceFields, rate_lo: float, rate_hi: float,
                           n_walk: int = 16) -> ChildCrossing | None:
    """Downward zero crossing of the kernel-child eigenvalue, if any.

    The eigenvalue continued from the translation kernel first moves like
    (drift coefficient) * rate^2; past the energy maximum the coefficient
    is positive and the curve comes back through zero at the growth rate of
    the purely growing mode.  Values are referenced to the zero-rate kernel
    displacement; the walk stops when the branch turns complex (the merge
    with the next eigenvalue, which happens on the stable side).
    """
    d0, kernel_vec = _kernel_displacement(sf)
    noise = max(5e-3 * abs(d0), 1e-10)
    reference = kernel_vec
    rates = np.geomspace(rate_lo, rate_hi, n_walk)
    samples = []
    prev = None
    for rate in rates:
        tracked = tracked_eigenvalue(sf, rate, reference)
        if not tracked.is_real or tracked.overlap < 0.3:
            break
        corrected = tracked.value.real - d0
        samples.append((float(rate), float(corrected)))
        if prev is not None and prev[1] > noise and corrected < 0.0:
            rate_star, vector = _secant_refine(sf, prev, (rate, corrected),
                                               tracked.vector, d0)
            return ChildCrossing(rate_star, vector, samples)
        prev = (rate, corrected)
        reference = tracked.vector
    return None


def _secant_refine(sf, pos, neg, vector, d0, steps: int = 4):
    (ra, ka), (rb, kb) = pos, neg
    reference = vector
    for _ in range(steps):
        rm = ra + ka * (rb - ra) / (ka - kb)
        rm = min(max(rm, ra + 1e-3 * (rb - ra)), rb - 1e-3 * (rb - ra))
        tracked = tracked_eigenvalue(sf, rm, reference)
        if not tracked.is_real:
            break
        km = tracked.value.real - d0
        reference = tracked.vector
        if km > 0:
            ra, ka = rm, km
        else:
            rb, kb = rm, km
        if abs(km) < 1e-4 * max(abs(ka), abs(kb), 1e-300) \
                or (rb - ra) < 1e-3 * ra:
            break
    return float(ra + ka * (rb - ra) / (ka - kb)), reference


def find_growing_mode(wave: WaveState, rate_lo: float | None = None,
                      rate_hi: float | None = None, n_scan: int = 12,
                      count_modes: int | None = 1024,
                      eig_modes: int | None = 2048,
                      bisect_tol: float = 3e-3,
                      confirm_with_doubling: bool = False,
                      refine_full: bool = False) -> GrowingMode | None:
    """Search for a purely growing mode of one wave.

    Primary detector: the kernel-child eigenvalue tracked upward in the
    rate, whose downward zero crossing is the growing mode (this is the
    instability mechanism itself).  Fallback detector: parity changes of
    the left-half-plane eigenvalue count over a log rate grid, bisected on
    the integer count and resolved through the crossing eigenpair (this
    catches crossings not connected to the translation kernel).  Returns
    None when neither detector fires at this resolution, a numerical
    verdict rather than a proof; ``confirm_with_doubling`` re-checks a None
    at doubled count resolution.  With ``refine_full`` the reported mode is
    re-converged at the wave's full resolution by preconditioned inverse
    iteration.
    """
    eig_wave = decimate_wave(wave, eig_modes) if eig_modes else wave
    sf = surface_fields(eig_wave)
    c = sf.c
    if rate_lo is None:
        rate_lo = 2e-3 * c / sf.grid.depth
    if rate_hi is None:
        rate_hi = 10.0 * c / sf.grid.depth

    crossing = _kernel_child_crossing(sf, rate_lo, min(rate_hi, 0.6 * c))
    if crossing is not None:
        mode = _mode_from_vector(sf, eig_wave, crossing.rate_star,
                                 crossing.vector)
        if refine_full and eig_modes and wave.grid.modes > eig_modes:
            mode = refine_mode(wave, mode)
        return mode

    rates = np.geomspace(rate_lo, rate_hi, n_scan)
    count_wave = (decimate_wave(wave, count_modes)
                  if count_modes else eig_wave)
    sf_count = surface_fields(count_wave)
    counts = [left_half_count(sf_count, rate) for rate in rates]
    flip = None
    for i in range(1, len(counts)):
        if counts[i] % 2 != counts[i - 1] % 2:
            flip = (rates[i - 1], rates[i], counts[i - 1])
            break
    if flip is None:
        if confirm_with_doubling and count_modes:
            return find_growing_mode(
                wave, rate_lo, rate_hi, n_scan,
                count_modes=min(2 * count_modes, wave.grid.modes),
                eig_modes=eig_modes, bisect_tol=bisect_tol,
                confirm_with_doubling=False, refine_full=refine_full)
        return None

    rate_a, rate_b, par_a = flip
    for _ in range(60):
        if rate_b - rate_a <= bisect_tol * rate_a:
            break
        mid = float(np.sqrt(rate_a * rate_b))
        if left_half_count(sf_count, mid) % 2 == par_a % 2:
            rate_a = mid
        else:
            rate_b = mid
    else:
        raise BracketingError("count bisection stagnated")

    mode = _resolve_crossing(sf, eig_wave, rate_a, rate_b)
    if refine_full and eig_modes and wave.grid.modes > eig_modes:
        mode = refine_mode(wave, mode)
    return mode


def _resolve_crossing(sf, eig_wave, rate_a, rate_b) -> GrowingMode:
    """Locate the real eigenvalue crossing inside a narrow rate bracket."""
    cands_a = _real_negative_candidates(sf, rate_a, sf.psi_ex)
    cands_b = _real_negative_candidates(sf, rate_b, sf.psi_ex)
    best = None
    for val_a, vec_a in cands_a:
        for val_b, vec_b in cands_b:
            overlap = abs(float(vec_a @ vec_b))
            if overlap > 0.5 and val_a * val_b < 0.0:
                if best is None or abs(val_a) < abs(best[0]):
                    best = (val_a, vec_a, val_b)
    if best is None:
        # the crossing pair may be slightly displaced at the matrix
        # resolution; take the smallest real eigenvalue at the midpoint
        mid = 0.5 * (rate_a + rate_b)
        cands = _real_negative_candidates(sf, mid, sf.psi_ex)
        if not cands:
            raise BracketingError(
                f"parity changes in ({rate_a:g}, {rate_b:g}) but no real "
                "eigenvalue was captured there; resolution too coarse")
        val, vec = min(cands, key=lambda t: abs(t[0]))
        return _mode_from_vector(sf, eig_wave, mid, vec)
    val_a, vec_a, val_b = best
    frac = abs(val_a) / max(abs(val_a) + abs(val_b), 1e-300)
    rate_star = rate_a + frac * (rate_b - rate_a)
    tracked = tracked_eigenvalue(sf, rate_star, vec_a)
    return _mode_from_vector(sf, eig_wave, rate_star, tracked.vector)


# ---------------------------------------------------------------------------
# full-resolution mode refinement (matrix-free)
# ---------------------------------------------------------------------------

def _matvec_factory(sf: SurfaceFields, rate: float):
    """Matrix-free action of the dispersion operator at full resolution.

    Only the advection resolvent needs a dense factorization; the
    Dirichlet-Neumann part stays a Fourier multiplier.
    """
    grid = sf.grid
    n = grid.modes
    adv = operators.advection_matrix(sf)
    adv += rate * np.eye(n)
    lu = scipy.linalg.lu_factor(adv, overwrite_a=True)
    inv_psi = 1.0 / sf.psi_ey

    def eta_of(f):
        g = inv_psi * f
        return g - rate * scipy.linalg.lu_solve(lu, g)

    def matvec(f):
        eta = eta_of(f)
        return (spectral.dirichlet_neumann(grid, f)
                + sf.b * eta_of(sf.p_ey * eta))

    return matvec, eta_of


def refine_mode(wave: WaveState, mode: GrowingMode,
                iterations: int = 2) -> GrowingMode:
    """Re-converge a growing mode at the wave's full resolution.

    One or two steps of inverse iteration, each a Dirichlet-Neumann
    preconditioned GMRES solve, purify the coarse eigenvector against the
    full-resolution operator; the rate is kept (its residual is reported,
    not hidden).
    """
    sf = surface_fields(wave)
    grid = sf.grid
    rate = mode.lambda_star
    matvec, eta_of = _matvec_factory(sf, rate)
    n = grid.modes
    op = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec)
    precond = scipy.sparse.linalg.LinearOperator(
        (n, n), matvec=lambda v: np.fft.irfft(
            np.fft.rfft(v) / grid.dn_multiplier, n))

    if mode.f.size != n:
        src = spectral.Grid(length=grid.length, modes=mode.f.size,
                            depth=grid.depth, gravity=grid.gravity)
        f = spectral.resample(src, mode.f, grid)
    else:
        f = mode.f.copy()
    f /= spectral.norm(grid, f)
    for _ in range(iterations):
        x, info = scipy.sparse.linalg.gmres(op, f, M=precond, rtol=1e-12,
                                            atol=0.0, maxiter=400)
        if info != 0 or not np.all(np.isfinite(x)):
            break
        f = x / spectral.norm(grid, x)

    eta = eta_of(f)
    kernel_res = spectral.norm(grid, matvec(f)) / spectral.norm(grid, f)
    psi_n = spectral.dirichlet_neumann(grid, f) / sf.b
    normal = psi_n + eta_of(sf.p_ey * eta)
    normal_res = spectral.norm(grid, normal) / spectral.norm(grid, f)
    return GrowingMode(lambda_star=rate, f=f, eta=eta,
                       p_trace=-sf.p_ey * eta, physical_x=physical_x(wave),
                       kernel_residual=float(kernel_res),
                       normal_residual=float(normal_res))


# ---------------------------------------------------------------------------
# transition scan over a branch window
# ---------------------------------------------------------------------------

def transition_scan(points, eig_modes: int | None = 2048,
                    rate_lo_factor: float = 1e-3,
                    rate_hi_factor: float = 0.6) -> list:
    """(alpha, lambda_star) table for a sequence of branch points.

    Uses the kernel-child detector only: near the onset the growth rate is
    set by the kernel eigenvalue returning to zero, which is exactly what
    the tracker follows.  Stable points contribute lambda_star = None;
    failures are recorded per point rather than aborting the scan.
    """
    table = []
    for point in points:
        entry = {"alpha": point.obs.alpha, "lambda_star": None, "error": None}
        try:
            wave = point.wave
            eig_wave = (decimate_wave(wave, eig_modes)
                        if eig_modes else wave)
            sf = surface_fields(eig_wave)
            crossing = _kernel_child_crossing(
                sf, rate_lo_factor * sf.c, rate_hi_factor * sf.c, n_walk=20)
            if crossing is not None:
                entry["lambda_star"] = crossing.rate_star
                entry["samples"] = crossing.samples
        except (BracketingError, TrackingError) as exc:
            entry["error"] = str(exc)
        table.append(entry)
    return table


# ---------------------------------------------------------------------------
# identity checks built on the speed-sensitivity traces
# ---------------------------------------------------------------------------

def sensitivity_identity_residual(sf: SurfaceFields, traces) -> float:
    """Residual of the speed-derivative identity for the stream trace.

    Checks that the zero-rate operator applied to the speed derivative of
    the wave stream trace reproduces -b (u_e/psi_ey + P_ey eta/psi_ey^2).
    """
    lhs = operators.zero_rate_apply(sf, traces.d_c_psibar)
    rhs = -sf.b * (sf.u_e / sf.psi_ey + sf.p_ey * sf.eta / sf.psi_ey ** 2)
    return float(spectral.norm(sf.grid, lhs - rhs) / spectral.norm(sf.grid, rhs))


def momentum_derivative_check(sf: SurfaceFields, traces,
                              dPdc_fd: float) -> tuple[float, float]:
    """Closed-form dP/dc against the branch finite difference.

    Inner products carry the physical measure dx = b dxi.  Returns
    (formula value, relative mismatch).
    """
    grid = sf.grid
    weight = sf.b * grid.spacing

    def dot(f, g):
        return float(np.sum(f * g * weight))

    term1 = -dot(sf.eta, 2.0 * sf.u_e / sf.psi_ey
                 + sf.p_ey * sf.eta / sf.psi_ey ** 2)
    term2 = -dot(traces.d_c_psibar, sf.u_e / sf.psi_ey
                 + sf.p_ey * sf.eta / sf.psi_ey ** 2)
    value = term1 + term2
    return value, float(abs(value - dPdc_fd) / abs(dPdc_fd))
