"""Machine-checkable invariant suite.

Each check returns a CheckResult with the measured value and its tolerance;
the CLI serializes the list to verify.json and exits nonzero when anything
fails.  The suite covers the operator toolbox properties, the converged-wave
structural identities, the dispersion-operator norm bounds, the long-wave
eigenvalue scaling, and the flat-state dispersion relation.  A fault hook
can flip the sign of the surface pressure gradient to prove the suite
actually detects broken assembly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import babenko, branch, harmonic, observables, operators, spectral, stability
from .errors import ResolutionError, WavestabError
from .fields import map_multiply, surface_fields
from .spectral import Grid


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _result(name, value, tolerance, detail="", larger_is_fail=True):
    passed = value <= tolerance if larger_is_fail else value >= tolerance
    return CheckResult(name, bool(passed), float(value), float(tolerance), detail)


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def standard_wave(cfg) -> babenko.WaveState:
    """Reference mid-branch wave used by the identity checks."""
    v = cfg.section("verify")
    g = cfg.section("grid")
    grid = Grid(length=v["length"], modes=v["modes"],
                depth=g["depth"], gravity=g["gravity"])
    froude = 1.05
    wave = babenko.newton_solve(grid, babenko.kdv_profile(grid, froude),
                                1.0 / froude ** 2, tol=1e-12, tail_tol=None)
    target = v["alpha"]
    lam = wave.lambda_p
    while wave.amplitude / g["depth"] < target:
        lam *= 0.985
        wave = babenko.newton_solve(grid, wave.w, lam, tol=1e-12, tail_tol=None)
    return wave


def _random_band_fields(grid: Grid, n: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        f = spectral.lowpass(grid, rng.standard_normal(grid.modes))
        yield f


# ---------------------------------------------------------------------------
# the checks
# ---------------------------------------------------------------------------

def check_symbol_bound(grid: Grid) -> CheckResult:
    mult = grid.dn_multiplier
    defect = abs(mult.min() - 1.0 / grid.depth) + abs(np.argmin(mult))
    return _result("symbol_min_at_zero", defect, 1e-14,
                   "min of k/tanh(kh) over the grid is 1/h, attained at k=0")


def check_dn_coercivity(grid: Grid, draws: int, seed: int) -> CheckResult:
    worst = np.inf
    for f in _random_band_fields(grid, draws, seed):
        quad = spectral.inner(grid, spectral.dirichlet_neumann(grid, f), f)
        norm2 = spectral.inner(grid, f, f)
        worst = min(worst, quad / norm2 * grid.depth)
    return _result("dn_coercivity", worst, 1.0 - 1e-12,
                   f"min of <Nf,f>*h/||f||^2 over {draws} draws",
                   larger_is_fail=False)


def check_dn_symmetry(grid: Grid, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        f = rng.standard_normal(grid.modes)
        g = rng.standard_normal(grid.modes)
        lhs = spectral.inner(grid, spectral.dirichlet_neumann(grid, f), g)
        rhs = spectral.inner(grid, f, spectral.dirichlet_neumann(grid, g))
        scale = spectral.norm(grid, f) * spectral.norm(grid, g)
        worst = max(worst, abs(lhs - rhs) / scale)
    return _result("dn_symmetry", worst, 1e-12)


def check_dn_norm_bound(grid: Grid, seed: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    cap = grid.dn_multiplier.max()
    for _ in range(20):
        f = rng.standard_normal(grid.modes)
        worst = max(worst, spectral.norm(grid, spectral.dirichlet_neumann(grid, f))
                    / (cap * spectral.norm(grid, f)))
    return _result("dn_norm_bound", worst, 1.0 + 1e-12,
                   "||Nf|| <= max n(k) ||f||")


def check_conjugate_derivative(grid: Grid, seed: int) -> CheckResult:
    worst = 0.0
    for f in _random_band_fields(grid, 10, seed):
        f = f - f.mean()
        lhs1 = spectral.deriv(grid, spectral.harmonic_conjugate(grid, f))
        lhs2 = spectral.harmonic_conjugate(grid, spectral.deriv(grid, f))
        rhs = spectral.dirichlet_neumann(grid, f)
        scale = spectral.norm(grid, rhs)
        worst = max(worst,
                    spectral.norm(grid, lhs1 - rhs) / scale,
                    spectral.norm(grid, lhs2 - rhs) / scale)
    return _result("conjugate_derivative_identity", worst, 1e-11,
                   "d/dxi of conjugate equals Dirichlet-Neumann on zero-mean fields")


def check_gradient_consistency(wave, seed: int) -> CheckResult:
    grid = wave.grid
    rng = np.random.default_rng(seed)
    worst = 0.0
    res = babenko.residual(grid, wave.w * 0.9, wave.lambda_p)
    for _ in range(20):
        v = spectral.lowpass(grid, rng.standard_normal(grid.modes))
        v /= spectral.norm(grid, v)
        eps = 1e-6
        base = wave.w * 0.9
        fd = (babenko.functional(grid, base + eps * v, wave.lambda_p)
              - babenko.functional(grid, base - eps * v, wave.lambda_p)) / (2 * eps)
        an = spectral.inner(grid, res, v)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-14))
    return _result("action_gradient_consistency", worst, 1e-6,
                   "residual matches centered differences of the action")


def check_translation_kernel(wave) -> CheckResult:
    grid = wave.grid
    wp = spectral.deriv(grid, wave.w)
    image = babenko.hessian_apply(grid, wave.w, wave.lambda_p, wp)
    rel = spectral.norm(grid, image) / spectral.norm(grid, wp)
    tol = 10.0 * max(wave.decay_ratio(), 1e-10)
    return _result("second_variation_translation_kernel", rel, tol)


def check_hessian_symmetry(wave, seed: int) -> CheckResult:
    grid = wave.grid
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        u = rng.standard_normal(grid.modes)
        v = rng.standard_normal(grid.modes)
        au = babenko.hessian_apply(grid, wave.w, wave.lambda_p, u)
        av = babenko.hessian_apply(grid, wave.w, wave.lambda_p, v)
        defect = abs(spectral.inner(grid, au, v) - spectral.inner(grid, u, av))
        worst = max(worst, defect / (spectral.norm(grid, u) * spectral.norm(grid, v)))
    return _result("second_variation_symmetry", worst, 1e-10)


def check_resolution(wave, tail_tol: float) -> CheckResult:
    value = max(wave.tail_ratio() / tail_tol, wave.decay_ratio() / 1e-12)
    return _result("resolution_tail_and_decay", value, 1.0,
                   f"tail {wave.tail_ratio():.2e} (tol {tail_tol:.0e}), "
                   f"decay {wave.decay_ratio():.2e} (tol 1e-12)")


def check_supercritical(wave) -> CheckResult:
    return _result("supercritical_froude", wave.froude, 1.0 + 1e-12,
                   larger_is_fail=False)


def check_amplitude_bound(wave) -> CheckResult:
    return _result("amplitude_below_limiting", wave.amplitude / wave.grid.depth,
                   0.8332)


def check_energy_oracle(wave) -> CheckResult:
    obs = observables.observables(wave)
    e2, p2 = harmonic.energy_momentum(wave)
    rel = max(abs(obs.energy - e2) / abs(e2),
              abs(obs.momentum - p2) / abs(p2))
    return _result("energy_momentum_quadrature_oracle", rel, 1e-6,
                   f"closed E={obs.energy:.12g} P={obs.momentum:.12g} "
                   f"vs strip quadrature E={e2:.12g} P={p2:.12g}")


def check_surface_identities(sf) -> list:
    grid = sf.grid
    out = []
    out.append(_result("velocity_bounds", -min(sf.psi_ey.min(), sf.b.min()),
                       -1e-12, "psi_ey and b positive"))
    pot = sf.b * sf.p_ey / sf.psi_ey ** 2
    rel = np.abs(pot + sf.a_plot).max() / np.abs(sf.a_plot).max()
    out.append(_result("hodograph_pressure_identity", rel, 1e-8))
    out.append(_result("decay_fields_at_edge", float(sf.e[:8].max()), 1e-8))
    out.append(_result(
        "potential_far_field",
        float(abs(pot[0] + grid.gravity / sf.c ** 2)), 1e-6))
    kernel = (spectral.norm(grid, operators.zero_rate_apply(sf, sf.psi_ex))
              / spectral.norm(grid, sf.psi_ex))
    out.append(_result("zero_rate_kernel_residual", kernel, 1e-6))
    mpsi = map_multiply(sf, sf.psi_ex)
    target = -sf.c * sf.wprime
    rel = np.abs(mpsi - target).max() / np.abs(target).max()
    out.append(_result("map_multiply_velocity_identity", rel, 1e-8))
    return out


def check_operator_norms(sf_small) -> list:
    """Weighted contraction bounds of the resolvent factors."""
    out = []
    rate = 0.05 * sf_small.c
    bundle = operators.assemble(sf_small, rate, with_minus=True)
    eye = np.eye(sf_small.grid.modes)
    for name, op in (("resolvent_plus", bundle.resolvent_plus),
                     ("resolvent_minus", bundle.resolvent_minus),
                     ("one_minus_resolvent_plus", eye - bundle.resolvent_plus),
                     ("one_minus_resolvent_minus", eye - bundle.resolvent_minus)):
        val = operators.weighted_operator_norm(sf_small, op)
        out.append(_result(f"weighted_norm_{name}", val, 1.0 + 1e-8))
    adv = bundle.advection
    weight = sf_small.b * sf_small.psi_ey * sf_small.grid.spacing
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        u = rng.standard_normal(sf_small.grid.modes)
        v = rng.standard_normal(sf_small.grid.modes)
        defect = abs(np.sum(weight * (adv @ u) * v) + np.sum(weight * u * (adv @ v)))
        worst = max(worst, defect / (np.linalg.norm(u) * np.linalg.norm(v)))
    out.append(_result("weighted_antisymmetry_advection", worst, 1e-10))
    sym = np.abs(operators.zero_rate_matrix(sf_small)
                 - operators.zero_rate_matrix(sf_small).T).max()
    out.append(_result("zero_rate_matrix_symmetric", sym, 1e-12))
    vals = scipy.linalg.eigvals(bundle.matrix)
    complex_ones = vals[np.abs(vals.imag) > 1e-9 * np.abs(vals).max()]
    pair_defect = 0.0
    if complex_ones.size:
        upper = np.sort_complex(complex_ones[complex_ones.imag > 0])
        lower = np.sort_complex(complex_ones[complex_ones.imag < 0].conj())
        if upper.size != lower.size:
            pair_defect = 1.0
        else:
            pair_defect = float(np.abs(upper - lower).max()
                                / np.abs(vals).max())
    out.append(_result("complex_conjugate_pairing", pair_defect, 1e-8))
    return out


def check_kernel_monitor(sf) -> CheckResult:
    _, _, pair = stability.zero_rate_spectrum(sf)
    ratio = pair[0] / max(pair[1], 1e-300)
    return _result("kernel_dimension_monitor", ratio, 1e-2,
                   f"two smallest |eigenvalues| {pair[0]:.2e}, {pair[1]:.2e}; "
                   "a second near-zero value away from turning points would "
                   "signal an unexpected kernel")


def check_long_wave_eigenvalues(depth: float, gravity: float) -> CheckResult:
    """Three smallest eigenvalues at the long-wave scaling, rho = 0.15."""
    rho = 0.15
    lam = float(np.exp(-3.0 * rho ** 2))
    grid = Grid(length=240.0, modes=1024, depth=depth, gravity=gravity)
    froude = 1.0 / np.sqrt(lam)
    wave = babenko.newton_solve(grid, babenko.kdv_profile(grid, froude), lam,
                                tol=1e-12, tail_tol=None)
    sf = surface_fields(wave)
    vals = np.linalg.eigvalsh(operators.zero_rate_matrix(sf))
    three = vals[:3] if vals[0] < 0 else vals[:3]
    targets = np.array([-15.0 / 4.0, 0.0, 9.0 / 4.0]) * rho ** 2
    lowest = np.sort(vals)[:1]
    nearest = [vals[np.argmin(np.abs(vals - t))] for t in targets]
    errs = [abs(nearest[0] - targets[0]) / abs(targets[0]),
            abs(nearest[1]) / rho ** 2,
            abs(nearest[2] - targets[2]) / abs(targets[2])]
    return _result("long_wave_eigenvalue_scaling", max(errs), 0.15,
                   f"eigenvalues {nearest} vs targets {targets.tolist()}")


def check_flat_state(grid_small: Grid, lam: float = 0.8) -> list:
    """Uniform stream: multiplier form of the operators and no instability."""
    out = []
    c = float(np.sqrt(grid_small.gravity * grid_small.depth / lam))
    wave = babenko.WaveState(grid_small, np.zeros(grid_small.modes), lam, 0.0, 0)
    sf = surface_fields(wave)
    rate = 0.3 * c
    bundle = operators.assemble(sf, rate)
    symbol = operators.flat_state_symbol(grid_small, c, rate)
    # the flat-state operator is circulant; column 0 carries the symbol
    recovered = np.fft.rfft(bundle.matrix[:, 0])
    defect = float(np.abs(recovered - symbol).max() / np.abs(symbol).max())
    out.append(_result("flat_state_symbol", defect, 1e-10,
                       "assembled operator matches the closed-form multiplier"))
    vals = scipy.linalg.eigvals(bundle.matrix)
    delta0 = 1.0 / grid_small.depth - grid_small.gravity / c ** 2
    out.append(_result("flat_state_spectrum_floor",
                       float(delta0 - vals.real.min()), 1e-10 * abs(delta0),
                       f"min Re eigenvalue {vals.real.min():.6g} vs delta0 "
                       f"{delta0:.6g}"))
    _, n_minus, _ = stability.zero_rate_spectrum(sf)
    out.append(_result("flat_state_no_negative", float(n_minus), 0.0))
    mode = stability.find_growing_mode(wave, count_modes=None, n_scan=8)
    out.append(_result("flat_state_no_growing_mode",
                       0.0 if mode is None else 1.0, 0.0))
    return out


def check_sensitivity_identity(wave) -> list:
    """Speed-derivative identity with a step-halving study."""
    out = []
    residuals = []
    for dc in (2e-3, 1e-3):
        minus, plus = branch.speed_pair(wave, dc)
        traces = branch.sensitivity_traces(minus, wave, plus)
        sf = surface_fields(wave)
        residuals.append(stability.sensitivity_identity_residual(sf, traces))
    out.append(_result("speed_sensitivity_identity", residuals[-1], 1e-3,
                       f"residuals at dc halving: {residuals}"))
    order = residuals[0] / max(residuals[-1], 1e-300)
    out.append(_result("speed_sensitivity_second_order", -order, -2.0,
                       f"halving dc reduced the residual by {order:.2f}x "
                       "(second-order differences give about 4x)"))
    return out


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def run_verification(cfg) -> list:
    checks: list = []
    g = cfg.section("grid")
    seed = cfg["seed"]
    draws = cfg.section("verify")["random_draws"]
    grid = Grid(length=g["length"], modes=min(g["modes"], 512),
                depth=g["depth"], gravity=g["gravity"])

    def run(fn, *args):
        try:
            result = fn(*args)
        except WavestabError as exc:
            checks.append(CheckResult(fn.__name__, False, np.nan, np.nan,
                                      f"{type(exc).__name__}: {exc}"))
            return
        if isinstance(result, list):
            checks.extend(result)
        else:
            checks.append(result)

    run(check_symbol_bound, grid)
    run(check_dn_coercivity, grid, draws, seed)
    run(check_dn_symmetry, grid, seed + 1)
    run(check_dn_norm_bound, grid, seed + 2)
    run(check_conjugate_derivative, grid, seed + 3)

    try:
        wave = standard_wave(cfg)
    except (WavestabError, ResolutionError) as exc:
        checks.append(CheckResult("standard_wave", False, np.nan, np.nan,
                                  f"could not converge the reference wave: {exc}"))
        return checks

    sf = surface_fields(wave)
    if cfg["fault_injection"] == "flip_pressure_sign":
        sf = dataclasses.replace(sf, p_ey=-sf.p_ey)

    run(check_gradient_consistency, wave, seed + 4)
    run(check_hessian_symmetry, wave, seed + 5)
    run(check_translation_kernel, wave)
    run(check_resolution, wave, cfg.section("solver")["tail_tol"])
    run(check_supercritical, wave)
    run(check_amplitude_bound, wave)
    run(check_energy_oracle, wave)
    run(check_surface_identities, sf)
    run(check_kernel_monitor, sf)

    small = stability.decimate_wave(wave, min(1024, wave.grid.modes))
    sf_small = surface_fields(small)
    if cfg["fault_injection"] == "flip_pressure_sign":
        sf_small = dataclasses.replace(sf_small, p_ey=-sf_small.p_ey)
    run(check_operator_norms, sf_small)

    run(check_long_wave_eigenvalues, g["depth"], g["gravity"])
    flat_grid = Grid(length=g["length"], modes=256,
                     depth=g["depth"], gravity=g["gravity"])
    run(check_flat_state, flat_grid)
    run(check_sensitivity_identity, wave)
    return checks
