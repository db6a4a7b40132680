"""Branch continuation for the solitary-wave family.

The travel speed is not monotone along the branch (it folds before the
highest wave), so continuation is pseudo-arclength in the plane
(crest height, lambda_p), never in the speed itself.  The crest height is
monotone over the range this laboratory covers, which keeps the stepping
well conditioned through speed turning points.

Grids adapt along the branch.  Small waves have long tails and need a long
period; steep waves concentrate curvature at the crest and need modes, so
the period shrinks and the mode count grows as the amplitude rises.  A
staged schedule handles the bulk of this predictably, with measured tail
and spectral-decay feedback as a backstop (mode doubling, period growth).
Waves past the point where the decay target is unreachable at the mode
ceiling carry a ``resolution_warning`` flag instead of failing: landmark
location only needs the observable curves to be smooth on a fixed grid,
not resolved to machine precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import babenko, spectral
from .babenko import WaveState
from .errors import (ContinuationStalledError, ConvergenceError,
                     InsufficientDataError, NotDifferentiableError,
                     ResolutionError)
from .observables import Observables, observables
from .spectral import Grid


@dataclass
class StepControl:
    ds0: float = 0.02
    ds_min: float = 1e-6
    ds_max: float = 0.05
    ds_max_dense: float = 0.004
    dense_from_alpha: float = 0.70
    grow: float = 1.4
    shrink: float = 0.5
    newton_tol: float = 1e-11
    max_iter: int = 25


@dataclass
class GridPolicy:
    """Stage schedule plus feedback limits for (L, M) along the branch."""

    schedule: tuple = ((0.00, 120.0, 1024),
                       (0.32, 70.0, 4096),
                       (0.58, 66.0, 8192))
    m_max: int = 8192
    l_max: float = 360.0
    tail_tol: float = 1e-10
    decay_target: float = 1e-9
    decay_abort: float = 5e-2
    depth: float = 1.0
    gravity: float = 1.0

    def stage_index(self, alpha: float) -> int:
        idx = 0
        for i, (threshold, _, _) in enumerate(self.schedule):
            if alpha >= threshold:
                idx = i
        return idx

    def stage_for(self, alpha: float) -> tuple[float, int]:
        _, length, modes = self.schedule[self.stage_index(alpha)]
        return length, modes

    def make_grid(self, length: float, modes: int) -> Grid:
        return Grid(length=length, modes=modes, depth=self.depth,
                    gravity=self.gravity)


@dataclass
class BranchPoint:
    s: float
    wave: WaveState
    obs: Observables
    flags: list = field(default_factory=list)
    dc_ds: float = np.nan
    dE_ds: float = np.nan
    dP_ds: float = np.nan
    dalpha_ds: float = np.nan

    @property
    def alpha(self) -> float:
        return self.obs.alpha


@dataclass
class BranchRecord:
    points: list
    stalled: bool = False
    messages: list = field(default_factory=list)
    extrema: list = field(default_factory=list)   # dicts from extremum fits

    def __len__(self):
        return len(self.points)

    def alphas(self) -> np.ndarray:
        return np.array([p.obs.alpha for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p.obs, name) for p in self.points])

    def nearest(self, *, alpha=None, omega=None, index=None) -> int:
        if index is not None:
            return int(index)
        if alpha is not None:
            return int(np.argmin(np.abs(self.alphas() - alpha)))
        if omega is not None:
            return int(np.argmin(np.abs(self.column("omega") - omega)))
        raise ValueError("need alpha=, omega= or index=")


# ---------------------------------------------------------------------------
# bordered Newton step (arclength constraint in the (w(0), lambda_p) plane)
# ---------------------------------------------------------------------------

def _bordered_solve(grid: Grid, x0: np.ndarray, lam0: float,
                    tangent: tuple[float, float],
                    anchor: tuple[float, float],
                    control: StepControl) -> WaveState:
    """Newton on the band coefficients plus one arclength equation.

    anchor = (w(0)_pred, lambda_pred); the constraint keeps the solution on
    the hyperplane through the predictor orthogonal to the tangent.
    """
    nb = grid.band
    crow = babenko.crest_row(grid)
    t_a, t_l = tangent
    x, lam = x0.copy(), lam0

    for iteration in range(1, control.max_iter + 1):
        w = babenko.to_field(grid, x)
        res = babenko.residual(grid, w, lam)
        res_norm = float(np.abs(res).max())
        arc = t_a * (crow @ x - anchor[0]) + t_l * (lam - anchor[1])
        if res_norm <= control.newton_tol and abs(arc) <= 1e-13:
            return WaveState(grid, w, lam, res_norm, iteration - 1)

        jac = np.zeros((nb + 2, nb + 2))
        jac[:nb + 1, :nb + 1] = babenko.band_jacobian(grid, w, lam)
        jac[:nb + 1, -1] = babenko.to_coeffs(
            grid, babenko.residual_lambda_derivative(grid, w))
        jac[-1, :nb + 1] = t_a * crow
        jac[-1, -1] = t_l
        rhs = np.empty(nb + 2)
        rhs[:nb + 1] = -babenko.to_coeffs(grid, res)
        rhs[-1] = -arc
        try:
            step = scipy.linalg.solve(jac, rhs)
        except scipy.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular bordered system: {exc}",
                                   residual_norm=res_norm,
                                   iterations=iteration) from exc
        x = x + step[:nb + 1]
        lam = float(lam + step[-1])
        if not (np.isfinite(lam) and 0.0 < lam < 1.5):
            raise ConvergenceError("continuation step left the physical range",
                                   residual_norm=res_norm, iterations=iteration)
    raise ConvergenceError("bordered Newton did not converge",
                           residual_norm=res_norm, iterations=control.max_iter)


# ---------------------------------------------------------------------------
# regridding
# ---------------------------------------------------------------------------

def _refit(wave: WaveState, grid: Grid, control: StepControl) -> WaveState:
    w = spectral.resample(wave.grid, wave.w, grid)
    return babenko.newton_solve(grid, w, wave.lambda_p, tol=control.newton_tol,
                                tail_tol=None, max_iter=control.max_iter)


def _resolution_flags(wave: WaveState, policy: GridPolicy) -> list:
    flags = []
    if wave.tail_ratio() > policy.tail_tol:
        flags.append("tail_warning")
    if wave.decay_ratio() > policy.decay_target:
        flags.append("resolution_warning")
    return flags


def _regrid_if_needed(wave: WaveState, policy: GridPolicy,
                      control: StepControl, messages: list,
                      stage_seen: list) -> WaveState:
    """Apply the stage schedule on first crossing, then measured feedback.

    ``stage_seen`` is a single-element list holding the last applied stage
    index, so a feedback-adjusted grid is not fought by the schedule on
    every subsequent point.
    """
    alpha = wave.amplitude / policy.depth
    grid = wave.grid
    stage = policy.stage_index(alpha)
    if stage > stage_seen[0]:
        stage_seen[0] = stage
        length, modes = policy.stage_for(alpha)
        if not (np.isclose(grid.length, length) and grid.modes == modes):
            target = policy.make_grid(length, modes)
            wave = _refit(wave, target, control)
            messages.append(
                f"regrid to (L={length:g}, M={modes}) at alpha={alpha:.3f}")
            grid = target

    for _ in range(4):
        tail = wave.tail_ratio()
        decay = wave.decay_ratio()
        new_l, new_m = grid.length, grid.modes
        if decay > policy.decay_target and grid.modes < policy.m_max:
            new_m = min(policy.m_max, grid.modes * 2)
        elif (tail > policy.tail_tol and tail > 10.0 * decay
                and grid.length < policy.l_max):
            # a genuine tail problem, not ringing from the spectral floor
            new_l = min(policy.l_max, grid.length * 1.5)
            new_m = min(policy.m_max, grid.modes * 2)
        if new_l == grid.length and new_m == grid.modes:
            break
        grid = policy.make_grid(new_l, new_m)
        wave = _refit(wave, grid, control)
        messages.append(f"feedback regrid to (L={new_l:g}, M={new_m}) "
                        f"at alpha={alpha:.3f} (tail {tail:.1e}, decay {decay:.1e})")
    return wave


# ---------------------------------------------------------------------------
# branch driver
# ---------------------------------------------------------------------------

def initial_wave(policy: GridPolicy, froude: float = 1.05,
                 control: StepControl | None = None) -> WaveState:
    """Converge the branch seed from the long-wave predictor."""
    control = control or StepControl()
    grid = policy.make_grid(*policy.stage_for(0.0))
    w0 = babenko.kdv_profile(grid, froude)
    return babenko.newton_solve(grid, w0, 1.0 / froude ** 2,
                                tol=control.newton_tol, tail_tol=None)


def _target_reached(obs: Observables, target: dict) -> bool:
    if "alpha" in target:
        return obs.alpha >= target["alpha"]
    if "omega" in target:
        return obs.omega >= target["omega"]
    raise ValueError("target must contain 'alpha' or 'omega'")


def continue_branch(start: WaveState, target: dict,
                    control: StepControl | None = None,
                    policy: GridPolicy | None = None) -> BranchRecord:
    """Extend the branch from ``start`` until the target is reached.

    Returns the ordered record; if the arclength step underflows the record
    is returned with ``stalled=True`` (partial result, never an exception
    unless the very first point is unusable).
    """
    control = control or StepControl()
    policy = policy or GridPolicy()
    messages: list = []
    stage_seen = [-1]

    cur = _regrid_if_needed(start, policy, control, messages, stage_seen)
    cur_obs = observables(cur)
    record = BranchRecord(points=[BranchPoint(0.0, cur, cur_obs,
                                              _resolution_flags(cur, policy))],
                          messages=messages)
    if _target_reached(cur_obs, target):
        record.messages.append("target below start amplitude: empty extension")
        return record

    prev: WaveState | None = None
    ds = control.ds0
    while not _target_reached(record.points[-1].obs, target):
        cur = record.points[-1].wave
        if prev is not None and prev.grid is not cur.grid:
            prev = None  # tangent must not mix grids

        if prev is None:
            # natural-parameter nudge to restart the secant tangent
            lam_next = cur.lambda_p * (1.0 - max(ds, 1e-3) * 0.05)
            ratio = (1.0 / lam_next - 1.0) / max(1.0 / cur.lambda_p - 1.0, 1e-12)
            try:
                nxt = babenko.newton_solve(cur.grid, cur.w * ratio, lam_next,
                                           tol=control.newton_tol, tail_tol=None,
                                           max_iter=control.max_iter)
            except ConvergenceError:
                nxt = babenko.newton_solve(cur.grid, cur.w, lam_next,
                                           tol=control.newton_tol, tail_tol=None,
                                           max_iter=control.max_iter)
        else:
            x_prev = babenko.to_coeffs(cur.grid, prev.w)
            x_cur = babenko.to_coeffs(cur.grid, cur.w)
            da = cur.amplitude - prev.amplitude
            dl = cur.lambda_p - prev.lambda_p
            slen = float(np.hypot(da, dl))
            t_a, t_l = da / slen, dl / slen
            scale = ds / slen
            x_pred = x_cur + scale * (x_cur - x_prev)
            lam_pred = cur.lambda_p + ds * t_l
            anchor = (cur.amplitude + ds * t_a, lam_pred)
            try:
                nxt = _bordered_solve(cur.grid, x_pred, lam_pred,
                                      (t_a, t_l), anchor, control)
            except ConvergenceError:
                ds *= control.shrink
                if ds < control.ds_min:
                    record.stalled = True
                    record.messages.append(
                        f"arclength step underflow at alpha="
                        f"{record.points[-1].obs.alpha:.4f}")
                    return record
                continue

        try:
            refined = _regrid_if_needed(nxt, policy, control,
                                        record.messages, stage_seen)
        except (ConvergenceError, ResolutionError) as exc:
            record.stalled = True
            record.messages.append(f"regrid failed: {exc}")
            return record
        if refined.grid is not nxt.grid:
            prev = None
        else:
            prev = cur
        nxt = refined

        flags = _resolution_flags(nxt, policy)
        if nxt.decay_ratio() > policy.decay_abort:
            record.stalled = True
            record.messages.append(
                f"spectral decay {nxt.decay_ratio():.1e} beyond the usable "
                f"floor at alpha={nxt.amplitude / policy.depth:.4f}")
            return record

        obs = observables(nxt)
        step_len = float(np.hypot(nxt.amplitude - cur.amplitude,
                                  nxt.lambda_p - cur.lambda_p))
        record.points.append(BranchPoint(record.points[-1].s + step_len,
                                         nxt, obs, flags))

        cap = (control.ds_max_dense
               if obs.alpha >= control.dense_from_alpha else control.ds_max)
        if nxt.newton_iterations <= 4:
            ds = min(ds * control.grow, cap)
        elif nxt.newton_iterations > 8:
            ds = max(ds * control.shrink, control.ds_min)
        ds = min(ds, cap)
    return record


# ---------------------------------------------------------------------------
# derivatives along the branch and extremum flags
# ---------------------------------------------------------------------------

def branch_derivatives_and_extrema(record: BranchRecord) -> BranchRecord:
    """Fill ds-derivatives by centered differences and flag extrema.

    Extrema of c(s) and E(s) are localized by a three-point quadratic fit
    around each interior sign change of the derivative; the first of each
    kind is flagged 'speed_max' / 'energy_max'.
    """
    if len(record) < 5:
        raise InsufficientDataError(
            f"need at least 5 branch points, have {len(record)}")
    s = np.array([p.s for p in record.points])
    c = record.column("c")
    energy = record.column("energy")
    momentum = record.column("momentum")
    alpha = record.alphas()

    dc = np.gradient(c, s)
    de = np.gradient(energy, s)
    dp = np.gradient(momentum, s)
    dal = np.gradient(alpha, s)
    for i, p in enumerate(record.points):
        p.dc_ds = float(dc[i])
        p.dE_ds = float(de[i])
        p.dP_ds = float(dp[i])
        p.dalpha_ds = float(dal[i])

    record.extrema = []
    for name, values in (("speed_max", c), ("energy_max", energy)):
        found = _first_interior_max(s, values, alpha, name)
        if found is not None:
            record.extrema.append(found)
    return record


def _first_interior_max(s, values, alpha, name):
    dv = np.diff(values)
    for i in range(1, dv.size):
        if dv[i - 1] > 0.0 >= dv[i]:
            sw = s[i - 1: i + 2]
            vw = values[i - 1: i + 2]
            aw = alpha[i - 1: i + 2]
            coef = np.polyfit(sw, vw, 2)
            if coef[0] >= 0.0:
                continue
            s_star = -coef[1] / (2.0 * coef[0])
            a_of_s = np.polyfit(sw, aw, 2)
            alpha_star = float(np.polyval(a_of_s, s_star))
            return {
                "kind": name,
                "index": int(i),
                "s": float(s_star),
                "alpha": alpha_star,
                "value": float(np.polyval(coef, s_star)),
                "alpha_uncertainty": float(0.5 * max(np.diff(aw).max(), 0.0)),
            }
    return None


# ---------------------------------------------------------------------------
# speed-derivative surface traces (finite differences at fixed physical x)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityTraces:
    grid: Grid
    d_c_eta: np.ndarray
    d_c_psibar: np.ndarray
    dc: float


def _eta_on_x(wave: WaveState, x_points: np.ndarray) -> np.ndarray:
    """Surface elevation at given physical abscissae by map inversion."""
    grid = wave.grid
    slope = 1.0 + float(np.mean(wave.w)) / grid.depth
    conj = spectral.harmonic_conjugate(grid, wave.w)
    b = 1.0 + spectral.dirichlet_neumann(grid, wave.w)
    xi = x_points / slope
    for _ in range(30):
        x_val = slope * xi + spectral.trig_eval(grid, conj, xi)
        dx = spectral.trig_eval(grid, b, xi)
        delta = (x_val - x_points) / dx
        xi = xi - delta
        if np.max(np.abs(delta)) < 1e-13 * grid.length:
            break
    return spectral.trig_eval(grid, wave.w, xi)


def sensitivity_traces(minus: WaveState, center: WaveState,
                       plus: WaveState) -> SensitivityTraces:
    """Centered speed derivative of the surface at fixed physical x.

    The neighbors must bracket the center in speed on the same side of any
    turning point; the traces come back on the center's xi grid through the
    center's surface map.
    """
    from .fields import physical_x, surface_fields

    c_m, c_0, c_p = minus.c, center.c, plus.c
    if not (min(c_m, c_p) < c_0 < max(c_m, c_p)):
        raise NotDifferentiableError(
            "neighbors do not bracket the center in speed "
            f"(c = {c_m:.6f}, {c_0:.6f}, {c_p:.6f}); turning point in between")
    x_grid = physical_x(center)
    eta_p = _eta_on_x(plus, x_grid)
    eta_m = _eta_on_x(minus, x_grid)
    d_c_eta = (eta_p - eta_m) / (c_p - c_m)
    sf = surface_fields(center)
    d_c_psibar = -center.w - sf.psi_ey * d_c_eta
    return SensitivityTraces(center.grid, d_c_eta, d_c_psibar,
                             dc=float(0.5 * abs(c_p - c_m)))


def dc_surface_traces(record: BranchRecord, index: int) -> SensitivityTraces:
    if not 0 < index < len(record) - 1:
        raise InsufficientDataError("index needs both branch neighbors")
    minus = record.points[index - 1].wave
    center = record.points[index].wave
    plus = record.points[index + 1].wave
    if minus.grid.modes != center.grid.modes or plus.grid.modes != center.grid.modes \
            or not np.isclose(minus.grid.length, center.grid.length) \
            or not np.isclose(plus.grid.length, center.grid.length):
        raise NotDifferentiableError("branch neighbors live on different grids")
    return sensitivity_traces(minus, center, plus)


def speed_pair(wave: WaveState, dc: float,
               control: StepControl | None = None) -> tuple[WaveState, WaveState]:
    """Converge the waves at c -+ dc for controlled finite differences."""
    control = control or StepControl()
    g, h = wave.grid.gravity, wave.grid.depth
    out = []
    for sign in (-1.0, 1.0):
        lam = g * h / (wave.c + sign * dc) ** 2
        out.append(babenko.newton_solve(wave.grid, wave.w, lam,
                                        tol=control.newton_tol, tail_tol=None,
                                        max_iter=control.max_iter))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("index", "s", "lambda_p", "c", "froude", "q_c", "omega",
               "omega_alt", "mu", "alpha", "energy", "momentum", "delta0",
               "dc_ds", "dE_ds", "dP_ds", "residual_norm",
               "newton_iterations", "grid_length", "grid_modes", "flags")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def branch_to_csv(record: BranchRecord) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for i, p in enumerate(record.points):
        o = p.obs
        flags = list(p.flags)
        for ext in record.extrema:
            if ext["index"] == i:
                flags.append(ext["kind"])
        row = (i, p.s, p.wave.lambda_p, o.c, o.froude, o.q_c, o.omega,
               o.omega_alt, o.mu, o.alpha, o.energy, o.momentum, o.delta0,
               p.dc_ds, p.dE_ds, p.dP_ds, p.wave.residual_norm,
               p.wave.newton_iterations, p.wave.grid.length,
               p.wave.grid.modes, "|".join(flags))
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def branch_to_json(record: BranchRecord) -> str:
    points = []
    for i, p in enumerate(record.points):
        o = p.obs
        points.append({
            "index": i,
            "s": p.s,
            "lambda_p": p.wave.lambda_p,
            "grid": {"length": p.wave.grid.length, "modes": p.wave.grid.modes,
                     "depth": p.wave.grid.depth, "gravity": p.wave.grid.gravity},
            "observables": {k: getattr(o, k) for k in
                            ("c", "froude", "q_c", "omega", "omega_alt", "mu",
                             "alpha", "energy", "momentum", "kinetic",
                             "potential", "delta0", "near_singular")},
            "derivatives": {"dc_ds": p.dc_ds, "dE_ds": p.dE_ds,
                            "dP_ds": p.dP_ds, "dalpha_ds": p.dalpha_ds},
            "residual_norm": p.wave.residual_norm,
            "newton_iterations": p.wave.newton_iterations,
            "flags": p.flags,
            "w_coefficients": babenko.to_coeffs(p.wave.grid, p.wave.w).tolist(),
        })
    doc = {"points": points, "stalled": record.stalled,
           "messages": record.messages, "extrema": record.extrema}
    return json.dumps(doc, sort_keys=True, indent=1)


def branch_from_json(text: str) -> BranchRecord:
    doc = json.loads(text)
    points = []
    for entry in doc["points"]:
        gd = entry["grid"]
        grid = Grid(length=gd["length"], modes=gd["modes"], depth=gd["depth"],
                    gravity=gd["gravity"])
        w = babenko.to_field(grid, np.array(entry["w_coefficients"]))
        wave = WaveState(grid, w, entry["lambda_p"], entry["residual_norm"],
                         entry["newton_iterations"])
        obs = Observables(**{**entry["observables"]}, )
        p = BranchPoint(entry["s"], wave, obs, list(entry["flags"]))
        deriv = entry.get("derivatives", {})
        p.dc_ds = deriv.get("dc_ds", np.nan)
        p.dE_ds = deriv.get("dE_ds", np.nan)
        p.dP_ds = deriv.get("dP_ds", np.nan)
        p.dalpha_ds = deriv.get("dalpha_ds", np.nan)
        points.append(p)
    return BranchRecord(points=points, stalled=doc["stalled"],
                        messages=list(doc["messages"]),
                        extrema=list(doc["extrema"]))
