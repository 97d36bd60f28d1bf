//! Explicit Runge-Kutta time stepping with dense output and collision events.
//!
//! The particle system turns the conservation law into an ODE, so the whole
//! accuracy burden falls on the time integrator. Two explicit schemes are
//! provided (midpoint RK2 and classical RK4), both wrapped in an evolve loop
//! that
//!
//! 1. caps the step by the current collision-time estimate,
//! 2. takes a trial step and scans its dense output for the first collision,
//! 3. on an event, re-integrates the truncated sub-step to the event time,
//!    merges the colliding pair(s), and continues.
//!
//! Dense output is a cubic Hermite interpolant on `(y0, f0, y1, f1)`. That is
//! enough to localize events to `O(dt^4)` when combined with bisection and a
//! final corrected sub-step, without committing to any particular
//! continuous-extension pair.

use crate::error::{Error, Result};
use crate::particles::{estimate_next_collision_flat, min_gap, MergeEvent, ParticleField, MERGE_GAP};

/// Default time-localization tolerance for collision events.
pub const DEFAULT_EVENT_TOL: f64 = 1e-10;

/// Times closer than this are treated as equal by the evolve loop.
const T_EPS: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RkOrder {
    Two,
    Four,
}

impl RkOrder {
    pub fn order(self) -> usize {
        match self {
            RkOrder::Two => 2,
            RkOrder::Four => 4,
        }
    }
}

/// Step-size policy for [`evolve`].
#[derive(Clone, Copy, Debug)]
pub enum StepControl {
    /// March on a fixed grid `t0 + k dt`. Event-truncated sub-steps are
    /// re-integrated so accepted trajectories never straddle an event, and
    /// the grid cadence is restored afterwards.
    Fixed(f64),
    /// Step doubling with mixed absolute/relative error control.
    Adaptive { abs_tol: f64, rel_tol: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    pub order: RkOrder,
    pub step: StepControl,
    pub t_end: f64,
    /// Time-localization tolerance for collision events.
    pub event_tol: f64,
    /// Hard cap on accepted steps before giving up.
    pub max_steps: usize,
}

impl EvolveOptions {
    pub fn fixed(order: RkOrder, dt: f64, t_end: f64) -> Self {
        EvolveOptions {
            order,
            step: StepControl::Fixed(dt),
            t_end,
            event_tol: DEFAULT_EVENT_TOL,
            max_steps: 50_000_000,
        }
    }

    pub fn adaptive(order: RkOrder, t_end: f64) -> Self {
        EvolveOptions {
            order,
            step: StepControl::Adaptive {
                abs_tol: 1e-10,
                rel_tol: 1e-8,
            },
            t_end,
            event_tol: DEFAULT_EVENT_TOL,
            max_steps: 50_000_000,
        }
    }

    pub fn with_event_tol(mut self, tol: f64) -> Self {
        self.event_tol = tol;
        self
    }
}

/// One accepted (or trial) step with everything needed for dense evaluation:
/// the endpoint states and slopes plus the raw stage derivatives.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t0: f64,
    pub dt: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Per-stage right-hand sides; `stages[0]` is the slope at `t0`.
    pub stages: Vec<Vec<f64>>,
    /// Right-hand side at `(t1, y1)`.
    pub f_end: Vec<f64>,
}

impl StepRecord {
    pub fn t1(&self) -> f64 {
        self.t0 + self.dt
    }

    /// Cubic Hermite dense output; exact at both step endpoints.
    pub fn dense_eval(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t0) / self.dt;
        let m = 1.0 - theta;
        let h00 = (1.0 + 2.0 * theta) * m * m;
        let h10 = theta * m * m;
        let h01 = theta * theta * (3.0 - 2.0 * theta);
        let h11 = theta * theta * (theta - 1.0);
        let f0 = &self.stages[0];
        for i in 0..out.len() {
            out[i] = h00 * self.y0[i]
                + h10 * self.dt * f0[i]
                + h01 * self.y1[i]
                + h11 * self.dt * self.f_end[i];
        }
    }
}

/// Take one explicit RK step (midpoint for order 2, classical for order 4).
///
/// The returned record carries the slope at the step end, so its dense output
/// interpolates the accepted trajectory to at least third order.
pub fn rk_step(
    t: f64,
    y: &[f64],
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    dt: f64,
    order: RkOrder,
) -> Result<StepRecord> {
    let n = y.len();
    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(4);
    let mut work = vec![0.0; n];
    let mut y1 = vec![0.0; n];

    let finite = |k: &[f64], at: f64| {
        if k.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteState { t: at })
        }
    };

    match order {
        RkOrder::Two => {
            let mut k1 = vec![0.0; n];
            rhs(t, y, &mut k1)?;
            finite(&k1, t)?;
            for i in 0..n {
                work[i] = y[i] + 0.5 * dt * k1[i];
            }
            let mut k2 = vec![0.0; n];
            rhs(t + 0.5 * dt, &work, &mut k2)?;
            finite(&k2, t + 0.5 * dt)?;
            for i in 0..n {
                y1[i] = y[i] + dt * k2[i];
            }
            stages.push(k1);
            stages.push(k2);
        }
        RkOrder::Four => {
            let mut k1 = vec![0.0; n];
            rhs(t, y, &mut k1)?;
            finite(&k1, t)?;
            for i in 0..n {
                work[i] = y[i] + 0.5 * dt * k1[i];
            }
            let mut k2 = vec![0.0; n];
            rhs(t + 0.5 * dt, &work, &mut k2)?;
            finite(&k2, t + 0.5 * dt)?;
            for i in 0..n {
                work[i] = y[i] + 0.5 * dt * k2[i];
            }
            let mut k3 = vec![0.0; n];
            rhs(t + 0.5 * dt, &work, &mut k3)?;
            finite(&k3, t + 0.5 * dt)?;
            for i in 0..n {
                work[i] = y[i] + dt * k3[i];
            }
            let mut k4 = vec![0.0; n];
            rhs(t + dt, &work, &mut k4)?;
            finite(&k4, t + dt)?;
            for i in 0..n {
                y1[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            stages.push(k1);
            stages.push(k2);
            stages.push(k3);
            stages.push(k4);
        }
    }

    if !y1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState { t: t + dt });
    }
    let mut f_end = vec![0.0; n];
    rhs(t + dt, &y1, &mut f_end)?;
    Ok(StepRecord {
        t0: t,
        dt,
        y0: y.to_vec(),
        y1,
        stages,
        f_end,
    })
}

/// Search a step's dense output for the first particle collision.
///
/// The primary target is the first sign change of `gap` (the true collision);
/// if the gap merely creeps to or below [`MERGE_GAP`] without crossing zero,
/// that crossing is reported instead. Either way the returned time is
/// localized by bisection to within `event_tol` and points at a state whose
/// smallest gap is inside `(0, MERGE_GAP]`, ready to merge.
pub fn locate_event(
    record: &StepRecord,
    gap: impl Fn(&[f64]) -> f64,
    event_tol: f64,
) -> Option<f64> {
    const SAMPLES: usize = 16;
    let n = record.y0.len();
    let mut buf = vec![0.0; n];
    let g_at = |t: f64, buf: &mut Vec<f64>| {
        record.dense_eval(t, buf);
        gap(buf)
    };

    let mut t_prev = record.t0;
    let mut g_prev = gap(&record.y0);
    let mut delta_crossing: Option<(f64, f64)> = None;
    for j in 1..=SAMPLES {
        let t_j = record.t0 + record.dt * j as f64 / SAMPLES as f64;
        let g_j = g_at(t_j, &mut buf);
        if g_j <= 0.0 {
            // True collision inside [t_prev, t_j]: bisect the sign change and
            // stop just on the pre-collision side.
            let (mut a, mut b) = (t_prev, t_j);
            while b - a > event_tol {
                let mid = 0.5 * (a + b);
                if g_at(mid, &mut buf) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Some(a.max(record.t0));
        }
        if g_j <= MERGE_GAP && delta_crossing.is_none() {
            delta_crossing = Some((t_prev, t_j));
        }
        t_prev = t_j;
        g_prev = g_j;
    }
    let _ = g_prev;

    // No sign change, but the gap dipped to the merge threshold: bisect that
    // crossing and stop just past it, where the pair is mergeable.
    if let Some((mut a, mut b)) = delta_crossing {
        while b - a > event_tol {
            let mid = 0.5 * (a + b);
            if g_at(mid, &mut buf) > MERGE_GAP {
                a = mid;
            } else {
                b = mid;
            }
        }
        return Some(b.min(record.t1()));
    }
    None
}

/// Time-stepping scheme used inside the evolve loop.
#[derive(Clone, Copy, Debug)]
pub enum TimeScheme {
    /// The explicit RK pair selected by [`EvolveOptions::order`].
    ExplicitRk,
    /// Trapezoidal rule, solved by damped Newton with the diagonal of the
    /// right-hand-side Jacobian (scalar Newton per component). Useful when a
    /// stiff source makes the explicit cap too expensive.
    ImplicitTrapezoid { newton_tol: f64 },
}

/// The ODE seen by the evolve loop: a flat-state right-hand side plus hooks
/// for structural bookkeeping (index maps, marker insertion) that fire when
/// particles appear or disappear.
pub trait FieldOde {
    /// Called whenever the particle structure changed (merge, insertion,
    /// normalization), before the next `rhs` call.
    fn on_structure(&mut self, _field: &ParticleField) {}

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Diagonal of the right-hand-side Jacobian, used to precondition the
    /// implicit scheme's Newton iteration. Zero by default.
    fn rhs_jacobian_diag(&mut self, _t: f64, _y: &[f64], diag: &mut [f64]) {
        diag.fill(0.0);
    }

    /// Structural maintenance after each accepted advance; returns `true` if
    /// the field changed. `last_dt` is the size of the step just taken.
    fn maintain(&mut self, _field: &mut ParticleField, _last_dt: f64) -> Result<bool> {
        Ok(false)
    }

    /// Additional hard cap on the step size (e.g. `tau / 10` for stiff
    /// sources integrated explicitly).
    fn dt_cap(&self) -> Option<f64> {
        None
    }
}

/// One trapezoidal-rule step `y1 = y0 + dt (F(y0) + F(y1)) / 2`, solved by
/// damped Newton sweeps with the diagonal Jacobian supplied by the ODE.
pub fn trapezoid_step<O: FieldOde>(
    ode: &mut O,
    t: f64,
    y: &[f64],
    dt: f64,
    newton_tol: f64,
) -> Result<StepRecord> {
    let n = y.len();
    let mut f0 = vec![0.0; n];
    ode.rhs(t, y, &mut f0)?;
    let mut y1: Vec<f64> = (0..n).map(|i| y[i] + dt * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        ode.rhs(t + dt, &y1, &mut f1)?;
        residual = 0.0;
        ode.rhs_jacobian_diag(t + dt, &y1, &mut diag);
        for i in 0..n {
            let r = y1[i] - y[i] - 0.5 * dt * (f0[i] + f1[i]);
            residual = residual.max(r.abs() / y1[i].abs().max(1.0));
            let mut denom = 1.0 - 0.5 * dt * diag[i];
            if denom.abs() < 0.1 {
                denom = denom.signum() * 0.1;
            }
            y1[i] -= r / denom;
        }
        if residual <= newton_tol {
            break;
        }
    }
    if residual > newton_tol {
        return Err(Error::ImplicitSolve { t, residual });
    }
    if !y1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState { t: t + dt });
    }
    ode.rhs(t + dt, &y1, &mut f1)?;
    Ok(StepRecord {
        t0: t,
        dt,
        y0: y.to_vec(),
        y1,
        stages: vec![f0],
        f_end: f1,
    })
}

/// Plain conservation-law dynamics.
pub(crate) struct ConservationOde {
    flux: crate::flux::FluxFunction,
}

impl FieldOde for ConservationOde {
    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        crate::particles::conservation_rhs_flat(&self.flux, y, dy)
    }
}

/// Statistics and event log of one evolve call.
#[derive(Clone, Debug, Default)]
pub struct EvolveReport {
    pub events: Vec<MergeEvent>,
    pub steps: usize,
    pub rejected_steps: usize,
}

/// Evolve a particle field to `opts.t_end` under its conservation law.
///
/// Returns the field at the final time together with the event log. With one
/// particle and flat far fields this degenerates to trivial transport and
/// returns after a single step per grid interval.
pub fn evolve(field: ParticleField, opts: &EvolveOptions) -> Result<(ParticleField, EvolveReport)> {
    let ode = ConservationOde {
        flux: field.flux().clone(),
    };
    evolve_ode(field, ode, opts)
}

/// Generic evolve loop over any [`FieldOde`]; shared by the conservation and
/// balance-law front ends.
pub fn evolve_ode<O: FieldOde>(
    field: ParticleField,
    ode: O,
    opts: &EvolveOptions,
) -> Result<(ParticleField, EvolveReport)> {
    evolve_ode_with(field, ode, opts, TimeScheme::ExplicitRk)
}

/// [`evolve_ode`] with an explicit choice of time-stepping scheme.
pub fn evolve_ode_with<O: FieldOde>(
    mut field: ParticleField,
    mut ode: O,
    opts: &EvolveOptions,
    scheme: TimeScheme,
) -> Result<(ParticleField, EvolveReport)> {
    field.normalize()?;
    ode.on_structure(&field);
    let mut report = EvolveReport::default();

    merge_touching(&mut field, &mut ode, &mut report)?;
    if ode.maintain(&mut field, 0.0)? {
        ode.on_structure(&field);
    }

    let t_start = field.time();
    if opts.t_end <= t_start + T_EPS {
        return Ok((field, report));
    }

    match opts.step {
        StepControl::Fixed(dt_grid) => {
            if !(dt_grid > 0.0) {
                return Err(Error::InvalidConfig("dt must be positive".into()));
            }
            let n_targets = ((opts.t_end - t_start) / dt_grid - 1e-9).ceil().max(1.0) as usize;
            for k in 1..=n_targets {
                let target = if k == n_targets {
                    opts.t_end
                } else {
                    (t_start + k as f64 * dt_grid).min(opts.t_end)
                };
                advance_fixed(&mut field, &mut ode, opts, scheme, target, &mut report)?;
            }
        }
        StepControl::Adaptive { abs_tol, rel_tol } => {
            advance_adaptive(
                &mut field, &mut ode, opts, scheme, abs_tol, rel_tol, &mut report,
            )?;
        }
    }
    Ok((field, report))
}

/// Merge every adjacent pair already inside the merge gap, left to right.
/// Order is immaterial: the lemma makes all inner states of a simultaneous
/// pileup agree pairwise.
fn merge_touching<O: FieldOde>(
    field: &mut ParticleField,
    ode: &mut O,
    report: &mut EvolveReport,
) -> Result<bool> {
    let mut merged_any = false;
    'outer: loop {
        let ps = field.particles();
        for i in 0..ps.len().saturating_sub(1) {
            if ps[i + 1].x - ps[i].x <= MERGE_GAP {
                let ev = field.merge(i)?;
                report.events.push(ev);
                merged_any = true;
                continue 'outer;
            }
        }
        break;
    }
    if merged_any {
        ode.on_structure(field);
    }
    Ok(merged_any)
}

fn scheme_step<O: FieldOde>(
    ode: &mut O,
    t: f64,
    y: &[f64],
    dt: f64,
    order: RkOrder,
    scheme: TimeScheme,
) -> Result<StepRecord> {
    match scheme {
        TimeScheme::ExplicitRk => rk_step(t, y, |tt, yy, dd| ode.rhs(tt, yy, dd), dt, order),
        TimeScheme::ImplicitTrapezoid { newton_tol } => {
            trapezoid_step(ode, t, y, dt, newton_tol)
        }
    }
}

/// Take one trial step of at most `dt`, halving on rejection. Returns the
/// accepted record.
fn try_step<O: FieldOde>(
    ode: &mut O,
    t: f64,
    y: &[f64],
    mut dt: f64,
    order: RkOrder,
    scheme: TimeScheme,
    report: &mut EvolveReport,
) -> Result<StepRecord> {
    loop {
        match scheme_step(ode, t, y, dt, order, scheme) {
            Ok(rec) => return Ok(rec),
            Err(_) => {
                report.rejected_steps += 1;
                dt *= 0.5;
                if dt < 1e-14 {
                    return Err(Error::StepUnderflow { t, dt });
                }
            }
        }
    }
}

/// March `field` to `target` with steps bounded by the grid spacing, the
/// collision estimate and the ODE's own cap, resolving events on the way.
fn advance_fixed<O: FieldOde>(
    field: &mut ParticleField,
    ode: &mut O,
    opts: &EvolveOptions,
    scheme: TimeScheme,
    target: f64,
    report: &mut EvolveReport,
) -> Result<()> {
    while field.time() < target - T_EPS {
        if report.steps >= opts.max_steps {
            return Err(Error::StepBudget(opts.max_steps));
        }
        let t = field.time();
        let mut dt = target - t;
        if let Some(est) = field.estimate_next_collision() {
            // Land the trial step a little past the predicted collision so
            // the event is interior to the step.
            if 1.25 * est < dt {
                dt = (1.25 * est).max(4.0 * opts.event_tol);
            }
        }
        if let Some(cap) = ode.dt_cap() {
            dt = dt.min(cap);
        }

        let y = field.flatten();
        let rec = try_step(ode, t, &y, dt, opts.order, scheme, report)?;
        report.steps += 1;

        if let Some(te) = locate_event(&rec, min_gap, opts.event_tol) {
            step_to_event(field, ode, opts, scheme, &y, &rec, te, report)?;
        } else {
            field.load_flat(&rec.y1)?;
            field.set_time(rec.t1());
        }
        let advanced_by = field.time() - t;
        if ode.maintain(field, advanced_by)? {
            ode.on_structure(field);
        }
    }
    field.set_time(target);
    Ok(())
}

/// March from the step start into the detected collision and merge.
///
/// A single RK step ending at the collision is unusable: its final stage sits
/// where a position gap vanishes, and the stage state is an extrapolation, so
/// the `du` fractions evaluate an off-trajectory jump over a near-zero gap.
/// Instead the remaining time-to-collision estimate is halved sub-step by
/// sub-step, which keeps every stage strictly on the near side of the
/// collision, until the closest gap drops to `closing_speed * event_tol`
/// (never above [`MERGE_GAP`]). The merge residual therefore shrinks in
/// proportion to the event tolerance.
fn step_to_event<O: FieldOde>(
    field: &mut ParticleField,
    ode: &mut O,
    opts: &EvolveOptions,
    scheme: TimeScheme,
    y: &[f64],
    rec: &StepRecord,
    _te_hint: f64,
    report: &mut EvolveReport,
) -> Result<()> {
    let mut t = rec.t0;
    let mut y = y.to_vec();
    for _ in 0..256 {
        let gap = min_gap(&y);
        let est = match estimate_next_collision_flat(field.flux(), &y) {
            Some(e) => e,
            None => break, // pairs stopped approaching; let the outer loop re-detect
        };
        let closing = gap / est;
        let target_gap = (closing * opts.event_tol).clamp(1e-3 * MERGE_GAP, MERGE_GAP);
        if gap <= target_gap {
            break;
        }
        let dt = (0.5 * est).max(0.25 * opts.event_tol);
        let r = try_step(ode, t, &y, dt, opts.order, scheme, report)?;
        report.steps += 1;
        t += r.dt;
        y = r.y1;
    }
    field.load_flat(&y)?;
    field.set_time(t);
    merge_touching(field, ode, report)?;
    Ok(())
}

/// Step-doubling adaptive march to `opts.t_end`.
#[allow(clippy::too_many_arguments)]
fn advance_adaptive<O: FieldOde>(
    field: &mut ParticleField,
    ode: &mut O,
    opts: &EvolveOptions,
    scheme: TimeScheme,
    abs_tol: f64,
    rel_tol: f64,
    report: &mut EvolveReport,
) -> Result<()> {
    let p = match scheme {
        TimeScheme::ExplicitRk => opts.order.order(),
        TimeScheme::ImplicitTrapezoid { .. } => 2,
    };
    let err_denom = (2f64.powi(p as i32) - 1.0).recip();
    let target = opts.t_end;
    let mut dt = (target - field.time()) / 16.0;

    while field.time() < target - T_EPS {
        if report.steps >= opts.max_steps {
            return Err(Error::StepBudget(opts.max_steps));
        }
        let t = field.time();
        dt = dt.min(target - t);
        if let Some(est) = field.estimate_next_collision() {
            if 1.25 * est < dt {
                dt = (1.25 * est).max(4.0 * opts.event_tol);
            }
        }
        if let Some(cap) = ode.dt_cap() {
            dt = dt.min(cap);
        }

        let y = field.flatten();
        let full = try_step(ode, t, &y, dt, opts.order, scheme, report)?;
        let dt_used = full.dt;
        let half_a = try_step(ode, t, &y, 0.5 * dt_used, opts.order, scheme, report)?;
        let half_b = scheme_step(ode, half_a.t1(), &half_a.y1, 0.5 * dt_used, opts.order, scheme);
        let half_b = match half_b {
            Ok(r) => r,
            Err(_) => {
                report.rejected_steps += 1;
                dt = 0.5 * dt_used;
                continue;
            }
        };

        let mut ratio: f64 = 0.0;
        for i in 0..y.len() {
            let scale = abs_tol + rel_tol * full.y1[i].abs().max(y[i].abs());
            ratio = ratio.max((full.y1[i] - half_b.y1[i]).abs() * err_denom / scale);
        }
        let safety = 0.9 * ratio.powf(-1.0 / (p as f64 + 1.0));
        if ratio > 1.0 {
            report.rejected_steps += 1;
            dt = dt_used * safety.max(0.1);
            if dt < 1e-14 {
                return Err(Error::StepUnderflow { t, dt });
            }
            continue;
        }
        report.steps += 1;

        // Accept the half-step chain (more accurate) and scan it for events.
        let mut event_handled = false;
        for rec in [&half_a, &half_b] {
            if let Some(te) = locate_event(rec, min_gap, opts.event_tol) {
                step_to_event(field, ode, opts, scheme, &rec.y0, rec, te, report)?;
                event_handled = true;
                break;
            }
        }
        if !event_handled {
            field.load_flat(&half_b.y1)?;
            field.set_time(half_b.t1());
        }
        let advanced_by = field.time() - t;
        if ode.maintain(field, advanced_by)? {
            ode.on_structure(field);
        }
        dt = dt_used * safety.min(5.0).max(0.2);
    }
    field.set_time(target);
    Ok(())
}
