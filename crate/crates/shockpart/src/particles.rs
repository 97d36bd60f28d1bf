//! Shock particles and their equations of motion.
//!
//! A shock particle is a computational node `(x_i, u_i^-, u_i^+)` carrying a
//! moving discontinuity; with `u^- = u^+` it degenerates to a characteristic
//! particle. Every particle must satisfy the Oleinik entropy condition
//! `f'(u^-) >= f'(u^+)`; violators are split into two characteristic
//! particles that depart from each other, turning the jump into a rarefaction.
//!
//! The law of motion couples each particle to its neighbors through the slope
//! of the similarity interpolant:
//!
//! ```text
//! dx_i/dt   = s(u_i^-, u_i^+)
//! du_i^-/dt = (s - f'(u_i^-)) * (f'(u_{i-1}^+) - f'(u_i^-)) / (x_{i-1} - x_i) / f''(u_i^-)
//! du_i^+/dt = (s - f'(u_i^+)) * (f'(u_{i+1}^-) - f'(u_i^+)) / (x_{i+1} - x_i) / f''(u_i^+)
//! ```
//!
//! Characteristic particles reduce to `dx/dt = f'(u)`, `du/dt = 0`. When two
//! particles collide, their inner states agree (provided at least one of them
//! carries a jump) and the pair is merged into a single particle that keeps
//! the outer states.

use crate::error::{Error, Result};
use crate::flux::FluxFunction;
use crate::interpolant::{segment_average, Segment};

/// Position gap at or below which a particle pair is merged. The state
/// equations carry the gap in a denominator, so pairs are fused just before
/// contact rather than exactly at it.
pub const MERGE_GAP: f64 = 1e-9;

/// Largest admissible mismatch between the inner states of a merging pair
/// (when at least one particle is not characteristic). At an exactly resolved
/// collision the mismatch vanishes; exceeding this bound means the collision
/// event was localized too loosely.
pub const MERGE_RESIDUAL_TOL: f64 = 1e-6;

/// A moving discontinuity `(x, u^-, u^+)`; characteristic when `u^- = u^+`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShockParticle {
    pub x: f64,
    pub u_minus: f64,
    pub u_plus: f64,
}

impl ShockParticle {
    pub fn new(x: f64, u_minus: f64, u_plus: f64) -> Self {
        ShockParticle { x, u_minus, u_plus }
    }

    /// A particle with zero jump height.
    pub fn characteristic(x: f64, u: f64) -> Self {
        ShockParticle {
            x,
            u_minus: u,
            u_plus: u,
        }
    }

    pub fn is_characteristic(&self) -> bool {
        self.u_minus == self.u_plus
    }

    pub fn jump(&self) -> f64 {
        self.u_plus - self.u_minus
    }
}

/// Time derivative of one particle's `(x, u^-, u^+)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ParticleDeriv {
    pub dx: f64,
    pub du_minus: f64,
    pub du_plus: f64,
}

/// Record of one merge performed during evolution.
#[derive(Clone, Copy, Debug)]
pub struct MergeEvent {
    pub time: f64,
    /// Index of the left particle of the merged pair, at merge time.
    pub index: usize,
    /// Position gap when the merge fired.
    pub gap: f64,
    /// Inner-state mismatch `|u_i^+ - u_{i+1}^-|`; `None` for a pair of
    /// characteristic particles, where the inner states are genuinely
    /// distinct and the merge itself creates the shock.
    pub residual: Option<f64>,
}

/// An ordered sequence of shock particles sharing one flux, together with the
/// similarity interpolant they induce.
#[derive(Clone, Debug)]
pub struct ParticleField {
    particles: Vec<ShockParticle>,
    flux: FluxFunction,
    time: f64,
}

impl ParticleField {
    /// Build a field from raw particles: validates ranges, splits
    /// entropy-violating particles and sorts by position.
    pub fn new(flux: FluxFunction, particles: Vec<ShockParticle>) -> Result<Self> {
        let mut field = ParticleField {
            particles,
            flux,
            time: 0.0,
        };
        field.normalize()?;
        Ok(field)
    }

    /// Convenience constructor from `(x, u)` pairs of characteristic
    /// particles.
    pub fn from_characteristic_points(flux: FluxFunction, points: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            flux,
            points
                .iter()
                .map(|&(x, u)| ShockParticle::characteristic(x, u))
                .collect(),
        )
    }

    pub fn particles(&self) -> &[ShockParticle] {
        &self.particles
    }

    pub fn flux(&self) -> &FluxFunction {
        &self.flux
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Iterate over the inter-particle segments.
    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> + '_ {
        self.particles.windows(2).map(move |w| {
            Segment::new(&self.flux, w[0].x, w[1].x, w[0].u_plus, w[1].u_minus)
                .expect("normalized field yields ordered segments")
        })
    }

    /// Evaluate the interpolant at `x`, with constant far-field extension
    /// outside the outermost particles. At a shock position the right limit
    /// is returned.
    pub fn eval(&self, x: f64) -> f64 {
        let ps = &self.particles;
        if x < ps[0].x {
            return ps[0].u_minus;
        }
        let last = &ps[ps.len() - 1];
        if x >= last.x {
            return last.u_plus;
        }
        // Rightmost particle with x_i <= x starts the covering segment.
        let i = ps.partition_point(|p| p.x <= x) - 1;
        let seg = Segment::new(&self.flux, ps[i].x, ps[i + 1].x, ps[i].u_plus, ps[i + 1].u_minus)
            .expect("normalized field yields ordered segments");
        if seg.is_empty() {
            return ps[i].u_plus;
        }
        seg.eval(x).expect("x lies inside the covering segment")
    }

    /// Restore the field invariants on arbitrary particle data: every value
    /// in range, no entropy violations, positions sorted (stable order on
    /// ties).
    ///
    /// A particle violating `f'(u^-) >= f'(u^+)` is replaced in place by the
    /// two characteristic particles `(x, u^-)` and `(x, u^+)`, which then
    /// depart from each other.
    pub fn normalize(&mut self) -> Result<()> {
        if self.particles.is_empty() {
            return Err(Error::EmptyField);
        }
        for p in &self.particles {
            self.flux.check_range(p.u_minus)?;
            self.flux.check_range(p.u_plus)?;
        }
        let flux = &self.flux;
        let mut split: Vec<ShockParticle> = Vec::with_capacity(self.particles.len());
        for p in &self.particles {
            if flux.deriv(p.u_minus) < flux.deriv(p.u_plus) {
                split.push(ShockParticle::characteristic(p.x, p.u_minus));
                split.push(ShockParticle::characteristic(p.x, p.u_plus));
            } else {
                split.push(*p);
            }
        }
        split.sort_by(|a, b| a.x.total_cmp(&b.x));
        self.particles = split;
        Ok(())
    }

    /// Flatten the state into `[x_0, u_0^-, u_0^+, x_1, ...]` for the ODE
    /// integrator.
    pub fn flatten(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(3 * self.particles.len());
        for p in &self.particles {
            y.extend_from_slice(&[p.x, p.u_minus, p.u_plus]);
        }
        y
    }

    /// Load a flat state produced by [`flatten`](Self::flatten) back into the
    /// field. The particle count must match.
    pub fn load_flat(&mut self, y: &[f64]) -> Result<()> {
        if y.len() != 3 * self.particles.len() {
            return Err(Error::LengthMismatch {
                left: y.len(),
                right: 3 * self.particles.len(),
            });
        }
        for (p, c) in self.particles.iter_mut().zip(y.chunks_exact(3)) {
            p.x = c[0];
            p.u_minus = c[1];
            p.u_plus = c[2];
        }
        Ok(())
    }

    /// Right-hand side of the particle equations of motion.
    pub fn rhs(&self) -> Result<Vec<ParticleDeriv>> {
        let y = self.flatten();
        let mut dy = vec![0.0; y.len()];
        conservation_rhs_flat(&self.flux, &y, &mut dy)?;
        Ok(dy
            .chunks_exact(3)
            .map(|c| ParticleDeriv {
                dx: c[0],
                du_minus: c[1],
                du_plus: c[2],
            })
            .collect())
    }

    /// Exact first collision time of a field of characteristic particles, or
    /// `None` when every pair departs. For pair `(i, i+1)`:
    /// `T_i = -(x_{i+1} - x_i) / (f'(u_{i+1}) - f'(u_i))`.
    pub fn characteristic_collision_time(&self) -> Option<f64> {
        debug_assert!(
            self.particles.iter().all(ShockParticle::is_characteristic),
            "collision-time formula applies to characteristic particles"
        );
        self.particles
            .windows(2)
            .filter_map(|w| {
                let df = self.flux.deriv(w[1].u_minus) - self.flux.deriv(w[0].u_plus);
                let t = -(w[1].x - w[0].x) / df;
                (t.is_finite() && t > 0.0).then_some(t)
            })
            .min_by(f64::total_cmp)
    }

    /// Estimate of the next collision time from current shock speeds:
    /// `T_i ~ -(x_{i+1} - x_i) / (s_{i+1} - s_i)`. Used only to cap the ODE
    /// step size, never as truth.
    pub fn estimate_next_collision(&self) -> Option<f64> {
        estimate_next_collision_flat(&self.flux, &self.flatten())
    }

    /// Insert a particle, keeping positions sorted. The new particle lands
    /// after any existing particle at the same position.
    pub fn insert(&mut self, p: ShockParticle) -> Result<usize> {
        self.flux.check_range(p.u_minus)?;
        self.flux.check_range(p.u_plus)?;
        if self.flux.deriv(p.u_minus) < self.flux.deriv(p.u_plus) {
            return Err(Error::InvalidConfig(
                "inserted particle violates the entropy condition".into(),
            ));
        }
        let idx = self.particles.partition_point(|q| q.x <= p.x);
        self.particles.insert(idx, p);
        Ok(idx)
    }

    /// Merge particles `i` and `i+1` into one particle keeping the outer
    /// states `(u_i^-, u_{i+1}^+)`.
    ///
    /// Preconditions: the pair is within [`MERGE_GAP`], and (unless both
    /// particles are characteristic) the inner states agree to
    /// [`MERGE_RESIDUAL_TOL`]. The merged particle is placed inside the
    /// closed gap so that the area under the interpolant is preserved to
    /// `O(gap^2)`.
    pub fn merge(&mut self, i: usize) -> Result<MergeEvent> {
        let (p, q) = (self.particles[i], self.particles[i + 1]);
        let gap = q.x - p.x;
        if !(gap <= MERGE_GAP) {
            return Err(Error::MergeGap {
                index: i,
                gap,
                max: MERGE_GAP,
            });
        }
        let char_pair = p.is_characteristic() && q.is_characteristic();
        let residual = (p.u_plus - q.u_minus).abs();
        if !char_pair && residual > MERGE_RESIDUAL_TOL {
            return Err(Error::MergeResidual {
                index: i,
                residual,
                tol: MERGE_RESIDUAL_TOL,
            });
        }

        // Place the merged particle inside [x_i, x_{i+1}] so that the area
        // under the interpolant is unchanged. A segment's area is exactly
        // width * average with the average independent of the width, so
        // stretching the left neighbor segment by theta*gap and the right one
        // by (1-theta)*gap replaces the vanished strip exactly when
        //   theta a_left + (1 - theta) a_right = a_strip.
        let ps = &self.particles;
        let a_strip = segment_average(&self.flux, p.u_plus, q.u_minus);
        let a_left = if i > 0 {
            segment_average(&self.flux, ps[i - 1].u_plus, p.u_minus)
        } else {
            p.u_minus
        };
        let a_right = if i + 2 < ps.len() {
            segment_average(&self.flux, q.u_plus, ps[i + 2].u_minus)
        } else {
            q.u_plus
        };
        let theta = if (a_left - a_right).abs() > 1e-12 {
            ((a_strip - a_right) / (a_left - a_right)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        self.particles[i] = ShockParticle::new(p.x + theta * gap, p.u_minus, q.u_plus);
        self.particles.remove(i + 1);
        self.normalize()?;
        Ok(MergeEvent {
            time: self.time,
            index: i,
            gap,
            residual: (!char_pair).then_some(residual),
        })
    }
}

/// First-collision estimate from current shock speeds on a flat state:
/// `T_i ~ -(x_{i+1} - x_i) / (s_{i+1} - s_i)`, minimum over approaching
/// pairs.
pub(crate) fn estimate_next_collision_flat(flux: &FluxFunction, y: &[f64]) -> Option<f64> {
    let n = y.len() / 3;
    let mut best: Option<f64> = None;
    let mut s_prev = f64::NAN;
    for i in 0..n {
        let s = flux.shock_speed_unchecked(y[3 * i + 1], y[3 * i + 2]);
        if i > 0 {
            let t = -(y[3 * i] - y[3 * (i - 1)]) / (s - s_prev);
            if t.is_finite() && t > 0.0 && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
        s_prev = s;
    }
    best
}

/// Smallest gap between adjacent particle positions of a flat state.
pub(crate) fn min_gap(y: &[f64]) -> f64 {
    let n = y.len() / 3;
    let mut best = f64::INFINITY;
    for i in 0..n.saturating_sub(1) {
        best = best.min(y[3 * (i + 1)] - y[3 * i]);
    }
    best
}

/// Flat-state right-hand side of the conservation-law particle equations.
///
/// Boundary particles use a one-sided form (the missing-neighbor slope term
/// is zero), consistent with the constant far-field extension. A zero
/// position gap with distinct adjacent states signals a pending merge rather
/// than producing an infinite derivative.
pub(crate) fn conservation_rhs_flat(flux: &FluxFunction, y: &[f64], dy: &mut [f64]) -> Result<()> {
    let n = y.len() / 3;
    for i in 0..n.saturating_sub(1) {
        if y[3 * (i + 1)] == y[3 * i] && y[3 * i + 2] != y[3 * (i + 1) + 1] {
            return Err(Error::PendingMerge {
                index: i,
                x: y[3 * i],
            });
        }
    }
    for i in 0..n {
        let (x, um, up) = (y[3 * i], y[3 * i + 1], y[3 * i + 2]);
        let s = flux.shock_speed_unchecked(um, up);
        dy[3 * i] = s;
        dy[3 * i + 1] = if i == 0 {
            0.0
        } else {
            slope_term(flux, s, um, y[3 * (i - 1) + 2], y[3 * (i - 1)] - x)
        };
        dy[3 * i + 2] = if i + 1 == n {
            0.0
        } else {
            slope_term(flux, s, up, y[3 * (i + 1) + 1], y[3 * (i + 1)] - x)
        };
    }
    Ok(())
}

/// One coupling term `(s - f'(u)) * (f'(u_nb) - f'(u)) / dx_nb / f''(u)`.
///
/// The leading factor vanishes identically for characteristic particles and
/// the slope factor for flat segments, so either zero short-circuits before
/// the gap denominator can act up.
fn slope_term(flux: &FluxFunction, s: f64, u: f64, u_neighbor: f64, dx: f64) -> f64 {
    let rel = s - flux.deriv(u);
    if rel == 0.0 {
        return 0.0;
    }
    let df = flux.deriv(u_neighbor) - flux.deriv(u);
    if df == 0.0 {
        return 0.0;
    }
    rel * df / dx / flux.deriv2(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolant::total_area;

    fn burgers_field(points: &[(f64, f64, f64)]) -> ParticleField {
        ParticleField::new(
            FluxFunction::burgers(),
            points
                .iter()
                .map(|&(x, um, up)| ShockParticle::new(x, um, up))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_splits_entropy_violators() {
        let field = burgers_field(&[(0.5, 0.0, 1.0)]);
        let ps = field.particles();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0], ShockParticle::characteristic(0.5, 0.0));
        assert_eq!(ps[1], ShockParticle::characteristic(0.5, 1.0));
    }

    #[test]
    fn normalize_keeps_entropic_and_characteristic_particles() {
        let field = burgers_field(&[(0.5, 1.0, 0.0), (0.8, 0.3, 0.3)]);
        assert_eq!(field.particles().len(), 2);
        assert_eq!(field.particles()[0], ShockParticle::new(0.5, 1.0, 0.0));
        assert_eq!(field.particles()[1], ShockParticle::characteristic(0.8, 0.3));
    }

    #[test]
    fn normalize_rejects_values_outside_the_range() {
        let r = ParticleField::new(
            FluxFunction::burgers(),
            vec![ShockParticle::characteristic(0.0, 1.5)],
        );
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn normalize_sorts_by_position() {
        let field = burgers_field(&[(1.0, 0.2, 0.2), (0.0, 0.9, 0.9)]);
        assert_eq!(field.particles()[0].x, 0.0);
        assert_eq!(field.particles()[1].x, 1.0);
    }

    #[test]
    fn rhs_riemann_shock_with_flat_neighbors() {
        let field = burgers_field(&[(0.0, 1.0, 1.0), (1.0, 1.0, 0.0), (2.0, 0.0, 0.0)]);
        let d = field.rhs().unwrap();
        assert_eq!(d[1].dx, 0.5);
        for p in &d {
            assert_eq!(p.du_minus, 0.0);
            assert_eq!(p.du_plus, 0.0);
        }
    }

    #[test]
    fn rhs_shock_fed_by_a_compression_wave() {
        let field = burgers_field(&[(0.0, 0.5, 0.5), (1.0, 1.0, 0.0), (2.0, 0.2, 0.2)]);
        let d = field.rhs().unwrap();
        // (s - f'(1)) * (f'(0.5) - f'(1)) / (0 - 1) / f''(1) = (-0.5)(-0.5)/(-1)
        assert!((d[1].du_minus - (-0.25)).abs() < 1e-15);
        // right side: (0.5 - 0) * (0.2 - 0) / (2 - 1) = 0.1
        assert!((d[1].du_plus - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rhs_characteristic_particle_moves_at_characteristic_speed() {
        let field = burgers_field(&[(0.0, 0.1, 0.1), (0.5, 0.3, 0.3), (1.0, 0.9, 0.9)]);
        let d = field.rhs().unwrap();
        assert_eq!(d[1].dx, 0.3);
        assert_eq!(d[1].du_minus, 0.0);
        assert_eq!(d[1].du_plus, 0.0);
    }

    /// The `-0.25` above cross-checked against the exact evolution of the
    /// compression wave: transport every value of the initial interpolant
    /// along its characteristic and finite-difference the value arriving at
    /// the shock.
    #[test]
    fn rhs_matches_finite_differenced_characteristic_transport() {
        // Initial segment: values 0.5 at x=0 to 1.0 at x=1 (Burgers, so the
        // inverse interpolant is linear: X0(u) = 2u - 1), shock at x=1 with
        // speed s(1,0) = 0.5 at leading order.
        let shock_pos = |t: f64| 1.0 + 0.5 * t;
        let u_at_shock = |t: f64| {
            // solve X0(u) + u t = shock_pos(t) for u
            let (mut lo, mut hi) = (0.5, 1.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if 2.0 * mid - 1.0 + mid * t < shock_pos(t) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        for eps in [1e-4, 1e-5] {
            let slope = (u_at_shock(eps) - 1.0) / eps;
            assert!(
                (slope - (-0.25)).abs() < 40.0 * eps,
                "eps = {eps}: slope {slope}"
            );
        }
    }

    #[test]
    fn rhs_signals_pending_merge_on_coincident_distinct_states() {
        let field = burgers_field(&[(0.5, 1.0, 1.0), (0.5, 0.0, 0.0), (2.0, 0.0, 0.0)]);
        assert!(matches!(
            field.rhs(),
            Err(Error::PendingMerge { index: 0, .. })
        ));
    }

    #[test]
    fn rhs_handles_flat_coincident_pairs() {
        // Same position but identical adjacent states: no singularity.
        let field = burgers_field(&[(0.5, 0.3, 0.3), (0.5, 0.3, 0.3), (2.0, 0.0, 0.0)]);
        assert!(field.rhs().is_ok());
    }

    #[test]
    fn collision_time_examples() {
        let head_on = ParticleField::from_characteristic_points(
            FluxFunction::burgers(),
            &[(0.0, 1.0), (1.0, 0.0)],
        )
        .unwrap();
        assert_eq!(head_on.characteristic_collision_time(), Some(1.0));

        let rarefaction = ParticleField::from_characteristic_points(
            FluxFunction::burgers(),
            &[(0.0, 0.0), (1.0, 1.0)],
        )
        .unwrap();
        assert_eq!(rarefaction.characteristic_collision_time(), None);

        let quartic_pair = ParticleField::from_characteristic_points(
            FluxFunction::quartic(),
            &[(0.4, 0.9), (0.5, 0.7)],
        )
        .unwrap();
        let t = quartic_pair.characteristic_collision_time().unwrap();
        assert!((t - 0.1 / (0.729 - 0.343)).abs() < 1e-15);
    }

    #[test]
    fn collision_estimate_examples() {
        let chars = ParticleField::from_characteristic_points(
            FluxFunction::burgers(),
            &[(0.0, 1.0), (1.0, 0.0)],
        )
        .unwrap();
        assert_eq!(
            chars.estimate_next_collision(),
            chars.characteristic_collision_time()
        );

        let shocks = burgers_field(&[(0.0, 1.0, 0.6), (1.0, 0.4, 0.0)]);
        let est = shocks.estimate_next_collision().unwrap();
        assert!((est - 1.0 / 0.6).abs() < 1e-12);

        let departing = burgers_field(&[(0.0, 0.3, 0.3), (1.0, 0.9, 0.9)]);
        assert_eq!(departing.estimate_next_collision(), None);
    }

    fn approach(field: &mut ParticleField, i: usize, gap: f64) {
        // place the pair i, i+1 at the given tiny gap
        let x = field.particles()[i].x;
        let mut ps: Vec<ShockParticle> = field.particles().to_vec();
        ps[i + 1].x = x + gap;
        *field = ParticleField::new(field.flux().clone(), ps).unwrap();
    }

    #[test]
    fn merging_two_characteristic_particles_creates_a_shock() {
        let mut field = ParticleField::from_characteristic_points(
            FluxFunction::burgers(),
            &[(0.5, 1.0), (1.0, 0.0)],
        )
        .unwrap();
        approach(&mut field, 0, 1e-10);
        let ev = field.merge(0).unwrap();
        assert_eq!(field.particles().len(), 1);
        let p = field.particles()[0];
        assert_eq!((p.u_minus, p.u_plus), (1.0, 0.0));
        assert_eq!(ev.residual, None);
    }

    #[test]
    fn merging_a_zero_height_absorbee_leaves_the_solution_unchanged() {
        let mut field = burgers_field(&[(0.5, 1.0, 0.5), (0.6, 0.5, 0.5), (2.0, 0.5, 0.5)]);
        approach(&mut field, 0, 5e-10);
        field.merge(0).unwrap();
        let p = field.particles()[0];
        assert_eq!((p.u_minus, p.u_plus), (1.0, 0.5));
    }

    #[test]
    fn merging_two_shocks_joins_the_outer_states() {
        let mut field = burgers_field(&[(0.5, 1.0, 0.6), (0.7, 0.6, 0.0), (2.0, 0.0, 0.0)]);
        approach(&mut field, 0, 1e-10);
        field.merge(0).unwrap();
        let p = field.particles()[0];
        assert_eq!((p.u_minus, p.u_plus), (1.0, 0.0));
    }

    #[test]
    fn merge_rejects_wide_gaps_and_large_residuals() {
        let mut wide = burgers_field(&[(0.0, 1.0, 0.6), (0.5, 0.6, 0.0)]);
        assert!(matches!(wide.merge(0), Err(Error::MergeGap { .. })));

        let mut mismatched = burgers_field(&[(0.0, 1.0, 0.6), (0.5, 0.4, 0.0), (1.0, 0.0, 0.0)]);
        approach(&mut mismatched, 0, 1e-10);
        assert!(matches!(
            mismatched.merge(0),
            Err(Error::MergeResidual { .. })
        ));
    }

    #[test]
    fn merge_conserves_area_within_the_lemma_bound() {
        let cases: Vec<(ParticleField, usize)> = vec![
            // two characteristic particles about to collide
            (
                {
                    let mut f = ParticleField::from_characteristic_points(
                        FluxFunction::burgers(),
                        &[(-1.0, 0.2), (0.0, 0.9), (0.3, 0.1), (1.5, 0.4)],
                    )
                    .unwrap();
                    approach(&mut f, 1, 8e-10);
                    f
                },
                1,
            ),
            // shock overtaking a characteristic particle, inner states equal
            (
                {
                    let mut f =
                        burgers_field(&[(0.0, 1.0, 0.5), (0.4, 0.5, 0.5), (1.5, 0.2, 0.2)]);
                    approach(&mut f, 0, 8e-10);
                    f
                },
                0,
            ),
            // two shocks with matching inner states
            (
                {
                    let mut f =
                        burgers_field(&[(0.0, 0.9, 0.6), (0.4, 0.6, 0.1), (1.5, 0.1, 0.1)]);
                    approach(&mut f, 0, 8e-10);
                    f
                },
                0,
            ),
        ];
        for (mut field, i) in cases {
            let (a, b) = (-2.0, 3.0);
            let before = total_area(&field, a, b).unwrap();
            let p = field.particles()[i];
            let q = field.particles()[i + 1];
            let bound = (p.u_plus - q.u_minus).abs() * MERGE_GAP;
            field.merge(i).unwrap();
            let after = total_area(&field, a, b).unwrap();
            assert!(
                (before - after).abs() <= bound + 1e-15,
                "area changed by {:e}, bound {:e}",
                (before - after).abs(),
                bound
            );
        }
    }

    #[test]
    fn flatten_round_trips() {
        let mut field = burgers_field(&[(0.0, 1.0, 0.6), (0.5, 0.6, 0.0)]);
        let y = field.flatten();
        assert_eq!(y, vec![0.0, 1.0, 0.6, 0.5, 0.6, 0.0]);
        field.load_flat(&[0.1, 0.9, 0.5, 0.6, 0.5, 0.1]).unwrap();
        assert_eq!(field.particles()[1].x, 0.6);
        assert!(field.load_flat(&[1.0]).is_err());
    }

    #[test]
    fn eval_uses_far_field_extension() {
        let field = burgers_field(&[(0.0, 0.8, 0.8), (1.0, 0.2, 0.2)]);
        assert_eq!(field.eval(-5.0), 0.8);
        assert_eq!(field.eval(5.0), 0.2);
        assert!((field.eval(0.5) - 0.5).abs() < 1e-14);
    }
}
