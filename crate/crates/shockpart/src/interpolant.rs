//! The similarity interpolant between particles, and the exact integrals,
//! sampling and error measures built on it.
//!
//! Between two adjacent particles the solution is reconstructed so that
//! `f'(U)` is linear in `x`:
//!
//! ```text
//! (x - x_l) / (x_r - x_l) = (f'(U(x)) - f'(u_l)) / (f'(u_r) - f'(u_l)),
//! ```
//!
//! which is itself a local similarity solution of the conservation law (a
//! rarefaction or compression wave). Its inverse is explicit, and the exact
//! area under a segment is `width * a(u_l, u_r)` with the nonlinear average
//!
//! ```text
//! a(v, w) = [f'(u) u - f(u)]_v^w / [f'(u)]_v^w.
//! ```

use crate::error::{Error, Result};
use crate::flux::FluxFunction;
use crate::particles::{ParticleField, ShockParticle};

/// One inter-particle interval: positions, the adjacent one-sided states, and
/// the flux that defines the reconstruction.
#[derive(Clone, Copy)]
pub struct Segment<'a> {
    pub x_left: f64,
    pub x_right: f64,
    /// Right state of the left particle.
    pub u_left: f64,
    /// Left state of the right particle.
    pub u_right: f64,
    flux: &'a FluxFunction,
}

impl<'a> Segment<'a> {
    pub fn new(
        flux: &'a FluxFunction,
        x_left: f64,
        x_right: f64,
        u_left: f64,
        u_right: f64,
    ) -> Result<Self> {
        if !(x_left <= x_right) {
            return Err(Error::InvalidWindow {
                a: x_left,
                b: x_right,
            });
        }
        flux.check_range(u_left)?;
        flux.check_range(u_right)?;
        Ok(Segment {
            x_left,
            x_right,
            u_left,
            u_right,
            flux,
        })
    }

    pub fn flux(&self) -> &FluxFunction {
        self.flux
    }

    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    /// A zero-width segment carries no interpolant.
    pub fn is_empty(&self) -> bool {
        self.x_left == self.x_right
    }

    /// Evaluate the interpolant at `x in [x_left, x_right]`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x < self.x_left || x > self.x_right {
            return Err(Error::OutsideSegment {
                x,
                left: self.x_left,
                right: self.x_right,
            });
        }
        if self.u_left == self.u_right {
            return Ok(self.u_left);
        }
        if self.is_empty() {
            return Err(Error::EmptySegment {
                left: self.x_left,
                right: self.x_right,
            });
        }
        let dl = self.flux.deriv(self.u_left);
        let dr = self.flux.deriv(self.u_right);
        let theta = (x - self.x_left) / self.width();
        Ok(self.flux.inv_deriv(dl + theta * (dr - dl)))
    }

    /// Position where the interpolant takes the value `u`; the explicit
    /// inverse of [`eval`](Self::eval).
    pub fn inverse(&self, u: f64) -> Result<f64> {
        if self.u_left == self.u_right {
            return Err(Error::ConstantSegment(self.u_left));
        }
        let (lo, hi) = if self.u_left <= self.u_right {
            (self.u_left, self.u_right)
        } else {
            (self.u_right, self.u_left)
        };
        if u < lo || u > hi {
            return Err(Error::OutsideValueSpan { u, lo, hi });
        }
        let dl = self.flux.deriv(self.u_left);
        let dr = self.flux.deriv(self.u_right);
        Ok(self.x_left + self.width() * (self.flux.deriv(u) - dl) / (dr - dl))
    }

    /// Exact mean value of the interpolant over the segment.
    pub fn average(&self) -> f64 {
        segment_average(self.flux, self.u_left, self.u_right)
    }
}

/// The nonlinear average `a(v, w)`: the exact mean of the similarity
/// interpolant spanning values `v` to `w`. Lies strictly between `v` and `w`,
/// and extends continuously to `a(v, v) = v`.
pub fn segment_average(flux: &FluxFunction, v: f64, w: f64) -> f64 {
    if v == w {
        return v;
    }
    if let Some(hint) = flux.segment_avg_hint() {
        return hint(v, w);
    }
    // Generic ratio. For nearly equal arguments both numerator and
    // denominator vanish like (w - v); switch to the midpoint, which is the
    // correct limit with O(|w - v|^2) error, before cancellation bites.
    if (w - v).abs() <= 1e-7 * v.abs().max(w.abs()).max(1.0) {
        return 0.5 * (v + w);
    }
    let g = |u: f64| flux.deriv(u) * u - flux.value(u);
    (g(w) - g(v)) / (flux.deriv(w) - flux.deriv(v))
}

/// A uniform grid of cells over `[x_min, x_max]`, used for cell averaging.
#[derive(Clone, Debug)]
pub struct UniformGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl UniformGrid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min < x_max) || n_cells == 0 {
            return Err(Error::InvalidWindow { a: x_min, b: x_max });
        }
        Ok(UniformGrid {
            x_min,
            x_max,
            n_cells,
        })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let dx = self.dx();
        (self.x_min + i as f64 * dx, self.x_min + (i + 1) as f64 * dx)
    }

    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells)
            .map(|i| self.x_min + (i as f64 + 0.5) * dx)
            .collect()
    }
}

/// Exact area under the field's interpolant over `[a, b]`.
///
/// Outside the outermost particles the solution is extended by the constant
/// far-field states `u_1^-` (left) and `u_n^+` (right). Partial segments are
/// split exactly: the restriction of a similarity segment to a subinterval is
/// again a similarity segment with endpoint values given by `eval`.
pub fn total_area(field: &ParticleField, a: f64, b: f64) -> Result<f64> {
    if !(a <= b) {
        return Err(Error::InvalidWindow { a, b });
    }
    let ps = field.particles();
    let flux = field.flux();
    let first = &ps[0];
    let last = &ps[ps.len() - 1];

    let mut area = 0.0;
    if a < first.x {
        area += (b.min(first.x) - a) * first.u_minus;
    }
    if b > last.x {
        area += (b - a.max(last.x)) * last.u_plus;
    }
    // Interior segments overlapping [a, b].
    let start = ps.partition_point(|p| p.x <= a).saturating_sub(1);
    for i in start..ps.len().saturating_sub(1) {
        let (pl, pr) = (&ps[i], &ps[i + 1]);
        if pl.x >= b {
            break;
        }
        let lo = pl.x.max(a);
        let hi = pr.x.min(b);
        if hi <= lo {
            continue;
        }
        let seg = Segment::new(flux, pl.x, pr.x, pl.u_plus, pr.u_minus)?;
        if seg.is_empty() {
            continue;
        }
        let ul = if lo == pl.x { pl.u_plus } else { seg.eval(lo)? };
        let ur = if hi == pr.x { pr.u_minus } else { seg.eval(hi)? };
        area += (hi - lo) * segment_average(flux, ul, ur);
    }
    Ok(area)
}

/// Exact per-cell means of the field's interpolant on a uniform grid.
pub fn cell_averages(field: &ParticleField, grid: &UniformGrid) -> Result<Vec<f64>> {
    let dx = grid.dx();
    (0..grid.n_cells)
        .map(|i| {
            let (lo, hi) = grid.cell_bounds(i);
            Ok(total_area(field, lo, hi)? / dx)
        })
        .collect()
}

/// Discrete L1 distance `dx * sum |a_i - b_i|` between two cell-average
/// sequences.
pub fn l1_error(a: &[f64], b: &[f64], dx: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dx * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// A jump in the initial condition, stated explicitly by the caller with its
/// one-sided limits. Jumps are represented exactly as shock particles;
/// automatic jump detection is out of scope.
#[derive(Clone, Copy, Debug)]
pub struct Discontinuity {
    pub x: f64,
    pub u_left: f64,
    pub u_right: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SampleOptions {
    pub max_particles: usize,
    pub tol: f64,
}

/// Outcome of adaptive sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SampleStatus {
    Converged,
    /// The particle budget ran out first; carries the worst midpoint
    /// deviation still outstanding.
    BudgetExhausted { error_estimate: f64 },
}

/// Approximate a piecewise smooth initial condition by particles placed
/// exactly on it.
///
/// Seeds the domain endpoints and every declared discontinuity, then bisects
/// each interval until the interpolant matches `u0` at the interval midpoint
/// to within `opts.tol` (or the particle budget is exhausted). Discontinuities
/// become exact shock particles.
pub fn sample_initial_condition(
    flux: &FluxFunction,
    u0: impl Fn(f64) -> f64,
    domain: (f64, f64),
    discontinuities: &[Discontinuity],
    opts: SampleOptions,
) -> Result<(ParticleField, SampleStatus)> {
    let (a, b) = domain;
    if !(a < b) {
        return Err(Error::InvalidWindow { a, b });
    }
    let mut jumps = discontinuities.to_vec();
    jumps.sort_by(|p, q| p.x.total_cmp(&q.x));
    for j in &jumps {
        if j.x <= a || j.x >= b {
            return Err(Error::InvalidConfig(format!(
                "discontinuity at {} outside the open domain ({a}, {b})",
                j.x
            )));
        }
    }

    // Smooth pieces between seeds, with one-sided values at piece ends.
    let mut particles: Vec<ShockParticle> = Vec::new();
    particles.push(ShockParticle::characteristic(a, u0(a)));
    for j in &jumps {
        particles.push(ShockParticle::new(j.x, j.u_left, j.u_right));
    }
    particles.push(ShockParticle::characteristic(b, u0(b)));

    let mut budget = opts.max_particles.saturating_sub(particles.len());
    let mut worst_unresolved: f64 = 0.0;

    let mut refined: Vec<ShockParticle> = Vec::new();
    for w in 0..particles.len() - 1 {
        let (pl, pr) = (particles[w], particles[w + 1]);
        refined.push(pl);
        let mut stack = vec![(pl.x, pl.u_plus, pr.x, pr.u_minus)];
        let mut inserted: Vec<(f64, f64)> = Vec::new();
        while let Some((xl, ul, xr, ur)) = stack.pop() {
            if xr - xl < 1e-12 {
                continue;
            }
            let xm = 0.5 * (xl + xr);
            let um = u0(xm);
            let pred = Segment::new(flux, xl, xr, ul, ur)?.eval(xm)?;
            let dev = (um - pred).abs();
            if dev <= opts.tol {
                continue;
            }
            if budget == 0 {
                worst_unresolved = worst_unresolved.max(dev);
                continue;
            }
            budget -= 1;
            inserted.push((xm, um));
            stack.push((xm, um, xr, ur));
            stack.push((xl, ul, xm, um));
        }
        inserted.sort_by(|p, q| p.0.total_cmp(&q.0));
        refined.extend(
            inserted
                .into_iter()
                .map(|(x, u)| ShockParticle::characteristic(x, u)),
        );
    }
    refined.push(*particles.last().unwrap());

    let status = if worst_unresolved > 0.0 {
        SampleStatus::BudgetExhausted {
            error_estimate: worst_unresolved,
        }
    } else {
        SampleStatus::Converged
    };
    Ok((ParticleField::new(flux.clone(), refined)?, status))
}

/// Place `n` particles on `u0` at uniform spacing, with declared
/// discontinuities added as exact shock particles.
pub fn sample_uniform(
    flux: &FluxFunction,
    u0: impl Fn(f64) -> f64,
    domain: (f64, f64),
    n: usize,
    discontinuities: &[Discontinuity],
) -> Result<ParticleField> {
    let (a, b) = domain;
    if !(a < b) || n < 2 {
        return Err(Error::InvalidWindow { a, b });
    }
    let h = (b - a) / (n - 1) as f64;
    let mut particles: Vec<ShockParticle> = (0..n)
        .map(|i| {
            let x = a + i as f64 * h;
            ShockParticle::characteristic(x, u0(x))
        })
        .collect();
    for j in discontinuities {
        particles.push(ShockParticle::new(j.x, j.u_left, j.u_right));
    }
    ParticleField::new(flux.clone(), particles)
}
