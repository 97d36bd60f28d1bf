//! A self-contained finite-volume baseline: Godunov fluxes, optional
//! MUSCL-minmod second order, Strang-split reaction source.
//!
//! This is the fixed-grid method the particle solver is compared against. It
//! is deliberately plain: exact Riemann (Godunov) fluxes for a convex or
//! concave scalar flux, outflow boundaries, `dt = cfl dx / max |f'|`, and a
//! reaction source advanced by exact solves of `u' = psi(u)` in half-steps
//! around each advection step. Agreement with production finite-volume codes
//! is qualitative, not bit-wise.

use crate::error::{Error, Result};
use crate::flux::{Convexity, FluxFunction};
use crate::reaction::BistableSource;

/// Cell-average field on a uniform grid.
#[derive(Clone, Debug)]
pub struct FvGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub averages: Vec<f64>,
}

impl FvGrid {
    pub fn new(x_min: f64, x_max: f64, averages: Vec<f64>) -> Result<Self> {
        if !(x_min < x_max) || averages.is_empty() {
            return Err(Error::InvalidWindow { a: x_min, b: x_max });
        }
        Ok(FvGrid {
            x_min,
            x_max,
            n_cells: averages.len(),
            averages,
        })
    }

    /// Initialize from a pointwise function by 5-point Gauss-Legendre cell
    /// averaging.
    pub fn from_fn(x_min: f64, x_max: f64, n_cells: usize, u0: impl Fn(f64) -> f64) -> Result<Self> {
        const NODES: [f64; 5] = [
            0.0,
            0.538_469_310_105_683_1,
            -0.538_469_310_105_683_1,
            0.906_179_845_938_664_0,
            -0.906_179_845_938_664_0,
        ];
        const WEIGHTS: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        if n_cells == 0 {
            return Err(Error::InvalidWindow { a: x_min, b: x_max });
        }
        let dx = (x_max - x_min) / n_cells as f64;
        let averages = (0..n_cells)
            .map(|i| {
                let mid = x_min + (i as f64 + 0.5) * dx;
                let mut s = 0.0;
                for k in 0..5 {
                    s += WEIGHTS[k] * u0(mid + 0.5 * dx * NODES[k]);
                }
                0.5 * s
            })
            .collect();
        FvGrid::new(x_min, x_max, averages)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_cells)
            .map(|i| self.x_min + (i as f64 + 0.5) * dx)
            .collect()
    }

    /// Total mass `sum u_i dx`.
    pub fn mass(&self) -> f64 {
        self.averages.iter().sum::<f64>() * self.dx()
    }
}

/// Exact Riemann (Godunov) numerical flux for a convex or concave flux:
/// the minimum of `f` over `[uL, uR]` when `uL <= uR`, the maximum over
/// `[uR, uL]` otherwise.
pub fn godunov_flux(flux: &FluxFunction, u_l: f64, u_r: f64) -> f64 {
    let fl = flux.value(u_l);
    let fr = flux.value(u_r);
    let sonic = || flux.value(flux.inv_deriv(0.0));
    match (u_l <= u_r, flux.convexity()) {
        (true, Convexity::Convex) => {
            if flux.deriv(u_l) >= 0.0 {
                fl
            } else if flux.deriv(u_r) <= 0.0 {
                fr
            } else {
                sonic()
            }
        }
        (false, Convexity::Convex) => fl.max(fr),
        (true, Convexity::Concave) => fl.min(fr),
        (false, Convexity::Concave) => {
            // f' is decreasing: the maximum over [u_r, u_l] sits where f'
            // changes sign, if it does.
            if flux.deriv(u_r) <= 0.0 {
                fr
            } else if flux.deriv(u_l) >= 0.0 {
                fl
            } else {
                sonic()
            }
        }
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FvOrder {
    One,
    Two,
}

#[derive(Clone, Copy, Debug)]
pub struct FvOptions {
    pub order: FvOrder,
    pub cfl: f64,
}

/// Solver statistics, including the accumulated boundary-flux integral needed
/// to audit discrete conservation.
#[derive(Clone, Copy, Debug, Default)]
pub struct FvReport {
    pub steps: usize,
    /// `int_0^T (F_in - F_out) dt` accumulated over all advection steps.
    pub boundary_flux_integral: f64,
}

/// Advance cell averages to `t_end` with Godunov (order 1) or MUSCL-minmod
/// reconstruction with midpoint time stepping (order 2), outflow boundaries,
/// and an optional Strang-split bistable source.
pub fn fv_solve(
    grid: &FvGrid,
    flux: &FluxFunction,
    source: Option<&BistableSource>,
    t_end: f64,
    opts: &FvOptions,
) -> Result<(FvGrid, FvReport)> {
    if !(opts.cfl > 0.0 && opts.cfl < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "CFL number must lie in (0, 1), got {}",
            opts.cfl
        )));
    }
    let dx = grid.dx();
    let n = grid.n_cells;
    let mut u = grid.averages.clone();
    let mut t = 0.0;
    let mut report = FvReport::default();

    // interface fluxes for the current reconstruction; n+1 interfaces
    let interface_fluxes = |u: &[f64], order: FvOrder, fluxes: &mut Vec<f64>| {
        fluxes.clear();
        match order {
            FvOrder::One => {
                fluxes.push(godunov_flux(flux, u[0], u[0]));
                for i in 0..n - 1 {
                    fluxes.push(godunov_flux(flux, u[i], u[i + 1]));
                }
                fluxes.push(godunov_flux(flux, u[n - 1], u[n - 1]));
            }
            FvOrder::Two => {
                // ghost cells copy the edge value, so edge slopes vanish
                let slope = |i: usize| -> f64 {
                    let left = if i == 0 { u[0] } else { u[i - 1] };
                    let right = if i + 1 == n { u[n - 1] } else { u[i + 1] };
                    minmod(u[i] - left, right - u[i])
                };
                let mut left_state = u[0]; // ghost reconstruction is flat
                fluxes.push(godunov_flux(flux, left_state, u[0] - 0.5 * slope(0)));
                for i in 0..n - 1 {
                    left_state = u[i] + 0.5 * slope(i);
                    let right_state = u[i + 1] - 0.5 * slope(i + 1);
                    fluxes.push(godunov_flux(flux, left_state, right_state));
                }
                left_state = u[n - 1] + 0.5 * slope(n - 1);
                fluxes.push(godunov_flux(flux, left_state, u[n - 1]));
            }
        }
    };

    let mut fl_a: Vec<f64> = Vec::with_capacity(n + 1);
    let mut fl_b: Vec<f64> = Vec::with_capacity(n + 1);
    let mut stage: Vec<f64> = vec![0.0; n];

    while t < t_end - 1e-14 {
        let smax = u
            .iter()
            .map(|&v| flux.deriv(v).abs())
            .fold(1e-12_f64, f64::max);
        let dt = (opts.cfl * dx / smax).min(t_end - t);

        if let Some(src) = source {
            for v in u.iter_mut() {
                *v = source_exact_step(src, *v, 0.5 * dt);
            }
        }

        match opts.order {
            FvOrder::One => {
                interface_fluxes(&u, FvOrder::One, &mut fl_a);
                for i in 0..n {
                    u[i] -= dt / dx * (fl_a[i + 1] - fl_a[i]);
                }
                report.boundary_flux_integral += dt * (fl_a[0] - fl_a[n]);
            }
            FvOrder::Two => {
                interface_fluxes(&u, FvOrder::Two, &mut fl_a);
                for i in 0..n {
                    stage[i] = u[i] - 0.5 * dt / dx * (fl_a[i + 1] - fl_a[i]);
                }
                interface_fluxes(&stage, FvOrder::Two, &mut fl_b);
                for i in 0..n {
                    u[i] -= dt / dx * (fl_b[i + 1] - fl_b[i]);
                }
                report.boundary_flux_integral += dt * (fl_b[0] - fl_b[n]);
            }
        }

        if let Some(src) = source {
            for v in u.iter_mut() {
                *v = source_exact_step(src, *v, 0.5 * dt);
            }
        }

        t += dt;
        report.steps += 1;
        if report.steps > 50_000_000 {
            return Err(Error::StepBudget(report.steps));
        }
    }

    Ok((FvGrid::new(grid.x_min, grid.x_max, u)?, report))
}

/// Exact solution of `u' = u (1 - u)(u - beta) / tau` over a time `dt`.
///
/// Separation of variables gives `Phi(u1) - Phi(u0) = dt / tau` with
/// `Phi(u) = -ln(u)/beta - ln(1-u)/(1-beta) + ln|u-beta| / (beta(1-beta))`,
/// monotone between adjacent roots; the new value is bracketed between `u0`
/// and the stable root it is drawn to, and found by bisection. The roots
/// `{0, beta, 1}` are preserved exactly.
pub fn source_exact_step(source: &BistableSource, u0: f64, dt: f64) -> f64 {
    let beta = source.beta();
    if u0 <= 0.0 || u0 >= 1.0 || u0 == beta || dt == 0.0 {
        return u0;
    }
    let a = -1.0 / beta;
    let b = 1.0 / (1.0 - beta);
    let c = 1.0 / (beta * (1.0 - beta));
    let phi = |v: f64| a * v.ln() - b * (1.0 - v).ln() + c * (v - beta).abs().ln();
    let target = phi(u0) + dt / source.tau();

    // Below beta the value sinks toward 0 and Phi decreases in v, so the
    // solution is the unique v in (0, u0] with Phi(v) = target; above beta it
    // rises toward 1 with Phi increasing.
    let (mut lo, mut hi, take_low_on_big_phi) = if u0 < beta {
        (f64::MIN_POSITIVE, u0, true)
    } else {
        (u0, 1.0 - 1e-17, false)
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let high = phi(mid) > target;
        if high == take_low_on_big_phi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Leftmost upward crossing of `level` in a sampled profile, linearly
/// interpolated; `None` when the profile never rises through `level`.
pub fn upward_crossing(xs: &[f64], us: &[f64], level: f64) -> Option<f64> {
    for i in 0..us.len().saturating_sub(1) {
        if us[i] < level && us[i + 1] >= level {
            let theta = (level - us[i]) / (us[i + 1] - us[i]);
            return Some(xs[i] + theta * (xs[i + 1] - xs[i]));
        }
    }
    None
}
