//! Stiff advection-reaction balance laws `u_t + f(u)_x = psi(u)` with a
//! bistable source, and the sonic-particle correction that keeps detonation
//! waves moving at the right speed without resolving their internal profile.
//!
//! The source `psi(u) = u (1 - u)(u - beta) / tau` drives values below the
//! unstable root `beta` to 0 and values above it to 1 on the fast time scale
//! `tau`. Traveling waves connecting those states pass through `u = beta` and
//! move at exactly `f'(beta)`: the traveling-wave ODE
//!
//! ```text
//! v'(xi) = v (1 - v)(v - beta) / (f'(v) - r),    xi = (x - r t) / tau,
//! ```
//!
//! can only cross the vanishing numerator at `v = beta` where the denominator
//! vanishes too, which pins the wave speed `r = f'(beta)`.
//!
//! Adding `psi` to the particle state equations is not enough: particles
//! slide to the stable roots where `psi = 0` and the wave structure is lost.
//! The correction places a *sonic particle* at each upward `beta`-crossing,
//! moving at `f'(beta)`, and gives its two neighbors a drift that reproduces
//! the reaction term integrated across the similarity interpolant. Each
//! neighbor gap `g` then obeys `g' = df' - |c| g` with the rate
//! `c(v, beta) = O(1/tau)`, so the neighbors settle at the physically correct
//! `O(tau)` standoff distance while the three particles translate at the
//! exact wave speed.

use crate::error::{Error, Result};
use crate::flux::FluxFunction;
use crate::integrator::{
    evolve_ode_with, EvolveOptions, EvolveReport, FieldOde, TimeScheme,
};
use crate::interpolant::Segment;
use crate::particles::{conservation_rhs_flat, ParticleDeriv, ParticleField, ShockParticle};

/// Bistable reaction term `psi(u) = u (1 - u)(u - beta) / tau`.
#[derive(Clone, Copy, Debug)]
pub struct BistableSource {
    tau: f64,
    beta: f64,
}

impl BistableSource {
    pub fn new(tau: f64, beta: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "reaction time scale must be positive, got {tau}"
            )));
        }
        if !(0.0 < beta && beta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "unstable root must lie in (0, 1), got {beta}"
            )));
        }
        Ok(BistableSource { tau, beta })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `psi(u)`; vanishes exactly (in floating point too) at 0, `beta`, 1.
    #[inline]
    pub fn psi(&self, u: f64) -> f64 {
        u * (1.0 - u) * (u - self.beta) / self.tau
    }

    /// `psi'(u)`, used by the implicit stepper's Newton iteration.
    #[inline]
    pub fn psi_prime(&self, u: f64) -> f64 {
        ((1.0 - 2.0 * u) * (u - self.beta) + u * (1.0 - u)) / self.tau
    }
}

/// A sonic particle: the characteristic particle pinned at `u = beta` inside
/// an upward `beta`-crossing, plus its current standoff gaps.
#[derive(Clone, Copy, Debug)]
pub struct SonicMarker {
    pub index: usize,
    pub left_gap: f64,
    pub right_gap: f64,
}

/// Identify the sonic particles of a field: characteristic particles sitting
/// exactly at `beta` whose neighbors still straddle `beta`. A marker whose
/// neighbors no longer straddle is thereby demoted to an ordinary particle.
pub fn find_markers(field: &ParticleField, source: &BistableSource) -> Vec<SonicMarker> {
    let beta = source.beta();
    let ps = field.particles();
    let mut markers = Vec::new();
    for i in 1..ps.len().saturating_sub(1) {
        if ps[i].u_minus == beta
            && ps[i].u_plus == beta
            && ps[i - 1].u_plus < beta
            && ps[i + 1].u_minus > beta
        {
            markers.push(SonicMarker {
                index: i,
                left_gap: ps[i].x - ps[i - 1].x,
                right_gap: ps[i + 1].x - ps[i].x,
            });
        }
    }
    markers
}

/// `int_v^w psi(u) f''(u) du` by adaptive composite Gauss-Legendre.
///
/// A single 8-point panel is already exact for polynomial integrands up to
/// degree 15, which covers the built-in fluxes; panels double until the
/// result is stable to 1e-12 for anything else.
fn psi_deriv2_integral(flux: &FluxFunction, source: &BistableSource, v: f64, w: f64) -> f64 {
    const NODES: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const WEIGHTS: [f64; 4] = [
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let f = |u: f64| source.psi(u) * flux.deriv2(u);
    let gl8 = |panels: usize| -> f64 {
        let h = (w - v) / panels as f64;
        let mut sum = 0.0;
        for p in 0..panels {
            let mid = v + (p as f64 + 0.5) * h;
            let half = 0.5 * h;
            for k in 0..4 {
                sum += WEIGHTS[k] * (f(mid + half * NODES[k]) + f(mid - half * NODES[k]));
            }
        }
        sum * 0.5 * (w - v) / panels as f64
    };
    let mut prev = gl8(1);
    let mut panels = 2;
    while panels <= 4096 {
        let cur = gl8(panels);
        if (cur - prev).abs() <= 1e-12 * cur.abs().max(1.0) {
            return cur;
        }
        prev = cur;
        panels *= 2;
    }
    prev
}

/// The correction rate
/// `c(v, w) = int_v^w psi f'' du / (f'(w)(w - v) - (f(w) - f(v)))`.
///
/// Scales like `1/tau` for order-one separation; extended by 0 at `v = w`.
pub fn correction_coefficient(
    flux: &FluxFunction,
    source: &BistableSource,
    v: f64,
    w: f64,
) -> f64 {
    if v == w {
        return 0.0;
    }
    let num = psi_deriv2_integral(flux, source, v, w);
    let den = flux.deriv(w) * (w - v) - (flux.value(w) - flux.value(v));
    num / den
}

/// Reaction term integrated across one similarity segment:
/// `width / (f'(u_r) - f'(u_l)) * int_{u_l}^{u_r} psi f'' du`.
pub fn reaction_segment_integral(seg: &Segment<'_>, source: &BistableSource) -> f64 {
    if seg.is_empty() || seg.u_left == seg.u_right {
        return 0.0;
    }
    let flux = seg.flux();
    let df = flux.deriv(seg.u_right) - flux.deriv(seg.u_left);
    seg.width() / df * psi_deriv2_integral(flux, source, seg.u_left, seg.u_right)
}

/// Position drifts applied to a sonic particle's neighbors: the left neighbor
/// chases the marker, the right neighbor closes in from ahead, at rates that
/// balance the reaction integral across the the intervening segments.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeighborDrift {
    pub left: Option<(usize, f64)>,
    pub right: Option<(usize, f64)>,
}

/// Drift velocities for the neighbors of `marker` in the current field
/// state. The neighbors are expected to be nearly constant (maintenance
/// inserts a dedicated buffer particle otherwise).
pub fn corrected_neighbor_rhs(
    field: &ParticleField,
    marker: &SonicMarker,
    source: &BistableSource,
) -> NeighborDrift {
    let y = field.flatten();
    drift_terms(field.flux(), source, &y, marker.index)
}

fn drift_terms(
    flux: &FluxFunction,
    source: &BistableSource,
    y: &[f64],
    m: usize,
) -> NeighborDrift {
    let n = y.len() / 3;
    let beta = source.beta();
    let x_m = y[3 * m];
    let mut out = NeighborDrift::default();
    if m > 0 {
        let j = m - 1;
        let gap = x_m - y[3 * j];
        let v = y[3 * j + 2];
        let c = correction_coefficient(flux, source, v, beta).abs();
        out.left = Some((j, c * gap));
    }
    if m + 1 < n {
        let k = m + 1;
        let gap = y[3 * k] - x_m;
        let v = y[3 * k + 1];
        let c = correction_coefficient(flux, source, v, beta).abs();
        out.right = Some((k, -c * gap));
    }
    out
}

/// Right-hand side of the balance law: the conservation-law motion plus
/// `psi` on every state component. Characteristic particles reduce to
/// `dx/dt = f'(u)`, `du/dt = psi(u)`; the drift correction is *not* included
/// here (see [`corrected_neighbor_rhs`]).
pub fn rhs_balance(field: &ParticleField, source: &BistableSource) -> Result<Vec<ParticleDeriv>> {
    let y = field.flatten();
    let mut dy = vec![0.0; y.len()];
    balance_rhs_flat(field.flux(), source, &y, &mut dy)?;
    Ok(dy
        .chunks_exact(3)
        .map(|c| ParticleDeriv {
            dx: c[0],
            du_minus: c[1],
            du_plus: c[2],
        })
        .collect())
}

pub(crate) fn balance_rhs_flat(
    flux: &FluxFunction,
    source: &BistableSource,
    y: &[f64],
    dy: &mut [f64],
) -> Result<()> {
    conservation_rhs_flat(flux, y, dy)?;
    let n = y.len() / 3;
    for i in 0..n {
        dy[3 * i + 1] += source.psi(y[3 * i + 1]);
        dy[3 * i + 2] += source.psi(y[3 * i + 2]);
    }
    Ok(())
}

/// Jumps smaller than this make a marker neighbor "nearly constant", eligible
/// for the drift correction; otherwise a buffer particle is inserted first.
pub const NEARLY_CONSTANT_JUMP: f64 = 1e-3;

fn nearly_constant_left(ps: &[ShockParticle], j: usize) -> bool {
    (ps[j].u_plus - ps[j].u_minus).abs() < NEARLY_CONSTANT_JUMP
        && (j == 0 || (ps[j].u_minus - ps[j - 1].u_plus).abs() < NEARLY_CONSTANT_JUMP)
}

fn nearly_constant_right(ps: &[ShockParticle], k: usize) -> bool {
    (ps[k].u_plus - ps[k].u_minus).abs() < NEARLY_CONSTANT_JUMP
        && (k + 1 == ps.len() || (ps[k + 1].u_minus - ps[k].u_plus).abs() < NEARLY_CONSTANT_JUMP)
}

/// Equilibrium standoff gap `df' / |c|` for a neighbor value `v` on the given
/// side of the sonic point.
fn equilibrium_gap(flux: &FluxFunction, source: &BistableSource, v: f64) -> f64 {
    let beta = source.beta();
    let df = (flux.deriv(beta) - flux.deriv(v)).abs();
    let c = correction_coefficient(flux, source, v, beta).abs();
    if c > 0.0 {
        df / c
    } else {
        0.0
    }
}

/// Insert and retire sonic particles.
///
/// For every segment that crosses `beta` upward (in `x`), a sonic particle is
/// placed where the interpolant equals `beta`, unless an existing marker sits
/// within twice the current equilibrium gap (hysteresis against duplicate
/// markers during transients). Marker neighbors that are not nearly constant
/// get a characteristic buffer particle inserted next to them, displaced by
/// the drift distance accrued over the last step; the buffer is flat against
/// its parent, so from then on it is the nearly-constant neighbor that the
/// drift moves. Demotion needs no action: a marker whose neighbors stop
/// straddling `beta` simply stops being identified as one.
///
/// Returns `true` if the field changed.
pub fn sonic_maintenance(
    field: &mut ParticleField,
    source: &BistableSource,
    last_dt: f64,
) -> Result<bool> {
    let beta = source.beta();
    let mut changed = false;

    // Marker insertion at upward beta-crossings.
    'insertion: loop {
        let flux = field.flux().clone();
        let marker_xs: Vec<f64> = find_markers(field, source)
            .iter()
            .map(|m| field.particles()[m.index].x)
            .collect();
        let ps = field.particles();
        for i in 0..ps.len().saturating_sub(1) {
            let (p, q) = (&ps[i], &ps[i + 1]);
            if !(p.u_plus < beta && q.u_minus > beta) || q.x == p.x {
                continue;
            }
            let seg = Segment::new(&flux, p.x, q.x, p.u_plus, q.u_minus)?;
            let x_star = seg.inverse(beta)?;
            let radius = 2.0
                * equilibrium_gap(&flux, source, p.u_plus)
                    .max(equilibrium_gap(&flux, source, q.u_minus));
            if marker_xs.iter().any(|&xm| (xm - x_star).abs() < radius) {
                continue;
            }
            field.insert(ShockParticle::characteristic(x_star, beta))?;
            changed = true;
            continue 'insertion;
        }
        break;
    }

    // Buffer insertion beside markers whose neighbors carry structure.
    loop {
        let flux = field.flux().clone();
        let markers = find_markers(field, source);
        let ps = field.particles();
        let mut pending: Option<ShockParticle> = None;
        for m in &markers {
            let i = m.index;
            let j = i - 1;
            if !nearly_constant_left(ps, j) && m.left_gap > 1e-9 {
                let v = ps[j].u_plus;
                let drift = correction_coefficient(&flux, source, v, beta).abs() * m.left_gap;
                let off = (drift * last_dt).clamp(1e-6 * m.left_gap, 0.45 * m.left_gap);
                pending = Some(ShockParticle::characteristic(ps[j].x + off, v));
                break;
            }
            let k = i + 1;
            if !nearly_constant_right(ps, k) && m.right_gap > 1e-9 {
                let v = ps[k].u_minus;
                let drift = correction_coefficient(&flux, source, v, beta).abs() * m.right_gap;
                let off = (drift * last_dt).clamp(1e-6 * m.right_gap, 0.45 * m.right_gap);
                pending = Some(ShockParticle::characteristic(ps[k].x - off, v));
                break;
            }
        }
        match pending {
            Some(p) => {
                field.insert(p)?;
                changed = true;
            }
            None => break,
        }
    }
    Ok(changed)
}

/// Balance-law dynamics with sonic-particle corrections, as seen by the
/// evolve loop.
struct BalanceOde {
    flux: FluxFunction,
    source: BistableSource,
    markers: Vec<usize>,
    dt_cap: f64,
}

impl FieldOde for BalanceOde {
    fn on_structure(&mut self, field: &ParticleField) {
        self.markers = find_markers(field, &self.source)
            .iter()
            .map(|m| m.index)
            .collect();
    }

    fn rhs(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        balance_rhs_flat(&self.flux, &self.source, y, dy)?;
        for &m in &self.markers {
            let drift = drift_terms(&self.flux, &self.source, y, m);
            if let Some((j, v)) = drift.left {
                dy[3 * j] += v;
            }
            if let Some((k, v)) = drift.right {
                dy[3 * k] += v;
            }
        }
        Ok(())
    }

    fn rhs_jacobian_diag(&mut self, _t: f64, y: &[f64], diag: &mut [f64]) {
        let n = y.len() / 3;
        for i in 0..n {
            diag[3 * i] = 0.0;
            diag[3 * i + 1] = self.source.psi_prime(y[3 * i + 1]);
            diag[3 * i + 2] = self.source.psi_prime(y[3 * i + 2]);
        }
    }

    fn maintain(&mut self, field: &mut ParticleField, last_dt: f64) -> Result<bool> {
        sonic_maintenance(field, &self.source, last_dt)
    }

    fn dt_cap(&self) -> Option<f64> {
        Some(self.dt_cap)
    }
}

/// Options for [`evolve_reaction`]: the base integrator options plus the
/// time-stepping scheme. Explicit stepping is additionally capped at
/// `tau / 10`; the implicit trapezoid mode relaxes that to `tau`.
#[derive(Clone, Copy, Debug)]
pub struct ReactionOptions {
    pub base: EvolveOptions,
    pub scheme: TimeScheme,
}

impl ReactionOptions {
    pub fn explicit(base: EvolveOptions) -> Self {
        ReactionOptions {
            base,
            scheme: TimeScheme::ExplicitRk,
        }
    }

    pub fn implicit_trapezoid(base: EvolveOptions) -> Self {
        ReactionOptions {
            base,
            scheme: TimeScheme::ImplicitTrapezoid { newton_tol: 1e-10 },
        }
    }
}

/// Evolve a field under the balance law with sonic-particle maintenance and
/// neighbor correction. Events and merges behave as in the homogeneous
/// solver. With `psi = 0` (formally `tau -> inf`) this reduces to
/// [`evolve`](crate::integrator::evolve).
pub fn evolve_reaction(
    field: ParticleField,
    source: &BistableSource,
    opts: &ReactionOptions,
) -> Result<(ParticleField, EvolveReport)> {
    let dt_cap = match opts.scheme {
        TimeScheme::ExplicitRk => source.tau() / 10.0,
        TimeScheme::ImplicitTrapezoid { .. } => source.tau(),
    };
    let ode = BalanceOde {
        flux: field.flux().clone(),
        source: *source,
        markers: Vec::new(),
        dt_cap,
    };
    evolve_ode_with(field, ode, &opts.base, opts.scheme)
}

/// Integrate the traveling-wave profile `v(xi)` through the sonic point.
///
/// Returns `(xi, v)` samples on `xi_span` with `v(0) = beta`, saturating at
/// the stable roots. In physical coordinates the wave is `u(x, t) =
/// v((x - f'(beta) t) / tau)`, hence `O(tau)` thick. The removable
/// singularity at `v = beta` is evaluated by its limit; a vanishing
/// denominator anywhere else is reported as an error (it cannot occur for a
/// convex flux).
pub fn traveling_wave_profile(
    source: &BistableSource,
    flux: &FluxFunction,
    xi_span: (f64, f64),
    n_samples: usize,
) -> Result<Vec<(f64, f64)>> {
    let (a, b) = xi_span;
    if !(a < 0.0 && b > 0.0) || n_samples < 3 {
        return Err(Error::InvalidConfig(
            "profile span must contain xi = 0 and use at least 3 samples".into(),
        ));
    }
    let beta = source.beta();
    let slope = |v: f64| -> Result<f64> {
        if (v - beta).abs() <= 1e-6 {
            return Ok(v * (1.0 - v) / flux.deriv2(0.5 * (v + beta)));
        }
        let den = flux.deriv(v) - flux.deriv(beta);
        if den == 0.0 {
            return Err(Error::SingularProfile { v });
        }
        Ok(v * (1.0 - v) * (v - beta) / den)
    };

    let h = (b - a) / (n_samples - 1) as f64;
    let substeps = 16;
    let hs = h / substeps as f64;
    let march = |dir: f64| -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::new();
        let mut xi = 0.0;
        let mut v = beta;
        let limit = if dir > 0.0 { b } else { a };
        while (limit - xi) * dir > 1e-12 {
            for _ in 0..substeps {
                if v <= 1e-12 || v >= 1.0 - 1e-12 {
                    break;
                }
                let k1 = slope(v)?;
                let k2 = slope(v + 0.5 * dir * hs * k1)?;
                let k3 = slope(v + 0.5 * dir * hs * k2)?;
                let k4 = slope(v + dir * hs * k3)?;
                v += dir * hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                v = v.clamp(0.0, 1.0);
            }
            xi += dir * h;
            out.push((xi, v));
        }
        Ok(out)
    };

    let mut left = march(-1.0)?;
    let right = march(1.0)?;
    left.reverse();
    let mut samples = left;
    samples.push((0.0, beta));
    samples.extend(right);
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{EvolveOptions, RkOrder};

    fn source(tau: f64) -> BistableSource {
        BistableSource::new(tau, 0.8).unwrap()
    }

    #[test]
    fn psi_roots_and_values() {
        let s = source(0.01);
        assert_eq!(s.psi(0.0), 0.0);
        assert_eq!(s.psi(0.8), 0.0);
        assert_eq!(s.psi(1.0), 0.0);
        assert!((s.psi(0.9) - 0.9).abs() < 1e-13);
    }

    #[test]
    fn source_rejects_bad_parameters() {
        assert!(BistableSource::new(0.0, 0.8).is_err());
        assert!(BistableSource::new(0.01, 1.0).is_err());
    }

    #[test]
    fn correction_coefficient_burgers_values() {
        let flux = FluxFunction::burgers();
        let s = source(0.01);
        // int_0^0.8 psi du = -0.0512/tau over denominator 0.32
        assert!((correction_coefficient(&flux, &s, 0.0, 0.8).abs() - 16.0).abs() < 1e-10);
        // int over (0.8, 1) of psi = 0.0012/tau over denominator 0.02
        assert!((correction_coefficient(&flux, &s, 1.0, 0.8).abs() - 6.0).abs() < 1e-10);
        assert_eq!(correction_coefficient(&flux, &s, 0.3, 0.3), 0.0);
    }

    #[test]
    fn correction_coefficient_scales_linearly_in_the_rate() {
        let flux = FluxFunction::quartic();
        let c1 = correction_coefficient(&flux, &source(0.01), 0.3, 0.8);
        let c10 = correction_coefficient(&flux, &source(0.1), 0.3, 0.8);
        assert!((c10 * 10.0 - c1).abs() <= 1e-13 * c1.abs());
    }

    #[test]
    fn reaction_segment_integral_examples() {
        let flux = FluxFunction::burgers();
        let s = source(0.01);
        let seg = Segment::new(&flux, 0.0, 0.5, 0.0, 0.8).unwrap();
        // width/(f'(0.8)-f'(0)) * (-0.0512/tau) = -0.064 * width / tau
        assert!((reaction_segment_integral(&seg, &s) - (-3.2)).abs() < 1e-10);

        let empty = Segment::new(&flux, 0.3, 0.3, 0.0, 0.8).unwrap();
        assert_eq!(reaction_segment_integral(&empty, &s), 0.0);

        let flat = Segment::new(&flux, 0.0, 1.0, 0.5, 0.5).unwrap();
        assert_eq!(reaction_segment_integral(&flat, &s), 0.0);
    }

    #[test]
    fn rhs_balance_examples() {
        let flux = FluxFunction::burgers();
        let s = source(0.01);

        // sonic fixed point: dx = f'(beta), du = 0, bit-exactly
        let marker = ParticleField::from_characteristic_points(
            flux.clone(),
            &[(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)],
        )
        .unwrap();
        let d = rhs_balance(&marker, &s).unwrap();
        assert_eq!(d[1].dx, flux.deriv(0.8));
        assert_eq!(d[1].du_minus, 0.0);
        assert_eq!(d[1].du_plus, 0.0);

        // flat-neighbor shock between the stable roots: source inactive
        let shock = ParticleField::new(
            flux.clone(),
            vec![
                ShockParticle::characteristic(0.0, 1.0),
                ShockParticle::new(1.0, 1.0, 0.0),
                ShockParticle::characteristic(2.0, 0.0),
            ],
        )
        .unwrap();
        let d = rhs_balance(&shock, &s).unwrap();
        assert_eq!(d[1].dx, 0.5);
        assert_eq!(d[1].du_minus, 0.0);
        assert_eq!(d[1].du_plus, 0.0);

        // characteristic particle off the roots feels the source
        let char_field = ParticleField::from_characteristic_points(
            flux.clone(),
            &[(0.0, 0.9)],
        )
        .unwrap();
        let d = rhs_balance(&char_field, &s).unwrap();
        assert!((d[0].dx - 0.9).abs() < 1e-15);
        assert!((d[0].du_minus - 0.9).abs() < 1e-13);
    }

    #[test]
    fn markers_are_identified_only_inside_upward_crossings() {
        let flux = FluxFunction::burgers();
        let s = source(0.01);
        let field = ParticleField::from_characteristic_points(
            flux.clone(),
            &[(0.0, 0.1), (0.5, 0.8), (1.0, 0.95)],
        )
        .unwrap();
        let ms = find_markers(&field, &s);
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].index, 1);
        assert_eq!(ms[0].left_gap, 0.5);

        // neighbors no longer straddle: demoted
        let demoted = ParticleField::from_characteristic_points(
            flux,
            &[(0.0, 0.95), (0.5, 0.8), (1.0, 0.9)],
        )
        .unwrap();
        assert!(find_markers(&demoted, &s).is_empty());
    }

    #[test]
    fn maintenance_inserts_a_marker_at_the_interpolated_crossing() {
        let flux = FluxFunction::burgers();
        let s = source(0.01);
        let mut field =
            ParticleField::from_characteristic_points(flux, &[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let changed = sonic_maintenance(&mut field, &s, 0.0).unwrap();
        assert!(changed);
        let ms = find_markers(&field, &s);
        assert_eq!(ms.len(), 1);
        // Burgers interpolant is linear here, so the crossing sits at x = 0.8.
        let m = &field.particles()[ms[0].index];
        assert!((m.x - 0.8).abs() < 1e-14);
        assert_eq!(m.u_minus, 0.8);

        // idempotent: a second pass changes nothing
        let again = sonic_maintenance(&mut field, &s, 0.0).unwrap();
        assert!(!again);
    }

    #[test]
    fn maintenance_skips_fields_without_upward_crossings() {
        let flux = FluxFunction::burgers();
        let s = source(0.01);
        let mut low =
            ParticleField::from_characteristic_points(flux.clone(), &[(0.0, 0.1), (1.0, 0.5)])
                .unwrap();
        assert!(!sonic_maintenance(&mut low, &s, 0.0).unwrap());

        // downward jump (a shock) is not a detonation
        let mut shock = ParticleField::new(
            flux,
            vec![
                ShockParticle::characteristic(0.0, 1.0),
                ShockParticle::new(0.5, 1.0, 0.0),
                ShockParticle::characteristic(1.0, 0.0),
            ],
        )
        .unwrap();
        assert!(!sonic_maintenance(&mut shock, &s, 0.0).unwrap());
    }

    #[test]
    fn drift_signs_pull_both_neighbors_toward_the_marker() {
        let flux = FluxFunction::burgers();
        let s = source(0.01);
        let field = ParticleField::from_characteristic_points(
            flux,
            &[(-0.1, 0.0), (0.0, 0.8), (0.05, 1.0)],
        )
        .unwrap();
        let ms = find_markers(&field, &s);
        let drift = corrected_neighbor_rhs(&field, &ms[0], &s);
        let (j, dl) = drift.left.unwrap();
        let (k, dr) = drift.right.unwrap();
        assert_eq!((j, k), (0, 2));
        // left neighbor chases to the right: |c(0, .8)| * gap = 16 * 0.1
        assert!((dl - 1.6).abs() < 1e-9);
        // right neighbor closes from ahead: -|c(1, .8)| * gap = -6 * 0.05
        assert!((dr + 0.3).abs() < 1e-10);
    }

    #[test]
    fn equilibrium_gaps_reach_the_analytic_values() {
        // Pure three-particle wave with the neighbors at the stable roots:
        // gaps must settle at 5 tau (left) and 10 tau / 3 (right).
        let tau = 0.01;
        let s = source(tau);
        let flux = FluxFunction::burgers();
        let field = ParticleField::from_characteristic_points(
            flux,
            &[(-0.1, 0.0), (0.0, 0.8), (0.06, 1.0)],
        )
        .unwrap();
        // the right gap relaxes at rate |c| = 6/tau; 300 tau covers it
        let opts = ReactionOptions::explicit(EvolveOptions::fixed(
            RkOrder::Four,
            tau / 10.0,
            300.0 * tau,
        ));
        let (out, _) = evolve_reaction(field, &s, &opts).unwrap();
        let ms = find_markers(&out, &s);
        assert_eq!(ms.len(), 1);
        assert!(
            (ms[0].left_gap - 5.0 * tau).abs() < 1e-6,
            "left gap {} vs {}",
            ms[0].left_gap,
            5.0 * tau
        );
        assert!(
            (ms[0].right_gap - 10.0 * tau / 3.0).abs() < 1e-6,
            "right gap {} vs {}",
            ms[0].right_gap,
            10.0 * tau / 3.0
        );
        // The marker travelled at exactly f'(beta).
        let x_marker = out.particles()[ms[0].index].x;
        assert!((x_marker - 0.8 * out.time()).abs() < 1e-12);
    }

    #[test]
    fn gap_equilibria_shrink_linearly_with_tau() {
        for tau in [0.02, 0.002] {
            let s = source(tau);
            let flux = FluxFunction::burgers();
            let gl = equilibrium_gap(&flux, &s, 0.0);
            let gr = equilibrium_gap(&flux, &s, 1.0);
            assert!((gl - 5.0 * tau).abs() < 1e-12 * gl);
            assert!((gr - 10.0 * tau / 3.0).abs() < 1e-12 * gr);
        }
    }

    #[test]
    fn stiff_shock_still_moves_at_rankine_hugoniot_speed() {
        for tau in [0.1, 0.004] {
            let s = source(tau);
            let field = ParticleField::new(
                FluxFunction::burgers(),
                vec![
                    ShockParticle::characteristic(-1.0, 1.0),
                    ShockParticle::new(0.0, 1.0, 0.0),
                    ShockParticle::characteristic(1.0, 0.0),
                ],
            )
            .unwrap();
            let opts = ReactionOptions::explicit(EvolveOptions::fixed(RkOrder::Four, 0.01, 0.4));
            let (out, _) = evolve_reaction(field, &s, &opts).unwrap();
            let shock = out
                .particles()
                .iter()
                .find(|p| !p.is_characteristic())
                .unwrap();
            assert!(
                (shock.x - 0.2).abs() < 1e-6,
                "tau = {tau}: shock at {}",
                shock.x
            );
        }
    }

    #[test]
    fn disabled_source_reduces_to_the_conservation_law() {
        // A huge tau makes psi negligible; compare against plain evolve.
        let flux = FluxFunction::burgers();
        let pts = [(0.0, 0.9), (1.0, 0.1)];
        let field = ParticleField::from_characteristic_points(flux.clone(), &pts).unwrap();
        let base = EvolveOptions::fixed(RkOrder::Four, 0.05, 0.8);
        let (plain, _) = crate::integrator::evolve(field, &base).unwrap();

        let s = BistableSource::new(1e12, 0.8).unwrap();
        let field2 = ParticleField::from_characteristic_points(flux, &pts).unwrap();
        // dt cap tau/10 is huge, so the same fixed grid applies.
        let (stiff, _) = evolve_reaction(field2, &s, &ReactionOptions::explicit(base)).unwrap();

        // ignore any inserted sonic marker; compare particle positions of the
        // original two characteristic particles
        let xs = |f: &ParticleField| -> Vec<f64> {
            f.particles()
                .iter()
                .filter(|p| p.u_minus != 0.8)
                .map(|p| p.x)
                .collect()
        };
        for (a, b) in xs(&plain).iter().zip(xs(&stiff)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn burgers_profile_is_the_logistic_curve() {
        let s = source(0.01);
        let flux = FluxFunction::burgers();
        let profile = traveling_wave_profile(&s, &flux, (-20.0, 20.0), 401).unwrap();
        // v' = v(1-v) after the (v - beta) cancellation; with v(0) = 0.8 the
        // solution is v(xi) = 1 / (1 + 0.25 exp(-xi)).
        for &(xi, v) in &profile {
            let exact = 1.0 / (1.0 + 0.25 * (-xi).exp());
            assert!((v - exact).abs() < 1e-7, "xi = {xi}: {v} vs {exact}");
        }
        let (_, v_left) = profile[0];
        let (_, v_right) = profile[profile.len() - 1];
        assert!(v_left < 1e-6);
        assert!(v_right > 1.0 - 1e-6);
    }

    #[test]
    fn profile_slope_at_the_sonic_point() {
        let s = source(0.01);
        let flux = FluxFunction::burgers();
        let profile = traveling_wave_profile(&s, &flux, (-5.0, 5.0), 2001).unwrap();
        let h = profile[1].0 - profile[0].0;
        let at_zero = profile.iter().position(|&(xi, _)| xi.abs() < 1e-12).unwrap();
        let slope = (profile[at_zero + 1].1 - profile[at_zero - 1].1) / (2.0 * h);
        assert!((slope - 0.16).abs() < 1e-4, "slope {slope}");
    }

    #[test]
    fn implicit_trapezoid_agrees_with_the_explicit_solver() {
        let tau = 0.05;
        let s = source(tau);
        let flux = FluxFunction::burgers();
        let make = || {
            ParticleField::from_characteristic_points(
                flux.clone(),
                &[(-0.1, 0.0), (0.0, 0.8), (0.05, 1.0)],
            )
            .unwrap()
        };
        let t_end = 0.5;
        let (explicit, _) = evolve_reaction(
            make(),
            &s,
            &ReactionOptions::explicit(EvolveOptions::fixed(RkOrder::Four, tau / 10.0, t_end)),
        )
        .unwrap();
        let (implicit, _) = evolve_reaction(
            make(),
            &s,
            &ReactionOptions::implicit_trapezoid(EvolveOptions::fixed(
                RkOrder::Four,
                tau / 4.0,
                t_end,
            )),
        )
        .unwrap();
        let me = find_markers(&explicit, &s)[0];
        let mi = find_markers(&implicit, &s)[0];
        assert!((me.left_gap - mi.left_gap).abs() < 2e-4);
        assert!((me.right_gap - mi.right_gap).abs() < 2e-4);
        let xe = explicit.particles()[me.index].x;
        let xi = implicit.particles()[mi.index].x;
        assert!((xe - xi).abs() < 1e-6);
    }
}
