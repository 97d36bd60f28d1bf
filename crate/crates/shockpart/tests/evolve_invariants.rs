//! Cross-module invariants of the evolve loop: conservation against the
//! boundary fluxes, field ordering, and entropy admissibility under random
//! initial data.

use proptest::prelude::*;
use shockpart::flux::FluxFunction;
use shockpart::integrator::{evolve, EvolveOptions, RkOrder};
use shockpart::interpolant::total_area;
use shockpart::particles::{ParticleField, ShockParticle};

#[test]
fn area_change_equals_the_boundary_flux_difference() {
    // Asymmetric far fields: d/dt int u dx = f(u_L) - f(u_R).
    let flux = FluxFunction::burgers();
    let field = ParticleField::new(
        flux.clone(),
        vec![
            ShockParticle::characteristic(-1.0, 1.0),
            ShockParticle::new(0.0, 1.0, 0.2),
            ShockParticle::characteristic(1.0, 0.2),
        ],
    )
    .unwrap();
    let (a, b) = (-4.0, 4.0);
    let before = total_area(&field, a, b).unwrap();
    let t_end = 0.8;
    let (out, _) = evolve(field, &EvolveOptions::fixed(RkOrder::Four, 0.02, t_end)).unwrap();
    let after = total_area(&out, a, b).unwrap();
    let expected = t_end * (flux.value(1.0) - flux.value(0.2));
    assert!(
        ((after - before) - expected).abs() <= 1e-9,
        "drift {} vs boundary integral {}",
        after - before,
        expected
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_fields_stay_ordered_and_entropic(
        xs in proptest::collection::vec(0.0..1.0f64, 4),
        us in proptest::collection::vec(0.05..0.95f64, 4),
        t_end in 0.05..0.6f64,
    ) {
        let flux = FluxFunction::burgers();
        let pts: Vec<(f64, f64)> = {
            let mut x = xs.clone();
            x.sort_by(f64::total_cmp);
            x.into_iter().zip(us.iter().copied()).collect()
        };
        let field = ParticleField::from_characteristic_points(flux.clone(), &pts).unwrap();
        let before = total_area(&field, -2.0, 3.0).unwrap();
        let (out, _report) =
            evolve(field, &EvolveOptions::fixed(RkOrder::Four, 0.05, t_end)).unwrap();
        let ps = out.particles();
        for w in ps.windows(2) {
            prop_assert!(w[0].x <= w[1].x);
        }
        for p in ps {
            prop_assert!(flux.deriv(p.u_minus) >= flux.deriv(p.u_plus) - 1e-12);
        }
        // flat far fields: the window area is conserved through any merges
        let after = total_area(&out, -2.0, 3.0).unwrap();
        let boundary = t_end * (flux.value(ps[0].u_minus) - flux.value(ps[ps.len() - 1].u_plus));
        prop_assert!(
            ((after - before) - boundary).abs() <= 1e-8,
            "area drift {:e} vs boundary {:e}",
            after - before,
            boundary
        );
    }
}
