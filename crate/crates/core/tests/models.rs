//! Properties of the optical and device models.

use approx::assert_relative_eq;
use optiwake::devices::{
    ldr_resistance_step, mosfet_current, pt_collector_current, solar_voc, LdrModel, MosfetParams,
    PhototransistorModel, SolarCellModel,
};
use optiwake::optics::{
    ambient_at, irradiance, lambertian_order, AmbientProfile, AmbientSegment, LinkGeometry,
    OpticalSource, SegmentKind,
};
use proptest::prelude::*;

/// Full viewing angle whose Lambertian order is `m`.
fn viewing_angle_for_order(m: f64) -> f64 {
    2.0 * 0.5f64.powf(1.0 / m).acos().to_degrees()
}

/// Composite Simpson rule over [a, b] with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn hemisphere_integral_recovers_power() {
    for m in [1.0, 2.0, 5.0, 20.0] {
        let angle = viewing_angle_for_order(m);
        assert_relative_eq!(lambertian_order(angle).unwrap(), m, max_relative = 1e-12);
        let source = OpticalSource {
            viewing_angle: angle,
            ..OpticalSource::default()
        };
        // irradiance on a unit sphere facing the source, summed over the hemisphere
        let flux = simpson(
            |theta| {
                let g = LinkGeometry {
                    distance: 1.0,
                    emission_angle: theta.to_degrees().min(90.0),
                    incidence_angle: 0.0,
                };
                irradiance(&source, &g).unwrap() * 2.0 * std::f64::consts::PI * theta.sin()
            },
            0.0,
            std::f64::consts::FRAC_PI_2,
            4000,
        );
        assert_relative_eq!(flux, source.optical_power, max_relative = 1e-6);
    }
}

fn profile_strategy() -> impl Strategy<Value = AmbientProfile> {
    prop::collection::vec(
        (0.0..5000.0f64, 0.0..5000.0f64, 0.001..100.0f64, 0u8..3),
        1..6,
    )
    .prop_map(|parts| {
        let mut t = 0.0;
        let mut segments = Vec::new();
        for (a, b, dur, kind) in parts {
            let kind = match kind {
                0 => SegmentKind::Constant { lux: a },
                1 => SegmentKind::LinearRamp {
                    from: a,
                    to: b,
                    duration: dur,
                },
                _ => SegmentKind::Step { lux: b },
            };
            segments.push(AmbientSegment { start: t, kind });
            t += dur * 2.0;
        }
        AmbientProfile { segments }
    })
}

proptest! {
    #[test]
    fn irradiance_falls_with_distance(d in 0.01..5.0f64, k in 1.001..3.0f64, a in 0.0..90.0f64, b in 0.0..90.0f64) {
        let s = OpticalSource::default();
        let near = irradiance(&s, &LinkGeometry { distance: d, emission_angle: a, incidence_angle: b }).unwrap();
        let far = irradiance(&s, &LinkGeometry { distance: d * k, emission_angle: a, incidence_angle: b }).unwrap();
        if near > 0.0 {
            prop_assert!(far < near);
        } else {
            prop_assert_eq!(far, 0.0);
        }
    }

    #[test]
    fn irradiance_non_increasing_in_angles(d in 0.01..2.0f64, a in 0.0..90.0f64, da in 0.0..30.0f64, b in 0.0..90.0f64, db in 0.0..30.0f64) {
        let s = OpticalSource::default();
        let e = |ea: f64, ib: f64| irradiance(&s, &LinkGeometry { distance: d, emission_angle: ea.min(90.0), incidence_angle: ib.min(90.0) }).unwrap();
        prop_assert!(e(a + da, b) <= e(a, b));
        prop_assert!(e(a, b + db) <= e(a, b));
    }

    #[test]
    fn ambient_is_never_negative(p in profile_strategy(), t in -1.0..1000.0f64) {
        prop_assume!(p.validate().is_ok());
        prop_assert!(ambient_at(&p, t) >= 0.0);
    }

    #[test]
    fn voc_monotone_and_continuous(lux in 0.0..5000.0f64, dl in 0.0..50.0f64) {
        for cell in [SolarCellModel::default(), SolarCellModel::wake_up_cell()] {
            let a = solar_voc(&cell, lux);
            let b = solar_voc(&cell, lux + dl);
            prop_assert!(b >= a);
            // continuity: a tiny step moves Voc by a tiny amount
            let c = solar_voc(&cell, lux + 1e-9);
            prop_assert!((c - a).abs() < 1e-6);
        }
    }

    #[test]
    fn ldr_approaches_target_without_crossing(r0 in 100.0..1e7f64, lux in 0.0..3000.0f64, dt in 1e-5..0.5f64) {
        let m = LdrModel::default();
        let target = m.target(lux);
        let mut r = r0;
        let above = r0 > target;
        for _ in 0..50 {
            let next = ldr_resistance_step(&m, r, lux, dt);
            prop_assert!((next - target).abs() <= (r - target).abs() * (1.0 + 1e-12));
            if above { prop_assert!(next >= target * (1.0 - 1e-12)); } else { prop_assert!(next <= target * (1.0 + 1e-12)); }
            r = next;
        }
    }

    #[test]
    fn mosfet_monotone_in_overdrive(vgs in -3.0..3.0f64, dv in 0.0..0.5f64, vds in 0.0..3.0f64) {
        let n = MosfetParams::nmos();
        prop_assert!(mosfet_current(&n, vgs + dv, vds) >= mosfet_current(&n, vgs, vds));
        let p = MosfetParams::pmos();
        prop_assert!(mosfet_current(&p, -vgs - dv, vds) >= mosfet_current(&p, -vgs, vds));
    }

    #[test]
    fn pt_current_is_linear_in_irradiance(e1 in 0.0..10.0f64, e2 in 0.0..10.0f64, k in 0.0..5.0f64, lux in 0.0..2000.0f64) {
        let m = PhototransistorModel::default();
        let base = pt_collector_current(&m, 0.0, lux);
        let f = |e: f64| pt_collector_current(&m, e, lux) - base;
        let tol = 1e-9 * pt_collector_current(&m, e1 + e2 + k * e1, lux);
        prop_assert!((f(e1 + e2) - f(e1) - f(e2)).abs() <= tol);
        prop_assert!((f(k * e1) - k * f(e1)).abs() <= tol);
    }
}

#[test]
fn mosfet_continuous_at_region_boundaries() {
    for p in [MosfetParams::nmos(), MosfetParams::pmos()] {
        let vth = p.vgs_threshold;
        let eps = 1e-9;
        let vds = 1.0;
        // threshold: exponential meets square law
        let below = mosfet_current(&p, vth - eps * vth.signum(), vds);
        let above = mosfet_current(&p, vth + eps * vth.signum(), vds);
        assert!((above - below).abs() <= 0.01 * above, "{above} vs {below}");
        // leakage floor: the exponential hands over to the floor continuously
        let s = p.subthreshold_swing;
        let ov_floor = s * (p.off_current_floor / p.threshold_current).log10();
        let vgs_floor = match p.polarity {
            optiwake::devices::Polarity::N => vth + ov_floor,
            optiwake::devices::Polarity::P => vth - ov_floor,
        };
        let a = mosfet_current(&p, vgs_floor - 1e-6, vds);
        let b = mosfet_current(&p, vgs_floor + 1e-6, vds);
        assert!((a - b).abs() <= 0.01 * a.max(b));
        // on-resistance cap: sweep through the knee in small steps
        let mut prev = mosfet_current(&p, vth, vds);
        for k in 1..=400_000 {
            let ov = k as f64 * 1e-5;
            let vgs = match p.polarity {
                optiwake::devices::Polarity::N => vth + ov,
                optiwake::devices::Polarity::P => vth - ov,
            };
            let i = mosfet_current(&p, vgs, vds);
            assert!((i - prev).abs() <= 0.01 * i.max(prev) + 1e-15);
            prev = i;
        }
    }
}
