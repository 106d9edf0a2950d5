//! Properties of the error-rate grid and the companion experiments.

use optiwake::experiments::{
    error_rate_grid, harvest_conflict_demo, race_condition_demo, reliable_range, standby_sweep,
    Bench, Design, NoiseModel, TrialConfig,
};

const LUX: [f64; 6] = [0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0];
const DIST: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];

fn base(seed: u64) -> TrialConfig {
    TrialConfig {
        rng_seed: seed,
        ..TrialConfig::new(Design::One, 0.0, 0.1)
    }
}

#[test]
fn same_seed_same_csv() {
    let b = Bench::default();
    let lux = [400.0, 2000.0];
    let dist = [0.15, 0.30];
    let a = error_rate_grid(&b, &lux, &dist, &base(7)).unwrap();
    let c = error_rate_grid(&b, &lux, &dist, &base(7)).unwrap();
    assert_eq!(a, c);
    assert_eq!(a.to_csv(), c.to_csv());
    assert!(a
        .to_csv()
        .starts_with("lux,distance_m,transmitted,detected,errors\n"));
}

#[test]
fn default_grid_monotone_in_distance_and_ambient() {
    let b = Bench::default();
    let rep = error_rate_grid(&b, &LUX, &DIST, &base(1)).unwrap();
    for &lux in LUX.iter().filter(|&&l| l >= 400.0) {
        let errs: Vec<u32> = DIST
            .iter()
            .map(|&d| rep.cell(lux, d).unwrap().errors())
            .collect();
        assert!(errs.windows(2).all(|w| w[0] <= w[1]), "{lux} lx: {errs:?}");
    }
    for &d in DIST.iter().filter(|&&d| d >= 0.15) {
        let lo = rep.cell(400.0, d).unwrap().errors();
        let hi = rep.cell(2000.0, d).unwrap().errors();
        assert!(hi >= lo, "{d} m: {hi} < {lo}");
    }
}

#[test]
fn zero_noise_is_all_or_nothing_at_the_range() {
    let b = Bench::default();
    let cfg = TrialConfig {
        pulses: 10,
        noise: NoiseModel::none(),
        ..base(3)
    };
    let rep = error_rate_grid(&b, &LUX, &DIST, &cfg).unwrap();
    for cell in &rep.cells {
        let e = cell.errors();
        assert!(e == 0 || e == cell.transmitted, "{cell:?}");
        // the sharp edge sits at the reliable range
        let range = reliable_range(&b, cell.lux).unwrap();
        if (cell.distance - range).abs() > 1e-3 {
            assert_eq!(e == 0, cell.distance < range, "{cell:?} range {range}");
        }
    }
}

/// Split [a, b] until the range moves by less than `jump`; a discontinuity
/// would keep its jump however small the interval gets.
fn check_continuous(b: &Bench, a: f64, ra: f64, c: f64, rc: f64, jump: f64) {
    if (ra - rc).abs() < jump {
        return;
    }
    assert!(
        c - a > 1e-3,
        "range jumps {ra} -> {rc} between {a} and {c} lx"
    );
    let m = 0.5 * (a + c);
    let rm = reliable_range(b, m).unwrap();
    check_continuous(b, a, ra, m, rm, jump);
    check_continuous(b, m, rm, c, rc, jump);
}

#[test]
fn threshold_distance_is_continuous_in_lux() {
    let b = Bench::default();
    let step = 50.0;
    let mut prev = reliable_range(&b, 0.0).unwrap();
    for k in 1..=40 {
        let lux = k as f64 * step;
        let r = reliable_range(&b, lux).unwrap();
        check_continuous(&b, lux - step, prev, lux, r, 0.01);
        prev = r;
    }
}

#[test]
fn standby_matches_bench_table() {
    let b = Bench::default();
    let rows = standby_sweep(&b.calibration.design1, &[0.0, 400.0, 800.0, 1600.0]).unwrap();
    assert!(
        (rows[0].power / 248e-12 - 1.0).abs() < 0.3,
        "{}",
        rows[0].power
    );
    assert!(
        (rows[3].power / 627e-9 - 1.0).abs() < 0.3,
        "{}",
        rows[3].power
    );
    assert!(rows.windows(2).all(|w| w[1].power > w[0].power));
}

#[test]
fn design2_fails_in_bright_light() {
    let b = Bench::default();
    let dim = race_condition_demo(&b, &[400.0], 0.10, 10, 1, NoiseModel::default()).unwrap();
    let bright = race_condition_demo(&b, &[800.0], 0.10, 10, 1, NoiseModel::default()).unwrap();
    assert_eq!(dim[0].missed(), 0);
    assert!(bright[0].missed() >= 1);
}

#[test]
fn pmic_masks_the_flash_the_dedicated_cell_sees() {
    let b = Bench::default();
    let h = harvest_conflict_demo(&b, 400.0, 0.10).unwrap();
    assert!(h.ratio() < 0.05);
    assert!(!h.pmic_detected && h.dedicated_detected);
}
