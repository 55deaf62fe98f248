use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SIZES: [f64; 6] = [26.0, 52.0, 76.0, 100.0, 152.0, 200.0];

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn power_law_recovers_generator() {
    let s: Vec<f64> = SIZES.iter().map(|l| 2.0 * l.sqrt()).collect();
    let f = fit_power_law(&SIZES, &s, None).unwrap();
    assert!(close(f.get("a"), 2.0, 1e-10) && close(f.get("b"), 0.5, 1e-10));
    assert!(f.mse < 1e-25);
    let flat = vec![0.3; SIZES.len()];
    assert!(fit_power_law(&SIZES, &flat, None).unwrap().get("b").abs() < 1e-12);
    assert!(fit_power_law(&SIZES, &[1.0, -1.0, 2.0, 3.0, 4.0, 5.0], None).is_err());
    assert!(fit_power_law(&SIZES[..2], &s[..2], None).is_err());
}

#[test]
fn weighted_power_law_uses_the_errors() {
    let s: Vec<f64> = SIZES.iter().map(|l| 0.7 * l.powf(0.3)).collect();
    let e: Vec<f64> = s.iter().map(|v| 0.01 * v).collect();
    let f = fit_power_law(&SIZES, &s, Some(&e)).unwrap();
    assert!(close(f.get("b"), 0.3, 1e-10));
    // log-space σ is 0.01 per point
    let lx: Vec<f64> = SIZES.iter().map(|l| l.ln()).collect();
    let mean = lx.iter().sum::<f64>() / lx.len() as f64;
    let sxx: f64 = lx.iter().map(|x| (x - mean).powi(2)).sum();
    assert!(close(f.stderr("b"), 0.01 / sxx.sqrt(), 1e-8));
}

#[test]
fn logarithmic_growth_is_flagged() {
    let sizes: Vec<f64> = (0..8).map(|k| 1e3 * 4f64.powi(k)).collect();
    let s: Vec<f64> = sizes.iter().map(|l| 0.5 * l.ln() + 1.0).collect();
    let cmp = compare_log_law(&sizes, &s).unwrap();
    assert!(cmp.log_consistent, "{cmp:?}");
    assert!(cmp.log_mse < cmp.power_mse);
    let early = compare_log_law(&sizes[..4], &s[..4]).unwrap();
    assert!(cmp.power.get("b") < early.power.get("b"));

    let algebraic: Vec<f64> = sizes.iter().map(|l| 0.2 * l.powf(0.5)).collect();
    assert!(!compare_log_law(&sizes, &algebraic).unwrap().log_consistent);
}

#[test]
fn central_charge_recovers_generator() {
    let l = 200usize;
    let sub: Vec<usize> = (1..l).collect();
    let pi = std::f64::consts::PI;
    let s: Vec<f64> = sub
        .iter()
        .map(|&x| ((l as f64 / pi) * (pi * x as f64 / l as f64).sin()).ln() / 3.0 + 0.3)
        .collect();
    let f = fit_central_charge(&sub, &s, l).unwrap();
    assert!((f.get("c") - 1.0).abs() < 1e-8 && (f.get("s0") - 0.3).abs() < 1e-8);
    let flat = vec![0.1; sub.len()];
    assert!(fit_central_charge(&sub, &flat, l).unwrap().get("c").abs() < 1e-10);
    assert!(fit_central_charge(&[0, 1, 2, 3, 4], &[0.0; 5], 10).is_err());
    assert!(fit_central_charge(&[1, 2, 3, 4], &[0.0; 4], 10).is_err());
}

#[test]
fn correlation_decay_is_classified() {
    let c: Vec<f64> = SIZES.iter().map(|l| l.powi(-2)).collect();
    let f = fit_correlation_exponent(&SIZES, &c).unwrap();
    assert_eq!(f.decay, DecayLaw::PowerLaw);
    assert!(close(f.power.get("p"), 2.0, 1e-10));

    let c: Vec<f64> = SIZES.iter().map(|l| (-l / 10.0).exp()).collect();
    let f = fit_correlation_exponent(&SIZES, &c).unwrap();
    assert_eq!(f.decay, DecayLaw::Exponential);
    assert!(close(f.exponential.get("xi"), 10.0, 1e-10));
    assert!(close(f.winner().get("xi"), 10.0, 1e-10));

    assert!(fit_correlation_exponent(&SIZES[..3], &c[..3]).is_err());
    assert!(fit_correlation_exponent(&SIZES, &[0.0, 1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
}

#[test]
fn pade_recovers_rational_generators() {
    let sizes: Vec<f64> = (1..=9).map(|k| k as f64).collect();
    let s: Vec<f64> = sizes.iter().map(|x| (1.0 + 2.0 * x) / (1.0 + x)).collect();
    let f = pade_fit(&sizes, &s, 1).unwrap();
    assert!(close(f.asymptote, 2.0, 1e-8), "{f:?}");
    assert!(close(f.fit.get("a1"), 2.0, 1e-6) && close(f.fit.get("b1"), 1.0, 1e-6));
    assert!(!f.singular);

    for n in 1..=3 {
        let c = vec![0.37; 9];
        let f = pade_fit(&sizes, &c, n).unwrap();
        assert!(close(f.asymptote, 0.37, 1e-10), "order {n}: {f:?}");
    }
    assert!(pade_fit(&sizes[..3], &s[..3], 1).is_err());
    assert!(pade_fit(&sizes, &s, 4).is_err());
}

#[test]
fn pade_order_two_recovers_its_generator() {
    let sizes: Vec<f64> = [26.0, 40.0, 52.0, 76.0, 100.0, 126.0, 152.0, 176.0, 200.0].to_vec();
    let r = |x: f64| (0.5 + 0.02 * x + 1e-4 * x * x) / (1.0 + 0.01 * x + 2e-4 * x * x);
    let s: Vec<f64> = sizes.iter().map(|&x| r(x)).collect();
    let f = pade_fit(&sizes, &s, 2).unwrap();
    assert!(close(f.asymptote, 0.5, 1e-6), "{f:?}");
    assert!(f.fit.mse < 1e-20);
}

#[test]
fn pade_flags_poles_inside_the_window() {
    let sizes: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let s: Vec<f64> = sizes.iter().map(|x| 1.0 / (1.0 - 0.18 * x)).collect();
    let f = pade_fit(&sizes, &s, 1).unwrap();
    assert!(f.singular);
}

fn lines(slopes: &[(usize, f64)], crossing: f64) -> ScalingDataset {
    let mut d = ScalingDataset::default();
    for &(l, m) in slopes {
        for k in 0..11 {
            let x = 0.5 + 0.1 * k as f64;
            d.push(x, l, 0.2 + m * (x - crossing));
        }
    }
    d
}

#[test]
fn crossing_of_two_lines() {
    let d = lines(&[(10, 1.0), (20, -1.0)], 1.0);
    let c = crossing_point(&d).unwrap();
    assert!((c.fit.get("critical") - 1.0).abs() < 1e-14);
    let shifted = lines(&[(10, 1.0), (20, -0.5)], 0.83);
    assert!((crossing_point(&shifted).unwrap().fit.get("critical") - 0.83).abs() < 1e-12);

    let mut parallel = ScalingDataset::default();
    for k in 0..5 {
        parallel.push(k as f64, 10, k as f64);
        parallel.push(k as f64, 20, k as f64 + 1.0);
    }
    assert!(matches!(crossing_point(&parallel), Err(Error::NoCrossing)));
}

#[test]
fn crossing_estimate_converges_with_grid_density() {
    let g = |x: f64| x.tanh() + 0.3 * x;
    let family = |steps: usize| {
        let mut d = ScalingDataset::default();
        for &l in &[50usize, 100, 200, 400] {
            for k in 0..steps {
                let c = 0.6 + 0.8 * k as f64 / (steps - 1) as f64;
                d.push(c, l, g((c - 0.93) * (l as f64).powf(0.5)));
            }
        }
        d
    };
    let coarse = (crossing_point(&family(9)).unwrap().fit.get("critical") - 0.93).abs();
    let fine = (crossing_point(&family(257)).unwrap().fit.get("critical") - 0.93).abs();
    assert!(fine < coarse || fine < 1e-12);
    assert!(fine < 1e-4);
}

#[test]
fn critical_column_subtraction() {
    let d = lines(&[(10, 1.0), (20, -1.0)], 1.0);
    let s = subtract_critical_column(&d, 1.0).unwrap();
    for (p, q) in d.points.iter().zip(&s.points) {
        assert!((q.value - (p.value - 0.2)).abs() < 1e-14);
    }
    let mut flat = ScalingDataset::default();
    for k in 0..4 {
        flat.push(k as f64, 8, 0.4);
        flat.push(k as f64, 16, 0.9);
    }
    let z = subtract_critical_column(&flat, 1.5).unwrap();
    assert!(z.points.iter().all(|p| p.value == 0.0));
    assert!(subtract_critical_column(&flat, 3.5).is_err());
}

fn synthetic(nu: f64, sizes: &[usize], controls: &[f64]) -> ScalingDataset {
    let mut d = ScalingDataset::default();
    for &l in sizes {
        for &c in controls {
            d.push(c, l, ((c - 1.0) * (l as f64).powf(1.0 / nu)).tanh());
        }
    }
    d
}

fn controls(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn collapse_recovers_algebraic_scaling() {
    let data = synthetic(4.0, &[152, 200, 400], &controls(0.8, 1.2, 21));
    let cfg = CollapseConfig {
        critical_range: (0.9, 1.1),
        critical_steps: 41,
        nu_range: (2.0, 8.0),
        nu_steps: 61,
        ..Default::default()
    };
    let alg = data_collapse(&data, CollapseAnsatz::Algebraic, CollapseAxis::AlphaAtFixedGamma, &cfg).unwrap();
    assert_eq!(alg.reference_size, 200);
    assert!((alg.fit.get("critical") - 1.0).abs() < 0.05);
    assert!((alg.fit.get("nu") - 4.0).abs() < 0.2, "{:?}", alg.fit);
    let bkt = data_collapse(&data, CollapseAnsatz::Bkt, CollapseAxis::AlphaAtFixedGamma, &cfg).unwrap();
    assert!(bkt.fit.mse > alg.fit.mse);
    assert_eq!(alg.landscape.len(), 41 * 61);
    assert_eq!(alg.contours.len(), 2);
}

#[test]
fn collapse_grid_refinement_never_worsens_the_minimum() {
    let data = synthetic(3.0, &[100, 200, 400], &controls(0.7, 1.3, 13));
    let mut last = f64::INFINITY;
    for k in 0..4 {
        let steps = 4 * (1 << k) + 1;
        let cfg = CollapseConfig {
            critical_range: (0.8, 1.2),
            critical_steps: steps,
            nu_range: (1.0, 6.0),
            nu_steps: steps,
            ..Default::default()
        };
        let r = data_collapse(&data, CollapseAnsatz::Algebraic, CollapseAxis::GammaAtFixedAlpha, &cfg).unwrap();
        assert!(r.fit.mse <= last);
        last = r.fit.mse;
    }
}

#[test]
fn collapse_argument_checks() {
    let data = synthetic(4.0, &[152, 200, 400], &controls(0.8, 1.2, 9));
    let bad_ref = CollapseConfig { reference_size: Some(300), ..Default::default() };
    assert!(data_collapse(&data, CollapseAnsatz::Algebraic, CollapseAxis::AlphaAtFixedGamma, &bad_ref).is_err());
    let outside = CollapseConfig { critical_range: (0.5, 1.1), ..Default::default() };
    assert!(data_collapse(&data, CollapseAnsatz::Algebraic, CollapseAxis::AlphaAtFixedGamma, &outside).is_err());
}

#[test]
fn landscape_csv_layout() {
    let data = synthetic(4.0, &[152, 200, 400], &controls(0.8, 1.2, 9));
    let cfg = CollapseConfig { critical_range: (0.9, 1.1), critical_steps: 3, nu_steps: 2, ..Default::default() };
    let r = data_collapse(&data, CollapseAnsatz::Algebraic, CollapseAxis::AlphaAtFixedGamma, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("landscape.csv");
    r.write_landscape_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("critical,nu,mse\n"));
    assert_eq!(text.lines().count(), 7);
}

/// Fraction of noisy resamples whose 2σ interval covers the true value.
fn coverage(trials: usize, mut one: impl FnMut(&mut ChaCha8Rng) -> bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..trials).filter(|_| one(&mut rng)).count() as f64 / trials as f64
}

#[test]
fn power_law_intervals_cover_under_noise() {
    let frac = coverage(200, |rng| {
        let s: Vec<f64> = SIZES
            .iter()
            .map(|l| {
                let v = 0.8 * l.powf(0.4);
                v + Normal::new(0.0, 0.01 * v).unwrap().sample(rng)
            })
            .collect();
        let f = fit_power_law(&SIZES, &s, None).unwrap();
        (f.get("b") - 0.4).abs() <= 2.0 * f.stderr("b")
    });
    assert!(frac >= 0.9, "coverage {frac}");
}

#[test]
fn central_charge_intervals_cover_under_noise() {
    let l = 100usize;
    let sub: Vec<usize> = (5..96).step_by(5).collect();
    let pi = std::f64::consts::PI;
    let frac = coverage(200, |rng| {
        let s: Vec<f64> = sub
            .iter()
            .map(|&x| {
                let v = ((l as f64 / pi) * (pi * x as f64 / l as f64).sin()).ln() / 3.0 + 0.5;
                v + Normal::new(0.0, 0.01 * v).unwrap().sample(rng)
            })
            .collect();
        let f = fit_central_charge(&sub, &s, l).unwrap();
        (f.get("c") - 1.0).abs() <= 2.0 * f.stderr("c")
    });
    assert!(frac >= 0.9, "coverage {frac}");
}

#[test]
fn correlation_intervals_cover_under_noise() {
    let frac = coverage(200, |rng| {
        let c: Vec<f64> = SIZES
            .iter()
            .map(|l| {
                let v = 3.0 * l.powf(-1.5);
                v + Normal::new(0.0, 0.01 * v).unwrap().sample(rng)
            })
            .collect();
        let f = fit_correlation_exponent(&SIZES, &c).unwrap();
        (f.power.get("p") - 1.5).abs() <= 2.0 * f.power.stderr("p")
    });
    assert!(frac >= 0.9, "coverage {frac}");
}

proptest! {
    #[test]
    fn power_law_fit_recovers_any_generator(a in 0.01f64..10.0, b in -1.0f64..1.0) {
        let s: Vec<f64> = SIZES.iter().map(|l| a * l.powf(b)).collect();
        let f = fit_power_law(&SIZES, &s, None).unwrap();
        prop_assert!(close(f.get("a"), a, 1e-6) && (f.get("b") - b).abs() < 1e-6);
    }

    #[test]
    fn pade_first_order_recovers_any_asymptote(a0 in 0.1f64..2.0, a1 in 0.1f64..2.0, b1 in 0.05f64..2.0) {
        let sizes: Vec<f64> = (1..=8).map(|k| 0.5 * k as f64).collect();
        let s: Vec<f64> = sizes.iter().map(|x| (a0 + a1 * x) / (1.0 + b1 * x)).collect();
        let f = pade_fit(&sizes, &s, 1).unwrap();
        prop_assert!(close(f.asymptote, a1 / b1, 1e-6));
    }

    #[test]
    fn crossing_of_random_lines(c in 0.6f64..1.4, m1 in 0.1f64..2.0, m2 in -2.0f64..-0.1) {
        let d = lines(&[(10, m1), (20, m2)], c);
        prop_assert!((crossing_point(&d).unwrap().fit.get("critical") - c).abs() < 1e-10);
    }
}
