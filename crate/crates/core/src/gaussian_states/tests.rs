use nalgebra::DMatrix;
use proptest::prelude::*;

use super::*;

/// `exp(σ·M)` with symmetric `M` is symplectic.
pub(crate) fn symplectic_from_generator(generator: &DMatrix<f64>) -> DMatrix<f64> {
    let n = generator.nrows() / 2;
    let mut sym = generator.clone();
    symmetrize(&mut sym);
    (symplectic_form(n) * sym).exp()
}

fn two_mode_squeezed(r: f64) -> CovarianceState {
    // x₁,x₂,p₁,p₂ layout
    let c = (2.0 * r).cosh() / 2.0;
    let s = (2.0 * r).sinh() / 2.0;
    let m = DMatrix::from_row_slice(
        4,
        4,
        &[c, s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, -s, c],
    );
    CovarianceState::new(m, 0.0).unwrap()
}

fn single_mode(kappa: f64) -> CovarianceState {
    CovarianceState::new(DMatrix::identity(2, 2) * kappa, 0.0).unwrap()
}

/// `-Σ p_n ln p_n` of the thermal state with mean occupation `κ − 1/2`.
fn fock_entropy(kappa: f64, cutoff: usize) -> f64 {
    let ratio = (kappa - 0.5) / (kappa + 0.5);
    let norm = 1.0 / (kappa + 0.5);
    let mut s = 0.0;
    let mut p = norm;
    for _ in 0..cutoff {
        if p > 0.0 {
            s -= p * p.ln();
        }
        p *= ratio;
    }
    s
}

#[test]
fn vacuum_properties() {
    let v = vacuum_state(1);
    assert_eq!(v.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    assert_eq!(v.time, 0.0);
    let v = vacuum_state(6);
    let spec = symplectic_spectrum(v.matrix()).unwrap();
    assert!(spec.eigenvalues.iter().all(|k| (k - 0.5).abs() < 1e-14));
    let region = Region::new(vec![1, 4], 6).unwrap();
    let s = entanglement_entropy(&v, &region).unwrap();
    assert!(s.abs() < 1e-13, "{s}");
    assert_eq!(reduce(&v, &region).unwrap().matrix(), &(DMatrix::identity(4, 4) * 0.5));
}

#[test]
fn single_mode_spectrum_closed_form() {
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
    let spec = symplectic_spectrum(&m).unwrap();
    assert!((spec.eigenvalues[0] - 1.0).abs() < 1e-14);
    let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.7]);
    assert!((symplectic_spectrum(&m).unwrap().eigenvalues[0] - (2.1f64).sqrt()).abs() < 1e-14);
}

#[test]
fn spectrum_of_constructed_state() {
    // Γ = SᵀDS with a fixed symplectic S
    let gen = DMatrix::from_fn(4, 4, |i, j| 0.3 * ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.1);
    let s = symplectic_from_generator(&gen);
    let sigma = symplectic_form(2);
    assert!((s.transpose() * &sigma * &s - &sigma).norm() < 1e-12);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.7, 1.3, 0.7, 1.3]));
    let g = s.transpose() * d * &s;
    let spec = symplectic_spectrum(&g).unwrap();
    assert!((spec.eigenvalues[0] - 1.3).abs() < 1e-10);
    assert!((spec.eigenvalues[1] - 0.7).abs() < 1e-10);
}

#[test]
fn spectrum_rejects_indefinite_input() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    assert!(matches!(symplectic_spectrum(&m), Err(Error::NotPositiveDefinite)));
}

#[test]
fn reduce_bookkeeping() {
    let st = two_mode_squeezed(0.4);
    let full = Region::contiguous(0, 2, 2).unwrap();
    assert_eq!(reduce(&st, &full).unwrap().matrix(), st.matrix());
    let one = reduce(&st, &Region::new(vec![0], 2).unwrap()).unwrap();
    let c = (0.8f64).cosh() / 2.0;
    assert_eq!(one.matrix(), &DMatrix::from_row_slice(2, 2, &[c, 0.0, 0.0, c]));
    assert!(Region::new(vec![], 2).is_err());
    assert!(Region::new(vec![0, 0], 2).is_err());
    assert!(Region::new(vec![2], 2).is_err());
}

#[test]
fn entropy_closed_forms() {
    assert!((entropy_from_spectrum(&SymplecticSpectrum { eigenvalues: vec![1.5] }) - 2.0 * 2f64.ln()).abs() < 1e-14);
    let st = two_mode_squeezed(1.0);
    let s = entanglement_entropy(&st, &Region::new(vec![0], 2).unwrap()).unwrap();
    // frozen from the truncated Fock sum at κ = cosh(2)/2
    let kappa = 2f64.cosh() / 2.0;
    let oracle = fock_entropy(kappa, 200);
    // n̄ = sinh²(1): (n̄+1)ln(n̄+1) − n̄ ln n̄
    assert!((oracle - 1.619822).abs() < 5e-6, "oracle {oracle}");
    assert!((s - oracle).abs() < 1e-9);
}

#[test]
fn entropy_matches_fock_sum() {
    for i in 0..=45 {
        let kappa = 0.5 + 0.1 * i as f64;
        // cutoff large enough that the geometric tail is below 1e-12
        let s = entanglement_entropy(&single_mode(kappa), &Region::new(vec![0], 1).unwrap()).unwrap();
        assert!((s - fock_entropy(kappa, 2000)).abs() < 1e-6, "kappa {kappa}");
    }
}

#[test]
fn mutual_information_cases() {
    let v = vacuum_state(4);
    let b = Region::new(vec![0], 4).unwrap();
    let c = Region::new(vec![3], 4).unwrap();
    assert!(mutual_information(&v, &b, &c).unwrap().abs() < 1e-14);
    // two independently squeezed modes
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.2, 1.1, 1.25, 0.5 * 0.5 / 1.1]));
    let prod = CovarianceState::new(m, 0.0).unwrap();
    let b = Region::new(vec![0], 2).unwrap();
    let c = Region::new(vec![1], 2).unwrap();
    assert!(mutual_information(&prod, &b, &c).unwrap().abs() < 1e-12);
    let tms = two_mode_squeezed(0.8);
    let sb = entanglement_entropy(&tms, &b).unwrap();
    assert!((mutual_information(&tms, &b, &c).unwrap() - 2.0 * sb).abs() < 1e-10);
    assert!(mutual_information(&tms, &b, &b).is_err());
}

#[test]
fn negativity_cases() {
    let v = vacuum_state(3);
    assert!(log_negativity(&v, &Region::new(vec![0], 3).unwrap()).unwrap().abs() < 1e-14);
    for r in [0.1, 0.5, 1.0, 1.7] {
        let st = two_mode_squeezed(r);
        let n1 = log_negativity(&st, &Region::new(vec![0], 2).unwrap()).unwrap();
        let n2 = log_negativity(&st, &Region::new(vec![1], 2).unwrap()).unwrap();
        assert!((n1 - 2.0 * r).abs() < 1e-9, "r = {r}: {n1}");
        assert!((n1 - n2).abs() < 1e-9);
    }
    let noisy = CovarianceState::new(DMatrix::identity(6, 6) * 0.9, 0.0).unwrap();
    assert_eq!(log_negativity(&noisy, &Region::new(vec![0, 1], 3).unwrap()).unwrap(), 0.0);
}

#[test]
fn uncertainty_checks() {
    let ok = check_uncertainty(&vacuum_state(3));
    assert!(ok.satisfied);
    assert!((ok.min_eigenvalue - 0.5).abs() < 1e-14);
    let bad = check_uncertainty(&scaled_identity_state(2, 0.25));
    assert!(!bad.satisfied);
    assert!((bad.min_eigenvalue - 0.25).abs() < 1e-14);
}

#[test]
fn matrix_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = DMatrix::from_fn(3, 5, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0) - 0.1);
    let p = dir.path().join("m.txt");
    write_matrix_text(&p, &m).unwrap();
    assert_eq!(read_matrix_text(&p).unwrap(), m);
    let p = dir.path().join("m.bin");
    write_matrix_binary(&p, &m).unwrap();
    assert_eq!(read_matrix_binary(&p).unwrap(), m);
    let st = CovarianceState::new(two_mode_squeezed(0.3).into_matrix(), 12.5).unwrap();
    let p = dir.path().join("ck.bin");
    write_checkpoint(&p, &st).unwrap();
    assert_eq!(read_checkpoint(&p).unwrap(), st);
    assert!(read_matrix_binary(&p).is_err());
}

fn random_state(seed_gen: &[f64], n: usize, kappas: &[f64]) -> DMatrix<f64> {
    let gen = DMatrix::from_fn(2 * n, 2 * n, |i, j| seed_gen[(i * 2 * n + j) % seed_gen.len()]);
    let s = symplectic_from_generator(&gen);
    let mut d = Vec::with_capacity(2 * n);
    d.extend_from_slice(&kappas[..n]);
    d.extend_from_slice(&kappas[..n]);
    s.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * &s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symplectic_invariance(
        gen_a in proptest::collection::vec(-0.25f64..0.25, 36),
        gen_b in proptest::collection::vec(-0.25f64..0.25, 36),
        kappas in proptest::collection::vec(0.5f64..3.0, 3),
    ) {
        let g = random_state(&gen_a, 3, &kappas);
        let gen = DMatrix::from_fn(6, 6, |i, j| gen_b[i * 6 + j]);
        let s = symplectic_from_generator(&gen);
        let moved = s.transpose() * &g * &s;
        let a = symplectic_spectrum(&g).unwrap();
        let b = symplectic_spectrum(&moved).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(b.eigenvalues.iter()) {
            prop_assert!((x - y).abs() < 1e-8 * x.max(1.0));
        }
    }

    #[test]
    fn pure_state_balance(
        gen in proptest::collection::vec(-0.3f64..0.3, 64),
        cut in 1usize..4,
    ) {
        let g = random_state(&gen, 4, &[0.5, 0.5, 0.5, 0.5]);
        let st = CovarianceState::new(g, 0.0).unwrap();
        let a = Region::contiguous(0, cut, 4).unwrap();
        let b = a.complement(4).unwrap();
        let sa = entanglement_entropy(&st, &a).unwrap();
        let sb = entanglement_entropy(&st, &b).unwrap();
        prop_assert!((sa - sb).abs() < 1e-5);
        let na = log_negativity(&st, &a).unwrap();
        let nb = log_negativity(&st, &b).unwrap();
        prop_assert!((na - nb).abs() < 1e-6);
    }

    #[test]
    fn block_additivity(
        gen_a in proptest::collection::vec(-0.3f64..0.3, 16),
        gen_b in proptest::collection::vec(-0.3f64..0.3, 16),
        ka in proptest::collection::vec(0.5f64..2.0, 2),
        kb in proptest::collection::vec(0.5f64..2.0, 2),
    ) {
        // interleave two independent 2-mode states into a 4-mode block-diagonal Γ
        let ga = random_state(&gen_a, 2, &ka);
        let gb = random_state(&gen_b, 2, &kb);
        let modes_a = [0usize, 2];
        let modes_b = [1usize, 3];
        let mut g = DMatrix::zeros(8, 8);
        let place = |g: &mut DMatrix<f64>, src: &DMatrix<f64>, modes: &[usize; 2]| {
            let idx = [modes[0], modes[1], modes[0] + 4, modes[1] + 4];
            for a in 0..4 { for b in 0..4 { g[(idx[a], idx[b])] = src[(a, b)]; } }
        };
        place(&mut g, &ga, &modes_a);
        place(&mut g, &gb, &modes_b);
        let st = CovarianceState::new(g, 0.0).unwrap();
        let ra = Region::new(modes_a.to_vec(), 4).unwrap();
        let rb = Region::new(modes_b.to_vec(), 4).unwrap();
        let u = Region::new(vec![0, 1, 2, 3], 4).unwrap();
        let total = entanglement_entropy(&st, &u).unwrap();
        let parts = entanglement_entropy(&st, &ra).unwrap() + entanglement_entropy(&st, &rb).unwrap();
        prop_assert!((total - parts).abs() < 1e-9);
    }
}
