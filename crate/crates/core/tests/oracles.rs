//! Cross-checks against nalgebra and direct sums.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rplab::linalg::{singular_values, spectral_norm, HermitianEigen};
use rplab::rp_check::compressed_matrix;
use rplab::{AxisSpec, CMatrix, FourierMultiplier, LatticeField, MultiplierSpec, RPCondition, SpacetimeGrid};

fn to_nalgebra(a: &CMatrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenvalues of a Hermitian matrix via the real symmetric embedding
/// `[[Re, −Im], [Im, Re]]`, whose spectrum is that of `H` twice over.
fn reference_eigenvalues(h: &CMatrix) -> Vec<f64> {
    let n = h.nrows();
    let herm = h.hermitian_part();
    let big = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = herm[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let mut ev: Vec<f64> = big.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev.into_iter().step_by(2).collect()
}

fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

#[test]
fn eigenvalues_match_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1usize, 2, 5, 17, 40] {
        let a = random_matrix(n, &mut rng);
        let ours = HermitianEigen::new(&a);
        let theirs = reference_eigenvalues(&a);
        let scale = ours.spectral_radius().max(1.0);
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() <= 1e-12 * scale, "n={n}: {x} vs {y}");
        }
    }
}

#[test]
fn compressed_spectrum_matches_nalgebra() {
    let g = SpacetimeGrid::new(vec![AxisSpec::line(8, 0.5), AxisSpec::line(6, 0.5)]).unwrap();
    for spec in [
        MultiplierSpec::FreeField { mass: 1.0 },
        MultiplierSpec::BoostedFreeField { mass: 1.0, velocity: 0.6 },
        MultiplierSpec::PowerCovariance { mass: 1.0, power: 2.0 },
    ] {
        let d = FourierMultiplier::sample(spec, &g).unwrap().kernel().unwrap();
        let a = compressed_matrix(RPCondition::TimeRP, &d).unwrap();
        let ours = HermitianEigen::new(&a);
        let theirs = reference_eigenvalues(&a);
        let scale = ours.spectral_radius();
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn singular_values_match_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in [3usize, 9, 24] {
        let a = random_matrix(n, &mut rng);
        let mut theirs: Vec<f64> = to_nalgebra(&a).singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let ours = singular_values(&a);
        let top = *theirs.last().unwrap();
        assert!((spectral_norm(&a) - top).abs() <= 1e-12 * top);
        for (x, y) in ours.iter().zip(&theirs) {
            // Singular values from AᴴA lose half the digits near zero.
            assert!((x - y).abs() <= 1e-7 * top, "{x} vs {y}");
        }
    }
}

#[test]
fn products_match_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_matrix(7, &mut rng);
    let b = random_matrix(7, &mut rng);
    let ours = &a * &b;
    let theirs = to_nalgebra(&a) * to_nalgebra(&b);
    for i in 0..7 {
        for j in 0..7 {
            assert!((ours[(i, j)] - theirs[(i, j)]).norm() < 1e-13);
        }
    }
}

#[test]
fn circle_kernel_is_inverse_fourier_sum() {
    let g = SpacetimeGrid::new(vec![AxisSpec::circle(6, 3.0), AxisSpec::circle(4, 2.0)]).unwrap();
    // Explicit symbols are used as sampled, without summing time aliases.
    let spec = MultiplierSpec::symbol(|k: &[f64]| {
        let s = k[0] * k[0] + k[1] * k[1] + 0.5;
        Complex64::new(1.0 / s, 0.2 * k[0] * k[1] / (s * s))
    });
    let m = FourierMultiplier::sample(spec, &g).unwrap();
    let d = m.operator().unwrap();
    let vol = g.volume();
    for x in 0..g.total_sites() {
        for y in 0..g.total_sites() {
            let (cx, cy) = (g.coords(x), g.coords(y));
            let mut sum = Complex64::new(0.0, 0.0);
            for k in 0..g.total_sites() {
                let p = g.momentum(k);
                let phase: f64 = p.iter().zip(cx.iter().zip(&cy)).map(|(k, (a, b))| k * (a - b)).sum();
                sum += m.values()[k] * Complex64::from_polar(1.0, phase);
            }
            sum /= vol;
            assert!((d.entry(x, y) - sum).norm() < 1e-13, "({x},{y})");
        }
    }
}

#[test]
fn dft_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let g = SpacetimeGrid::new(vec![AxisSpec::line(6, 0.3), AxisSpec::circle(8, 2.0)]).unwrap();
    let vals: Vec<Complex64> = (0..g.total_sites())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let f = LatticeField::new(&g, vals).unwrap();
    let ft = g.dft(&f).unwrap();
    let norm = (g.total_sites() as f64).sqrt();
    for k in 0..g.total_sites() {
        let p = g.momentum(k);
        let mut sum = Complex64::new(0.0, 0.0);
        for x in 0..g.total_sites() {
            let phase: f64 = p.iter().zip(g.coords(x)).map(|(k, c)| k * c).sum();
            sum += f.values()[x] * Complex64::from_polar(1.0, -phase);
        }
        assert!((ft.values()[k] - sum / norm).norm() < 1e-12);
    }
}

#[test]
fn apply_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let g = SpacetimeGrid::new(vec![AxisSpec::line(6, 0.5), AxisSpec::line(4, 0.5)]).unwrap();
    let d = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.2 }, &g)
        .unwrap()
        .kernel()
        .unwrap();
    let vals: Vec<Complex64> = (0..g.total_sites())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let f = LatticeField::new(&g, vals.clone()).unwrap();
    let ours = d.apply(&f).unwrap();
    let theirs = to_nalgebra(&d.dense()) * nalgebra::DVector::from_vec(vals) * Complex64::new(g.cell_volume(), 0.0);
    for (a, b) in ours.values().iter().zip(theirs.iter()) {
        assert!((a - b).norm() < 1e-13);
    }
}
