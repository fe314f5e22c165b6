use num_complex::Complex64;
use proptest::prelude::*;

use rplab::charged::{charge_conjugate, charged_characteristic, charge_conjugation_matrix};
use rplab::compactify::periodize;
use rplab::gaussian::{characteristic, characteristic_series, moment, pairing_oracle, schwinger};
use rplab::grid::HalfSpace;
use rplab::linalg::HermitianEigen;
use rplab::measures::{decompose, yngvason_from_values};
use rplab::quantize::os_gram;
use rplab::rp_check::{check, check_equivalence_vi2};
use rplab::{
    AxisSpec, CMatrix, ChargedCovariance, ChargedTestFunction, CovarianceOperator, FourierMultiplier, LatticeField,
    MultiplierSpec, RPCondition, SpacetimeGrid, Verdict,
};

fn cplx() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

fn field_on(g: SpacetimeGrid) -> impl Strategy<Value = LatticeField> {
    prop::collection::vec(cplx(), g.total_sites()).prop_map(move |v| LatticeField::new(&g, v).unwrap())
}

fn small_grid() -> impl Strategy<Value = SpacetimeGrid> {
    let axis = (1usize..4, 0.2..0.8f64, any::<bool>()).prop_map(|(h, a, circle)| {
        if circle {
            AxisSpec::circle(2 * h, 2.0 * h as f64 * a)
        } else {
            AxisSpec::line(2 * h, a)
        }
    });
    prop::collection::vec(axis, 1..3).prop_map(|axes| SpacetimeGrid::new(axes).unwrap())
}

fn free(g: &SpacetimeGrid, mass: f64) -> CovarianceOperator {
    FourierMultiplier::sample(MultiplierSpec::FreeField { mass }, g)
        .unwrap()
        .kernel()
        .unwrap()
}

fn boosted(g: &SpacetimeGrid, mass: f64, velocity: f64) -> CovarianceOperator {
    FourierMultiplier::sample(MultiplierSpec::BoostedFreeField { mass, velocity }, g)
        .unwrap()
        .kernel()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reflections_are_fixed_point_free_involutions(g in small_grid()) {
        for j in 0..g.dim() {
            let p = g.reflect(j).unwrap();
            for s in 0..g.total_sites() {
                prop_assert_eq!(p[p[s]], s);
                prop_assert_ne!(p[s], s);
            }
            let pos = g.halfspace(j, HalfSpace::Positive).unwrap();
            prop_assert_eq!(pos.len() * 2, g.total_sites());
        }
    }

    #[test]
    fn dft_is_unitary((g, f) in small_grid().prop_flat_map(|g| (Just(g.clone()), field_on(g)))) {
        let ft = g.dft(&f).unwrap();
        prop_assert!((ft.norm() - f.norm()).abs() <= 1e-12 * f.norm().max(1.0));
        let back = g.idft(&ft).unwrap();
        prop_assert!(back.sub(&f).unwrap().norm() <= 1e-12 * f.norm().max(1.0));
    }

    #[test]
    fn kernels_are_symmetric_and_reflection_covariant(
        g in small_grid(),
        mass in 0.3..3.0f64,
        v in -0.9..0.9f64,
    ) {
        let d = free(&g, mass);
        prop_assert!(d.symmetry_defect() <= 1e-12);
        for j in 0..g.dim() {
            prop_assert!(d.reflection_covariance_defect(j).unwrap() <= 1e-12);
        }
        if g.dim() >= 2 {
            let b = boosted(&g, mass, v);
            prop_assert!(b.symmetry_defect() <= 1e-12);
            prop_assert!(b.reflection_covariance_defect(0).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn free_field_reflected_form_is_nonnegative(
        mass in 0.5..2.0f64,
        vals in prop::collection::vec(cplx(), 16),
    ) {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(8, 0.4), AxisSpec::line(4, 0.4)]).unwrap();
        let d = free(&g, mass);
        let mut f = LatticeField::zeros(&g);
        for (s, v) in g.halfspace(0, HalfSpace::Positive).unwrap().into_iter().zip(vals) {
            f.values_mut()[s] = v;
        }
        let q = d.reflected_sesquilinear(0, &f, &f).unwrap();
        let scale = d.sesquilinear(&f, &f).unwrap().norm();
        prop_assert!(q.re >= -1e-12 * scale.max(1e-300));
        prop_assert!(q.im.abs() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn recursion_matches_oracle(
        pts in prop::collection::vec(0usize..24, 0..9),
        mass in 0.5..2.0f64,
        v in -0.8..0.8f64,
    ) {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(6, 0.5), AxisSpec::circle(4, 2.0)]).unwrap();
        let d = boosted(&g, mass, v);
        let a = schwinger(&d, &pts).unwrap().value;
        let b = pairing_oracle(&d, &pts).unwrap().value;
        if pts.len() % 2 == 1 {
            prop_assert_eq!(a, Complex64::new(0.0, 0.0));
        }
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(b.norm()).max(1e-300));
    }

    #[test]
    fn series_sums_to_characteristic(f in field_on(SpacetimeGrid::new(vec![AxisSpec::line(6, 0.5)]).unwrap())) {
        let g = f.grid().clone();
        let d = free(&g, 1.0);
        let s = characteristic(&d, &f).unwrap();
        let sums = characteristic_series(&d, &f, 60).unwrap();
        prop_assert!((sums[60] - s).norm() <= 1e-10 * s.norm().max(1.0));
        prop_assert_eq!(moment(&d, &f, 3).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn charge_conjugation_is_an_involution(
        (fp, fm) in {
            let g = SpacetimeGrid::new(vec![AxisSpec::line(4, 0.5), AxisSpec::line(2, 0.5)]).unwrap();
            (field_on(g.clone()), field_on(g))
        },
    ) {
        let g = fp.grid().clone();
        let f = ChargedTestFunction::new(fp, fm).unwrap();
        prop_assert_eq!(charge_conjugate(&charge_conjugate(&f)), f.clone());
        let c = charge_conjugation_matrix::<f64>(g.total_sites());
        prop_assert_eq!(&c * &c, CMatrix::identity(2 * g.total_sites()));
        let cov = ChargedCovariance::from_spec(MultiplierSpec::BoostedFreeField { mass: 1.0, velocity: 0.3 }, &g).unwrap();
        let cc = charged_characteristic(&cov, &f).unwrap();
        prop_assert!(cc.consistent);
        let big = cov.block_matrix();
        prop_assert!((&big - &big.transpose()).max_abs() <= 1e-14 * big.max_abs());
    }

    #[test]
    fn periodization_keeps_symmetry_and_periodicity(mass in 0.8..3.0f64, steps in 1usize..4) {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(48, 0.25)]).unwrap();
        let d = free(&g, mass);
        let period = 0.5 * steps as f64 * 2.0;
        let r = periodize(&d, 0, period, 1e-12).unwrap();
        let dc = &r.covariance;
        let p = (period / 0.25).round() as isize;
        prop_assert!(r.images_used % 2 == 1);
        prop_assert!(dc.symmetry_defect() <= 1e-12);
        prop_assert!(dc.reflection_covariance_defect(0).unwrap() <= d.reflection_covariance_defect(0).unwrap() + 1e-12);
        for s in -p..p {
            prop_assert_eq!(dc.kernel_at(&[s]), dc.kernel_at(&[s + p]));
        }
    }

    #[test]
    fn z_is_at_least_one(
        kl in prop::collection::vec((0.01..10.0f64, -10.0..10.0f64), 1..40),
    ) {
        let (k, l): (Vec<f64>, Vec<f64>) = kl.into_iter().unzip();
        let r = yngvason_from_values(&k, &l).unwrap();
        prop_assert!(r.z_final >= 1.0 - 1e-12);
        prop_assert!(r.z_partial.windows(2).all(|w| w[1] >= w[0]));
        let m = decompose(&k, &l).unwrap();
        prop_assert!(m.identity_defect <= 1e-12);
        prop_assert!(m.g_tilde.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn forward_and_backward_rp_agree(mass in 0.5..2.0f64, power in 0.6..2.5f64) {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(8, 0.5)]).unwrap();
        let d = FourierMultiplier::sample(MultiplierSpec::PowerCovariance { mass, power }, &g)
            .unwrap()
            .kernel()
            .unwrap();
        let r = check_equivalence_vi2(&d, 0, 1e-10).unwrap();
        prop_assert!(r.agree);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn os_gram_is_hermitian_and_psd(mass in 0.5..2.0f64, block in 0usize..8) {
        let g = SpacetimeGrid::new(vec![AxisSpec::line(16, 0.25), AxisSpec::circle(8, 2.0)]).unwrap();
        let d = free(&g, mass);
        let gram = os_gram(&d, block).unwrap();
        prop_assert!(gram.hermiticity_defect() <= 1e-10);
        let eig = HermitianEigen::new(&gram);
        prop_assert!(eig.min() >= -1e-10 * eig.spectral_radius());
        prop_assert_eq!(check(RPCondition::TimeRP, &d, 1e-10).unwrap().verdict, Verdict::Pass);
    }
}
