use rplab::grid::{AxisSpec, SpacetimeGrid};
use rplab::multiplier::{FourierMultiplier, MultiplierSpec};
use rplab::rp_check::check;
use rplab::{RPCondition, Verdict};

#[test]
fn free_field_pipeline_in_f32() {
    let g = SpacetimeGrid::<f32>::new(vec![AxisSpec::line(8, 0.5f32), AxisSpec::line(8, 0.5)]).unwrap();
    let good = FourierMultiplier::sample(MultiplierSpec::FreeField { mass: 1.0f32 }, &g)
        .unwrap()
        .kernel()
        .unwrap();
    assert_eq!(check(RPCondition::TimeRP, &good, 1e-4).unwrap().verdict, Verdict::Pass);
    let bad = FourierMultiplier::sample(MultiplierSpec::PowerCovariance { mass: 1.0f32, power: 2.0 }, &g)
        .unwrap()
        .kernel()
        .unwrap();
    let r = check(RPCondition::TimeRP, &bad, 1e-4).unwrap();
    assert_eq!(r.verdict, Verdict::Fail);
    assert!(r.witness.unwrap().value.re < 0.0);
}
