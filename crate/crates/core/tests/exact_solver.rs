use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdness::exact::{product_measure, relative_entropy, total_variation, ExactModel, Part};
use rdness::theory::ModelParams;

fn model(lambda: f64) -> ExactModel {
    ExactModel::new(ModelParams::new(1.0, 1.0, lambda, 1, 4).unwrap()).unwrap()
}

#[test]
fn stationary_law_is_a_probability_vector_annihilated_by_the_generator() {
    let m = model(0.5);
    let s = m.stationary().unwrap();
    assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(s.pi.iter().all(|&p| p > 0.0));
    assert!(s.residual < 1e-12);
}

#[test]
fn interaction_moves_the_law_off_the_product_measure() {
    let m = model(1.0);
    let pi = m.stationary().unwrap().pi;
    assert!(total_variation(&pi, m.reference()) > 1e-6);
    let m0 = model(0.0);
    let pi0 = m0.stationary().unwrap().pi;
    assert!(total_variation(&pi0, &product_measure(4, 0.5)) < 1e-10);
}

#[test]
fn exchange_part_is_reversible_for_every_product_measure() {
    let m = model(0.7);
    for rho in [0.2, 0.5, 0.8] {
        assert!(m.reversibility_defect(&product_measure(4, rho), Part::Exchange) < 1e-12);
    }
}

#[test]
fn evolved_law_approaches_stationarity() {
    let m = model(0.3);
    let pi = m.stationary().unwrap().pi;
    let mut mu0 = vec![0.0; m.states()];
    mu0[0] = 1.0;
    let early = relative_entropy(&m.evolve(&mu0, 0.5), &pi);
    let late = relative_entropy(&m.evolve(&mu0, 5.0), &pi);
    assert!(late < early && late < 1e-6, "{early} {late}");
}

#[test]
fn log_sobolev_holds_on_random_densities() {
    let m = model(0.3);
    let r = m.log_sobolev_check(500, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(r.violations, 0);
}

#[test]
fn too_many_sites_is_an_error() {
    assert!(ExactModel::new(ModelParams::new(1.0, 1.0, 0.1, 1, 13).unwrap()).is_err());
}
