use std::f64::consts::PI;

use rdness::pde::{solve_hydro, DensityProfile};
use rdness::spde::{evolve_ou, ou_stationary_variance, sample_stationary};
use rdness::theory::ModelParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn hydrodynamic_solution_relaxes_to_the_stable_density() {
    let p = ModelParams::new(1.0, 1.0, 0.2, 1, 64).unwrap();
    let u0 = DensityProfile::from_fn(64, 1, |x| 0.5 + 0.3 * (2.0 * PI * x[0]).sin()).unwrap();
    let traj = solve_hydro(&u0, &[0.0, 10.0], &p, 1e-3).unwrap();
    let last = traj.profiles.last().unwrap();
    last.check_range().unwrap();
    let rho = p.rho_star();
    assert!(last.values.iter().all(|u| (u - rho).abs() < 1e-3));
}

#[test]
fn stationary_ou_field_keeps_its_variance() {
    let p = ModelParams::new(1.0, 1.0, 0.3, 1, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = vec![2i64];
    let samples = 20_000;
    let mut acc = 0.0;
    for _ in 0..samples {
        let x = sample_stationary(&p, 2, &mut rng).unwrap();
        let y = evolve_ou(&x, 0.05, &p, &mut rng).unwrap();
        acc += y.coefficient(&k).unwrap().norm_sqr();
    }
    let v = acc / samples as f64;
    let theory = ou_stationary_variance(&p, 4.0);
    assert!((v - theory).abs() < 0.05 * theory, "{v} vs {theory}");
}
