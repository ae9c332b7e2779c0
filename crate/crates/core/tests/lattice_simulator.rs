use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rdness::lattice::{read_snapshot, write_snapshot, ParticleConfig, Torus};
use rdness::simulate::{run, Engine, Event, InitialCondition, SimConfig};
use rdness::theory::ModelParams;

#[test]
fn snapshot_round_trip_is_bit_exact() {
    let t = Torus::new(9, 2).unwrap();
    let eta = ParticleConfig::bernoulli(t, 0.37, &mut ChaCha8Rng::seed_from_u64(3));
    let mut buf = Vec::new();
    write_snapshot(&mut buf, &eta, 1.25).unwrap();
    let (back, time) = read_snapshot(buf.as_slice()).unwrap();
    assert_eq!(back, eta);
    assert_eq!(time, 1.25);
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let p = ModelParams::new(1.0, 1.0, 0.4, 1, 32).unwrap();
    let eta = ParticleConfig::bernoulli(Torus::new(32, 1).unwrap(), 0.5, &mut ChaCha8Rng::seed_from_u64(1));
    // stopping at 0.01 splits the exchange draw, so the reference stops there too
    let mut straight = Engine::new(p, eta.clone(), 7, 0).unwrap();
    straight.advance_to(0.01);
    straight.advance_to(0.02);
    let mut resumed = Engine::new(p, eta, 7, 0).unwrap();
    resumed.advance_to(0.01);
    let mut buf = Vec::new();
    resumed.write_checkpoint(&mut buf).unwrap();
    let mut resumed = Engine::read_checkpoint(buf.as_slice()).unwrap();
    resumed.advance_to(0.02);
    assert_eq!(straight.config(), resumed.config());
    assert_eq!(straight.counts(), resumed.counts());
}

#[test]
fn exchanges_conserve_and_flips_change_particle_number() {
    let p = ModelParams::new(1.0, 1.0, 0.2, 2, 8).unwrap();
    let eta = ParticleConfig::bernoulli(Torus::new(8, 2).unwrap(), 0.5, &mut ChaCha8Rng::seed_from_u64(2));
    let mut e = Engine::new(p, eta, 11, 0).unwrap();
    let mut last = e.config().count() as i64;
    for _ in 0..20_000 {
        let (ev, _) = e.step();
        let now = e.config().count() as i64;
        match ev {
            Event::Exchange { .. } | Event::Rejected { .. } => assert_eq!(now, last),
            Event::Flip { .. } => assert_eq!((now - last).abs(), 1),
        }
        last = now;
    }
}

#[test]
fn no_interaction_density_relaxes_to_a_over_a_plus_b() {
    let p = ModelParams::new(1.0, 2.0, 0.0, 1, 8).unwrap();
    let mut cfg = SimConfig::new(p, 5, 0.5, 2000.0, 4);
    cfg.init = InitialCondition::Bernoulli(0.9);
    let streams = run(&cfg).unwrap();
    let means: Vec<f64> = streams.iter().map(|s| s.density.iter().sum::<f64>() / s.density.len() as f64).collect();
    let m = means.iter().sum::<f64>() / means.len() as f64;
    let se = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (means.len() * (means.len() - 1)) as f64).sqrt();
    assert!((m - 1.0 / 3.0).abs() < 4.0 * se.max(1e-3), "mean {m} se {se}");
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let p = ModelParams::new(1.0, 1.0, 0.3, 1, 64).unwrap();
    let mut cfg = SimConfig::new(p, 42, 0.1, 1.0, 2);
    cfg.burn_in = 0.5;
    assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
}
