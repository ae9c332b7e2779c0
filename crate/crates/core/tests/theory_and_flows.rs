use rdness::flows::{build_flow, divergence_formula_check, energy_scaling, min_energy, source_minus_kernel};
use rdness::theory::{chi, gaussian_entropy_sum, ModelParams, TheoryCard};

#[test]
fn stable_density_is_a_zero_with_negative_slope() {
    for (a, b, l) in [(1.0, 1.0, 0.5), (2.0, 1.0, -0.5), (0.3, 1.7, 1.5)] {
        let p = ModelParams::new(a, b, l, 1, 16).unwrap();
        let s = p.stationary();
        assert!(p.f(s.rho).unwrap().abs() < 1e-14);
        assert!(s.f_prime < 0.0);
    }
    let p = ModelParams::new(1.0, 1.0, 0.5, 1, 16).unwrap();
    assert!((p.rho_star() - (17f64.sqrt() - 3.0) / 2.0).abs() < 1e-14);
}

#[test]
fn spectrum_tends_to_mobility_at_high_frequency() {
    let p = ModelParams::new(1.0, 1.0, 0.4, 1, 64).unwrap();
    let c = chi(p.rho_star());
    let far = p.spectrum(&[10_000]).unwrap().variance;
    assert!((far - c).abs() < 1e-6);
    assert!(p.spectrum(&[1]).unwrap().variance > c);
}

#[test]
fn theory_card_lists_every_mode_up_to_cutoff() {
    let card = TheoryCard::new(&ModelParams::new(1.0, 1.0, 0.2, 1, 64).unwrap(), 8).unwrap();
    assert_eq!(card.spectrum.len(), 9);
    assert!(card.to_csv().lines().count() >= 10);
}

#[test]
fn entropy_sum_is_zero_without_interaction() {
    let p = ModelParams::new(1.0, 3.0, 0.0, 2, 64).unwrap();
    assert_eq!(gaussian_entropy_sum(&p, 20), 0.0);
}

#[test]
fn multiscale_flow_has_the_prescribed_divergence() {
    let f = build_flow(4, 16, 2).unwrap();
    let diff = source_minus_kernel(&f.torus(), 4).unwrap();
    let mut p = vec![0.0; diff.len()];
    p[0] = 1.0;
    let q: Vec<f64> = p.iter().zip(&diff).map(|(a, b)| a - b).collect();
    let g: Vec<f64> = (0..diff.len()).map(|x| ((x * 7919) % 101) as f64 / 101.0).collect();
    assert!(divergence_formula_check(&f, &p, &q, &g));
    assert!(f.energy() >= min_energy(4, 2) - 1e-12);
}

#[test]
fn flow_energy_scales_like_g_d() {
    let s = energy_scaling(&[2, 4, 8], 2).unwrap();
    assert!(s.ratio_spread < 10.0);
    assert!(s.rows.iter().all(|r| r.divergence_residual < 1e-12));
}
