mod common;

use std::f64::consts::LN_2;

use gremlab::chains::{enumerate_chains, Chain};
use gremlab::parisi::{global_parisi_min, minimize_parisi};
use gremlab::report::{run_verify, VerifyConfig};
use gremlab::sim::{count_in_ball, draw_symbol, free_energy_chain, free_energy_exact, DisorderKey};
use gremlab::variational::solve_gibbs;
use gremlab::{ModelSpec, SubsetId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn rem_annealed() -> f64 {
    ((1.0 + 1f64.exp()) / 2.0).ln()
}

#[test]
fn enumeration_matches_naive_loop_single_species() {
    let spec = rem();
    for seed in [0, 1, 42] {
        let fast = free_energy_exact(&spec, 8, seed).unwrap().free_energy;
        let slow = naive_free_energy(&spec, 8, seed);
        assert!((fast - slow).abs() < 1e-13, "seed {seed}: {fast} vs {slow}");
    }
}

#[test]
fn enumeration_matches_naive_loop_two_and_three_species() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for (n, s, volume) in [(2, 2, 8), (2, 3, 10), (3, 2, 9)] {
        let spec = random_instance(&mut rng, n, s, 1.5);
        let fast = free_energy_exact(&spec, volume, 9).unwrap().free_energy;
        let slow = naive_free_energy(&spec, volume, 9);
        assert!((fast - slow).abs() < 1e-12, "n={n} s={s}: {fast} vs {slow}");
    }
}

#[test]
fn single_species_chain_model_is_the_exact_model() {
    let spec = rem();
    let a = free_energy_exact(&spec, 12, 3).unwrap().free_energy;
    let b = free_energy_chain(&spec, &Chain::identity(1), 12, 3).unwrap().free_energy;
    assert_eq!(a, b);
}

#[test]
fn full_set_only_phi_ignores_chain_keying() {
    // φ reads x12 alone, whose key uses both species under every chain.
    let mut table = vec![0.0; 8];
    for (i, v) in table.iter_mut().enumerate() {
        *v = if i % 2 == 1 { 1.3 } else { -0.4 };
    }
    let spec = table_spec(2, 2, vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.3, 0.7]], table);
    let exact = free_energy_exact(&spec, 10, 5).unwrap().free_energy;
    for c in enumerate_chains(2).unwrap() {
        assert_eq!(free_energy_chain(&spec, &c, 10, 5).unwrap().free_energy, exact);
    }
}

/// Pearson statistic for 10⁶ draws from a four-symbol law; 16.27 is the
/// 0.999 quantile of χ² with 3 degrees of freedom.
#[test]
fn draws_pass_chi_square() {
    let law = [0.1, 0.2, 0.3, 0.4];
    let mut counts = [0u64; 4];
    let draws = 1_000_000u64;
    for a in 0..draws {
        let key = DisorderKey {
            seed: 17,
            subset: SubsetId::singleton(1),
            scope: SubsetId::singleton(1),
            alpha: a / 64,
            sample: (a % 64) as u32,
        };
        counts[draw_symbol(&key, &law)] += 1;
    }
    let chi: f64 = counts
        .iter()
        .zip(law)
        .map(|(&c, p)| {
            let e = p * draws as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    assert!(chi < 16.27, "chi-square {chi}, counts {counts:?}");
}

#[test]
fn binary_frequency_within_three_sigma() {
    let law = [0.25, 0.75];
    let draws = 1_000_000u64;
    let ones: u64 = (0..draws)
        .map(|a| {
            let key = DisorderKey {
                seed: 3,
                subset: SubsetId::full(2),
                scope: SubsetId::full(2),
                alpha: a,
                sample: 7,
            };
            draw_symbol(&key, &law) as u64
        })
        .sum();
    let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
    assert!((ones as f64 - 0.75 * draws as f64).abs() < 3.0 * sigma);
}

#[test]
fn degenerate_law_always_draws_its_atom() {
    for a in 0..1000 {
        let key = DisorderKey {
            seed: a,
            subset: SubsetId::singleton(2),
            scope: SubsetId::singleton(2),
            alpha: a * 7,
            sample: 1,
        };
        assert_eq!(draw_symbol(&key, &[1.0, 0.0, 0.0]), 0);
    }
}

/// Mean over seeds of `F_N` stays below the annealed value plus slack.
#[test]
fn annealed_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut specs = vec![rem()];
    specs.push(random_instance(&mut rng, 2, 2, 2.0));
    for spec in &specs {
        let mu = gremlab::model::product_measure(spec);
        let annealed = gremlab::model::phi_table(spec)
            .iter()
            .zip(mu.weights())
            .map(|(f, w)| w * f.exp())
            .sum::<f64>()
            .ln();
        let mean = (0..20).map(|s| free_energy_exact(spec, 12, s).unwrap().free_energy).sum::<f64>() / 20.0;
        assert!(mean <= annealed + 0.02, "mean {mean} annealed {annealed}");
    }
}

#[test]
fn single_species_closed_forms() {
    let spec = rem();
    let p = global_parisi_min(&spec).unwrap();
    assert!((p.value() - LN_2 - rem_annealed()).abs() < 1e-12);
    assert!((p.best().point.m[0] - 1.0).abs() < 1e-12);
    let g = solve_gibbs(&spec).unwrap().value;
    assert!((g - rem_annealed()).abs() < 1e-15);
    let r = run_verify(&spec, &VerifyConfig::default()).unwrap();
    assert!(r.identity_residual <= 1e-9);
    assert!(r.passed);
}

/// Strong field drives the single-species minimizer inside the box, where
/// the grid scan locates it independently.
#[test]
fn low_temperature_single_species_matches_grid() {
    let spec = table_spec(1, 2, vec![vec![0.9, 0.1]], vec![0.0, 4.0]);
    let r = minimize_parisi(&spec, &Chain::identity(1)).unwrap();
    let (grid, at) = scan_one(|m| parisi_one(&spec, m), 1e-5);
    assert!(r.point.m[0] < 1.0);
    assert!((r.point.value - grid).abs() < 1e-9);
    assert!((r.point.m[0] - at).abs() < 1e-4);
}

#[test]
fn two_species_chains_match_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..2 {
        let spec = random_instance(&mut rng, 2, 2, 3.0);
        for first in [1, 2] {
            let chain = Chain::new(vec![first, 3 - first]).unwrap();
            let got = minimize_parisi(&spec, &chain).unwrap();
            let (grid, _) = scan_two(|a, b| parisi_two(&spec, first, a, b));
            assert!((got.point.value - grid).abs() < 1e-5, "chain {first}: {} vs {grid}", got.point.value);
            assert!(got.point.value <= grid + 1e-12);
        }
    }
}

#[test]
fn brute_force_gibbs_on_a_spiked_instance() {
    let mut table = vec![0.0; 8];
    table[5] = 5.0;
    let spec = table_spec(2, 2, vec![vec![0.5, 0.5]; 3], table);
    let r = solve_gibbs(&spec).unwrap();
    assert!(!r.tilt_feasible);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let oracle = brute_force_gibbs(&spec, &mut rng, 200_000, 200_000);
    assert!((r.value - oracle).abs() < 1e-4, "{} vs {oracle}", r.value);
    let (value, violation) = gibbs_terms(&spec, r.nu_star.weights());
    assert!((value - r.value).abs() < 1e-12);
    assert!(violation <= 1e-6);
}

#[test]
fn ball_counts() {
    let spec = rem();
    let center = gremlab::model::product_measure(&spec);
    assert_eq!(count_in_ball(&spec, 10, 0, &center, 1.0).unwrap(), 1 << 10);
    assert_eq!(count_in_ball(&spec, 10, 0, &center, 0.0).unwrap(), 0);
    let count = count_in_ball(&spec, 16, 0, &center, 0.2).unwrap();
    assert!(((count as f64).ln() / 16.0 - LN_2).abs() <= 0.1);
}

#[test]
fn zero_and_constant_fields() {
    let zero: ModelSpec = zero_field(2);
    assert_eq!(free_energy_exact(&zero, 12, 1).unwrap().free_energy, 0.0);
    let constant = table_spec(2, 2, vec![vec![0.2, 0.8]; 3], vec![0.75; 8]);
    assert!((free_energy_exact(&constant, 12, 1).unwrap().free_energy - 0.75).abs() < 1e-14);
}
