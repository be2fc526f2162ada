mod common;

use approx::assert_relative_eq;
use common::*;
use drnet_core::determ::{integrate_on_grid, uniform_grid, OdeOptions};
use drnet_core::dranalyzer::{
    build_reduction, check_path_condition, higher_order_complexes, linear_reduction,
    max_diffusion_along, nonlinear_residuals, one_species_dr, solve_linear, verify_dr,
    OneSpeciesDecision, ReductionCase,
};
use drnet_core::poissondist::{default_sample_states, linear_independence_rank, master_identity_residual};
use drnet_core::{Complex, DrOptions, Reaction, ReactionNetwork, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts(horizon: f64) -> DrOptions {
    DrOptions {
        horizon,
        ..DrOptions::default()
    }
}

#[test]
fn two_dimers_closed_form() {
    let (net, c0) = two_dimers_dr();
    let report = verify_dr(&net, &c0, &opts(2.0)).unwrap();
    assert_eq!(report.verdict, Verdict::Holds);
    let traj = report.trajectory.as_ref().unwrap();
    for (t, c) in traj.grid.iter().zip(&traj.states) {
        let e = (-t / 2.0f64).exp();
        assert!((c[0] - (2.0 - e)).abs() < 1e-10, "x({t})");
        assert!((c[1] - (4.0 - 2.0 * e)).abs() < 1e-10, "y({t})");
    }
    let end = traj.last().unwrap();
    let e1 = (-1.0f64).exp();
    assert!((end.values[0] - (2.0 - e1)).abs() < 1e-8);
    assert!((end.values[1] - (4.0 - 2.0 * e1)).abs() < 1e-8);
}

#[test]
fn two_dimers_equilibrium_is_constant() {
    let (net, c0) = two_dimers([4.0, 1.0, 1.0, 0.5, 2.0, 0.5], [2.0, 4.0]);
    assert_eq!(verify_dr(&net, &c0, &opts(2.0)).unwrap().verdict, Verdict::ConstantSolution);
}

#[test]
fn two_dimers_off_condition_fails() {
    // complex balanced for k4 ≠ k6, but not DR
    let (net, c0) = two_dimers([4.0, 1.0, 1.0, 0.25, 2.0, 0.5], [1.0, 2.0]);
    let r = verify_dr(&net, &c0, &opts(2.0)).unwrap();
    assert_eq!(r.verdict, Verdict::Fails);
    assert!(r.max_residual > r.threshold);
}

#[test]
fn monomer_dimer_only_constant() {
    let k = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
    let (net, c0) = monomer_dimer(k, [1.0, 1.0]);
    assert_eq!(verify_dr(&net, &c0, &opts(2.0)).unwrap().verdict, Verdict::ConstantSolution);
    for start in [[2.0, 0.5], [0.3, 3.0], [1.0, 2.0]] {
        let (net, c0) = monomer_dimer(k, start);
        assert_eq!(verify_dr(&net, &c0, &opts(2.0)).unwrap().verdict, Verdict::Fails, "{start:?}");
    }
}

#[test]
fn decaying_dimerization_closed_form() {
    let (net, c0) = decaying_dimerization();
    let report = verify_dr(&net, &c0, &opts(2.0)).unwrap();
    assert_eq!(report.verdict, Verdict::Holds);
    let traj = report.trajectory.as_ref().unwrap();
    for (t, c) in traj.grid.iter().zip(&traj.states) {
        let exact = [
            900.0 * (-2.0 * t).exp(),
            90.0 * (-t).exp(),
            100.0 + 900.0 * (1.0 - (-2.0 * t).exp()),
        ];
        for i in 0..3 {
            assert_relative_eq!(c[i], exact[i], max_relative = 1e-10);
        }
    }
    // independent route: RK4 on the full rate equations
    let grid = uniform_grid(2.0, 21);
    let ode = integrate_on_grid(&net, &c0, &grid, OdeOptions { dt: 1e-4, ..OdeOptions::default() })
        .unwrap();
    let lin = solve_linear(report.linear_system.as_ref().unwrap(), &c0, &grid);
    for (a, b) in ode.states.iter().zip(&lin.states) {
        for i in 0..3 {
            assert_relative_eq!(a[i], b[i], max_relative = 1e-6);
        }
    }
}

#[test]
fn linear_without_dr_fails_on_four_y() {
    let (net, c0) = linear_without_dr();
    let report = verify_dr(&net, &c0, &opts(2.0)).unwrap();
    assert_eq!(report.verdict, Verdict::Fails);
    assert_eq!(report.failing_complexes, vec!["4Y".to_string()]);
    assert!(report.linear_system.is_none());
    // same rate equations as the decaying dimerization
    let (dd, _) = decaying_dimerization();
    for c in [[900.0, 90.0, 100.0], [1.0, 2.0, 3.0]] {
        let a = drnet_core::determ::mass_action_rhs(&net, &c);
        let b = drnet_core::determ::mass_action_rhs(&dd, &c);
        for i in 0..3 {
            assert_relative_eq!(a[i], b[i], max_relative = 1e-12);
        }
    }
}

#[test]
fn x_plus_y_never_dr() {
    let (net, c0) = x_plus_y([1.0, 1.0, 0.5, 0.7, 0.4, 0.3, 1.1, 0.9], [2.0, 1.5]);
    assert_eq!(verify_dr(&net, &c0, &opts(2.0)).unwrap().verdict, Verdict::Fails);
}

fn random_rates(rng: &mut ChaCha8Rng) -> [f64; 6] {
    std::array::from_fn(|_| rng.random_range(0.1..5.0))
}

#[test]
fn chain_matrices_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..3 {
        let k = random_rates(&mut rng);
        let (net, _) = chain(k, [1.0, 1.0]);
        let red = build_reduction(&net);
        let mixed: Vec<_> = red.iter().filter(|r| r.case == ReductionCase::Mixed).collect();
        assert_eq!(mixed.len(), 1);
        let a = &mixed[0].matrix_a;
        let names: Vec<String> =
            mixed[0].higher.iter().map(|&i| net.format_complex(&net.complexes()[i])).collect();
        assert_eq!(names, ["2X+Y", "X+2Y"]);
        let expected_a = [[k[1] + k[2], -k[3]], [-k[2], k[3] + k[4]]];
        let det = (k[1] + k[2]) * (k[3] + k[4]) - k[2] * k[3];
        let expected_inv = [
            [(k[3] + k[4]) / det, k[3] / det],
            [k[2] / det, (k[1] + k[2]) / det],
        ];
        let inv = a.clone().try_inverse().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(a[(i, j)], expected_a[i][j], max_relative = 1e-12);
                assert_relative_eq!(inv[(i, j)], expected_inv[i][j], max_relative = 1e-12);
            }
        }
        assert!(check_path_condition(a).holds);
        let sys = linear_reduction(&net).unwrap();
        let gx = k[0] * k[2] * k[4] / det;
        let gy = k[1] * k[3] * k[5] / det;
        let expected_m = [[-gx, gy], [gx, -gy]];
        for i in 0..2 {
            assert!(sys.r[i].abs() < 1e-12);
            for j in 0..2 {
                assert_relative_eq!(sys.m[(i, j)], expected_m[i][j], max_relative = 1e-12);
            }
        }
        let (net, c0) = chain(k, [1.0, 2.0]);
        assert_ne!(verify_dr(&net, &c0, &opts(2.0)).unwrap().verdict, Verdict::Holds);
    }
}

#[test]
fn cascade_closed_form_and_condition() {
    let (net, c0) = cascade([2.0, 2.0, 4.0, 1.0]);
    let report = verify_dr(&net, &c0, &opts(3.0)).unwrap();
    assert_eq!(report.verdict, Verdict::Holds);
    assert!(!net.is_weakly_reversible());
    let traj = report.trajectory.as_ref().unwrap();
    for (t, c) in traj.grid.iter().zip(&traj.states) {
        let e1 = (-t).exp();
        let e2 = (-2.0 * t).exp();
        let exact = [2.0 * e1, 2.0 * e1, 4.0 * e2, 1.0 + 4.0 * (1.0 - e2)];
        for i in 0..4 {
            assert!((c[i] - exact[i]).abs() < 1e-9 * (1.0 + exact[i]), "species {i} at {t}");
        }
    }
    let (net, c0) = cascade([2.0, 2.0, 5.0, 1.0]);
    assert_eq!(verify_dr(&net, &c0, &opts(3.0)).unwrap().verdict, Verdict::Fails);
    let (net, c0) = cascade([2.0, 3.0, 4.0, 1.0]);
    assert_eq!(verify_dr(&net, &c0, &opts(3.0)).unwrap().verdict, Verdict::Fails);
}

#[test]
fn identity_residual_tracks_verdict() {
    let (net, c0) = two_dimers_dr();
    let report = verify_dr(&net, &c0, &opts(2.0)).unwrap();
    let traj = report.trajectory.unwrap();
    for c in &traj.states {
        for x0 in 0..=10 {
            for x1 in 0..=10 {
                let r = master_identity_residual(&net, c, &[x0, x1]);
                assert!(r.abs() <= 1e-9, "residual {r} at {c:?}");
            }
        }
    }
    let (net, c0) = monomer_dimer([1.0; 6], [2.0, 0.5]);
    let (traj, _) = nonlinear_residuals(&net, &c0, &opts(1.0)).unwrap();
    let worst = traj
        .states
        .iter()
        .map(|c| master_identity_residual(&net, c, &[1, 0]).abs())
        .fold(0.0, f64::max);
    assert!(worst > 1e-3, "{worst}");
}

#[test]
fn higher_complexes_are_independent() {
    let nets: Vec<(ReactionNetwork, Vec<f64>)> = vec![
        two_dimers_dr(),
        monomer_dimer([1.0; 6], [2.0, 0.5]),
        decaying_dimerization(),
        linear_without_dr(),
        x_plus_y([1.0; 8], [2.0, 1.5]),
        chain([1.0, 2.0, 3.0, 1.5, 0.5, 2.5], [1.0, 2.0]),
        cascade([2.0, 2.0, 4.0, 1.0]),
    ];
    for (net, c0) in nets {
        let zs = higher_order_complexes(&net);
        let samples = default_sample_states(net.dim(), net.order(), 9);
        for scale in [1.0, 0.37] {
            let c: Vec<f64> = c0.iter().map(|v| v * scale).collect();
            assert_eq!(linear_independence_rank(&zs, &c, &samples).unwrap(), zs.len());
        }
    }
}

#[test]
fn diffusion_vanishes_exactly_on_product_form_solutions() {
    let cases = [
        (two_dimers_dr(), true),
        (two_dimers([4.0, 1.0, 1.0, 0.5, 2.0, 0.5], [2.0, 4.0]), true),
        (two_dimers([4.0, 1.0, 1.0, 0.25, 2.0, 0.5], [1.0, 2.0]), false),
        (monomer_dimer([1.0; 6], [1.0, 1.0]), true),
        (monomer_dimer([1.0; 6], [2.0, 0.5]), false),
    ];
    for ((net, c0), product_form) in cases {
        let report = verify_dr(&net, &c0, &opts(2.0)).unwrap();
        assert_eq!(report.verdict.is_product_form(), product_form);
        let b = max_diffusion_along(&net, report.trajectory.as_ref().unwrap()).unwrap();
        assert_eq!(b <= 1e-9, product_form, "B = {b}");
    }
}

#[test]
fn one_species_family() {
    // every network on complexes of order ≤ 3 with one to three reactions
    let zs: Vec<Complex> = (0..=3).map(|k| Complex::new(vec![k])).collect();
    let pairs: Vec<(usize, usize)> = (0..4)
        .flat_map(|a| (0..4).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let mut checked = 0;
    for mask in 1u32..(1 << pairs.len()) {
        if mask.count_ones() > 3 {
            continue;
        }
        let reactions: Vec<Reaction> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &(a, b))| Reaction::new(zs[a].clone(), zs[b].clone(), 1.0))
            .collect();
        let net = ReactionNetwork::new(vec!["X".into()], reactions).unwrap();
        let first_order = net.complexes().iter().all(|z| z.order() <= 1);
        let expected = if first_order {
            OneSpeciesDecision::NontrivialPossible
        } else {
            OneSpeciesDecision::OnlyConstantSolutions
        };
        assert_eq!(one_species_dr(&net).unwrap(), expected);
        checked += 1;
    }
    assert_eq!(checked, 12 + 66 + 220);
}
