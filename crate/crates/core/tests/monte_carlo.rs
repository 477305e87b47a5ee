mod common;

use common::{passage_transform, FIG1};
use creditline::free_boundary::solve_no_investment;
use creditline::mc::{laplace_hitting, simulate_1d_policy, simulate_1d_probes, BoundedDiffusion, McMethod, SimSpec};
use creditline::ModelParams;

fn fig1(lambda: f64) -> ModelParams {
    ModelParams::fixed_size(FIG1.mu, FIG1.sigma, FIG1.r, lambda)
}

fn spec(n_paths: usize) -> SimSpec {
    SimSpec { n_paths, ..SimSpec::default() }
}

#[test]
fn start_at_or_below_default_threshold_is_exact() {
    let p = fig1(0.8);
    let v = solve_no_investment(&p).unwrap();
    for x0 in [0.0, 0.5 * v.a, v.a] {
        let e = simulate_1d_policy(&p, v.a, v.b, x0, &spec(1000)).unwrap();
        assert_eq!(e.mean, x0);
        assert_eq!(e.std_error, 0.0);
    }
}

#[test]
fn start_above_barrier_pays_the_excess() {
    let p = fig1(0.1);
    let v = solve_no_investment(&p).unwrap();
    let e = simulate_1d_probes(&p, v.a, v.b, &[v.b, v.b + 1.0], &spec(4000)).unwrap();
    assert!((e[1].mean - e[0].mean - 1.0).abs() < 1e-12);
    assert_eq!(e[1].std_error, e[0].std_error);
}

#[test]
fn antithetic_and_plain_sampling_agree() {
    let p = fig1(0.3);
    let v = solve_no_investment(&p).unwrap();
    let x0 = 0.5 * (v.a + v.b);
    let anti = simulate_1d_policy(&p, v.a, v.b, x0, &SimSpec { antithetic: true, ..spec(20_000) }).unwrap();
    let plain = simulate_1d_policy(&p, v.a, v.b, x0, &SimSpec { antithetic: false, ..spec(20_000) }).unwrap();
    let se = (anti.std_error.powi(2) + plain.std_error.powi(2)).sqrt();
    assert!((anti.mean - plain.mean).abs() <= 3.0 * se, "{} vs {}", anti.mean, plain.mean);
    let target = v.value(x0).unwrap();
    assert!(anti.z_score(target).abs() <= 3.0, "{} vs {target}", anti.mean);
}

#[test]
fn time_step_refinement_is_stable() {
    let p = fig1(0.1);
    let v = solve_no_investment(&p).unwrap();
    let x0 = 0.5 * v.b;
    let coarse = simulate_1d_policy(&p, v.a, v.b, x0, &SimSpec { dt: 4e-3, ..spec(20_000) }).unwrap();
    let fine = simulate_1d_policy(&p, v.a, v.b, x0, &SimSpec { dt: 1e-3, ..spec(20_000) }).unwrap();
    let target = v.value(x0).unwrap();
    for e in [&coarse, &fine] {
        assert!(e.z_score(target).abs() <= 3.5, "dt estimate {} vs {target}", e.mean);
    }
}

#[test]
fn direct_and_regenerative_agree() {
    // A fast discount rate keeps the direct method's horizon short.
    let p = ModelParams::fixed_size(0.5, 0.3, 0.2, 0.3);
    let v = solve_no_investment(&p).unwrap();
    let x0 = 0.5 * v.b;
    let base = SimSpec { horizon: 110.0, dt: 4e-3, ..spec(8000) };
    let direct = simulate_1d_policy(&p, v.a, v.b, x0, &SimSpec { method: McMethod::Direct, ..base.clone() }).unwrap();
    let regen = simulate_1d_policy(&p, v.a, v.b, x0, &SimSpec { method: McMethod::Regenerative, ..base }).unwrap();
    let se = (direct.std_error.powi(2) + regen.std_error.powi(2)).sqrt();
    assert!((direct.mean - regen.mean).abs() <= 3.0 * se, "{} vs {}", direct.mean, regen.mean);
}

#[test]
fn seeded_runs_repeat() {
    let p = fig1(0.8);
    let v = solve_no_investment(&p).unwrap();
    let x0 = 0.5 * (v.a + v.b);
    let run = |seed| simulate_1d_policy(&p, v.a, v.b, x0, &SimSpec { seed, ..spec(2000) }).unwrap();
    assert_eq!(run(7), run(7));
    assert_ne!(run(7).mean, run(8).mean);
}

#[test]
fn short_horizon_is_rejected_unless_allowed() {
    let p = fig1(0.1);
    let short = SimSpec { horizon: 100.0, ..spec(100) };
    assert!(simulate_1d_policy(&p, 0.0, 2.0, 1.0, &short).is_err());
    let allowed = SimSpec { allow_short_horizon: true, ..short };
    assert!(simulate_1d_policy(&p, 0.0, 2.0, 1.0, &allowed).is_ok());
}

#[test]
fn hitting_transform() {
    let proc = BoundedDiffusion::constant(0.3, 0.3, 0.02);
    let at_target = laplace_hitting(&proc, 1.0, 1.0, &spec(100)).unwrap();
    assert_eq!(at_target.mean, 1.0);
    let e = laplace_hitting(&proc, 0.2, 1.0, &spec(20_000)).unwrap();
    let exact = passage_transform(0.3, 0.3, 0.02, 0.2, 1.0);
    assert!(e.z_score(exact).abs() <= 3.0, "{} vs {exact}", e.mean);
    assert!((proc.constant_transform(0.3, 0.2, 1.0) - exact).abs() < 1e-14);
}
