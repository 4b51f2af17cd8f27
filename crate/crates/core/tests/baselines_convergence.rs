//! Convergence of the baselines on smooth test functions.

mod support;

use nodegen_core::baselines::Method;

#[test]
fn nelder_mead_2d_sphere_within_200() {
    let r = support::nelder_mead_sphere_run();
    assert!(r.evals_to_goal.is_some(), "best {}", r.best_value);
}

#[test]
fn cma_es_20d_sphere_within_5000_on_9_of_10_seeds() {
    let ok = (0..10).filter(|&s| support::cma_sphere_run(s).evals_to_goal.is_some()).count();
    assert!(ok >= 9, "{ok}/10");
}

fn rosenbrock(method: Method) {
    let runs: Vec<_> = (0..10).map(|s| support::rosenbrock_run(method, s)).collect();
    let ok = runs.iter().filter(|r| r.evals_to_goal.is_some()).count();
    let best: Vec<String> = runs.iter().map(|r| format!("{:.1e}", r.best_value)).collect();
    assert!(ok >= 9, "{method}: {ok}/10 reached f < 1e-3; best values {best:?}");
}

#[test]
fn trust_region_5d_rosenbrock_within_10k() {
    rosenbrock(Method::TrustRegion);
}

#[test]
fn pso_5d_rosenbrock_within_10k() {
    rosenbrock(Method::Pso);
}

#[test]
fn ga_5d_rosenbrock_within_10k() {
    rosenbrock(Method::Ga);
}

#[test]
fn nelder_mead_and_cma_es_5d_rosenbrock_within_10k() {
    rosenbrock(Method::NelderMead);
    rosenbrock(Method::CmaEs);
}
