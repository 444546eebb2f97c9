#[path = "support/grid_oracle.rs"]
mod grid_oracle;

use roew_core::drsvm::{kappa, train_robust, train_roew_binary, RobustParams, SolverConfig};
use roew_core::states::Label;

const ALPHA: f64 = 0.7;
const C: f64 = 10.0;

fn check(seed: u64, hard: bool) {
    let k = kappa(ALPHA).unwrap();
    let (inst, oracle) = grid_oracle::unique_instance(seed, 4 + (seed % 3) as usize, hard, k, C);
    let samples = grid_oracle::to_samples(&inst);
    let params = RobustParams::new(ALPHA, C).unwrap();
    let cfg = SolverConfig::default();
    let model = if hard {
        let sep: Vec<_> = samples
            .iter()
            .filter(|s| s.label == Label::Separable)
            .cloned()
            .collect();
        let ent: Vec<_> = samples
            .iter()
            .filter(|s| s.label == Label::Entangled)
            .cloned()
            .collect();
        train_roew_binary(&sep, &ent, &params, &cfg).unwrap()
    } else {
        train_robust(&samples, &params, &cfg).unwrap()
    };
    let solver_obj = grid_oracle::objective(&inst, k, C, [model.v[0], model.v[1]], model.b)
        .unwrap_or_else(|| panic!("seed {seed}: solver point violates a hard constraint"));
    let rel = (solver_obj - oracle.objective).abs() / oracle.objective.abs().max(1e-12);
    assert!(
        rel <= 1e-3,
        "seed {seed} hard {hard}: solver {solver_obj} oracle {}",
        oracle.objective
    );
    assert!((solver_obj - model.objective).abs() <= 1e-8 * (1.0 + solver_obj));
    let ms = grid_oracle::margins(&inst, k, [model.v[0], model.v[1]], model.b);
    assert_eq!(
        grid_oracle::binding(&ms, 1e-3),
        grid_oracle::binding(&oracle.margins, 1e-3),
        "seed {seed} hard {hard}: margins {ms:?} vs {:?}",
        oracle.margins
    );
}

#[test]
fn robust_matches_grid_oracle() {
    for seed in 0..10 {
        check(seed, false);
    }
}

#[test]
fn roew_binary_matches_grid_oracle() {
    for seed in 100..110 {
        check(seed, true);
    }
}
