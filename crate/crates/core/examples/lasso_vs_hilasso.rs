//! One signal built from two groups, coded with and without the group term.
//!
//! ```not_rust
//! cargo run --release --example lasso_vs_hilasso
//! ```

use hilasso::harness::{generate_synthetic, support_metrics, ExperimentConfig};
use hilasso::{sparsa_solve, Mode, RegularizerSpec, SolverConfig};

fn main() -> hilasso::Result<()> {
    let cfg = ExperimentConfig { q: 8, g: 16, m: 48, k: 2, s: 3, n: 1, sigma: 0.02, seed: 11, ..ExperimentConfig::desk() };
    let data = generate_synthetic(&cfg)?;
    let part = data.dictionary.partition();
    println!("active groups: {:?}", data.active_groups());

    let solver = SolverConfig::default();
    for (mode, l1, l2) in [(Mode::Lasso, 0.02, 0.0), (Mode::Glasso, 0.0, 0.05), (Mode::Hilasso, 0.02, 0.05)] {
        let spec = RegularizerSpec::for_mode(mode, l1, l2)?;
        let res = sparsa_solve(&data.dictionary, &data.signals, &spec, &solver, None)?;
        let m = support_metrics(&res.code, &data.codes, part, cfg.support_epsilon)?;
        let groups: Vec<usize> = (0..part.num_groups())
            .filter(|&r| part.group(r).iter().any(|&i| res.code[(i, 0)].abs() > cfg.support_epsilon))
            .collect();
        println!(
            "{:<8} iters {:>4}  groups used {:?}  nonzeros {:>3}  mse x1e4 {:.3}  hamming {}",
            mode.name(),
            res.outer_iterations,
            groups,
            res.code.iter().filter(|v| v.abs() > cfg.support_epsilon).count(),
            m.mse_e4,
            m.hamming
        );
    }
    Ok(())
}
