//! Compares Lasso, GLasso, HiLasso and C-HiLasso on synthetic mixtures.
//!
//! ```not_rust
//! cargo run --release --example source_identification -- [sigma] [seeds]
//! ```

use hilasso::cli::format_table;
use hilasso::harness::{run_experiment, summarize, ExperimentConfig};

fn main() -> hilasso::Result<()> {
    let mut args = std::env::args().skip(1);
    let sigma: f64 = args.next().map(|s| s.parse().expect("sigma")).unwrap_or(0.1);
    let seeds: u64 = args.next().map(|s| s.parse().expect("seed count")).unwrap_or(3);

    let base = ExperimentConfig { sigma, ..ExperimentConfig::desk() };
    let mut results = Vec::new();
    for seed in 0..seeds {
        let res = run_experiment(&base.clone().with_seed(seed))?;
        println!("seed {seed}: lowest mse {}", res.best_by_mse().map(|m| m.name()).unwrap_or("-"));
        results.push(res);
    }
    let rows: Vec<_> = summarize(&results)
        .into_iter()
        .map(|s| {
            let l = results[0].method(s.method).unwrap().lambda;
            (s.method, l.lambda1, l.lambda2, s.mean)
        })
        .collect();
    println!("\nsigma = {sigma}, mean over {seeds} seeds (lambdas from seed 0)\n{}", format_table(&rows));
    Ok(())
}
