//! Group identification when most entries of every signal are missing.
//!
//! Prints which groups each method uses for the first few signals.
//!
//! ```not_rust
//! cargo run --release --example missing_data -- [seed]
//! ```

use hilasso::harness::{run_missing_data_demo, ExperimentConfig};
use hilasso::Mode;

fn group_map(active: &[Vec<u8>], q: usize, g: usize, cols: usize) -> String {
    let mut out = String::new();
    for r in 0..q {
        out.push_str(&format!("  group {r}: "));
        for j in 0..cols {
            let on = (r * g..(r + 1) * g).any(|i| active[i][j] == 1);
            out.push(if on { '#' } else { '.' });
        }
        out.push('\n');
    }
    out
}

fn main() -> hilasso::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse().expect("seed")).unwrap_or(0);
    let cfg = ExperimentConfig::missing_desk().with_seed(seed);
    let demo = run_missing_data_demo(&cfg)?;

    for mode in [Mode::Chilasso, Mode::Lasso] {
        let r = demo.experiment.method(mode).expect("method ran");
        println!(
            "{:<8} lambda ({:.4}, {:.4})  mse x1e4 {:.3}  hamming {:.2}  group hamming {:.2}",
            mode.name(),
            r.lambda.lambda1,
            r.lambda.lambda2,
            r.metrics.mse_e4,
            r.metrics.hamming,
            r.metrics.group_hamming
        );
    }
    let cols = 40.min(cfg.n);
    println!("\nC-HiLasso groups used by the first {cols} signals:\n{}", group_map(&demo.chilasso_active, cfg.q, cfg.g, cols));
    println!("Lasso groups used by the first {cols} signals:\n{}", group_map(&demo.lasso_active, cfg.q, cfg.g, cols));
    println!("C-HiLasso group hamming <= Lasso: {}", demo.ordering_holds);
    Ok(())
}
