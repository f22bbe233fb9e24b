//! The hierarchical thresholding operator on a small vector.
//!
//! ```not_rust
//! cargo run --example thresholding
//! ```

use hilasso::prox::{
    hilasso_prox, optimality_violation, scalar_soft_threshold, subproblem_value, vector_soft_threshold,
};
use hilasso::ProxWeights;

fn main() {
    let w = [3.0, -1.0, 0.5];

    let soft: Vec<f64> = w.iter().map(|&v| scalar_soft_threshold(v, 1.0)).collect();
    println!("soft threshold at 1:        {soft:?}");
    println!("vector shrink at 1:         {:?}", vector_soft_threshold(&w, 1.0));

    for (t1, t2) in [(1.0, 1.0), (0.5, 0.5), (1.0, 2.5), (0.0, 1.0)] {
        let weights = ProxWeights::new(t1, t2);
        let z = hilasso_prox(&w, weights);
        println!(
            "hilasso prox t1={t1} t2={t2}: {:?}  value {:.6}  violation {:.1e}",
            z,
            subproblem_value(&z, &w, weights),
            optimality_violation(&z, &w, weights)
        );
    }
}
