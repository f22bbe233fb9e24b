//! Certify supports of a near-orthogonal dictionary, then check that the
//! certified ones are recovered from noiseless measurements.
//!
//! ```not_rust
//! cargo run --release --example certify_recovery
//! ```

use hilasso::analysis::{certify_instance, certify_uniform, SupportSpec, DEFAULT_ENUMERATION_CAP};
use hilasso::solver::solve_noiseless;
use hilasso::{Dictionary, GroupPartition, NoiselessConfig, SignalSet};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> hilasso::Result<()> {
    let (q, g, m) = (4, 4, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dict = Dictionary::normalize(
        DMatrix::from_fn(m, q * g, |_, _| rng.sample(StandardNormal)),
        GroupPartition::uniform(q, g)?,
    )?;
    let lambda = 0.5;

    let (_, _, uniform) = certify_uniform(&dict, 1, 1, lambda, DEFAULT_ENUMERATION_CAP)?;
    println!(
        "dictionary-only certificate k=1 s=1: holds {} (alpha {:.3}, gamma lhs {:.3}, inside {:.3})",
        uniform.holds(),
        uniform.alpha_lhs,
        uniform.gamma_lhs,
        uniform.cond3_lhs
    );

    let (mut certified, mut recovered, mut total) = (0, 0, 0);
    for support in SupportSpec::enumerate(q, g, 2, 1) {
        total += 1;
        let cert = certify_instance(&dict, &support, lambda)?;
        if !cert.holds() {
            continue;
        }
        certified += 1;
        let atoms = support.active_atoms(dict.partition());
        let mut code = DMatrix::zeros(q * g, 1);
        for &i in &atoms {
            code[(i, 0)] = rng.sample::<f64, _>(StandardNormal);
        }
        let signals = SignalSet::new(dict.matrix() * &code);
        let res = solve_noiseless(&dict, &signals, &NoiselessConfig { lambda, ..NoiselessConfig::default() })?;
        let rel = (&res.code - &code).norm() / code.norm();
        recovered += usize::from(rel < 1e-4);
    }
    println!("k=2 s=1: {certified} of {total} supports certified, {recovered} of them recovered");
    Ok(())
}
