//! Coherence measures of a random and of an orthonormal grouped dictionary.
//!
//! ```not_rust
//! cargo run --release --example coherence_report
//! ```

use hilasso::analysis::{coherence_report, projected_coherences, DEFAULT_ENUMERATION_CAP};
use hilasso::{Dictionary, GroupPartition};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn show(name: &str, dict: &Dictionary) -> hilasso::Result<()> {
    println!("{name}");
    for s in [1, 2, 4] {
        let r = coherence_report(dict, s, DEFAULT_ENUMERATION_CAP)?;
        println!(
            "  s={s}: mu {:.4}  mu_B {:.4}  chi {:.4}  nu {:.4}  mu_B^ss {:.4}  mu_B^s {:.4}",
            r.mu, r.mu_block, r.chi, r.nu, r.mu_block_ss, r.mu_block_s
        );
    }
    let p = projected_coherences(dict, 2, 2, DEFAULT_ENUMERATION_CAP)?;
    println!("  k=2 s=2: nu_P {:.4}  mu_P^s {:.4}  mu_P^ss {:.4}  zeta {:.4}", p.nu_p, p.mu_p_s, p.mu_p_ss, p.zeta);
    Ok(())
}

fn main() -> hilasso::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let part = GroupPartition::uniform(4, 4)?;

    let random = Dictionary::normalize(DMatrix::from_fn(12, 16, |_, _| rng.sample(StandardNormal)), part.clone())?;
    show("random 12x16, 4 groups of 4", &random)?;

    let square: DMatrix<f64> = DMatrix::from_fn(16, 16, |_, _| rng.sample(StandardNormal));
    let orthonormal = Dictionary::normalize(square.qr().q(), part)?;
    show("orthonormal 16x16, 4 groups of 4", &orthonormal)?;
    Ok(())
}
