//! Coherence measures and sufficient conditions for exact noiseless recovery.
//!
//! Two kinds of certificate are provided:
//!
//! * [`instance_conditions`] evaluates the support-dependent conditions for a
//!   given active set, through the pseudo-inverse `H` of `D_{S₀}` and the
//!   oblique pseudo-inverse `Q` that annihilates `D_{T₀}`.
//! * [`theorem2_check`] evaluates the dictionary-only conditions from the
//!   coherence measures and the projected coherences.
//!
//! The sparse singular values are computed by exact subset enumeration; this
//! is exponential in `s` and only meant for small dictionaries. Every
//! enumeration is bounded by a cap and fails loudly rather than truncating.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dictionary, GroupPartition};

/// Default bound on the number of subsets any single measure may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Relative singular-value threshold below which a direction is dropped from
/// a column space.
const RANK_TOL: f64 = 1e-10;

const IDENTITY_TOL: f64 = 1e-9;

/// `n choose k`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

fn check_cap(needed: u128, cap: u128) -> Result<()> {
    if needed > cap {
        Err(Error::EnumerationCap { needed, cap })
    } else {
        Ok(())
    }
}

/// Largest singular value; zero for an empty matrix.
pub fn spectral_norm(z: &DMatrix<f64>) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    if z.ncols() == 1 || z.nrows() == 1 {
        return z.norm();
    }
    z.singular_values().max()
}

fn gram(dict: &Dictionary) -> DMatrix<f64> {
    dict.matrix().tr_mul(dict.matrix())
}

fn uniform_group_size(partition: &GroupPartition) -> Result<usize> {
    partition
        .uniform_size()
        .ok_or_else(|| Error::Partition("coherence measures need equal-size groups".into()))
}

fn block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// `max_{i≠j} |dᵢᵀdⱼ|`.
pub fn standard_coherence(dict: &Dictionary) -> Result<f64> {
    let p = dict.num_atoms();
    if p < 2 {
        return Err(Error::Parameter("coherence needs at least two atoms".into()));
    }
    let m = gram(dict);
    Ok((0..p)
        .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)].abs())
        .fold(0.0, f64::max))
}

/// `max_{G≠F} ρ(D_Gᵀ D_F) / g`.
pub fn block_coherence(dict: &Dictionary) -> Result<f64> {
    let part = dict.partition();
    let g = uniform_group_size(part)?;
    let m = gram(dict);
    Ok(distinct_pairs(part.num_groups())
        .map(|(a, b)| spectral_norm(&block(&m, part.group(a), part.group(b))) / g as f64)
        .fold(0.0, f64::max))
}

/// Largest `|dᵢᵀdⱼ|` over atoms in different groups.
pub fn cross_coherence(dict: &Dictionary) -> Result<f64> {
    let part = dict.partition();
    uniform_group_size(part)?;
    let m = gram(dict);
    let p = dict.num_atoms();
    let mut best = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            if part.group_of(i) != part.group_of(j) {
                best = best.max(m[(i, j)].abs());
            }
        }
    }
    Ok(best)
}

/// Largest `|dᵢᵀdⱼ|` over distinct atoms of the same group; zero when `g = 1`.
pub fn sub_coherence(dict: &Dictionary) -> Result<f64> {
    let part = dict.partition();
    uniform_group_size(part)?;
    let m = gram(dict);
    let mut best = 0.0f64;
    for group in part.groups() {
        for (&i, &j) in group.iter().tuple_combinations() {
            best = best.max(m[(i, j)].abs());
        }
    }
    Ok(best)
}

fn distinct_pairs(q: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..q).flat_map(move |a| (0..q).filter(move |&b| b != a).map(move |b| (a, b)))
}

/// `ρ^ss(Z)`: the largest spectral norm over `s × s` submatrices.
pub fn sparse_singular_value_ss(z: &DMatrix<f64>, s: usize, cap: u128) -> Result<f64> {
    let (a, b) = z.shape();
    if s == 0 || s > a.min(b) {
        return Err(Error::Parameter(format!("sparsity {s} outside 1..={}", a.min(b))));
    }
    check_cap(binomial(a, s).saturating_mul(binomial(b, s)), cap)?;
    let row_sets: Vec<Vec<usize>> = (0..a).combinations(s).collect();
    let col_sets: Vec<Vec<usize>> = (0..b).combinations(s).collect();
    Ok(row_sets
        .par_iter()
        .map(|rows| {
            col_sets
                .iter()
                .map(|cols| spectral_norm(&block(z, rows, cols)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

/// `ρ^s(Z)`: the largest spectral norm over `s`-column submatrices.
pub fn sparse_matrix_norm_s(z: &DMatrix<f64>, s: usize, cap: u128) -> Result<f64> {
    let b = z.ncols();
    if s == 0 || s > b {
        return Err(Error::Parameter(format!("sparsity {s} outside 1..={b}")));
    }
    check_cap(binomial(b, s), cap)?;
    let cols: Vec<Vec<usize>> = (0..b).combinations(s).collect();
    Ok(cols
        .par_iter()
        .map(|c| spectral_norm(&z.select_columns(c)))
        .reduce(|| 0.0, f64::max))
}

/// A value obtained from random subsets: a lower bound on the true maximum,
/// never the maximum itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound(pub f64);

/// Seeded random-subset estimate of `ρ^ss(Z)`, for sizes beyond the cap.
pub fn sparse_singular_value_ss_sampled(z: &DMatrix<f64>, s: usize, samples: usize, seed: u64) -> Result<LowerBound> {
    let (a, b) = z.shape();
    if s == 0 || s > a.min(b) {
        return Err(Error::Parameter(format!("sparsity {s} outside 1..={}", a.min(b))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let mut rows = sample(&mut rng, a, s).into_vec();
        let mut cols = sample(&mut rng, b, s).into_vec();
        rows.sort_unstable();
        cols.sort_unstable();
        best = best.max(spectral_norm(&block(z, &rows, &cols)));
    }
    Ok(LowerBound(best))
}

/// `(μ_B^ss, μ_B^s)` at in-group sparsity `s`.
pub fn sparse_block_coherences(dict: &Dictionary, s: usize, cap: u128) -> Result<(f64, f64)> {
    let part = dict.partition();
    let g = uniform_group_size(part)?;
    if s == 0 || s > g {
        return Err(Error::Parameter(format!("sparsity {s} outside 1..={g}")));
    }
    if part.num_groups() < 2 {
        return Ok((0.0, 0.0));
    }
    let m = gram(dict);
    let mut ss = 0.0f64;
    let mut sn = 0.0f64;
    for (a, b) in distinct_pairs(part.num_groups()) {
        let z = block(&m, part.group(a), part.group(b));
        ss = ss.max(sparse_singular_value_ss(&z, s, cap)? / g as f64);
        sn = sn.max(sparse_matrix_norm_s(&z, s, cap)? / g as f64);
    }
    Ok((ss, sn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub mu: f64,
    pub mu_block: f64,
    pub chi: f64,
    pub nu: f64,
    pub mu_block_ss: f64,
    pub mu_block_s: f64,
    pub s: usize,
}

pub fn coherence_report(dict: &Dictionary, s: usize, cap: u128) -> Result<CoherenceReport> {
    let (mu_block_ss, mu_block_s) = sparse_block_coherences(dict, s, cap)?;
    Ok(CoherenceReport {
        mu: standard_coherence(dict)?,
        mu_block: block_coherence(dict)?,
        chi: cross_coherence(dict)?,
        nu: sub_coherence(dict)?,
        mu_block_ss,
        mu_block_s,
        s,
    })
}

/// Orthonormal basis of the column space of `a`.
pub fn column_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > RANK_TOL * smax)
        .collect();
    u.select_columns(&keep)
}

/// Active groups with the active atoms inside each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSpec {
    /// Group indices of `G₀`, 0-based.
    pub active_groups: Vec<usize>,
    /// Positions inside each active group (0-based, relative to the group).
    pub within_group: Vec<Vec<usize>>,
}

impl SupportSpec {
    pub fn new(active_groups: Vec<usize>, within_group: Vec<Vec<usize>>, partition: &GroupPartition) -> Result<Self> {
        let spec = Self { active_groups, within_group };
        spec.validate(partition)?;
        Ok(spec)
    }

    pub fn validate(&self, partition: &GroupPartition) -> Result<()> {
        let g = uniform_group_size(partition)?;
        let k = self.active_groups.len();
        if k == 0 || self.within_group.len() != k {
            return Err(Error::Parameter("need k >= 1 groups and one atom set per group".into()));
        }
        if !self.active_groups.iter().all_unique() || self.active_groups.iter().any(|&r| r >= partition.num_groups()) {
            return Err(Error::Parameter("active groups must be distinct and in range".into()));
        }
        let s = self.within_group[0].len();
        if s == 0 || s > g {
            return Err(Error::Parameter(format!("in-group sparsity must lie in 1..={g}")));
        }
        for set in &self.within_group {
            if set.len() != s || !set.iter().all_unique() || set.iter().any(|&i| i >= g) {
                return Err(Error::Parameter(
                    "each active group needs s distinct in-range positions".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.active_groups.len()
    }

    pub fn s(&self) -> usize {
        self.within_group[0].len()
    }

    /// Active atoms `S₀`, block by block.
    pub fn active_atoms(&self, partition: &GroupPartition) -> Vec<usize> {
        self.active_groups
            .iter()
            .zip(&self.within_group)
            .flat_map(|(&r, set)| set.iter().map(move |&i| partition.group(r)[i]))
            .collect()
    }

    /// Inactive atoms inside active groups, `T₀`.
    pub fn inactive_in_active(&self, partition: &GroupPartition) -> Vec<usize> {
        self.active_groups
            .iter()
            .zip(&self.within_group)
            .flat_map(|(&r, set)| {
                partition.group(r).iter().enumerate().filter(|(i, _)| !set.contains(i)).map(|(_, &a)| a)
            })
            .collect()
    }

    /// Groups outside `G₀`, in index order.
    pub fn inactive_groups(&self, partition: &GroupPartition) -> Vec<usize> {
        (0..partition.num_groups()).filter(|r| !self.active_groups.contains(r)).collect()
    }

    /// Atoms of inactive groups, `Ḡ₀`, group by group.
    pub fn inactive_atoms(&self, partition: &GroupPartition) -> Vec<usize> {
        self.inactive_groups(partition)
            .into_iter()
            .flat_map(|r| partition.group(r).to_vec())
            .collect()
    }

    /// Every support with `k` active groups of in-group sparsity `s`, in
    /// lexicographic order.
    pub fn enumerate(q: usize, g: usize, k: usize, s: usize) -> impl Iterator<Item = SupportSpec> {
        let within: Vec<Vec<usize>> = (0..g).combinations(s).collect();
        (0..q).combinations(k).flat_map(move |groups| {
            let within = within.clone();
            std::iter::repeat_n(within, k)
                .multi_cartesian_product()
                .map(move |sets| SupportSpec { active_groups: groups.clone(), within_group: sets })
        })
    }

    pub fn count(q: usize, g: usize, k: usize, s: usize) -> u128 {
        binomial(q, k).saturating_mul(binomial(g, s).saturating_pow(k as u32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedCoherences {
    pub nu_p: f64,
    pub mu_p_s: f64,
    pub mu_p_ss: f64,
    pub zeta: f64,
    pub k: usize,
    pub s: usize,
}

/// `(ν_P, μ_P^s, μ_P^ss, ζ)` maximized over every support with `k` active
/// groups of in-group sparsity `s`.
///
/// For each support, `C = (I − P)D` with `P` the orthogonal projector onto
/// the range of `D_{T₀}`. Atoms of `T₀` have `c_i = 0`, so the normalized
/// quantities `ν_P` and `ζ` range over atoms outside `T₀`. `μ_P^s` restricts
/// `s` rows of `D_Gᵀ C_F`, i.e. `s` atoms of `G` against all of `F`.
pub fn projected_coherences(dict: &Dictionary, k: usize, s: usize, cap: u128) -> Result<ProjectedCoherences> {
    let part = dict.partition();
    let g = uniform_group_size(part)?;
    let q = part.num_groups();
    if k == 0 || k > q || s == 0 || s > g {
        return Err(Error::Parameter(format!("need 1 <= k <= {q} and 1 <= s <= {g}")));
    }
    check_cap(SupportSpec::count(q, g, k, s), cap)?;
    let d = dict.matrix();
    let m = gram(dict);
    let supports: Vec<SupportSpec> = SupportSpec::enumerate(q, g, k, s).collect();
    let per_support = supports
        .par_iter()
        .map(|support| -> Result<[f64; 4]> {
            let t0 = support.inactive_in_active(part);
            let u = column_space_basis(&dict.columns(&t0));
            // K = Dᵀ(I − P)D
            let ud = u.tr_mul(d);
            let kmat = &m - ud.tr_mul(&ud);
            let in_t0 = |i: usize| t0.contains(&i);

            let mut zeta = 0.0f64;
            for i in (0..dict.num_atoms()).filter(|&i| !in_t0(i)) {
                let kii = kmat[(i, i)];
                zeta = zeta.max(if kii > 0.0 { kii.powf(-0.5) } else { f64::INFINITY });
            }
            let mut nu = 0.0f64;
            for group in part.groups() {
                for (&i, &j) in group.iter().tuple_combinations() {
                    if in_t0(i) || in_t0(j) {
                        continue;
                    }
                    let denom = (kmat[(i, i)] * kmat[(j, j)]).sqrt();
                    let v = kmat[(i, j)].abs();
                    nu = nu.max(if denom > 0.0 { v / denom } else if v == 0.0 { 0.0 } else { f64::INFINITY });
                }
            }
            let mut mus = 0.0f64;
            let mut muss = 0.0f64;
            for (a, b) in distinct_pairs(q) {
                let z = block(&kmat, part.group(a), part.group(b));
                mus = mus.max(sparse_matrix_norm_s(&z.transpose(), s, cap)? / g as f64);
                muss = muss.max(sparse_singular_value_ss(&z, s, cap)? / g as f64);
            }
            Ok([nu, mus, muss, zeta])
        })
        .collect::<Result<Vec<_>>>()?;
    let fold = |idx: usize| per_support.iter().map(|v| v[idx]).fold(0.0, f64::max);
    Ok(ProjectedCoherences { nu_p: fold(0), mu_p_s: fold(1), mu_p_ss: fold(2), zeta: fold(3), k, s })
}

/// `max_F Σ_E ρ(Z[E,F])` over row blocks `E` and column blocks `F`.
pub fn block_spectral_norm(z: &DMatrix<f64>, rows: &GroupPartition, cols: &GroupPartition) -> Result<f64> {
    if rows.num_atoms() != z.nrows() || cols.num_atoms() != z.ncols() {
        return Err(Error::Dimension(format!(
            "partitions tile {}x{} but matrix is {}x{}",
            rows.num_atoms(),
            cols.num_atoms(),
            z.nrows(),
            z.ncols()
        )));
    }
    Ok(cols
        .groups()
        .iter()
        .map(|f| rows.groups().iter().map(|e| spectral_norm(&block(z, e, f))).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Largest column ℓ₁ norm; zero for a matrix without columns.
pub fn norm_1_1(z: &DMatrix<f64>) -> f64 {
    z.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Upper limit on `‖H D_{Ḡ₀}‖₁,₁`; infinite in the pure group mode `λ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Finite(f64),
    Unbounded,
}

impl Bound {
    pub fn exceeds(&self, value: f64) -> bool {
        match *self {
            Bound::Finite(b) => value < b,
            Bound::Unbounded => value.is_finite(),
        }
    }
}

/// `1 + λ(1 − α)/(√g(1 − λ))`.
pub fn gamma_bound(lambda: f64, alpha: f64, g: usize) -> Bound {
    if lambda >= 1.0 {
        Bound::Unbounded
    } else {
        Bound::Finite(1.0 + lambda * (1.0 - alpha) / ((g as f64).sqrt() * (1.0 - lambda)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateMode {
    Instance,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Conditions {
    /// Group-level condition on `Q D_{Ḡ₀}`.
    pub block: bool,
    /// ℓ₁ condition on atoms of inactive groups.
    pub outside: bool,
    /// ℓ₁ condition on inactive atoms inside active groups.
    pub inside: bool,
}

impl Conditions {
    pub fn all(&self) -> bool {
        self.block && self.outside && self.inside
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCertificate {
    pub mode: CertificateMode,
    pub lambda: f64,
    pub k: usize,
    pub s: usize,
    pub g: usize,
    /// The `α` used in the bound on `γ`.
    pub alpha: f64,
    /// `ρ_c(Q D_{Ḡ₀})` in instance mode, the coherence bound on it in uniform mode.
    pub alpha_lhs: f64,
    pub gamma_bound: Bound,
    pub gamma_lhs: f64,
    pub cond3_lhs: f64,
    pub conditions: Conditions,
    /// Why a condition could not be evaluated, if any.
    pub reason: Option<String>,
}

impl RecoveryCertificate {
    pub fn holds(&self) -> bool {
        self.conditions.all() && self.reason.is_none()
    }
}

/// The three support-dependent quantities: `ρ_c(Q D_{Ḡ₀})`,
/// `‖H D_{Ḡ₀}‖₁,₁` and `‖H D_{T₀}‖₁,₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceQuantities {
    pub rho_c: f64,
    pub h_outside: f64,
    pub h_inside: f64,
}

fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Assumption(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

fn min_max_singular(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = a.singular_values();
    (sv.min(), sv.max())
}

pub fn instance_quantities(dict: &Dictionary, support: &SupportSpec) -> Result<InstanceQuantities> {
    let part = dict.partition();
    support.validate(part)?;
    let s = support.s();
    let s0 = support.active_atoms(part);
    let t0 = support.inactive_in_active(part);
    let outside = support.inactive_atoms(part);

    let g0: Vec<usize> = support.active_groups.iter().flat_map(|&r| part.group(r).to_vec()).collect();
    let d_g0 = dict.columns(&g0);
    if d_g0.ncols() > d_g0.nrows() {
        return Err(Error::Assumption("active groups have more atoms than the signal dimension".into()));
    }
    let (smin, smax) = min_max_singular(&d_g0);
    if smin <= RANK_TOL * smax {
        return Err(Error::Assumption("columns of the active groups are linearly dependent".into()));
    }

    let d_s0 = dict.columns(&s0);
    let d_t0 = dict.columns(&t0);
    let d_out = dict.columns(&outside);

    let h = solve_spd(&d_s0.tr_mul(&d_s0), &d_s0.transpose(), "D_S0ᵀD_S0")?;
    let u = column_space_basis(&d_t0);
    let c_s0 = &d_s0 - &u * u.tr_mul(&d_s0);
    let q = solve_spd(&c_s0.tr_mul(&c_s0), &c_s0.transpose(), "D_S0ᵀ(I−P)D_S0")?;

    let ks = s0.len();
    let qd_s0 = &q * &d_s0;
    let qd_t0 = &q * &d_t0;
    let id_err = (qd_s0 - DMatrix::identity(ks, ks)).amax();
    let ann_err = if t0.is_empty() { 0.0 } else { qd_t0.amax() };
    if id_err > IDENTITY_TOL || ann_err > IDENTITY_TOL {
        return Err(Error::Assumption(format!(
            "oblique pseudo-inverse identities fail (|QD_S0 − I| = {id_err:.2e}, |QD_T0| = {ann_err:.2e})"
        )));
    }

    let g = part.uniform_size().expect("validated");
    let rho_c = if outside.is_empty() {
        0.0
    } else {
        let rows = GroupPartition::uniform(support.k(), s)?;
        let cols = GroupPartition::uniform(outside.len() / g, g)?;
        block_spectral_norm(&(&q * &d_out), &rows, &cols)?
    };
    Ok(InstanceQuantities {
        rho_c,
        h_outside: norm_1_1(&(&h * &d_out)),
        h_inside: norm_1_1(&(&h * &d_t0)),
    })
}

fn instance_certificate(q: InstanceQuantities, support: &SupportSpec, g: usize, lambda: f64, alpha: f64) -> RecoveryCertificate {
    let bound = gamma_bound(lambda, alpha, g);
    RecoveryCertificate {
        mode: CertificateMode::Instance,
        lambda,
        k: support.k(),
        s: support.s(),
        g,
        alpha,
        alpha_lhs: q.rho_c,
        gamma_bound: bound,
        gamma_lhs: q.h_outside,
        cond3_lhs: q.h_inside,
        conditions: Conditions {
            block: alpha <= 1.0 && q.rho_c < alpha,
            outside: bound.exceeds(q.h_outside),
            inside: q.h_inside < 1.0,
        },
        reason: None,
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("lambda must lie in [0, 1], got {lambda}")))
    }
}

/// Support-dependent sufficient conditions at a caller-chosen `alpha`.
pub fn instance_conditions(dict: &Dictionary, support: &SupportSpec, lambda: f64, alpha: f64) -> Result<RecoveryCertificate> {
    check_lambda(lambda)?;
    let q = instance_quantities(dict, support)?;
    let g = dict.partition().uniform_size().expect("validated");
    Ok(instance_certificate(q, support, g, lambda, alpha))
}

/// Like [`instance_conditions`], with `alpha` just above `ρ_c(Q D_{Ḡ₀})`,
/// which gives the loosest admissible bound on `γ`.
pub fn certify_instance(dict: &Dictionary, support: &SupportSpec, lambda: f64) -> Result<RecoveryCertificate> {
    check_lambda(lambda)?;
    let q = instance_quantities(dict, support)?;
    let g = dict.partition().uniform_size().expect("validated");
    let alpha = (q.rho_c + 1e-12 * q.rho_c.max(1.0)).min(1.0);
    Ok(instance_certificate(q, support, g, lambda, alpha))
}

/// Dictionary-only sufficient conditions from coherence measures.
///
/// Both denominators subtract the full bracket,
/// `1 − [(s−1)ν_P + (k−1)g μ_P^ss ζ²]` and `1 − [(s−1)ν + (k−1)sχ]`, which is
/// what the Neumann-series step behind the bound requires to be positive.
pub fn theorem2_check(
    report: &CoherenceReport,
    proj: &ProjectedCoherences,
    k: usize,
    s: usize,
    g: usize,
    lambda: f64,
) -> Result<RecoveryCertificate> {
    check_lambda(lambda)?;
    if k == 0 || s == 0 || s > g {
        return Err(Error::Parameter(format!("need k >= 1 and 1 <= s <= g, got k={k} s={s} g={g}")));
    }
    if proj.k != k || proj.s != s || report.s != s {
        return Err(Error::Parameter("measures were computed for a different (k, s)".into()));
    }
    let (kf, sf, gf) = (k as f64, s as f64, g as f64);
    let z2 = proj.zeta * proj.zeta;
    let den1 = 1.0 - (sf - 1.0) * proj.nu_p - (kf - 1.0) * gf * proj.mu_p_ss * z2;
    let den2 = 1.0 - (sf - 1.0) * report.nu - (kf - 1.0) * sf * report.chi;
    let alpha_lhs = z2 * kf * gf * proj.mu_p_s / den1;
    let cond2 = kf * sf * report.chi / den2;
    let cond3 = kf * sf * report.nu / den2;

    let mut reasons = Vec::new();
    if !(den1 > 0.0) {
        reasons.push(format!("projected denominator {den1:.3e} is not positive"));
    }
    if !(den2 > 0.0) {
        reasons.push(format!("coherence denominator {den2:.3e} is not positive"));
    }
    let valid = reasons.is_empty();
    let alpha = if valid { alpha_lhs } else { f64::INFINITY };
    let bound = gamma_bound(lambda, alpha.min(1.0), g);
    Ok(RecoveryCertificate {
        mode: CertificateMode::Uniform,
        lambda,
        k,
        s,
        g,
        alpha,
        alpha_lhs: if valid { alpha_lhs } else { f64::INFINITY },
        gamma_bound: bound,
        gamma_lhs: if valid { cond2 } else { f64::INFINITY },
        cond3_lhs: if valid { cond3 } else { f64::INFINITY },
        conditions: Conditions {
            block: valid && alpha_lhs <= 1.0,
            outside: valid && bound.exceeds(cond2),
            inside: valid && cond3 < 1.0,
        },
        reason: (!valid).then(|| reasons.join("; ")),
    })
}

/// Computes every measure for `(k, s)` and evaluates [`theorem2_check`].
pub fn certify_uniform(dict: &Dictionary, k: usize, s: usize, lambda: f64, cap: u128) -> Result<(CoherenceReport, ProjectedCoherences, RecoveryCertificate)> {
    let g = uniform_group_size(dict.partition())?;
    let report = coherence_report(dict, s, cap)?;
    let proj = projected_coherences(dict, k, s, cap)?;
    let cert = theorem2_check(&report, &proj, k, s, g, lambda)?;
    Ok((report, proj, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn random_dict(seed: u64, m: usize, q: usize, g: usize) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dictionary::normalize(gaussian(&mut rng, m, q * g), GroupPartition::uniform(q, g).unwrap()).unwrap()
    }

    fn orthonormal(seed: u64, m: usize, q: usize, g: usize) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = gaussian(&mut rng, m, m).qr().q().columns(0, q * g).into_owned();
        Dictionary::normalize(basis, GroupPartition::uniform(q, g).unwrap()).unwrap()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(4, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
    }

    #[test]
    fn standard_coherence_cases() {
        assert!(standard_coherence(&orthonormal(1, 6, 3, 2)).unwrap() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let d = Dictionary::new(
            DMatrix::from_column_slice(2, 3, &[1.0, 0.0, h, h, 1.0, 0.0]),
            GroupPartition::singletons(3).unwrap(),
        )
        .unwrap();
        assert!((standard_coherence(&d).unwrap() - 1.0).abs() < 1e-15);
        let d = Dictionary::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, h, h]), GroupPartition::singletons(2).unwrap()).unwrap();
        assert!((standard_coherence(&d).unwrap() - h).abs() < 1e-15);
        let single = Dictionary::new(DMatrix::from_element(2, 1, h), GroupPartition::singletons(1).unwrap()).unwrap();
        assert!(standard_coherence(&single).is_err());
    }

    #[test]
    fn singleton_groups_collapse_measures() {
        let d = random_dict(2, 6, 8, 1);
        let mu = standard_coherence(&d).unwrap();
        assert!((block_coherence(&d).unwrap() - mu).abs() < 1e-12);
        assert!((cross_coherence(&d).unwrap() - mu).abs() < 1e-12);
        assert_eq!(sub_coherence(&d).unwrap(), 0.0);
    }

    #[test]
    fn orthonormal_measures_vanish() {
        let d = orthonormal(3, 8, 4, 2);
        assert!(block_coherence(&d).unwrap() < 1e-12);
        assert!(cross_coherence(&d).unwrap() < 1e-12);
        assert!(sub_coherence(&d).unwrap() < 1e-12);
        let (ss, sn) = sparse_block_coherences(&d, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(ss < 1e-12 && sn < 1e-12);
    }

    #[test]
    fn non_uniform_groups_are_rejected() {
        let d = Dictionary::normalize(
            DMatrix::identity(3, 3),
            GroupPartition::new(vec![vec![0, 1], vec![2]], 3).unwrap(),
        )
        .unwrap();
        assert!(block_coherence(&d).is_err());
        assert!(cross_coherence(&d).is_err());
        assert!(sub_coherence(&d).is_err());
    }

    /// Dense SVD of the full off-diagonal Gram block, independent of `block()`.
    #[test]
    fn block_coherence_matches_dense_svd() {
        let d = random_dict(4, 8, 2, 4);
        let gram = d.matrix().transpose() * d.matrix();
        let off = gram.view((0, 4), (4, 4)).into_owned();
        let sv = off.svd(false, false).singular_values;
        let want = sv.iter().cloned().fold(0.0, f64::max);
        assert!((block_coherence(&d).unwrap() * 4.0 - want).abs() < 1e-10);
    }

    #[test]
    fn sparse_values_edge_cases() {
        let z = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert_eq!(sparse_singular_value_ss(&z, 1, 100).unwrap(), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = gaussian(&mut rng, 4, 3);
        let full = spectral_norm(&z);
        let square = z.rows(0, 3).into_owned();
        assert!((sparse_singular_value_ss(&square, 3, 100).unwrap() - spectral_norm(&square)).abs() < 1e-12);
        assert!((sparse_matrix_norm_s(&z, 3, 100).unwrap() - full).abs() < 1e-12);
        assert_eq!(sparse_singular_value_ss(&z, 1, 100).unwrap(), z.amax());
        assert!(sparse_singular_value_ss(&z, 4, 100).is_err());
        assert!(matches!(sparse_singular_value_ss(&z, 2, 5), Err(Error::EnumerationCap { .. })));
    }

    /// Re-enumerates in reverse lexicographic order with plain loops.
    #[test]
    fn sparse_values_match_reenumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = gaussian(&mut rng, 5, 5);
        let s = 2;
        let mut pairs = Vec::new();
        for a in (0..5).rev() {
            for b in (0..a).rev() {
                pairs.push([b, a]);
            }
        }
        let mut ss = 0.0f64;
        let mut sn = 0.0f64;
        for r in &pairs {
            let cols_only = DMatrix::from_fn(5, 2, |i, j| z[(i, r[j])]);
            sn = sn.max(cols_only.svd(false, false).singular_values.max());
            for c in &pairs {
                let sub = DMatrix::from_fn(2, 2, |i, j| z[(r[i], c[j])]);
                ss = ss.max(sub.svd(false, false).singular_values.max());
            }
        }
        let got_ss = sparse_singular_value_ss(&z, s, 1000).unwrap();
        let got_s = sparse_matrix_norm_s(&z, s, 1000).unwrap();
        assert_eq!(got_ss, ss);
        assert_eq!(got_s, sn);
        assert!(got_ss <= got_s + 1e-15 && got_s <= spectral_norm(&z) + 1e-12);
    }

    #[test]
    fn sampled_estimate_is_a_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = gaussian(&mut rng, 6, 6);
        let exact = sparse_singular_value_ss(&z, 2, 1000).unwrap();
        let est = sparse_singular_value_ss_sampled(&z, 2, 50, 1).unwrap();
        assert!(est.0 <= exact + 1e-15);
        assert_eq!(est, sparse_singular_value_ss_sampled(&z, 2, 50, 1).unwrap());
    }

    #[test]
    fn full_block_sparse_coherences_equal_block_coherence() {
        let d = random_dict(8, 10, 3, 3);
        let (ss, sn) = sparse_block_coherences(&d, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        let mb = block_coherence(&d).unwrap();
        assert!((ss - mb).abs() < 1e-12 && (sn - mb).abs() < 1e-12);
    }

    #[test]
    fn block_spectral_norm_cases() {
        let id = DMatrix::<f64>::identity(4, 4);
        let p = GroupPartition::uniform(2, 2).unwrap();
        assert!((block_spectral_norm(&id, &p, &p).unwrap() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = gaussian(&mut rng, 3, 4);
        let rho = block_spectral_norm(&z, &GroupPartition::singletons(3).unwrap(), &GroupPartition::singletons(4).unwrap()).unwrap();
        assert!((rho - norm_1_1(&z)).abs() < 1e-12);
        assert!(block_spectral_norm(&z, &p, &p).is_err());
    }

    #[test]
    fn support_sets_partition_atoms() {
        let part = GroupPartition::uniform(4, 3).unwrap();
        let sup = SupportSpec::new(vec![2, 0], vec![vec![1], vec![0]], &part).unwrap();
        assert_eq!(sup.active_atoms(&part), vec![7, 0]);
        assert_eq!(sup.inactive_in_active(&part), vec![6, 8, 1, 2]);
        assert_eq!(sup.inactive_atoms(&part), vec![3, 4, 5, 9, 10, 11]);
        let mut all: Vec<usize> = [sup.active_atoms(&part), sup.inactive_in_active(&part), sup.inactive_atoms(&part)].concat();
        all.sort();
        assert_eq!(all, (0..12).collect::<Vec<_>>());

        assert!(SupportSpec::new(vec![0, 0], vec![vec![0], vec![1]], &part).is_err());
        assert!(SupportSpec::new(vec![0], vec![vec![3]], &part).is_err());
        assert!(SupportSpec::new(vec![0, 1], vec![vec![0], vec![1, 2]], &part).is_err());
        assert_eq!(SupportSpec::enumerate(4, 3, 2, 2).count() as u128, SupportSpec::count(4, 3, 2, 2));
    }

    #[test]
    fn projected_coherences_dense_case() {
        let d = random_dict(10, 12, 3, 3);
        let proj = projected_coherences(&d, 2, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        let mb = block_coherence(&d).unwrap();
        assert!((proj.mu_p_s - mb).abs() < 1e-12);
        assert!((proj.mu_p_ss - mb).abs() < 1e-12);
        assert!((proj.zeta - 1.0).abs() < 1e-12);
        assert!((proj.nu_p - sub_coherence(&d).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn projected_coherences_orthonormal() {
        let d = orthonormal(11, 8, 4, 2);
        let proj = projected_coherences(&d, 2, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(proj.nu_p < 1e-12 && proj.mu_p_s < 1e-12 && proj.mu_p_ss < 1e-12);
        assert!((proj.zeta - 1.0).abs() < 1e-12);
    }

    /// Recomputes every projected measure with the normal-equations projector
    /// `P = D_T (D_TᵀD_T)⁻¹ D_Tᵀ` and explicit loops.
    #[test]
    fn projected_coherences_match_normal_equation_projector() {
        let (q, g, k, s) = (3, 2, 1, 1);
        let d = random_dict(12, 5, q, g);
        let dm = d.matrix();
        let mut want = [0.0f64; 4];
        for active in 0..q {
            for pos in 0..g {
                let t = active * g + (1 - pos);
                let dt = dm.column(t).into_owned();
                let p = &dt * (dt.transpose() * &dt).try_inverse().unwrap() * dt.transpose();
                let c = (DMatrix::identity(5, 5) - p) * dm;
                let kk = dm.transpose() * &c;
                for i in (0..q * g).filter(|&i| i != t) {
                    want[3] = want[3].max(1.0 / kk[(i, i)].sqrt());
                }
                for grp in 0..q {
                    let (i, j) = (grp * g, grp * g + 1);
                    if i != t && j != t {
                        want[0] = want[0].max(kk[(i, j)].abs() / (kk[(i, i)] * kk[(j, j)]).sqrt());
                    }
                }
                for a in 0..q {
                    for b in (0..q).filter(|&b| b != a) {
                        for r in 0..g {
                            // one row of D_aᵀC_b against both columns
                            let row_norm = (0..g).map(|cc| kk[(a * g + r, b * g + cc)].powi(2)).sum::<f64>().sqrt();
                            want[1] = want[1].max(row_norm / g as f64);
                            for cc in 0..g {
                                want[2] = want[2].max(kk[(a * g + r, b * g + cc)].abs() / g as f64);
                            }
                        }
                    }
                }
            }
        }
        let got = projected_coherences(&d, k, s, DEFAULT_ENUMERATION_CAP).unwrap();
        for (a, b) in [got.nu_p, got.mu_p_s, got.mu_p_ss, got.zeta].iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?}");
        }
        assert!(got.zeta >= 1.0);
    }

    #[test]
    fn gamma_bound_limits() {
        assert_eq!(gamma_bound(0.0, 0.3, 4), Bound::Finite(1.0));
        assert_eq!(gamma_bound(1.0, 0.3, 4), Bound::Unbounded);
        assert_eq!(gamma_bound(0.5, 0.5, 4), Bound::Finite(1.25));
    }

    #[test]
    fn orthonormal_instance_conditions_hold() {
        let d = orthonormal(13, 12, 4, 3);
        let sup = SupportSpec::new(vec![1, 3], vec![vec![0, 2], vec![1, 2]], d.partition()).unwrap();
        for lambda in [0.0, 0.3, 0.9, 1.0] {
            let cert = instance_conditions(&d, &sup, lambda, 0.5).unwrap();
            assert!(cert.alpha_lhs < 1e-12 && cert.gamma_lhs < 1e-12 && cert.cond3_lhs < 1e-12);
            assert!(cert.holds());
        }
        let cert = instance_conditions(&d, &sup, 0.0, 0.5).unwrap();
        assert_eq!(cert.gamma_bound, Bound::Finite(1.0));
    }

    #[test]
    fn dependent_active_groups_are_an_assumption_error() {
        let mut m = DMatrix::from_fn(3, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        m[(0, 3)] = 1.0;
        let d = Dictionary::normalize(m, GroupPartition::uniform(1, 4).unwrap()).unwrap();
        let sup = SupportSpec::new(vec![0], vec![vec![0, 1]], d.partition()).unwrap();
        assert!(matches!(instance_conditions(&d, &sup, 0.5, 0.5), Err(Error::Assumption(_))));
    }

    #[test]
    fn uniform_certificate_orthonormal_holds() {
        let d = orthonormal(14, 8, 4, 2);
        for (k, s, lambda) in [(1, 1, 0.2), (2, 2, 0.7), (3, 1, 1.0)] {
            let (_, _, cert) = certify_uniform(&d, k, s, lambda, DEFAULT_ENUMERATION_CAP).unwrap();
            assert!(cert.alpha_lhs < 1e-12 && cert.gamma_lhs < 1e-12 && cert.cond3_lhs < 1e-12);
            assert!(cert.holds(), "{cert:?}");
        }
    }

    #[test]
    fn uniform_certificate_scalar_hand_evaluation() {
        let report = CoherenceReport { mu: 0.3, mu_block: 0.3, chi: 0.3, nu: 0.0, mu_block_ss: 0.3, mu_block_s: 0.3, s: 1 };
        let proj = ProjectedCoherences { nu_p: 0.0, mu_p_s: 0.3, mu_p_ss: 0.3, zeta: 1.0, k: 1, s: 1 };
        let cert = theorem2_check(&report, &proj, 1, 1, 1, 0.5).unwrap();
        // alpha = 1·1·1·0.3 / 1, gamma = 1 + 0.5·0.7/(1·0.5) = 1.7, cond2 = 0.3
        assert!((cert.alpha_lhs - 0.3).abs() < 1e-15);
        assert!((cert.gamma_lhs - 0.3).abs() < 1e-15);
        assert_eq!(cert.cond3_lhs, 0.0);
        let Bound::Finite(b) = cert.gamma_bound else { panic!() };
        assert!((b - 1.7).abs() < 1e-12);
        assert!(cert.holds());
    }

    #[test]
    fn uniform_certificate_reports_bad_denominators() {
        let report = CoherenceReport { mu: 0.9, mu_block: 0.5, chi: 0.9, nu: 0.9, mu_block_ss: 0.5, mu_block_s: 0.5, s: 2 };
        let proj = ProjectedCoherences { nu_p: 0.9, mu_p_s: 0.5, mu_p_ss: 0.5, zeta: 1.5, k: 2, s: 2 };
        let cert = theorem2_check(&report, &proj, 2, 2, 4, 0.5).unwrap();
        assert!(!cert.holds());
        assert!(cert.reason.is_some());
        assert!(theorem2_check(&report, &proj, 1, 2, 4, 0.5).is_err());
    }

    #[test]
    fn sparse_block_coherences_respect_coherence_bounds() {
        for seed in 0..20 {
            let d = random_dict(100 + seed, 10, 4, 4);
            let mu = standard_coherence(&d).unwrap();
            for s in [1, 2, 4] {
                let (ss, sn) = sparse_block_coherences(&d, s, DEFAULT_ENUMERATION_CAP).unwrap();
                let r = s as f64 / 4.0;
                assert!(ss <= r * mu + 1e-12);
                assert!(sn <= r.sqrt() * mu + 1e-12);
            }
        }
    }

    #[test]
    fn full_in_group_support_reduces_to_block_coherence() {
        let d = random_dict(15, 200, 3, 2);
        let (report, proj, cert) = certify_uniform(&d, 2, 2, 0.5, DEFAULT_ENUMERATION_CAP).unwrap();
        let mb = report.mu_block;
        assert!((proj.mu_p_s - mb).abs() < 1e-12 && (proj.mu_p_ss - mb).abs() < 1e-12);
        let den = 1.0 - report.nu - 2.0 * mb;
        assert!(den > 0.0);
        assert!((cert.alpha_lhs - 4.0 * mb / den).abs() < 1e-12 * cert.alpha_lhs.max(1.0));
    }

    #[test]
    fn block_norm_bounds_group_regularizer() {
        use crate::model::group_regularizer;
        let rows = GroupPartition::new(vec![vec![0, 1], vec![2], vec![3, 4, 5]], 6).unwrap();
        let cols = GroupPartition::new(vec![vec![0], vec![1, 2, 3], vec![4, 5]], 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..1000 {
            let z = gaussian(&mut rng, 6, 6);
            let v = gaussian(&mut rng, 6, 1);
            let lhs = group_regularizer(&(&z * &v), &rows, false, false).unwrap();
            let rhs = block_spectral_norm(&z, &rows, &cols).unwrap() * group_regularizer(&v, &cols, false, false).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn coherence_ordering_chain(seed in any::<u64>()) {
            let d = random_dict(seed, 6, 3, 3);
            let r = coherence_report(&d, 2, DEFAULT_ENUMERATION_CAP).unwrap();
            prop_assert!(0.0 <= r.mu_block_ss);
            prop_assert!(r.mu_block_ss <= r.mu_block_s + 1e-15);
            prop_assert!(r.mu_block_s <= r.mu_block + 1e-15);
            prop_assert!(r.mu_block <= r.mu + 1e-12);
            prop_assert!(r.mu <= 1.0 + 1e-12);
            prop_assert!(r.nu <= r.mu && r.chi <= r.mu);
        }

        #[test]
        fn block_norm_is_submultiplicative(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p1 = GroupPartition::uniform(2, 2).unwrap();
            let p2 = GroupPartition::uniform(3, 2).unwrap();
            let p3 = GroupPartition::uniform(2, 3).unwrap();
            let a = gaussian(&mut rng, 4, 6);
            let b = gaussian(&mut rng, 6, 6);
            let ab = &a * &b;
            let lhs = block_spectral_norm(&ab, &p1, &p3).unwrap();
            let rhs = block_spectral_norm(&a, &p1, &p2).unwrap() * block_spectral_norm(&b, &p2, &p3).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}
