//! Domain types and the composite sparse-coding objectives.
//!
//! All five models share one objective
//!
//! ```text
//! ½‖M∘(X − DA)‖²_F + λ₂ ψ(A) + λ₁ Σ_j ‖a_j‖₁
//! ```
//!
//! where `M` is the observation mask (all ones when absent) and `ψ` is the
//! group regularizer: `Σ_G ‖A[G,:]‖_F` in the collaborative case, and the
//! per-column sum `Σ_j Σ_G ‖a_j[G]‖₂` otherwise.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient matrix, `p × n`, one code per signal column.
pub type CodeMatrix = DMatrix<f64>;

const UNIT_NORM_TOL: f64 = 1e-9;

/// Disjoint groups of atom indices (0-based) covering `0..p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    atom_group: Vec<usize>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Partition("no groups".into()));
        }
        let mut atom_group = vec![usize::MAX; p];
        for (r, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Partition(format!("group {} is empty", r + 1)));
            }
            for &i in group {
                if i >= p {
                    return Err(Error::Partition(format!(
                        "atom index {} out of range for p = {p}",
                        i + 1
                    )));
                }
                if atom_group[i] != usize::MAX {
                    return Err(Error::Partition(format!(
                        "atom {} appears in more than one group",
                        i + 1
                    )));
                }
                atom_group[i] = r;
            }
        }
        if let Some(i) = atom_group.iter().position(|&r| r == usize::MAX) {
            return Err(Error::Partition(format!("atom {} is not in any group", i + 1)));
        }
        Ok(Self { groups, atom_group })
    }

    /// `q` consecutive groups of `g` atoms each.
    pub fn uniform(q: usize, g: usize) -> Result<Self> {
        if q == 0 || g == 0 {
            return Err(Error::Partition("q and g must be positive".into()));
        }
        let groups = (0..q).map(|r| (r * g..(r + 1) * g).collect()).collect();
        Self::new(groups, q * g)
    }

    pub fn singletons(p: usize) -> Result<Self> {
        Self::uniform(p, 1)
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, r: usize) -> &[usize] {
        &self.groups[r]
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_atoms(&self) -> usize {
        self.atom_group.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Index of the group owning `atom`.
    pub fn group_of(&self, atom: usize) -> usize {
        self.atom_group[atom]
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform_size().is_some()
    }

    /// Common group size, if every group has the same number of atoms.
    pub fn uniform_size(&self) -> Option<usize> {
        let g = self.groups[0].len();
        self.groups.iter().all(|grp| grp.len() == g).then_some(g)
    }
}

/// `m × p` dictionary with unit-norm columns and a group partition.
#[derive(Debug, Clone)]
pub struct Dictionary {
    matrix: DMatrix<f64>,
    partition: GroupPartition,
}

impl Dictionary {
    /// Accepts `matrix` only if every column already has unit norm.
    pub fn new(matrix: DMatrix<f64>, partition: GroupPartition) -> Result<Self> {
        Self::check_shape(&matrix, &partition)?;
        for (j, col) in matrix.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Dictionary(format!(
                    "column {} has norm {norm}, expected 1",
                    j + 1
                )));
            }
        }
        Ok(Self { matrix, partition })
    }

    /// Divides each column by its Euclidean norm.
    pub fn normalize(mut matrix: DMatrix<f64>, partition: GroupPartition) -> Result<Self> {
        Self::check_shape(&matrix, &partition)?;
        for (j, mut col) in matrix.column_iter_mut().enumerate() {
            let norm = col.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Dictionary(format!("column {} has zero norm", j + 1)));
            }
            col /= norm;
        }
        Ok(Self { matrix, partition })
    }

    fn check_shape(matrix: &DMatrix<f64>, partition: &GroupPartition) -> Result<()> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Dictionary("empty dictionary".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dictionary("non-finite entry".into()));
        }
        if partition.num_atoms() != matrix.ncols() {
            return Err(Error::Dimension(format!(
                "partition covers {} atoms but dictionary has {} columns",
                partition.num_atoms(),
                matrix.ncols()
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    /// Signal dimension `m`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Atom count `p`.
    pub fn num_atoms(&self) -> usize {
        self.matrix.ncols()
    }

    /// Columns of the dictionary indexed by `atoms`, in that order.
    pub fn columns(&self, atoms: &[usize]) -> DMatrix<f64> {
        self.matrix.select_columns(atoms)
    }

    /// Replaces the partition, keeping the atoms.
    pub fn with_partition(self, partition: GroupPartition) -> Result<Self> {
        Self::check_shape(&self.matrix, &partition)?;
        Ok(Self { matrix: self.matrix, partition })
    }
}

/// Observed signals `X` with an optional mask (`true` = observed).
#[derive(Debug, Clone)]
pub struct SignalSet {
    matrix: DMatrix<f64>,
    mask: Option<DMatrix<bool>>,
}

impl SignalSet {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix, mask: None }
    }

    pub fn with_mask(matrix: DMatrix<f64>, mask: DMatrix<bool>) -> Result<Self> {
        if mask.shape() != matrix.shape() {
            return Err(Error::Dimension(format!(
                "mask is {:?} but signals are {:?}",
                mask.shape(),
                matrix.shape()
            )));
        }
        for (j, col) in mask.column_iter().enumerate() {
            if !col.iter().any(|&b| b) {
                return Err(Error::Parameter(format!(
                    "signal {} has no observed entries",
                    j + 1
                )));
            }
        }
        Ok(Self { matrix, mask: Some(mask) })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn mask(&self) -> Option<&DMatrix<bool>> {
        self.mask.as_ref()
    }

    pub fn num_signals(&self) -> usize {
        self.matrix.ncols()
    }

    /// Same signals with columns reordered by `perm` (new column `j` is old `perm[j]`).
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        Self {
            matrix: self.matrix.select_columns(perm),
            mask: self.mask.as_ref().map(|m| m.select_columns(perm)),
        }
    }
}

/// Named model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lasso,
    Glasso,
    Hilasso,
    Cglasso,
    Chilasso,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Lasso, Mode::Glasso, Mode::Hilasso, Mode::Cglasso, Mode::Chilasso];

    pub fn is_collaborative(self) -> bool {
        matches!(self, Mode::Cglasso | Mode::Chilasso)
    }

    pub fn uses_groups(self) -> bool {
        !matches!(self, Mode::Lasso)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Lasso => "lasso",
            Mode::Glasso => "glasso",
            Mode::Hilasso => "hilasso",
            Mode::Cglasso => "cglasso",
            Mode::Chilasso => "chilasso",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regularization weights and structure selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub collaborative: bool,
    /// Weight each group-norm term by `sqrt(|G|)`.
    #[serde(default)]
    pub group_size_scaling: bool,
    /// Permits `lambda1 = lambda2 = 0`.
    #[serde(default)]
    pub allow_unregularized: bool,
}

impl RegularizerSpec {
    pub fn new(lambda1: f64, lambda2: f64, collaborative: bool) -> Result<Self> {
        let spec = Self {
            lambda1,
            lambda2,
            collaborative,
            group_size_scaling: false,
            allow_unregularized: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds the spec for a named model. The weight that the model does not
    /// use is forced to zero.
    pub fn for_mode(mode: Mode, lambda1: f64, lambda2: f64) -> Result<Self> {
        let (l1, l2) = match mode {
            Mode::Lasso => (lambda1, 0.0),
            Mode::Glasso | Mode::Cglasso => (0.0, lambda2),
            Mode::Hilasso | Mode::Chilasso => (lambda1, lambda2),
        };
        Self::new(l1, l2, mode.is_collaborative())
    }

    pub fn lasso(lambda1: f64) -> Result<Self> {
        Self::for_mode(Mode::Lasso, lambda1, 0.0)
    }

    pub fn hilasso(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::for_mode(Mode::Hilasso, lambda1, lambda2)
    }

    pub fn chilasso(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::for_mode(Mode::Chilasso, lambda1, lambda2)
    }

    /// Plain least squares, `λ₁ = λ₂ = 0`.
    pub fn least_squares() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            collaborative: false,
            group_size_scaling: false,
            allow_unregularized: true,
        }
    }

    pub fn with_group_size_scaling(mut self, on: bool) -> Self {
        self.group_size_scaling = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.lambda1 + self.lambda2 <= 0.0 && !self.allow_unregularized {
            return Err(Error::Parameter(
                "lambda1 + lambda2 must be positive (use least_squares for the unregularized problem)".into(),
            ));
        }
        Ok(())
    }

    /// The model family these weights correspond to.
    pub fn mode(&self) -> Option<Mode> {
        match (self.lambda1 > 0.0, self.lambda2 > 0.0, self.collaborative) {
            (true, false, _) => Some(Mode::Lasso),
            (false, true, false) => Some(Mode::Glasso),
            (true, true, false) => Some(Mode::Hilasso),
            (false, true, true) => Some(Mode::Cglasso),
            (true, true, true) => Some(Mode::Chilasso),
            (false, false, _) => None,
        }
    }
}

/// Group regularizer `ψ`.
///
/// Collaborative: `Σ_G ‖A[G,:]‖_F`. Otherwise the per-column sum
/// `Σ_j Σ_G ‖a_j[G]‖₂`. With `scaling`, each term is multiplied by `sqrt(|G|)`.
pub fn group_regularizer(
    codes: &DMatrix<f64>,
    partition: &GroupPartition,
    collaborative: bool,
    scaling: bool,
) -> Result<f64> {
    if codes.nrows() != partition.num_atoms() {
        return Err(Error::Dimension(format!(
            "code has {} rows but partition covers {} atoms",
            codes.nrows(),
            partition.num_atoms()
        )));
    }
    let mut total = 0.0;
    for group in partition.groups() {
        let weight = if scaling { (group.len() as f64).sqrt() } else { 1.0 };
        if collaborative {
            let sq: f64 = group
                .iter()
                .map(|&i| codes.row(i).iter().map(|v| v * v).sum::<f64>())
                .sum();
            total += weight * sq.sqrt();
        } else {
            for col in codes.column_iter() {
                let sq: f64 = group.iter().map(|&i| col[i] * col[i]).sum();
                total += weight * sq.sqrt();
            }
        }
    }
    Ok(total)
}

pub(crate) fn check_dims(dict: &Dictionary, signals: &SignalSet, codes: &DMatrix<f64>) -> Result<()> {
    let x = signals.matrix();
    if x.nrows() != dict.dim() {
        return Err(Error::Dimension(format!(
            "signals have dimension {} but dictionary atoms have {}",
            x.nrows(),
            dict.dim()
        )));
    }
    if codes.nrows() != dict.num_atoms() || codes.ncols() != x.ncols() {
        return Err(Error::Dimension(format!(
            "code matrix is {}x{}, expected {}x{}",
            codes.nrows(),
            codes.ncols(),
            dict.num_atoms(),
            x.ncols()
        )));
    }
    Ok(())
}

/// `M∘(DA − X)`, with unobserved entries set to exactly zero.
pub fn masked_residual(dict: &Dictionary, signals: &SignalSet, codes: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dims(dict, signals, codes)?;
    let mut r = dict.matrix() * codes - signals.matrix();
    if let Some(mask) = signals.mask() {
        r.zip_apply(mask, |v, observed| {
            if !observed {
                *v = 0.0;
            }
        });
    }
    Ok(r)
}

/// Entrywise ℓ₁ norm summed over all columns.
pub fn l1_norm(codes: &DMatrix<f64>) -> f64 {
    codes.iter().map(|v| v.abs()).sum()
}

/// Regularization part of the objective, `λ₂ψ(A) + λ₁Σ‖a_j‖₁`.
pub fn penalty(codes: &DMatrix<f64>, partition: &GroupPartition, spec: &RegularizerSpec) -> Result<f64> {
    let mut value = 0.0;
    if spec.lambda2 > 0.0 {
        value += spec.lambda2 * group_regularizer(codes, partition, spec.collaborative, spec.group_size_scaling)?;
    }
    if spec.lambda1 > 0.0 {
        value += spec.lambda1 * l1_norm(codes);
    }
    Ok(value)
}

/// Composite objective value at `codes`.
pub fn objective(
    dict: &Dictionary,
    signals: &SignalSet,
    codes: &DMatrix<f64>,
    spec: &RegularizerSpec,
) -> Result<f64> {
    let r = masked_residual(dict, signals, codes)?;
    Ok(0.5 * r.norm_squared() + penalty(codes, dict.partition(), spec)?)
}
