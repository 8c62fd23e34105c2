//! Finite-atom laws of the point process `(N, A₁, …, A_N)`.
//!
//! A [`ModelSpec`] is always stored in expanded form: a list of branch
//! atoms, each a probability and the ordered list of child weights. The
//! i.i.d.-coefficient and scalar-randomized descriptions are expanded at
//! validation time and kept only for serialization.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{spectral_radius, NonNegMatrix};
use crate::rng::Rng;

/// Tolerance on probability sums.
pub const PROB_TOL: f64 = 1e-12;

/// Cap on the number of expanded branch atoms.
pub const MAX_ATOMS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchEntry {
    pub probability: f64,
    pub branch: Vec<NonNegMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountEntry {
    pub probability: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub probability: f64,
    pub matrix: NonNegMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarEntry {
    pub probability: f64,
    pub value: f64,
}

/// On-disk description of a model (JSON).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    #[serde(flatten)]
    pub law: LawDescription,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LawDescription {
    /// Explicit joint law of `(N, A₁, …, A_N)`.
    ExplicitAtoms { atoms: Vec<BranchEntry> },
    /// `N` from `n_law`; given `N`, the weights are i.i.d. from `mu_atoms`.
    IIDCoefficients { n_law: Vec<CountEntry>, mu_atoms: Vec<MatrixEntry> },
    /// `A_i = X · b_i` for a fixed branch `(b_i)` and a positive scalar `X`.
    ScalarRandomized { base_branch: Vec<NonNegMatrix>, scalar_law: Vec<ScalarEntry> },
}

/// One realization `(n, A₁, …, A_n)` with its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchAtom {
    pub probability: f64,
    pub matrices: Vec<NonNegMatrix>,
}

impl BranchAtom {
    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    /// The realization of `Y = Σ A_i`.
    pub fn sum(&self) -> NonNegMatrix {
        let mut it = self.matrices.iter();
        let first = it.next().expect("branches are nonempty").clone();
        it.fold(first, |acc, a| acc.add(a))
    }
}

/// A single draw of the point process, borrowed from the model.
#[derive(Clone, Copy, Debug)]
pub struct BranchSample<'a> {
    pub atom: usize,
    pub matrices: &'a [NonNegMatrix],
}

impl BranchSample<'_> {
    pub fn n(&self) -> usize {
        self.matrices.len()
    }
}

/// Result of the Furstenberg–Kesten check on the law of `A₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FkCheck {
    pub holds: bool,
    /// Smallest admissible ratio bound `max A₁(i,j) ≤ c · min A₁(i,j)`;
    /// infinite when some atom has a zero entry.
    pub c: f64,
}

/// Validated, expanded finite-atom model.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    name: Option<String>,
    dim: usize,
    description: LawDescription,
    atoms: Vec<BranchAtom>,
    sampler: WeightedIndex<f64>,
    cumulative: Vec<f64>,
    expected_n: f64,
}

fn check_probabilities(ps: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    let mut count = 0;
    for p in ps {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidModel(format!("{what}: probability {p} not in (0, 1]")));
        }
        total += p;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidModel(format!("{what}: empty law")));
    }
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what}: probabilities sum to {total}")));
    }
    Ok(())
}

fn expand(dim: usize, law: &LawDescription) -> Result<Vec<BranchAtom>> {
    match law {
        LawDescription::ExplicitAtoms { atoms } => {
            check_probabilities(atoms.iter().map(|a| a.probability), "atoms")?;
            Ok(atoms.iter().map(|a| BranchAtom { probability: a.probability, matrices: a.branch.clone() }).collect())
        }
        LawDescription::IIDCoefficients { n_law, mu_atoms } => {
            check_probabilities(n_law.iter().map(|e| e.probability), "n_law")?;
            check_probabilities(mu_atoms.iter().map(|e| e.probability), "mu_atoms")?;
            let mut out = Vec::new();
            for entry in n_law {
                if entry.n == 0 {
                    return Err(Error::InvalidModel("P[N = 0] > 0".into()));
                }
                let count = mu_atoms.len().checked_pow(entry.n as u32).unwrap_or(usize::MAX);
                if out.len().saturating_add(count) > MAX_ATOMS {
                    return Err(Error::InvalidModel(format!("more than {MAX_ATOMS} expanded atoms")));
                }
                // odometer over n-tuples of mu atoms
                let mut idx = vec![0usize; entry.n];
                loop {
                    let p = idx.iter().map(|&k| mu_atoms[k].probability).product::<f64>();
                    out.push(BranchAtom {
                        probability: entry.probability * p,
                        matrices: idx.iter().map(|&k| mu_atoms[k].matrix.clone()).collect(),
                    });
                    let mut pos = 0;
                    while pos < entry.n {
                        idx[pos] += 1;
                        if idx[pos] < mu_atoms.len() {
                            break;
                        }
                        idx[pos] = 0;
                        pos += 1;
                    }
                    if pos == entry.n {
                        break;
                    }
                }
            }
            Ok(out)
        }
        LawDescription::ScalarRandomized { base_branch, scalar_law } => {
            check_probabilities(scalar_law.iter().map(|e| e.probability), "scalar_law")?;
            scalar_law
                .iter()
                .map(|e| {
                    if !(e.value > 0.0 && e.value.is_finite()) {
                        return Err(Error::InvalidModel(format!("scalar {} is not positive", e.value)));
                    }
                    Ok(BranchAtom {
                        probability: e.probability,
                        matrices: base_branch.iter().map(|b| b.scale(e.value)).collect(),
                    })
                })
                .collect()
        }
    }
    .and_then(|atoms: Vec<BranchAtom>| {
        for atom in &atoms {
            if atom.matrices.is_empty() {
                return Err(Error::InvalidModel("P[N = 0] > 0 (empty branch)".into()));
            }
            for a in &atom.matrices {
                if a.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: a.dim() });
                }
                if a.is_zero() {
                    return Err(Error::InvalidModel("zero weight matrix in a branch".into()));
                }
            }
        }
        Ok(atoms)
    })
}

impl ModelSpec {
    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.dim == 0 {
            return Err(Error::InvalidModel("dim must be positive".into()));
        }
        let atoms = expand(file.dim, &file.law)?;
        let expected_n: f64 = atoms.iter().map(|a| a.probability * a.n() as f64).sum();
        if expected_n <= 1.0 {
            return Err(Error::InvalidModel(format!("E[N] = {expected_n} is not > 1")));
        }
        let sampler =
            WeightedIndex::new(atoms.iter().map(|a| a.probability)).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let mut cumulative: Vec<f64> = atoms
            .iter()
            .scan(0.0, |acc, a| {
                *acc += a.probability;
                Some(*acc)
            })
            .collect();
        *cumulative.last_mut().expect("nonempty") = f64::INFINITY;
        Ok(Self { name: file.name, dim: file.dim, description: file.law, atoms, sampler, cumulative, expected_n })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(json)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::ModelNotFound(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile { name: self.name.clone(), dim: self.dim, law: self.description.clone() }
    }

    pub fn explicit(dim: usize, atoms: Vec<(f64, Vec<NonNegMatrix>)>) -> Result<Self> {
        Self::from_file(ModelFile {
            name: None,
            dim,
            law: LawDescription::ExplicitAtoms {
                atoms: atoms.into_iter().map(|(probability, branch)| BranchEntry { probability, branch }).collect(),
            },
        })
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[BranchAtom] {
        &self.atoms
    }

    pub fn description(&self) -> &LawDescription {
        &self.description
    }

    pub fn expected_n(&self) -> f64 {
        self.expected_n
    }

    pub fn esssup_n(&self) -> usize {
        self.atoms.iter().map(BranchAtom::n).max().unwrap_or(0)
    }

    pub fn sample_branch(&self, rng: &mut Rng) -> BranchSample<'_> {
        let atom = self.sampler.sample(rng);
        BranchSample { atom, matrices: &self.atoms[atom].matrices }
    }

    /// Branch selected by inverting the atom distribution at `u ∈ [0, 1)`.
    pub fn branch_for_uniform(&self, u: f64) -> BranchSample<'_> {
        let atom = self.cumulative.partition_point(|&c| c <= u);
        BranchSample { atom, matrices: &self.atoms[atom].matrices }
    }

    /// `E[Σ A_i]`.
    pub fn mean_sum_matrix(&self) -> NonNegMatrix {
        let d = self.dim;
        let mut acc = vec![0.0; d * d];
        for atom in &self.atoms {
            for a in &atom.matrices {
                for (s, x) in acc.iter_mut().zip(a.entries()) {
                    *s += atom.probability * x;
                }
            }
        }
        NonNegMatrix::from_row_major(d, acc).expect("nonnegative by construction")
    }

    /// `∫ a μ(da) = E[Σ A_i] / E[N]`.
    pub fn mu_mean(&self) -> NonNegMatrix {
        self.mean_sum_matrix().scale(1.0 / self.expected_n)
    }

    /// The size-biased single-matrix law `μ`, identical matrices merged.
    pub fn mu_atoms(&self) -> Vec<(f64, NonNegMatrix)> {
        let mut out: Vec<(f64, NonNegMatrix)> = Vec::new();
        for atom in &self.atoms {
            for a in &atom.matrices {
                let w = atom.probability / self.expected_n;
                match out.iter_mut().find(|(_, m)| m == a) {
                    Some((p, _)) => *p += w,
                    None => out.push((w, a.clone())),
                }
            }
        }
        out
    }

    pub fn prob_n_equals(&self, k: usize) -> f64 {
        self.atoms.iter().filter(|a| a.n() == k).fold(0.0, |acc, a| acc + a.probability)
    }

    /// Condition 7 on the law of `A₁`: strictly positive with bounded
    /// entry ratio.
    pub fn check_furstenberg_kesten(&self) -> FkCheck {
        fk_of(self.atoms.iter().map(|a| &a.matrices[0]))
    }

    /// Law of `Ã₁`, i.e. `A₁` conditioned on `{N = 1}`.
    pub fn conditioned_a1_atoms(&self) -> Result<Vec<(f64, NonNegMatrix)>> {
        let p1 = self.prob_n_equals(1);
        if p1 == 0.0 {
            return Err(Error::NoSingletonBranch);
        }
        let mut out: Vec<(f64, NonNegMatrix)> = Vec::new();
        for atom in self.atoms.iter().filter(|a| a.n() == 1) {
            let w = atom.probability / p1;
            match out.iter_mut().find(|(_, m)| *m == atom.matrices[0]) {
                Some((p, _)) => *p += w,
                None => out.push((w, atom.matrices[0].clone())),
            }
        }
        Ok(out)
    }

    /// Condition 5: given `N = n`, `(A₁, …, A_n)` are i.i.d. with law `μ`.
    /// Checked by comparing the conditional joint law with the product of
    /// `μ` on every `n` in the support.
    pub fn check_conditional_iid(&self) -> bool {
        let mu = self.mu_atoms();
        let index_of = |a: &NonNegMatrix| mu.iter().position(|(_, m)| m == a).expect("in supp mu");
        let mut ns: Vec<usize> = self.atoms.iter().map(BranchAtom::n).collect();
        ns.sort_unstable();
        ns.dedup();
        for n in ns {
            let pn = self.prob_n_equals(n);
            let mut joint: Vec<(Vec<usize>, f64)> = Vec::new();
            for atom in self.atoms.iter().filter(|a| a.n() == n) {
                let key: Vec<usize> = atom.matrices.iter().map(index_of).collect();
                match joint.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, p)) => *p += atom.probability / pn,
                    None => joint.push((key, atom.probability / pn)),
                }
            }
            let expected_tuples = mu.len().pow(n as u32);
            if joint.len() != expected_tuples {
                return false;
            }
            for (key, p) in &joint {
                let q: f64 = key.iter().map(|&k| mu[k].0).product();
                if (p - q).abs() > 1e-9 {
                    return false;
                }
            }
        }
        true
    }

    /// Exact `m(1) = E[N] · r(∫ a μ(da)) = r(E[Σ A_i])`.
    pub fn m_one(&self) -> f64 {
        spectral_radius(&self.mean_sum_matrix())
    }
}

pub(crate) fn fk_of<'a>(matrices: impl Iterator<Item = &'a NonNegMatrix>) -> FkCheck {
    let mut c: f64 = 1.0;
    for a in matrices {
        let lo = a.min_entry();
        if lo <= 0.0 {
            return FkCheck { holds: false, c: f64::INFINITY };
        }
        c = c.max(a.max_entry() / lo);
    }
    FkCheck { holds: true, c }
}
