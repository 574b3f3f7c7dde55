use serde::{Deserialize, Serialize};

use super::linalg::{c, trace, CMat, C64};
use super::{CalcError, ProcessTensor, Register, FORMAT_VERSION};

/// A subnormalized classical-quantum state `Σ_i |i⟩⟨i| ⊗ M_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CQState {
    quantum_dim: usize,
    branches: Vec<CMat>,
}

impl CQState {
    pub fn new(branches: Vec<CMat>) -> Result<Self, CalcError> {
        let n = branches.first().map(|m| m.nrows()).ok_or_else(|| CalcError::Invalid("no classical branches".into()))?;
        if n == 0 || branches.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(CalcError::Dimension("branch operators must share one square shape".into()));
        }
        Ok(CQState { quantum_dim: n, branches })
    }

    pub fn classical_dim(&self) -> usize {
        self.branches.len()
    }

    pub fn quantum_dim(&self) -> usize {
        self.quantum_dim
    }

    pub fn branches(&self) -> &[CMat] {
        &self.branches
    }

    pub fn trace(&self) -> f64 {
        self.branches.iter().map(|m| trace(m).re).sum()
    }

    pub fn registers(&self) -> Vec<Register> {
        vec![Register::classical(self.classical_dim()), Register::quantum(self.quantum_dim)]
    }

    /// State on `[classical c, quantum n]`; index `k·n² + i·n + j` holds `(M_k)_ij`.
    pub fn to_state(&self) -> ProcessTensor {
        let n = self.quantum_dim;
        let mut v = Vec::with_capacity(self.classical_dim() * n * n);
        for m in &self.branches {
            for i in 0..n {
                for j in 0..n {
                    v.push(m[(i, j)]);
                }
            }
        }
        ProcessTensor::state(self.registers(), v).expect("dimensions agree")
    }

    pub fn from_state(s: &ProcessTensor) -> Result<Self, CalcError> {
        let regs = s.outputs();
        if !s.is_state() || regs.len() != 2 || regs[0].is_quantum() || !regs[1].is_quantum() {
            return Err(CalcError::Invalid("expected a state on [classical, quantum]".into()));
        }
        let n = regs[1].base_dim;
        let col = s.matrix().column(0);
        let branches = (0..regs[0].base_dim)
            .map(|k| CMat::from_fn(n, n, |i, j| col[k * n * n + i * n + j]))
            .collect();
        CQState::new(branches)
    }

    /// Reject branches that are not Hermitian PSD (beyond `tol`).
    pub fn validate(&self, tol: f64) -> Result<(), CalcError> {
        for m in &self.branches {
            if super::linalg::anti_herm_norm(m) > tol {
                return Err(CalcError::Invalid("branch operator is not Hermitian".into()));
            }
            let min = super::linalg::herm_eigenvalues(m)[0];
            if min < -tol {
                return Err(CalcError::NotPositive(min));
            }
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Self {
        CQState { quantum_dim: self.quantum_dim, branches: self.branches.iter().map(|m| m.scale(s)).collect() }
    }

    /// The purely classical state with the given distribution and a one-dimensional quantum part.
    pub fn classical(p: &[f64]) -> Result<Self, CalcError> {
        CQState::new(p.iter().map(|&x| CMat::from_element(1, 1, c(x))).collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CQFile {
    format_version: u32,
    quantum_dim: usize,
    branches: Vec<Vec<[f64; 2]>>,
}

impl Serialize for CQState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let n = self.quantum_dim;
        let branches = self
            .branches
            .iter()
            .map(|m| (0..n * n).map(|k| [m[(k / n, k % n)].re, m[(k / n, k % n)].im]).collect())
            .collect();
        CQFile { format_version: FORMAT_VERSION, quantum_dim: n, branches }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CQState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let f = CQFile::deserialize(d)?;
        if f.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", f.format_version)));
        }
        let n = f.quantum_dim;
        let mut branches = Vec::with_capacity(f.branches.len());
        for b in f.branches {
            if b.len() != n * n {
                return Err(D::Error::custom("branch length must be quantum_dim²"));
            }
            branches.push(CMat::from_fn(n, n, |i, j| {
                let [re, im] = b[i * n + j];
                C64::new(re, im)
            }));
        }
        CQState::new(branches).map_err(D::Error::custom)
    }
}
