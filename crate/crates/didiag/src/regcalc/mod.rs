//! Numeric semantics for classical and quantum registers.
//!
//! A classical register of dimension `n` carries vectors in `C^n`. A quantum register
//! of base dimension `n` is stored doubled: the operator `Σ c_ij |i⟩⟨j|` becomes the
//! vector `Σ c_ij |i⟩⊗|j⟩` of length `n²`, index `i·n + j`. A pure state `v` is the
//! doubled vector `v ⊗ v̄`, the left factor carrying `v` and the right its conjugate.
//!
//! A [`ProcessTensor`] is a matrix from the product of its input registers to the
//! product of its output registers. Products are always left-factor-major.

mod cq;
mod distance;
pub mod linalg;
mod predicates;
pub mod random;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cq::CQState;
pub use distance::{process_distance, process_distance_with, trace_distance_half, DistanceInterval};
use linalg::{c, CMat, C64};
pub use predicates::{structural_predicates, Predicates};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Classical,
    Quantum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Register {
    pub kind: Kind,
    pub base_dim: usize,
}

impl Register {
    pub const fn classical(n: usize) -> Self {
        Register { kind: Kind::Classical, base_dim: n }
    }

    pub const fn quantum(n: usize) -> Self {
        Register { kind: Kind::Quantum, base_dim: n }
    }

    /// Dimension of the vector space carrying the register (`n²` for quantum).
    pub fn total_dim(&self) -> usize {
        match self.kind {
            Kind::Classical => self.base_dim,
            Kind::Quantum => self.base_dim * self.base_dim,
        }
    }

    pub fn is_quantum(&self) -> bool {
        self.kind == Kind::Quantum
    }
}

impl std::fmt::Display for Register {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            Kind::Classical => write!(f, "classical {}", self.base_dim),
            Kind::Quantum => write!(f, "quantum {}", self.base_dim),
        }
    }
}

pub fn total_dim(regs: &[Register]) -> usize {
    regs.iter().map(Register::total_dim).product()
}

pub fn hilbert_dim(regs: &[Register]) -> usize {
    regs.iter().map(|r| r.base_dim).product()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("type mismatch: expected [{expected}], found [{found}]")]
    TypeMismatch { expected: String, found: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("operator is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("malformed matrix dump: {0}")]
    Dump(String),
}

pub fn fmt_regs(regs: &[Register]) -> String {
    regs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
}

/// A linear map between products of registers.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessTensor {
    inputs: Vec<Register>,
    outputs: Vec<Register>,
    matrix: CMat,
}

impl ProcessTensor {
    pub fn new(inputs: Vec<Register>, outputs: Vec<Register>, matrix: CMat) -> Result<Self, CalcError> {
        let (r, c) = (total_dim(&outputs), total_dim(&inputs));
        if matrix.nrows() != r || matrix.ncols() != c {
            return Err(CalcError::Dimension(format!(
                "matrix is {}x{}, registers need {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                r,
                c
            )));
        }
        for reg in inputs.iter().chain(&outputs) {
            if reg.base_dim == 0 {
                return Err(CalcError::Invalid("register of dimension 0".into()));
            }
        }
        Ok(ProcessTensor { inputs, outputs, matrix })
    }

    pub fn state(outputs: Vec<Register>, vector: Vec<C64>) -> Result<Self, CalcError> {
        let n = vector.len();
        Self::new(vec![], outputs, CMat::from_vec(n, 1, vector))
    }

    pub fn effect(inputs: Vec<Register>, row: Vec<C64>) -> Result<Self, CalcError> {
        let n = row.len();
        Self::new(inputs, vec![], CMat::from_vec(1, n, row))
    }

    pub fn number(x: C64) -> Self {
        ProcessTensor { inputs: vec![], outputs: vec![], matrix: CMat::from_element(1, 1, x) }
    }

    /// Doubled state of a density operator on the product of `regs`. Classical registers keep only the diagonal.
    pub fn from_density(regs: Vec<Register>, rho: &CMat) -> Result<Self, CalcError> {
        let v = operator_to_vec(&regs, rho)?;
        Self::state(regs, v)
    }

    /// Doubled pure state `v ⊗ v̄` built from a Hilbert-space vector.
    pub fn from_pure(regs: Vec<Register>, v: &[C64]) -> Result<Self, CalcError> {
        let n = v.len();
        let col = CMat::from_vec(n, 1, v.to_vec());
        Self::from_density(regs, &(&col * col.adjoint()))
    }

    pub fn inputs(&self) -> &[Register] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Register] {
        &self.outputs
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn is_state(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn scale(&self, s: C64) -> Self {
        ProcessTensor { inputs: self.inputs.clone(), outputs: self.outputs.clone(), matrix: self.matrix.map(|z| z * s) }
    }

    pub fn add(&self, other: &ProcessTensor) -> Result<Self, CalcError> {
        self.check_same_typing(other)?;
        Ok(ProcessTensor { inputs: self.inputs.clone(), outputs: self.outputs.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &ProcessTensor) -> Result<Self, CalcError> {
        self.check_same_typing(other)?;
        Ok(ProcessTensor { inputs: self.inputs.clone(), outputs: self.outputs.clone(), matrix: &self.matrix - &other.matrix })
    }

    pub(crate) fn check_same_typing(&self, other: &ProcessTensor) -> Result<(), CalcError> {
        if self.inputs != other.inputs {
            return Err(CalcError::TypeMismatch { expected: fmt_regs(&self.inputs), found: fmt_regs(&other.inputs) });
        }
        if self.outputs != other.outputs {
            return Err(CalcError::TypeMismatch { expected: fmt_regs(&self.outputs), found: fmt_regs(&other.outputs) });
        }
        Ok(())
    }

    /// Density operator of a state on the product of its output registers.
    pub fn density(&self) -> Result<CMat, CalcError> {
        if !self.is_state() {
            return Err(CalcError::Invalid("density() needs a state".into()));
        }
        Ok(vec_to_operator(&self.outputs, self.matrix.column(0).iter().copied()))
    }

    /// Value of a number (process with no wires).
    pub fn as_number(&self) -> Option<C64> {
        (self.inputs.is_empty() && self.outputs.is_empty()).then(|| self.matrix[(0, 0)])
    }

    pub fn max_abs_diff(&self, other: &ProcessTensor) -> f64 {
        if self.check_same_typing(other).is_err() {
            return f64::INFINITY;
        }
        linalg::max_abs_diff(&self.matrix, &other.matrix)
    }

    pub fn approx_eq(&self, other: &ProcessTensor, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }
}

/// Sequential composition `g ∘ f` (f first).
pub fn compose_seq(f: &ProcessTensor, g: &ProcessTensor) -> Result<ProcessTensor, CalcError> {
    if f.outputs != g.inputs {
        return Err(CalcError::TypeMismatch { expected: fmt_regs(&g.inputs), found: fmt_regs(&f.outputs) });
    }
    Ok(ProcessTensor { inputs: f.inputs.clone(), outputs: g.outputs.clone(), matrix: &g.matrix * &f.matrix })
}

/// Parallel composition `f ⊗ g`, left factor major.
pub fn compose_par(f: &ProcessTensor, g: &ProcessTensor) -> ProcessTensor {
    let mut inputs = f.inputs.clone();
    inputs.extend_from_slice(&g.inputs);
    let mut outputs = f.outputs.clone();
    outputs.extend_from_slice(&g.outputs);
    ProcessTensor { inputs, outputs, matrix: linalg::kron(&f.matrix, &g.matrix) }
}

pub fn identity(regs: &[Register]) -> ProcessTensor {
    let n = total_dim(regs);
    ProcessTensor { inputs: regs.to_vec(), outputs: regs.to_vec(), matrix: CMat::identity(n, n) }
}

/// Wire permutation: output `k` carries input `perm[k]`.
pub fn permutation(regs: &[Register], perm: &[usize]) -> Result<ProcessTensor, CalcError> {
    let mut seen = vec![false; regs.len()];
    if perm.len() != regs.len() || perm.iter().any(|&p| p >= regs.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(CalcError::Invalid(format!("{perm:?} is not a permutation of {} wires", regs.len())));
    }
    let in_dims: Vec<usize> = regs.iter().map(Register::total_dim).collect();
    let out_regs: Vec<Register> = perm.iter().map(|&p| regs[p]).collect();
    let out_dims: Vec<usize> = out_regs.iter().map(Register::total_dim).collect();
    let n = total_dim(regs);
    let mut m = CMat::zeros(n, n);
    for col in 0..n {
        let digits = linalg::unflatten(col, &in_dims);
        let out: Vec<usize> = perm.iter().map(|&p| digits[p]).collect();
        m[(linalg::flatten(&out, &out_dims), col)] = c(1.0);
    }
    Ok(ProcessTensor { inputs: regs.to_vec(), outputs: out_regs, matrix: m })
}

pub fn swap(a: Register, b: Register) -> ProcessTensor {
    permutation(&[a, b], &[1, 0]).expect("two-wire swap")
}

/// General spider with `k_in` inputs and `k_out` outputs over the basis of `reg`.
pub fn spider_process(reg: Register, k_in: usize, k_out: usize) -> Result<ProcessTensor, CalcError> {
    if k_in + k_out == 0 {
        return Err(CalcError::Invalid("a spider needs at least one leg".into()));
    }
    let d = reg.total_dim();
    let rows = d.pow(k_out as u32);
    let cols = d.pow(k_in as u32);
    let mut m = CMat::zeros(rows, cols);
    let rep = |k: usize, i: usize| (0..k).fold(0, |acc, _| acc * d + i);
    for i in 0..d {
        m[(rep(k_out, i), rep(k_in, i))] = c(1.0);
    }
    Ok(ProcessTensor { inputs: vec![reg; k_in], outputs: vec![reg; k_out], matrix: m })
}

/// The state `Σ_i |i⟩^⊗legs`.
pub fn spider(reg: Register, legs: usize) -> Result<ProcessTensor, CalcError> {
    if legs == 0 {
        return Err(CalcError::Invalid("spider needs legs ≥ 1".into()));
    }
    spider_process(reg, 0, legs)
}

/// The spider scaled by `1/m`, `m` the total basis count of `reg`.
pub fn uniform(reg: Register, legs: usize) -> Result<ProcessTensor, CalcError> {
    Ok(spider(reg, legs)?.scale(c(1.0 / reg.total_dim() as f64)))
}

/// Trace on a quantum register, sum of entries on a classical one.
pub fn discard(reg: Register) -> ProcessTensor {
    let d = reg.total_dim();
    let mut row = CMat::zeros(1, d);
    match reg.kind {
        Kind::Classical => row.fill(c(1.0)),
        Kind::Quantum => {
            for i in 0..reg.base_dim {
                row[(0, i * reg.base_dim + i)] = c(1.0);
            }
        }
    }
    ProcessTensor { inputs: vec![reg], outputs: vec![], matrix: row }
}

/// Discard of a list of registers.
pub fn discard_all(regs: &[Register]) -> ProcessTensor {
    regs.iter().fold(ProcessTensor::number(c(1.0)), |acc, r| compose_par(&acc, &discard(*r)))
}

/// Apply `id ⊗ … ⊗ p ⊗ … ⊗ id` where `p` acts on the wires `at..at+p.inputs().len()` of `regs`.
pub fn embed_at(regs: &[Register], at: usize, p: &ProcessTensor) -> Result<ProcessTensor, CalcError> {
    let k = p.inputs.len();
    if at + k > regs.len() || regs[at..at + k] != p.inputs[..] {
        return Err(CalcError::TypeMismatch {
            expected: fmt_regs(&p.inputs),
            found: fmt_regs(&regs[at.min(regs.len())..(at + k).min(regs.len())]),
        });
    }
    let left = identity(&regs[..at]);
    let right = identity(&regs[at + k..]);
    Ok(compose_par(&compose_par(&left, p), &right))
}

/// Discard the wires listed in `which` (indices into the state's outputs).
pub fn partial_discard(state: &ProcessTensor, which: &[usize]) -> Result<ProcessTensor, CalcError> {
    let regs = state.outputs.clone();
    let mut map = ProcessTensor::number(c(1.0));
    for (k, r) in regs.iter().enumerate() {
        let piece = if which.contains(&k) { discard(*r) } else { identity(&[*r]) };
        map = compose_par(&map, &piece);
    }
    compose_seq(state, &map)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dagger {
    Conjugate,
    Transpose,
    Adjoint,
}

pub fn dagger(p: &ProcessTensor, which: Dagger) -> ProcessTensor {
    match which {
        Dagger::Conjugate => ProcessTensor { inputs: p.inputs.clone(), outputs: p.outputs.clone(), matrix: p.matrix.map(|z| z.conj()) },
        Dagger::Transpose => ProcessTensor { inputs: p.outputs.clone(), outputs: p.inputs.clone(), matrix: p.matrix.transpose() },
        Dagger::Adjoint => ProcessTensor { inputs: p.outputs.clone(), outputs: p.inputs.clone(), matrix: p.matrix.adjoint() },
    }
}

/// Read a doubled vector as an operator on the Hilbert product of `regs`.
pub fn vec_to_operator(regs: &[Register], v: impl IntoIterator<Item = C64>) -> CMat {
    let tdims: Vec<usize> = regs.iter().map(Register::total_dim).collect();
    let hdims: Vec<usize> = regs.iter().map(|r| r.base_dim).collect();
    let h = hilbert_dim(regs);
    let mut op = CMat::zeros(h, h);
    for (idx, val) in v.into_iter().enumerate() {
        let (row, col) = split_index(regs, &tdims, &hdims, idx);
        op[(row, col)] += val;
    }
    op
}

/// Inverse of [`vec_to_operator`]; classical registers only read the diagonal.
pub fn operator_to_vec(regs: &[Register], op: &CMat) -> Result<Vec<C64>, CalcError> {
    let h = hilbert_dim(regs);
    if op.nrows() != h || op.ncols() != h {
        return Err(CalcError::Dimension(format!("operator is {}x{}, registers need {h}x{h}", op.nrows(), op.ncols())));
    }
    let tdims: Vec<usize> = regs.iter().map(Register::total_dim).collect();
    let hdims: Vec<usize> = regs.iter().map(|r| r.base_dim).collect();
    Ok((0..total_dim(regs))
        .map(|idx| {
            let (row, col) = split_index(regs, &tdims, &hdims, idx);
            op[(row, col)]
        })
        .collect())
}

fn split_index(regs: &[Register], tdims: &[usize], hdims: &[usize], idx: usize) -> (usize, usize) {
    let digits = linalg::unflatten(idx, tdims);
    let mut rows = Vec::with_capacity(regs.len());
    let mut cols = Vec::with_capacity(regs.len());
    for (r, d) in regs.iter().zip(digits) {
        match r.kind {
            Kind::Classical => {
                rows.push(d);
                cols.push(d);
            }
            Kind::Quantum => {
                rows.push(d / r.base_dim);
                cols.push(d % r.base_dim);
            }
        }
    }
    (linalg::flatten(&rows, hdims), linalg::flatten(&cols, hdims))
}

/// `Φ(|i⟩⟨j|)` for every Hilbert basis pair of the inputs, as operators on the outputs.
/// Pairs that differ on a classical input register map to zero.
pub fn action_on_basis(p: &ProcessTensor) -> Vec<Vec<CMat>> {
    let din = hilbert_dim(&p.inputs);
    let hdims: Vec<usize> = p.inputs.iter().map(|r| r.base_dim).collect();
    let tdims: Vec<usize> = p.inputs.iter().map(Register::total_dim).collect();
    let hout = hilbert_dim(&p.outputs);
    let mut out = vec![vec![CMat::zeros(hout, hout); din]; din];
    for (i, row) in out.iter_mut().enumerate() {
        let di = linalg::unflatten(i, &hdims);
        for (j, slot) in row.iter_mut().enumerate() {
            let dj = linalg::unflatten(j, &hdims);
            let mut digits = Vec::with_capacity(p.inputs.len());
            let mut ok = true;
            for (k, r) in p.inputs.iter().enumerate() {
                match r.kind {
                    Kind::Classical => {
                        if di[k] != dj[k] {
                            ok = false;
                            break;
                        }
                        digits.push(di[k]);
                    }
                    Kind::Quantum => digits.push(di[k] * r.base_dim + dj[k]),
                }
            }
            if ok {
                let col = linalg::flatten(&digits, &tdims);
                *slot = vec_to_operator(&p.outputs, p.matrix.column(col).iter().copied());
            }
        }
    }
    out
}

/// Unnormalized Choi matrix `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`.
pub fn choi(p: &ProcessTensor) -> CMat {
    let blocks = action_on_basis(p);
    let din = blocks.len();
    let hout = hilbert_dim(&p.outputs);
    let mut j = CMat::zeros(din * hout, din * hout);
    for (a, row) in blocks.iter().enumerate() {
        for (b, blk) in row.iter().enumerate() {
            j.view_mut((a * hout, b * hout), (hout, hout)).copy_from(blk);
        }
    }
    j
}

/// Build a process from Kraus operators `H_in → H_out`; classical registers are read
/// and written on the diagonal only.
pub fn from_kraus(inputs: Vec<Register>, outputs: Vec<Register>, kraus: &[CMat]) -> Result<ProcessTensor, CalcError> {
    let hin = hilbert_dim(&inputs);
    let hout = hilbert_dim(&outputs);
    for k in kraus {
        if k.nrows() != hout || k.ncols() != hin {
            return Err(CalcError::Dimension(format!("Kraus operator is {}x{}, expected {hout}x{hin}", k.nrows(), k.ncols())));
        }
    }
    let cols = total_dim(&inputs);
    let mut m = CMat::zeros(total_dim(&outputs), cols);
    for col in 0..cols {
        let mut basis = vec![c(0.0); cols];
        basis[col] = c(1.0);
        let x = vec_to_operator(&inputs, basis);
        let y = kraus.iter().fold(CMat::zeros(hout, hout), |acc, k| acc + k * &x * k.adjoint());
        let v = operator_to_vec(&outputs, &y)?;
        for (r, val) in v.into_iter().enumerate() {
            m[(r, col)] = val;
        }
    }
    ProcessTensor::new(inputs, outputs, m)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDump {
    format_version: u32,
    inputs: Vec<Register>,
    outputs: Vec<Register>,
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl Serialize for ProcessTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (rows, cols) = self.matrix.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let z = self.matrix[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        MatrixDump { format_version: FORMAT_VERSION, inputs: self.inputs.clone(), outputs: self.outputs.clone(), rows, cols, data }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProcessTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let dump = MatrixDump::deserialize(d)?;
        if dump.format_version != FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", dump.format_version)));
        }
        if dump.data.len() != dump.rows * dump.cols {
            return Err(D::Error::custom("data length does not match rows x cols"));
        }
        let m = CMat::from_fn(dump.rows, dump.cols, |r, c| {
            let [re, im] = dump.data[r * dump.cols + c];
            C64::new(re, im)
        });
        ProcessTensor::new(dump.inputs, dump.outputs, m).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cl(n: usize) -> Register {
        Register::classical(n)
    }

    fn basis_state(reg: Register, i: usize) -> ProcessTensor {
        let mut v = vec![c(0.0); reg.total_dim()];
        v[i] = c(1.0);
        ProcessTensor::state(vec![reg], v).unwrap()
    }

    #[test]
    fn spider_small_cases() {
        let s = spider(cl(2), 1).unwrap();
        assert_eq!(s.matrix().as_slice(), &[c(1.0), c(1.0)]);
        let s = spider(cl(2), 2).unwrap();
        assert_eq!(s.matrix().as_slice(), &[c(1.0), c(0.0), c(0.0), c(1.0)]);
        let s = spider(cl(3), 3).unwrap();
        let nz: Vec<usize> = (0..27).filter(|&i| s.matrix()[(i, 0)] != c(0.0)).collect();
        assert_eq!(nz, vec![0, 13, 26]);
        assert!(spider(cl(2), 0).is_err());
    }

    #[test]
    fn uniform_small_cases() {
        assert_eq!(uniform(cl(2), 1).unwrap().matrix().as_slice(), &[c(0.5), c(0.5)]);
        assert_eq!(uniform(cl(2), 2).unwrap().matrix().as_slice(), &[c(0.5), c(0.0), c(0.0), c(0.5)]);
        assert!(uniform(cl(4), 1).unwrap().matrix().iter().all(|z| *z == c(0.25)));
    }

    #[test]
    fn discard_examples() {
        let q = Register::quantum(2);
        let zero = ProcessTensor::from_pure(vec![q], &[c(1.0), c(0.0)]).unwrap();
        let t = compose_seq(&zero, &discard(q)).unwrap();
        assert!((t.as_number().unwrap() - c(1.0)).norm() < 1e-15);
        let half = ProcessTensor::from_density(vec![q], &linalg::identity(2).scale(0.5)).unwrap();
        assert!((compose_seq(&half, &discard(q)).unwrap().as_number().unwrap() - c(1.0)).norm() < 1e-15);
        let sub = ProcessTensor::from_pure(vec![q], &[c(0.0), c(0.3f64.sqrt())]).unwrap();
        assert!((compose_seq(&sub, &discard(q)).unwrap().as_number().unwrap() - c(0.3)).norm() < 1e-15);
    }

    #[test]
    fn compose_seq_examples() {
        let id = identity(&[cl(2)]);
        let v = basis_state(cl(2), 1);
        assert_eq!(compose_seq(&v, &id).unwrap(), v);
        let err = compose_seq(&basis_state(cl(3), 0), &id).unwrap_err();
        assert!(matches!(err, CalcError::TypeMismatch { .. }));
    }

    #[test]
    fn compose_par_examples() {
        let one = ProcessTensor::number(c(1.0));
        let f = swap(cl(2), cl(3));
        assert_eq!(compose_par(&one, &f), f);
        let p = compose_par(&basis_state(cl(2), 0), &basis_state(cl(2), 1));
        assert_eq!(p.matrix().as_slice(), &[c(0.0), c(1.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn swap_moves_digits() {
        let s = swap(cl(2), cl(3));
        let v = compose_par(&basis_state(cl(2), 1), &basis_state(cl(3), 2));
        let w = compose_seq(&v, &s).unwrap();
        let expect = compose_par(&basis_state(cl(3), 2), &basis_state(cl(2), 1));
        assert_eq!(w, expect);
    }

    #[test]
    fn adjoint_of_ket_is_bra() {
        let k = basis_state(cl(2), 0);
        let b = dagger(&k, Dagger::Adjoint);
        assert!(b.inputs() == [cl(2)] && b.outputs().is_empty());
        assert_eq!(dagger(&b, Dagger::Adjoint), k);
        let real = swap(cl(2), cl(2));
        assert_eq!(dagger(&real, Dagger::Conjugate), real);
    }

    #[test]
    fn doubled_layout_is_row_major() {
        let q = Register::quantum(2);
        let mut rho = CMat::zeros(2, 2);
        rho[(0, 1)] = C64::new(0.0, 1.0);
        let s = ProcessTensor::from_density(vec![q], &rho).unwrap();
        assert_eq!(s.matrix()[(1, 0)], C64::new(0.0, 1.0));
        assert_eq!(s.density().unwrap(), rho);
    }

    #[test]
    fn classical_register_drops_coherences() {
        let mut rho = CMat::from_element(2, 2, c(0.5));
        rho[(0, 1)] = c(0.3);
        let s = ProcessTensor::from_density(vec![cl(2)], &rho).unwrap();
        assert_eq!(s.matrix().as_slice(), &[c(0.5), c(0.5)]);
    }

    #[test]
    fn kraus_identity_is_identity() {
        let q = Register::quantum(2);
        let p = from_kraus(vec![q, cl(2)], vec![q, cl(2)], &[linalg::identity(4)]).unwrap();
        assert!(p.approx_eq(&identity(&[q, cl(2)]), 1e-14));
    }

    #[test]
    fn dump_round_trip() {
        let p = uniform(cl(3), 2).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: ProcessTensor = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        let bad = s.replace("\"format_version\":1", "\"format_version\":1,\"extra\":0");
        assert!(serde_json::from_str::<ProcessTensor>(&bad).is_err());
    }

    #[test]
    fn partial_discard_of_product() {
        let a = basis_state(cl(2), 1);
        let b = uniform(cl(3), 1).unwrap();
        let ab = compose_par(&a, &b);
        assert!(partial_discard(&ab, &[1]).unwrap().approx_eq(&a, 1e-15));
    }
}
