//! The operator `A` in its eigenbasis.
//!
//! A [`SpectrumSpec`] lists distinct eigenvalues with multiplicities; the
//! coefficient vector of a state is laid out block by block in increasing
//! eigenvalue order, so every spectral subspace is a contiguous index range.
//! All norms below are exact for the truncated operator.

use std::ops::{Index, IndexMut, Range};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues of a nonnegative self-adjoint operator, with multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumDoc", into = "SpectrumDoc")]
pub struct SpectrumSpec {
    eigenvalues: Vec<f64>,
    multiplicities: Vec<usize>,
    block_start: Vec<usize>,
    mode_eigenvalue: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectrumDoc {
    eigenvalues: Vec<f64>,
    multiplicities: Option<Vec<usize>>,
}

impl TryFrom<SpectrumDoc> for SpectrumSpec {
    type Error = Error;

    fn try_from(doc: SpectrumDoc) -> Result<Self> {
        let mult = doc
            .multiplicities
            .unwrap_or_else(|| vec![1; doc.eigenvalues.len()]);
        SpectrumSpec::new(doc.eigenvalues, mult)
    }
}

impl From<SpectrumSpec> for SpectrumDoc {
    fn from(s: SpectrumSpec) -> Self {
        SpectrumDoc {
            eigenvalues: s.eigenvalues,
            multiplicities: Some(s.multiplicities),
        }
    }
}

impl SpectrumSpec {
    pub fn new(eigenvalues: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidSpectrum("no eigenvalues".into()));
        }
        if eigenvalues.len() != multiplicities.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} eigenvalues but {} multiplicities",
                eigenvalues.len(),
                multiplicities.len()
            )));
        }
        for (i, &ev) in eigenvalues.iter().enumerate() {
            if !ev.is_finite() || ev < 0.0 {
                return Err(Error::InvalidSpectrum(format!(
                    "eigenvalue {i} = {ev} is not a finite nonnegative number"
                )));
            }
            if i > 0 && ev <= eigenvalues[i - 1] {
                return Err(Error::InvalidSpectrum(
                    "eigenvalues must be strictly increasing".into(),
                ));
            }
        }
        if let Some(i) = multiplicities.iter().position(|&m| m == 0) {
            return Err(Error::InvalidSpectrum(format!(
                "multiplicity of eigenvalue {i} is zero"
            )));
        }
        let mut block_start = Vec::with_capacity(eigenvalues.len() + 1);
        let mut mode_eigenvalue = Vec::new();
        let mut offset = 0;
        for (&ev, &m) in eigenvalues.iter().zip(&multiplicities) {
            block_start.push(offset);
            mode_eigenvalue.extend(std::iter::repeat_n(ev, m));
            offset += m;
        }
        block_start.push(offset);
        Ok(Self {
            eigenvalues,
            multiplicities,
            block_start,
            mode_eigenvalue,
        })
    }

    /// Spectrum whose eigenvalues are all simple.
    pub fn simple(eigenvalues: Vec<f64>) -> Result<Self> {
        let m = vec![1; eigenvalues.len()];
        Self::new(eigenvalues, m)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn total_dim(&self) -> usize {
        self.mode_eigenvalue.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalue attached to each coefficient.
    pub fn mode_eigenvalues(&self) -> &[f64] {
        &self.mode_eigenvalue
    }

    /// Coefficient range of eigenvalue block `b`.
    pub fn block_range(&self, b: usize) -> Range<usize> {
        self.block_start[b]..self.block_start[b + 1]
    }

    pub fn block_of_mode(&self, j: usize) -> usize {
        self.block_start.partition_point(|&s| s <= j) - 1
    }

    /// Block whose eigenvalue is exactly `lambda`.
    ///
    /// Spectra are built from closed-form integer formulas, so exact
    /// comparison is meaningful here.
    pub fn block_of_eigenvalue(&self, lambda: f64) -> Option<usize> {
        self.eigenvalues.iter().position(|&ev| ev == lambda)
    }

    pub fn has_kernel(&self) -> bool {
        self.eigenvalues[0] == 0.0
    }

    pub fn kernel_range(&self) -> Range<usize> {
        if self.has_kernel() {
            self.block_range(0)
        } else {
            0..0
        }
    }

    /// Smallest strictly positive eigenvalue (the spectral gap `nu`).
    pub fn gap(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|&ev| ev > 0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    /// Smallest eigenvalue strictly above block `b`, `None` standing for `+inf`.
    pub fn beta_above(&self, b: usize) -> Option<f64> {
        self.eigenvalues.get(b + 1).copied()
    }

    /// Largest eigenvalue strictly below block `b`.
    pub fn alpha_below(&self, b: usize) -> Option<f64> {
        b.checked_sub(1).map(|i| self.eigenvalues[i])
    }

    pub fn split(&self, b: usize) -> SpectralSplit {
        assert!(b < self.num_blocks(), "block index out of range");
        let lam = self.block_range(b);
        SpectralSplit {
            block: b,
            threshold: self.eigenvalues[b],
            below: 0..lam.start,
            lambda: lam.clone(),
            above: lam.end..self.total_dim(),
            kernel: self.kernel_range(),
        }
    }

    pub fn check_state(&self, u: &StateVector) -> Result<()> {
        if u.len() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                got: u.len(),
            });
        }
        if let Some(i) = u.0.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState(i));
        }
        Ok(())
    }

    /// `|A^alpha u|`, with the convention `0^0 = 1`.
    pub fn norm_a_alpha(&self, u: &StateVector, alpha: f64) -> f64 {
        debug_assert_eq!(u.len(), self.total_dim());
        if alpha == 0.0 {
            return u.norm_h();
        }
        self.mode_eigenvalue
            .iter()
            .zip(&u.0)
            .map(|(&ev, &c)| {
                let w = ev.powf(alpha);
                (w * c) * (w * c)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `|u|_{D(A^alpha)} = (|u|^2 + |A^alpha u|^2)^{1/2}`.
    pub fn norm_da_alpha(&self, u: &StateVector, alpha: f64) -> f64 {
        u.norm_h().hypot(self.norm_a_alpha(u, alpha))
    }

    /// `|A^{1/2} u|`.
    pub fn norm_ahalf(&self, u: &StateVector) -> f64 {
        self.energy(u).sqrt()
    }

    /// `|A^{1/2} u|^2 = <Au, u>`.
    pub fn energy(&self, u: &StateVector) -> f64 {
        self.mode_eigenvalue
            .iter()
            .zip(&u.0)
            .map(|(&ev, &c)| ev * c * c)
            .sum()
    }

    /// The graph norm of `D(A^{1/2})`.
    pub fn norm_d(&self, u: &StateVector) -> f64 {
        (u.norm_h_sq() + self.energy(u)).sqrt()
    }

    pub fn apply_a(&self, u: &StateVector) -> StateVector {
        StateVector(
            self.mode_eigenvalue
                .iter()
                .zip(&u.0)
                .map(|(&ev, &c)| ev * c)
                .collect(),
        )
    }

    pub fn project(&self, u: &StateVector, split: &SpectralSplit, part: SpectralPart) -> StateVector {
        let range = split.range(part);
        let mut out = StateVector::zeros(u.len());
        out.0[range.clone()].copy_from_slice(&u.0[range]);
        out
    }

    /// `e^{-tA} u`; negative `t` runs the (finite-dimensional) backward group.
    pub fn semigroup_apply(&self, u: &StateVector, t: f64) -> Result<StateVector> {
        let out: Vec<f64> = self
            .mode_eigenvalue
            .iter()
            .zip(&u.0)
            .map(|(&ev, &c)| if ev == 0.0 { c } else { c * (-t * ev).exp() })
            .collect();
        if out.iter().any(|c| !c.is_finite()) {
            return Err(Error::SemigroupOverflow);
        }
        Ok(StateVector(out))
    }
}

/// Which piece of the decomposition around a threshold eigenvalue `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralPart {
    /// Eigenvalues `<= lambda`: the lower space of the fast construction.
    Minus,
    /// Eigenvalues `< lambda`.
    Below,
    /// The `lambda` eigenspace.
    Lambda,
    /// Eigenvalues `> lambda`.
    Plus,
    /// `ker(A)`, empty when the kernel is trivial.
    Kernel,
}

/// Index ranges of the subspaces around one eigenvalue.
///
/// `Below`, `Lambda` and `Plus` partition the coefficient indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSplit {
    pub block: usize,
    pub threshold: f64,
    pub below: Range<usize>,
    pub lambda: Range<usize>,
    pub above: Range<usize>,
    pub kernel: Range<usize>,
}

impl SpectralSplit {
    pub fn range(&self, part: SpectralPart) -> Range<usize> {
        match part {
            SpectralPart::Minus => self.below.start..self.lambda.end,
            SpectralPart::Below => self.below.clone(),
            SpectralPart::Lambda => self.lambda.clone(),
            SpectralPart::Plus => self.above.clone(),
            SpectralPart::Kernel => self.kernel.clone(),
        }
    }
}

/// Coefficients of a state in the eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// The `j`-th unit coefficient vector.
    pub fn unit(n: usize, j: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[j] = 1.0;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn norm_h_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    /// Euclidean norm of the coefficients, i.e. the norm of `H`.
    pub fn norm_h(&self) -> f64 {
        self.norm_h_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|c| c * s).collect())
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (y, xi) in self.0.iter_mut().zip(&x.0) {
            *y += a * xi;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `true` when every coefficient outside `range` vanishes.
    pub fn supported_in(&self, range: Range<usize>) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(j, &c)| range.contains(&j) || c == 0.0)
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

impl IndexMut<usize> for StateVector {
    fn index_mut(&mut self, j: usize) -> &mut f64 {
        &mut self.0[j]
    }
}
