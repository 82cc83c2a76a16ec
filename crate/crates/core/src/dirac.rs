//! Regular small Dirac structures presented by a spanning frame, with the
//! sampled isotropy / involutivity / regularity / projectability checks and
//! the pointwise pi+- / annihilator linear algebra.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::courant::{pairing, CourantData, GeneralizedSection};
use crate::error::{Error, Result};
use crate::fields::{Sampling, ScalarField};
use crate::Thresholds;

/// A frame e_a = (X_a, alpha_a) spanning a candidate Dirac structure D,
/// over the ambient data (g, H).
#[derive(Debug, Clone)]
pub struct DiracFrame {
    data: CourantData,
    sections: Vec<GeneralizedSection>,
}

/// Relative SVD cutoff for null spaces and rank decisions.
const SVD_CUTOFF: f64 = 1e-10;

impl DiracFrame {
    pub fn new(data: CourantData, sections: Vec<GeneralizedSection>) -> Result<Self> {
        let n = data.chart().dim();
        let k = sections.len();
        if k == 0 || k > n {
            return Err(Error::InvalidInput(format!(
                "frame rank must satisfy 1 <= k <= {n}, got {k}"
            )));
        }
        for s in &sections {
            if s.chart() != data.chart() {
                return Err(Error::ChartMismatch);
            }
        }
        Ok(DiracFrame { data, sections })
    }

    pub fn data(&self) -> &CourantData {
        &self.data
    }

    pub fn sections(&self) -> &[GeneralizedSection] {
        &self.sections
    }

    pub fn rank(&self) -> usize {
        self.sections.len()
    }

    pub fn dim(&self) -> usize {
        self.data.chart().dim()
    }

    /// Frame values as the 2n x k matrix of stacked (X; alpha) columns.
    pub fn section_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let k = self.rank();
        let mut m = DMatrix::zeros(2 * n, k);
        for (a, s) in self.sections.iter().enumerate() {
            m.set_column(a, &s.eval(p)?);
        }
        Ok(m)
    }

    /// Anchor values as the n x k matrix of X_a columns.
    pub fn anchor_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let k = self.rank();
        let mut m = DMatrix::zeros(n, k);
        for (a, s) in self.sections.iter().enumerate() {
            m.set_column(a, &s.vector().eval_vector(p)?);
        }
        Ok(m)
    }

    /// Max |<e_a, e_b>| over sample points and frame pairs.
    pub fn check_isotropy(&self, sampling: &Sampling) -> Result<IsotropyReport> {
        let k = self.rank();
        let mut pair_fields: Vec<ScalarField> = Vec::new();
        for a in 0..k {
            for b in a..k {
                pair_fields.push(pairing(&self.sections[a], &self.sections[b])?);
            }
        }
        let points = sampling.points(self.data.chart())?;
        let max_violation = points
            .par_iter()
            .map(|p| {
                let mut worst: f64 = 0.0;
                for f in &pair_fields {
                    worst = worst.max(f.eval(p.as_slice())?.abs());
                }
                Ok(worst)
            })
            .try_reduce(|| 0.0_f64, |a, b| Ok(a.max(b)))?;
        Ok(IsotropyReport { max_violation })
    }

    /// Pointwise least-squares membership of the pairwise Dorfman brackets
    /// in the span of the frame. Regularity failures at individual points
    /// are collected separately rather than folded into the residual.
    pub fn check_involutivity(
        &self,
        sampling: &Sampling,
        thresholds: &Thresholds,
    ) -> Result<InvolutivityReport> {
        let k = self.rank();
        let mut brackets = Vec::new();
        for a in 0..k {
            for b in 0..k {
                brackets.push(((a, b), self.data.dorfman(&self.sections[a], &self.sections[b])?));
            }
        }
        let points = sampling.points(self.data.chart())?;
        type PointSweep = (f64, Vec<DVector<f64>>, Option<Vec<f64>>);
        let per_point: Vec<PointSweep> = points
            .par_iter()
            .map(|p| {
                let d = self.section_matrix(p.as_slice())?;
                let svd = d.clone().svd(true, true);
                let sigma_min = svd.singular_values.iter().copied().fold(f64::MAX, f64::min);
                let degenerate = if sigma_min < thresholds.regularity_sigma {
                    Some(p.as_slice().to_vec())
                } else {
                    None
                };
                let eps = svd.singular_values.max() * SVD_CUTOFF;
                let mut worst: f64 = 0.0;
                let mut lambdas = Vec::with_capacity(brackets.len());
                for (_, br) in &brackets {
                    let v = br.eval(p.as_slice())?;
                    let lambda = svd
                        .solve(&v, eps)
                        .map_err(|e| Error::Numerical(e.to_string()))?;
                    let residual = (&d * &lambda - &v).norm();
                    worst = worst.max(residual);
                    lambdas.push(lambda);
                }
                Ok((worst, lambdas, degenerate))
            })
            .collect::<Result<_>>()?;
        let mut max_residual: f64 = 0.0;
        let mut regularity_failures = Vec::new();
        let mut structure_functions = Vec::new();
        for (idx, (worst, lambdas, degenerate)) in per_point.into_iter().enumerate() {
            max_residual = max_residual.max(worst);
            if let Some(p) = degenerate {
                regularity_failures.push(p);
            }
            if idx == 0 {
                structure_functions = brackets
                    .iter()
                    .map(|((a, b), _)| (*a, *b))
                    .zip(lambdas)
                    .map(|((a, b), lambda)| StructureFunctions {
                        pair: (a, b),
                        coefficients: lambda.iter().copied().collect(),
                    })
                    .collect();
            }
        }
        Ok(InvolutivityReport {
            max_residual,
            structure_functions,
            regularity_failures,
        })
    }

    /// Min over samples of the k-th singular value of the frame matrix.
    pub fn check_regularity(&self, sampling: &Sampling) -> Result<RegularityReport> {
        let points = sampling.points(self.data.chart())?;
        let min_sigma = points
            .par_iter()
            .map(|p| {
                let d = self.section_matrix(p.as_slice())?;
                let svd = d.svd(false, false);
                Ok(svd.singular_values.iter().copied().fold(f64::MAX, f64::min))
            })
            .try_reduce(|| f64::MAX, |a, b| Ok(a.min(b)))?;
        Ok(RegularityReport {
            min_singular_value: min_sigma,
        })
    }

    /// Min over samples of the k-th singular value of the anchor matrix
    /// (rho restricted to D injective = projectable).
    pub fn check_projectability(&self, sampling: &Sampling) -> Result<ProjectabilityReport> {
        let points = sampling.points(self.data.chart())?;
        let min_sigma = points
            .par_iter()
            .map(|p| {
                let m = self.anchor_matrix(p.as_slice())?;
                let svd = m.svd(false, false);
                Ok(svd.singular_values.iter().copied().fold(f64::MAX, f64::min))
            })
            .try_reduce(|| f64::MAX, |a, b| Ok(a.min(b)))?;
        Ok(ProjectabilityReport {
            min_singular_value: min_sigma,
        })
    }

    /// Run all frame checks and bundle the outcome.
    pub fn validate(&self, sampling: &Sampling, thresholds: &Thresholds) -> Result<DiracReport> {
        let isotropy = self.check_isotropy(sampling)?;
        let involutivity = self.check_involutivity(sampling, thresholds)?;
        let regularity = self.check_regularity(sampling)?;
        let projectability = self.check_projectability(sampling)?;
        Ok(DiracReport {
            isotropy,
            involutivity,
            regularity,
            projectability,
        })
    }

    /// Pointwise frame data: beta_a+- = alpha_a +- iota_{X_a} g and
    /// orthonormal bases of Ann(D+-).
    pub fn point_frame(&self, p: &[f64]) -> Result<PointFrameData> {
        let n = self.dim();
        let k = self.rank();
        let d_mat = self.section_matrix(p)?;
        {
            let svd = d_mat.clone().svd(false, false);
            let sigma_min = svd.singular_values.iter().copied().fold(f64::MAX, f64::min);
            if sigma_min < SVD_CUTOFF * svd.singular_values.max().max(1.0) {
                return Err(Error::RankDeficient {
                    what: "frame matrix".into(),
                    point: p.to_vec(),
                    sigma: sigma_min,
                });
            }
        }
        let gm = self.data.metric_at(p)?;
        let mut beta_plus = DMatrix::zeros(n, k);
        let mut beta_minus = DMatrix::zeros(n, k);
        for a in 0..k {
            let x = d_mat.view((0, a), (n, 1)).into_owned();
            let alpha = d_mat.view((n, a), (n, 1)).into_owned();
            let gx = &gm * &x;
            beta_plus.set_column(a, &DVector::from_column_slice((&alpha + &gx).as_slice()));
            beta_minus.set_column(a, &DVector::from_column_slice((&alpha - &gx).as_slice()));
        }
        let ann_plus = annihilator_basis(&beta_plus, '+', p)?;
        let ann_minus = annihilator_basis(&beta_minus, '-', p)?;
        Ok(PointFrameData {
            point: DVector::from_column_slice(p),
            d_mat,
            beta_plus,
            beta_minus,
            ann_plus,
            ann_minus,
        })
    }
}

/// Orthonormal basis of the null space of beta^T (vectors annihilated by all
/// beta columns); errors if beta falls short of full column rank, i.e. the
/// corresponding pi+- is not injective.
///
/// Computed from the symmetric eigendecomposition of beta beta^T, whose
/// eigenvalues are the squared singular values of beta.
fn annihilator_basis(beta: &DMatrix<f64>, sign: char, p: &[f64]) -> Result<DMatrix<f64>> {
    let (n, k) = beta.shape();
    let m = beta * beta.transpose();
    let eig = nalgebra::linalg::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let max_ev = eig.eigenvalues[order[n - 1]].max(0.0);
    let cutoff = SVD_CUTOFF * max_ev.sqrt().max(1.0);
    // the k-th largest singular value must clear the cutoff
    let sigma_k = eig.eigenvalues[order[n - k]].max(0.0).sqrt();
    if sigma_k <= cutoff {
        return Err(Error::PiNotInjective {
            sign,
            point: p.to_vec(),
            sigma: sigma_k,
        });
    }
    let mut ann = DMatrix::zeros(n, n - k);
    for (col, &idx) in order[..n - k].iter().enumerate() {
        ann.set_column(col, &eig.eigenvectors.column(idx));
    }
    Ok(ann)
}

#[derive(Debug, Clone)]
pub struct IsotropyReport {
    pub max_violation: f64,
}

impl IsotropyReport {
    pub fn passes(&self, thresholds: &Thresholds) -> bool {
        self.max_violation <= thresholds.isotropy
    }
}

/// Structure coefficients lambda^c_{ab} at the first sample point.
#[derive(Debug, Clone)]
pub struct StructureFunctions {
    pub pair: (usize, usize),
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InvolutivityReport {
    pub max_residual: f64,
    pub structure_functions: Vec<StructureFunctions>,
    pub regularity_failures: Vec<Vec<f64>>,
}

impl InvolutivityReport {
    pub fn passes(&self, thresholds: &Thresholds) -> bool {
        self.max_residual <= thresholds.involutivity && self.regularity_failures.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub min_singular_value: f64,
}

impl RegularityReport {
    pub fn passes(&self, thresholds: &Thresholds) -> bool {
        self.min_singular_value >= thresholds.regularity_sigma
    }
}

#[derive(Debug, Clone)]
pub struct ProjectabilityReport {
    pub min_singular_value: f64,
}

impl ProjectabilityReport {
    pub fn passes(&self, thresholds: &Thresholds) -> bool {
        self.min_singular_value >= thresholds.regularity_sigma
    }
}

#[derive(Debug, Clone)]
pub struct DiracReport {
    pub isotropy: IsotropyReport,
    pub involutivity: InvolutivityReport,
    pub regularity: RegularityReport,
    pub projectability: ProjectabilityReport,
}

impl DiracReport {
    /// Isotropy + involutivity + regularity decide whether the frame spans a
    /// regular small Dirac structure; projectability is a separate property.
    pub fn is_dirac(&self, thresholds: &Thresholds) -> bool {
        self.isotropy.passes(thresholds)
            && self.involutivity.passes(thresholds)
            && self.regularity.passes(thresholds)
    }
}

/// Pointwise data of the frame at p: section values, beta+- columns, and
/// orthonormal annihilator bases, all in the canonical (T + T*) basis.
#[derive(Debug, Clone)]
pub struct PointFrameData {
    pub point: DVector<f64>,
    pub d_mat: DMatrix<f64>,
    pub beta_plus: DMatrix<f64>,
    pub beta_minus: DMatrix<f64>,
    pub ann_plus: DMatrix<f64>,
    pub ann_minus: DMatrix<f64>,
}

impl PointFrameData {
    pub fn dim(&self) -> usize {
        self.beta_plus.nrows()
    }

    pub fn rank(&self) -> usize {
        self.beta_plus.ncols()
    }
}
