//! The split exact Courant algebroid (T + T*)M with twist H: pairing,
//! anchor, Dorfman bracket, B-transforms, and the generalized metric V with
//! its reflection.
//!
//! Pairing normalization: <(X,a),(Y,b)> = a(Y) + b(X), with no extra 1/2.
//! With this choice [e,e] = (0, d iota_X a) = 1/2 d<e,e> and the flat-space
//! loop Hamiltonian comes out as the standard (1/2) Integral(|p|^2 + |x'|^2).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::calculus::{exterior_derivative, interior_product, lie_derivative};
use crate::fields::tensor::sym_matrix_inverse;
use crate::fields::{Chart, Sampling, ScalarField, TensorField, Valence};

/// A section (X, alpha) of (T + T*)M.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedSection {
    x: TensorField,
    alpha: TensorField,
}

impl GeneralizedSection {
    pub fn new(x: TensorField, alpha: TensorField) -> Result<Self> {
        x.expect(Valence::Vector)?;
        alpha.expect(Valence::OneForm)?;
        if x.chart() != alpha.chart() {
            return Err(Error::ChartMismatch);
        }
        Ok(GeneralizedSection { x, alpha })
    }

    pub fn zero(chart: &Chart) -> Self {
        GeneralizedSection {
            x: TensorField::zero(chart, Valence::Vector),
            alpha: TensorField::zero(chart, Valence::OneForm),
        }
    }

    pub fn chart(&self) -> &Chart {
        self.x.chart()
    }

    pub fn vector(&self) -> &TensorField {
        &self.x
    }

    pub fn one_form(&self) -> &TensorField {
        &self.alpha
    }

    /// Stacked value (X(p); alpha(p)) in R^{2n}.
    pub fn eval(&self, p: &[f64]) -> Result<DVector<f64>> {
        let n = self.chart().dim();
        let xv = self.x.eval_vector(p)?;
        let av = self.alpha.eval_vector(p)?;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&xv);
        out.rows_mut(n, n).copy_from(&av);
        Ok(out)
    }

    pub fn add(&self, other: &GeneralizedSection) -> Result<GeneralizedSection> {
        Ok(GeneralizedSection {
            x: self.x.add(&other.x)?,
            alpha: self.alpha.add(&other.alpha)?,
        })
    }

    pub fn sub(&self, other: &GeneralizedSection) -> Result<GeneralizedSection> {
        Ok(GeneralizedSection {
            x: self.x.sub(&other.x)?,
            alpha: self.alpha.sub(&other.alpha)?,
        })
    }

    pub fn scale(&self, c: f64) -> GeneralizedSection {
        GeneralizedSection {
            x: self.x.scale(c),
            alpha: self.alpha.scale(c),
        }
    }
}

/// The canonical pairing <(X,a),(Y,b)> = a(Y) + b(X) as a scalar field.
pub fn pairing(s1: &GeneralizedSection, s2: &GeneralizedSection) -> Result<ScalarField> {
    if s1.chart() != s2.chart() {
        return Err(Error::ChartMismatch);
    }
    let a_of_y = interior_product(&s2.x, &s1.alpha)?;
    let b_of_x = interior_product(&s1.x, &s2.alpha)?;
    Ok(a_of_y.scalar_comp().add(b_of_x.scalar_comp()))
}

/// The anchor rho(X, alpha) = X.
pub fn anchor(s: &GeneralizedSection) -> TensorField {
    s.x.clone()
}

/// The constant pairing matrix J on R^{2n} with <u, v> = u^T J v for stacked
/// (X; alpha) values.
pub fn pairing_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// Ambient data of the algebroid in the canonical splitting: a Riemannian
/// metric g (graph = the generalized metric V) and a closed 3-form H.
#[derive(Debug, Clone)]
pub struct CourantData {
    chart: Chart,
    g: TensorField,
    h: TensorField,
}

impl CourantData {
    /// Validates positive definiteness of g (Cholesky) and closedness of H
    /// at the sampled points.
    pub fn new(g: TensorField, h: TensorField, sampling: &Sampling) -> Result<Self> {
        let data = Self::new_unchecked(g, h)?;
        let points = sampling.points(&data.chart)?;
        let dh = exterior_derivative(&data.h)?;
        for p in &points {
            let gm = data.g.eval_matrix(p.as_slice())?;
            if nalgebra::linalg::Cholesky::new(gm).is_none() {
                return Err(Error::InvalidInput(format!(
                    "metric is not positive definite at {:?}",
                    p.as_slice()
                )));
            }
            let defect = dh.max_abs_at(p.as_slice())?;
            if defect > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "3-form is not closed: |dH| = {defect:.3e} at {:?}",
                    p.as_slice()
                )));
            }
        }
        Ok(data)
    }

    /// Skips the sampled validation; used internally where the invariants
    /// hold by construction (e.g. H - dB after a B-transform).
    pub fn new_unchecked(g: TensorField, h: TensorField) -> Result<Self> {
        g.expect(Valence::SymBilinear)?;
        h.expect(Valence::ThreeForm)?;
        if g.chart() != h.chart() {
            return Err(Error::ChartMismatch);
        }
        Ok(CourantData {
            chart: g.chart().clone(),
            g,
            h,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn metric(&self) -> &TensorField {
        &self.g
    }

    pub fn three_form(&self) -> &TensorField {
        &self.h
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.g.eval_matrix(p)
    }

    pub fn inverse_metric_at(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.g
            .eval_matrix(p)?
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric { point: p.to_vec() })
    }

    /// iota_u g as a one-form (the musical lowering of u).
    pub fn lower(&self, u: &TensorField) -> Result<TensorField> {
        u.expect(Valence::Vector)?;
        if u.chart() != &self.chart {
            return Err(Error::ChartMismatch);
        }
        let n = self.chart.dim();
        Ok(TensorField::oneform_from_fn(&self.chart, |j| {
            (0..n).fold(self.chart.zero_field(), |acc, i| {
                acc.add(&u.comp1(i).mul(&self.g.comp2(i, j)))
            })
        }))
    }

    /// Symbolic g^{-1} applied to a one-form (supported for dim <= 4).
    pub fn raise(&self, alpha: &TensorField) -> Result<TensorField> {
        alpha.expect(Valence::OneForm)?;
        if alpha.chart() != &self.chart {
            return Err(Error::ChartMismatch);
        }
        let n = self.chart.dim();
        let inv = sym_matrix_inverse(&self.chart, &|i, j| self.g.comp2(i, j), n)?;
        Ok(TensorField::vector_from_fn(&self.chart, |i| {
            (0..n).fold(self.chart.zero_field(), |acc, j| {
                acc.add(&inv[i][j].mul(alpha.comp1(j)))
            })
        }))
    }

    /// Dorfman bracket
    /// [(X,a),(Y,b)] = ([X,Y], L_X b - iota_Y da + iota_Y iota_X H).
    pub fn dorfman(
        &self,
        s1: &GeneralizedSection,
        s2: &GeneralizedSection,
    ) -> Result<GeneralizedSection> {
        if s1.chart() != &self.chart || s2.chart() != &self.chart {
            return Err(Error::ChartMismatch);
        }
        let xy = lie_derivative(&s1.x, &s2.x)?;
        let lxb = lie_derivative(&s1.x, &s2.alpha)?;
        let da = exterior_derivative(&s1.alpha)?;
        let iy_da = interior_product(&s2.x, &da)?;
        let ix_h = interior_product(&s1.x, &self.h)?;
        let iy_ix_h = interior_product(&s2.x, &ix_h)?;
        let form = lxb.sub(&iy_da)?.add(&iy_ix_h)?;
        GeneralizedSection::new(xy, form)
    }

    /// B-transform: (X, a) -> (X, a + iota_X B) together with H -> H - dB.
    pub fn b_transform(
        &self,
        b: &TensorField,
        s: &GeneralizedSection,
    ) -> Result<(GeneralizedSection, CourantData)> {
        Ok((self.b_transform_section(b, s)?, self.b_transform_data(b)?))
    }

    pub fn b_transform_section(
        &self,
        b: &TensorField,
        s: &GeneralizedSection,
    ) -> Result<GeneralizedSection> {
        b.expect(Valence::TwoForm)?;
        if s.chart() != &self.chart || b.chart() != &self.chart {
            return Err(Error::ChartMismatch);
        }
        let ixb = interior_product(&s.x, b)?;
        GeneralizedSection::new(s.x.clone(), s.alpha.add(&ixb)?)
    }

    pub fn b_transform_data(&self, b: &TensorField) -> Result<CourantData> {
        b.expect(Valence::TwoForm)?;
        if b.chart() != &self.chart {
            return Err(Error::ChartMismatch);
        }
        let db = exterior_derivative(b)?;
        // H - dB is closed whenever H is, so no revalidation is needed.
        CourantData::new_unchecked(self.g.clone(), self.h.sub(&db)?)
    }

    /// u_+ = (u, iota_u g), a section of V.
    pub fn plus_embed(&self, u: &TensorField) -> Result<GeneralizedSection> {
        GeneralizedSection::new(u.clone(), self.lower(u)?)
    }

    /// u_- = (u, -iota_u g), a section of V-perp.
    pub fn minus_embed(&self, u: &TensorField) -> Result<GeneralizedSection> {
        GeneralizedSection::new(u.clone(), self.lower(u)?.neg())
    }

    /// Split s = a_+ + b_- with a = (X + g^{-1} alpha)/2, b = (X - g^{-1} alpha)/2.
    pub fn decompose(
        &self,
        s: &GeneralizedSection,
    ) -> Result<(TensorField, TensorField)> {
        if s.chart() != &self.chart {
            return Err(Error::ChartMismatch);
        }
        let raised = self.raise(&s.alpha)?;
        let a = s.x.add(&raised)?.scale(0.5);
        let b = s.x.sub(&raised)?.scale(0.5);
        Ok((a, b))
    }

    /// Reflection with respect to V: R_V(s) = a_+ - b_-.
    pub fn reflect_v(&self, s: &GeneralizedSection) -> Result<GeneralizedSection> {
        let (a, b) = self.decompose(s)?;
        self.plus_embed(&a)?.sub(&self.minus_embed(&b)?)
    }

    /// Pointwise matrix of R_V on stacked (X; alpha) values:
    /// [[0, G^{-1}], [G, 0]].
    pub fn reflect_v_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.chart.dim();
        let gm = self.metric_at(p)?;
        let ginv = self.inverse_metric_at(p)?;
        let mut r = DMatrix::zeros(2 * n, 2 * n);
        r.view_mut((0, n), (n, n)).copy_from(&ginv);
        r.view_mut((n, 0), (n, n)).copy_from(&gm);
        Ok(r)
    }

    /// The V-induced positive metric G_V(s,t) = <s, R_V t> as a matrix:
    /// [[G, 0], [0, G^{-1}]].
    pub fn gv_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.chart.dim();
        let gm = self.metric_at(p)?;
        let ginv = self.inverse_metric_at(p)?;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&gm);
        out.view_mut((n, n), (n, n)).copy_from(&ginv);
        Ok(out)
    }
}
