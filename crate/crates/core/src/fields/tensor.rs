//! Tensor fields as component arrays of scalar fields.
//!
//! Antisymmetric valences store only independent components (i<j, i<j<k, ...)
//! so that form antisymmetry is structural; the accessors manage signs.
//! Symmetric bilinears store the upper triangle i<=j; plain bilinears store
//! the full n x n block row-major.

use nalgebra::{DMatrix, DVector};

use super::chart::{Chart, ScalarField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valence {
    Scalar,
    Vector,
    OneForm,
    TwoForm,
    ThreeForm,
    FourForm,
    SymBilinear,
    Bilinear,
}

impl Valence {
    pub fn name(self) -> &'static str {
        match self {
            Valence::Scalar => "scalar",
            Valence::Vector => "vector",
            Valence::OneForm => "oneform",
            Valence::TwoForm => "twoform",
            Valence::ThreeForm => "threeform",
            Valence::FourForm => "fourform",
            Valence::SymBilinear => "symbilinear",
            Valence::Bilinear => "bilinear",
        }
    }

    /// Number of stored components in dimension `n`.
    pub fn component_count(self, n: usize) -> usize {
        match self {
            Valence::Scalar => 1,
            Valence::Vector | Valence::OneForm => n,
            Valence::TwoForm => n * (n.saturating_sub(1)) / 2,
            Valence::ThreeForm => choose(n, 3),
            Valence::FourForm => choose(n, 4),
            Valence::SymBilinear => n * (n + 1) / 2,
            Valence::Bilinear => n * n,
        }
    }

    pub fn form_degree(self) -> Option<usize> {
        match self {
            Valence::Scalar => Some(0),
            Valence::OneForm => Some(1),
            Valence::TwoForm => Some(2),
            Valence::ThreeForm => Some(3),
            Valence::FourForm => Some(4),
            _ => None,
        }
    }
}

fn choose(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut num = 1usize;
    let mut den = 1usize;
    for i in 0..k {
        num *= n - i;
        den *= i + 1;
    }
    num / den
}

/// Index of the pair (i, j), i < j, in lexicographic order.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    // pairs (0,1),(0,2),...,(0,n-1),(1,2),...
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Index of the triple (i, j, k), i < j < k, in lexicographic order.
pub fn triple_index(i: usize, j: usize, k: usize, n: usize) -> usize {
    debug_assert!(i < j && j < k && k < n);
    let mut idx = 0;
    for a in 0..i {
        idx += choose(n - 1 - a, 2);
    }
    idx + pair_index(j - i - 1, k - i - 1, n - i - 1)
}

/// Index of the symmetric pair (i, j), i <= j.
pub fn sym_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + (j - i) + i
}

/// Sort indices, returning the permutation sign; `None` if two coincide.
fn sort_with_sign(idx: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    for a in 0..idx.len() {
        for b in (a + 1)..idx.len() {
            if idx[a] == idx[b] {
                return None;
            }
            if idx[a] > idx[b] {
                idx.swap(a, b);
                sign = -sign;
            }
        }
    }
    Some(sign)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    chart: Chart,
    valence: Valence,
    comps: Vec<ScalarField>,
}

impl TensorField {
    pub fn from_components(
        chart: Chart,
        valence: Valence,
        comps: Vec<ScalarField>,
    ) -> Result<TensorField> {
        let want = valence.component_count(chart.dim());
        if comps.len() != want {
            return Err(Error::InvalidInput(format!(
                "{} field in dimension {} needs {} components, got {}",
                valence.name(),
                chart.dim(),
                want,
                comps.len()
            )));
        }
        for c in &comps {
            if c.chart() != &chart {
                return Err(Error::ChartMismatch);
            }
        }
        Ok(TensorField {
            chart,
            valence,
            comps,
        })
    }

    pub fn zero(chart: &Chart, valence: Valence) -> TensorField {
        let count = valence.component_count(chart.dim());
        TensorField {
            chart: chart.clone(),
            valence,
            comps: vec![chart.zero_field(); count],
        }
    }

    /// Parse components from expression strings (in storage order).
    pub fn parse(chart: &Chart, valence: Valence, texts: &[&str]) -> Result<TensorField> {
        let comps = texts
            .iter()
            .map(|t| chart.parse(t))
            .collect::<Result<Vec<_>>>()?;
        TensorField::from_components(chart.clone(), valence, comps)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn valence(&self) -> Valence {
        self.valence
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    fn n(&self) -> usize {
        self.chart.dim()
    }

    pub fn expect(&self, valence: Valence) -> Result<()> {
        if self.valence != valence {
            return Err(Error::Valence {
                expected: valence.name(),
                found: self.valence.name(),
            });
        }
        Ok(())
    }

    pub fn expect_form(&self) -> Result<usize> {
        self.valence.form_degree().ok_or(Error::Valence {
            expected: "k-form",
            found: self.valence.name(),
        })
    }

    // -- symbolic accessors (sign-managed) ----------------------------------

    pub fn scalar_comp(&self) -> &ScalarField {
        debug_assert_eq!(self.valence, Valence::Scalar);
        &self.comps[0]
    }

    /// Component of a vector or one-form.
    pub fn comp1(&self, i: usize) -> &ScalarField {
        debug_assert!(matches!(self.valence, Valence::Vector | Valence::OneForm));
        &self.comps[i]
    }

    /// Signed component of a 2-form, symmetric bilinear, or bilinear.
    pub fn comp2(&self, i: usize, j: usize) -> ScalarField {
        let n = self.n();
        match self.valence {
            Valence::TwoForm => {
                if i == j {
                    self.chart.zero_field()
                } else if i < j {
                    self.comps[pair_index(i, j, n)].clone()
                } else {
                    self.comps[pair_index(j, i, n)].neg()
                }
            }
            Valence::SymBilinear => self.comps[sym_index(i.min(j), i.max(j), n)].clone(),
            Valence::Bilinear => self.comps[i * n + j].clone(),
            _ => panic!("comp2 on {}", self.valence.name()),
        }
    }

    /// Signed component of a 3-form.
    pub fn comp3(&self, i: usize, j: usize, k: usize) -> ScalarField {
        debug_assert_eq!(self.valence, Valence::ThreeForm);
        let mut idx = [i, j, k];
        match sort_with_sign(&mut idx) {
            None => self.chart.zero_field(),
            Some(sign) => {
                let c = &self.comps[triple_index(idx[0], idx[1], idx[2], self.n())];
                if sign > 0.0 {
                    c.clone()
                } else {
                    c.neg()
                }
            }
        }
    }

    // -- algebra -------------------------------------------------------------

    pub fn add(&self, other: &TensorField) -> Result<TensorField> {
        if self.chart != other.chart {
            return Err(Error::ChartMismatch);
        }
        other.expect(self.valence)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(TensorField {
            chart: self.chart.clone(),
            valence: self.valence,
            comps,
        })
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> TensorField {
        TensorField {
            chart: self.chart.clone(),
            valence: self.valence,
            comps: self.comps.iter().map(ScalarField::neg).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> TensorField {
        TensorField {
            chart: self.chart.clone(),
            valence: self.valence,
            comps: self.comps.iter().map(|f| f.scale(c)).collect(),
        }
    }

    pub fn scale_field(&self, f: &ScalarField) -> TensorField {
        TensorField {
            chart: self.chart.clone(),
            valence: self.valence,
            comps: self.comps.iter().map(|c| c.mul(f)).collect(),
        }
    }

    /// General bilinear (i, j) -> entries, from a closure over signed
    /// components; used to assemble sums of symmetric and antisymmetric parts.
    pub fn bilinear_from_fn(
        chart: &Chart,
        f: impl Fn(usize, usize) -> ScalarField,
    ) -> TensorField {
        let n = chart.dim();
        let mut comps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                comps.push(f(i, j));
            }
        }
        TensorField {
            chart: chart.clone(),
            valence: Valence::Bilinear,
            comps,
        }
    }

    pub fn oneform_from_fn(chart: &Chart, f: impl Fn(usize) -> ScalarField) -> TensorField {
        TensorField {
            chart: chart.clone(),
            valence: Valence::OneForm,
            comps: (0..chart.dim()).map(f).collect(),
        }
    }

    pub fn vector_from_fn(chart: &Chart, f: impl Fn(usize) -> ScalarField) -> TensorField {
        TensorField {
            chart: chart.clone(),
            valence: Valence::Vector,
            comps: (0..chart.dim()).map(f).collect(),
        }
    }

    // -- numeric evaluation ---------------------------------------------------

    pub fn eval_scalar(&self, p: &[f64]) -> Result<f64> {
        self.expect(Valence::Scalar)?;
        self.comps[0].eval(p)
    }

    /// Evaluate a vector or one-form to a dense vector.
    pub fn eval_vector(&self, p: &[f64]) -> Result<DVector<f64>> {
        if !matches!(self.valence, Valence::Vector | Valence::OneForm) {
            return Err(Error::Valence {
                expected: "vector or oneform",
                found: self.valence.name(),
            });
        }
        let mut v = DVector::zeros(self.n());
        for (i, c) in self.comps.iter().enumerate() {
            v[i] = c.eval(p)?;
        }
        Ok(v)
    }

    /// Evaluate any rank-2 valence to a dense (sign-filled) matrix.
    pub fn eval_matrix(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        match self.valence {
            Valence::TwoForm => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        let v = self.comps[pair_index(i, j, n)].eval(p)?;
                        m[(i, j)] = v;
                        m[(j, i)] = -v;
                    }
                }
            }
            Valence::SymBilinear => {
                for i in 0..n {
                    for j in i..n {
                        let v = self.comps[sym_index(i, j, n)].eval(p)?;
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
            }
            Valence::Bilinear => {
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = self.comps[i * n + j].eval(p)?;
                    }
                }
            }
            _ => {
                return Err(Error::Valence {
                    expected: "rank-2 tensor",
                    found: self.valence.name(),
                })
            }
        }
        Ok(m)
    }

    /// Evaluate a 3-form to a dense sign-managed rank-3 array.
    pub fn eval_three_form(&self, p: &[f64]) -> Result<Dense3> {
        self.expect(Valence::ThreeForm)?;
        let n = self.n();
        let vals = self
            .comps
            .iter()
            .map(|c| c.eval(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dense3 { n, vals })
    }

    /// Max absolute value of all stored components at a point.
    pub fn max_abs_at(&self, p: &[f64]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for c in &self.comps {
            m = m.max(c.eval(p)?.abs());
        }
        Ok(m)
    }
}

/// Evaluated 3-form: independent components plus sign-managed lookup.
#[derive(Debug, Clone)]
pub struct Dense3 {
    n: usize,
    vals: Vec<f64>,
}

impl Dense3 {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut idx = [i, j, k];
        match sort_with_sign(&mut idx) {
            None => 0.0,
            Some(sign) => sign * self.vals[triple_index(idx[0], idx[1], idx[2], self.n)],
        }
    }
}

/// Symbolic inverse of a small matrix of scalar fields via the adjugate;
/// supported for n <= 4.
#[allow(clippy::needless_range_loop)]
pub fn sym_matrix_inverse(
    chart: &Chart,
    entry: &dyn Fn(usize, usize) -> ScalarField,
    n: usize,
) -> Result<Vec<Vec<ScalarField>>> {
    if n == 0 || n > 4 {
        return Err(Error::InvalidInput(format!(
            "symbolic inverse supported for 1 <= n <= 4, got {n}"
        )));
    }
    let full: Vec<Vec<ScalarField>> = (0..n)
        .map(|i| (0..n).map(|j| entry(i, j)).collect())
        .collect();
    let det = sym_det(chart, &full, &(0..n).collect::<Vec<_>>(), &(0..n).collect::<Vec<_>>());
    let mut inv = vec![vec![chart.zero_field(); n]; n];
    for i in 0..n {
        for j in 0..n {
            // adjugate: (-1)^{i+j} * minor(j, i)
            let rows: Vec<usize> = (0..n).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..n).filter(|&c| c != i).collect();
            let minor = sym_det(chart, &full, &rows, &cols);
            let signed = if (i + j) % 2 == 0 { minor } else { minor.neg() };
            inv[i][j] = signed.div(&det);
        }
    }
    Ok(inv)
}

fn sym_det(
    chart: &Chart,
    m: &[Vec<ScalarField>],
    rows: &[usize],
    cols: &[usize],
) -> ScalarField {
    match rows.len() {
        0 => chart.constant_field(1.0),
        1 => m[rows[0]][cols[0]].clone(),
        _ => {
            let mut acc = chart.zero_field();
            let r = rows[0];
            let rest: Vec<usize> = rows[1..].to_vec();
            for (pos, &c) in cols.iter().enumerate() {
                let sub_cols: Vec<usize> =
                    cols.iter().copied().filter(|&cc| cc != c).collect();
                let term = m[r][c].mul(&sym_det(chart, m, &rest, &sub_cols));
                acc = if pos % 2 == 0 {
                    acc.add(&term)
                } else {
                    acc.sub(&term)
                };
            }
            acc
        }
    }
}
