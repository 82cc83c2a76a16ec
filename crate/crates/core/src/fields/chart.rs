//! Coordinate charts, scalar fields bound to a chart, and deterministic
//! sampling of chart points.

use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::expr::{self, Expr, UnaryFn};
use crate::error::{Error, Result};

#[derive(Debug, PartialEq)]
struct ChartData {
    coord_names: Vec<String>,
    sample_box: Vec<(f64, f64)>,
    excluded: Option<Arc<Expr>>,
}

/// A single coordinate chart: names, a sampling box, and an optional
/// exclusion predicate (points where the predicate is `<= 0` are skipped,
/// e.g. near singular loci).
#[derive(Debug, Clone)]
pub struct Chart {
    data: Arc<ChartData>,
}

impl PartialEq for Chart {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data) || self.data == other.data
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Chart {
    pub fn new<S: Into<String>>(
        coord_names: Vec<S>,
        sample_box: Vec<(f64, f64)>,
    ) -> Result<Chart> {
        let coord_names: Vec<String> = coord_names.into_iter().map(Into::into).collect();
        if coord_names.is_empty() {
            return Err(Error::InvalidChart("dimension must be at least 1".into()));
        }
        if coord_names.len() != sample_box.len() {
            return Err(Error::InvalidChart(format!(
                "{} coordinates but {} box intervals",
                coord_names.len(),
                sample_box.len()
            )));
        }
        for name in &coord_names {
            if !is_identifier(name) {
                return Err(Error::InvalidChart(format!(
                    "\"{name}\" is not a valid identifier"
                )));
            }
            if UnaryFn::ALL_NAMES.contains(&name.as_str()) {
                return Err(Error::InvalidChart(format!(
                    "coordinate name \"{name}\" shadows a builtin function"
                )));
            }
        }
        for (i, a) in coord_names.iter().enumerate() {
            if coord_names[i + 1..].contains(a) {
                return Err(Error::InvalidChart(format!("duplicate coordinate \"{a}\"")));
            }
        }
        for &(lo, hi) in &sample_box {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidChart(format!(
                    "degenerate sample interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(Chart {
            data: Arc::new(ChartData {
                coord_names,
                sample_box,
                excluded: None,
            }),
        })
    }

    /// Attach an exclusion predicate (an expression over this chart's
    /// coordinates); sampling skips points where it evaluates `<= 0`.
    pub fn with_excluded(&self, text: &str) -> Result<Chart> {
        let ast = expr::parse(text, &self.data.coord_names)?;
        Ok(Chart {
            data: Arc::new(ChartData {
                coord_names: self.data.coord_names.clone(),
                sample_box: self.data.sample_box.clone(),
                excluded: Some(ast),
            }),
        })
    }

    pub fn dim(&self) -> usize {
        self.data.coord_names.len()
    }

    pub fn coord_names(&self) -> &[String] {
        &self.data.coord_names
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.data.coord_names.iter().position(|c| c == name)
    }

    pub fn sample_box(&self) -> &[(f64, f64)] {
        &self.data.sample_box
    }

    pub fn excluded_predicate(&self) -> Option<&Arc<Expr>> {
        self.data.excluded.as_ref()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.data.sample_box.iter())
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// True if the point is inside the box and not excluded.
    pub fn accepts(&self, p: &[f64]) -> bool {
        if !self.contains(p) {
            return false;
        }
        match &self.data.excluded {
            None => true,
            Some(pred) => matches!(expr::eval(pred, p), Ok(v) if v > 0.0),
        }
    }

    pub fn parse(&self, text: &str) -> Result<ScalarField> {
        let ast = expr::parse(text, &self.data.coord_names)?;
        Ok(ScalarField {
            chart: self.clone(),
            ast,
        })
    }

    pub fn scalar(&self, ast: Arc<Expr>) -> ScalarField {
        ScalarField {
            chart: self.clone(),
            ast,
        }
    }

    pub fn zero_field(&self) -> ScalarField {
        self.scalar(expr::constant(0.0))
    }

    pub fn constant_field(&self, c: f64) -> ScalarField {
        self.scalar(expr::constant(c))
    }

    pub fn coord_field(&self, i: usize) -> ScalarField {
        debug_assert!(i < self.dim());
        self.scalar(expr::coord(i))
    }
}

/// A symbolic scalar function on a chart. Immutable and cheap to clone;
/// closed under differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    chart: Chart,
    ast: Arc<Expr>,
}

impl ScalarField {
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn ast(&self) -> &Arc<Expr> {
        &self.ast
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.chart.dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, chart has {}",
                p.len(),
                self.chart.dim()
            )));
        }
        expr::eval(&self.ast, p)
    }

    /// Exact symbolic partial derivative along a named coordinate.
    pub fn differentiate(&self, coord: &str) -> Result<ScalarField> {
        let i = self
            .chart
            .coord_index(coord)
            .ok_or_else(|| Error::UnknownCoordinate { name: coord.into() })?;
        Ok(self.diff_idx(i))
    }

    pub fn diff_idx(&self, i: usize) -> ScalarField {
        debug_assert!(i < self.chart.dim());
        self.chart.scalar(expr::derivative(&self.ast, i))
    }

    /// Structurally the zero expression (sufficient, not necessary, for the
    /// field to vanish).
    pub fn is_zero_ast(&self) -> bool {
        expr::is_zero(&self.ast)
    }

    pub fn uses_coord(&self, i: usize) -> bool {
        expr::uses_coord(&self.ast, i)
    }

    pub fn substitute(&self, i: usize, value: f64) -> ScalarField {
        self.chart.scalar(expr::substitute(&self.ast, i, value))
    }

    pub fn pretty(&self) -> String {
        expr::pretty(&self.ast, self.chart.coord_names())
    }

    fn same_chart(&self, other: &ScalarField) {
        assert!(
            self.chart == other.chart,
            "internal error: scalar fields from different charts combined"
        );
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.same_chart(other);
        self.chart.scalar(expr::add(&self.ast, &other.ast))
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.same_chart(other);
        self.chart.scalar(expr::sub(&self.ast, &other.ast))
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.same_chart(other);
        self.chart.scalar(expr::mul(&self.ast, &other.ast))
    }

    pub fn div(&self, other: &ScalarField) -> ScalarField {
        self.same_chart(other);
        self.chart.scalar(expr::div(&self.ast, &other.ast))
    }

    pub fn neg(&self) -> ScalarField {
        self.chart.scalar(expr::neg(&self.ast))
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.chart.scalar(expr::mul(&expr::constant(c), &self.ast))
    }
}

/// Deterministic sampling plan: a point count and a seed. The same plan on
/// the same chart always yields the same points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub count: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            count: 100,
            seed: 42,
        }
    }
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut cand: u64 = 2;
    while out.len() < n {
        if out.iter().all(|p| !cand.is_multiple_of(*p)) {
            out.push(cand);
        }
        cand += 1;
    }
    out
}

fn halton(index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

impl Sampling {
    /// Quasi-random points in the chart box: a Halton sequence with a seeded
    /// Cranley-Patterson rotation, rejecting points that fail the exclusion
    /// predicate.
    pub fn points(&self, chart: &Chart) -> Result<Vec<DVector<f64>>> {
        let n = chart.dim();
        let bases = primes(n);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let shift: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut out = Vec::with_capacity(self.count);
        let max_attempts = self.count.max(1) * 1000;
        let mut index: u64 = 1;
        while out.len() < self.count && (index as usize) <= max_attempts {
            let mut p = DVector::zeros(n);
            for j in 0..n {
                let u = (halton(index, bases[j]) + shift[j]).fract();
                let (lo, hi) = chart.sample_box()[j];
                p[j] = lo + u * (hi - lo);
            }
            index += 1;
            if chart.accepts(p.as_slice()) {
                out.push(p);
            }
        }
        if out.len() < self.count {
            return Err(Error::Sampling(format!(
                "only {} of {} points accepted after {} attempts (exclusion predicate too strict?)",
                out.len(),
                self.count,
                max_attempts
            )));
        }
        Ok(out)
    }
}
