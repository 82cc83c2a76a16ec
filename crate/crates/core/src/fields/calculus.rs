//! Cartan calculus on a chart: exterior derivative, interior product,
//! Lie derivative, and Levi-Civita Christoffel symbols.
//!
//! Component conventions:
//!   (d alpha)_{ij}  = d_i alpha_j - d_j alpha_i
//!   (d B)_{ijk}     = d_i B_{jk} - d_j B_{ik} + d_k B_{ij}
//!   (iota_X H)_{ij} = X^k H_{kij}   (contraction on the first slot)

use nalgebra::DMatrix;

use super::chart::{Chart, ScalarField};
use super::tensor::{pair_index, sym_index, sym_matrix_inverse, triple_index, TensorField, Valence};
use crate::error::{Error, Result};

/// Exterior derivative of a k-form (k <= 3). In dimensions where the result
/// has no independent components (e.g. d of a 3-form when n = 3) the result
/// is the zero field of the next degree.
pub fn exterior_derivative(w: &TensorField) -> Result<TensorField> {
    let chart = w.chart().clone();
    let n = chart.dim();
    match w.valence() {
        Valence::Scalar => {
            let f = w.scalar_comp();
            Ok(TensorField::oneform_from_fn(&chart, |i| f.diff_idx(i)))
        }
        Valence::OneForm => {
            let mut comps = Vec::with_capacity(Valence::TwoForm.component_count(n));
            for i in 0..n {
                for j in (i + 1)..n {
                    comps.push(w.comp1(j).diff_idx(i).sub(&w.comp1(i).diff_idx(j)));
                }
            }
            TensorField::from_components(chart, Valence::TwoForm, comps)
        }
        Valence::TwoForm => {
            let mut comps = Vec::with_capacity(Valence::ThreeForm.component_count(n));
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in (j + 1)..n {
                        let t = w
                            .comp2(j, k)
                            .diff_idx(i)
                            .sub(&w.comp2(i, k).diff_idx(j))
                            .add(&w.comp2(i, j).diff_idx(k));
                        comps.push(t);
                    }
                }
            }
            TensorField::from_components(chart, Valence::ThreeForm, comps)
        }
        Valence::ThreeForm => {
            let mut comps = Vec::with_capacity(Valence::FourForm.component_count(n));
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in (j + 1)..n {
                        for l in (k + 1)..n {
                            let t = w
                                .comp3(j, k, l)
                                .diff_idx(i)
                                .sub(&w.comp3(i, k, l).diff_idx(j))
                                .add(&w.comp3(i, j, l).diff_idx(k))
                                .sub(&w.comp3(i, j, k).diff_idx(l));
                            comps.push(t);
                        }
                    }
                }
            }
            TensorField::from_components(chart, Valence::FourForm, comps)
        }
        other => Err(Error::Valence {
            expected: "k-form with k <= 3",
            found: other.name(),
        }),
    }
}

/// Interior product, contracting the first slot of a k-form (k >= 1) with a
/// vector field.
pub fn interior_product(x: &TensorField, w: &TensorField) -> Result<TensorField> {
    x.expect(Valence::Vector)?;
    if x.chart() != w.chart() {
        return Err(Error::ChartMismatch);
    }
    let chart = w.chart().clone();
    let n = chart.dim();
    let contract = |terms: &mut dyn Iterator<Item = ScalarField>| -> ScalarField {
        terms.fold(chart.zero_field(), |acc, t| acc.add(&t))
    };
    match w.valence() {
        Valence::OneForm => {
            let s = contract(&mut (0..n).map(|i| x.comp1(i).mul(w.comp1(i))));
            TensorField::from_components(chart.clone(), Valence::Scalar, vec![s])
        }
        Valence::TwoForm => Ok(TensorField::oneform_from_fn(&chart, |j| {
            contract(&mut (0..n).map(|i| x.comp1(i).mul(&w.comp2(i, j))))
        })),
        Valence::ThreeForm => {
            let mut comps = Vec::with_capacity(Valence::TwoForm.component_count(n));
            for i in 0..n {
                for j in (i + 1)..n {
                    comps.push(contract(
                        &mut (0..n).map(|k| x.comp1(k).mul(&w.comp3(k, i, j))),
                    ));
                }
            }
            TensorField::from_components(chart, Valence::TwoForm, comps)
        }
        other => Err(Error::Valence {
            expected: "k-form with 1 <= k <= 3",
            found: other.name(),
        }),
    }
}

/// Lie derivative along a vector field. Supported valences: scalar, vector
/// (the Lie bracket), k-forms for k <= 3, and (symmetric) bilinears, all by
/// the componentwise formulas; the Cartan identity on forms is then a real
/// cross-check rather than a tautology.
pub fn lie_derivative(x: &TensorField, t: &TensorField) -> Result<TensorField> {
    x.expect(Valence::Vector)?;
    if x.chart() != t.chart() {
        return Err(Error::ChartMismatch);
    }
    let chart = t.chart().clone();
    let n = chart.dim();
    let transport = |f: &ScalarField| -> ScalarField {
        // X^k d_k f
        (0..n).fold(chart.zero_field(), |acc, k| {
            acc.add(&x.comp1(k).mul(&f.diff_idx(k)))
        })
    };
    match t.valence() {
        Valence::Scalar => {
            let s = transport(t.scalar_comp());
            TensorField::from_components(chart.clone(), Valence::Scalar, vec![s])
        }
        Valence::Vector => Ok(TensorField::vector_from_fn(&chart, |i| {
            // [X,u]^i = X^j d_j u^i - u^j d_j X^i
            (0..n).fold(chart.zero_field(), |acc, j| {
                acc.add(&x.comp1(j).mul(&t.comp1(i).diff_idx(j)))
                    .sub(&t.comp1(j).mul(&x.comp1(i).diff_idx(j)))
            })
        })),
        Valence::OneForm => Ok(TensorField::oneform_from_fn(&chart, |i| {
            // X^j d_j a_i + a_j d_i X^j
            let mut acc = transport(t.comp1(i));
            for j in 0..n {
                acc = acc.add(&t.comp1(j).mul(&x.comp1(j).diff_idx(i)));
            }
            acc
        })),
        Valence::TwoForm => {
            let comp = |i: usize, j: usize| -> ScalarField {
                let mut acc = transport(&t.comp2(i, j));
                for k in 0..n {
                    acc = acc
                        .add(&t.comp2(k, j).mul(&x.comp1(k).diff_idx(i)))
                        .add(&t.comp2(i, k).mul(&x.comp1(k).diff_idx(j)));
                }
                acc
            };
            let mut comps = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    comps.push(comp(i, j));
                }
            }
            TensorField::from_components(chart, Valence::TwoForm, comps)
        }
        Valence::ThreeForm => {
            let comp = |i: usize, j: usize, k: usize| -> ScalarField {
                let mut acc = transport(&t.comp3(i, j, k));
                for l in 0..n {
                    acc = acc
                        .add(&t.comp3(l, j, k).mul(&x.comp1(l).diff_idx(i)))
                        .add(&t.comp3(i, l, k).mul(&x.comp1(l).diff_idx(j)))
                        .add(&t.comp3(i, j, l).mul(&x.comp1(l).diff_idx(k)));
                }
                acc
            };
            let mut comps = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in (j + 1)..n {
                        comps.push(comp(i, j, k));
                    }
                }
            }
            TensorField::from_components(chart, Valence::ThreeForm, comps)
        }
        Valence::SymBilinear | Valence::Bilinear => {
            let comp = |i: usize, j: usize| -> ScalarField {
                // X^k d_k g_ij + g_kj d_i X^k + g_ik d_j X^k
                let mut acc = transport(&t.comp2(i, j));
                for k in 0..n {
                    acc = acc
                        .add(&t.comp2(k, j).mul(&x.comp1(k).diff_idx(i)))
                        .add(&t.comp2(i, k).mul(&x.comp1(k).diff_idx(j)));
                }
                acc
            };
            let mut comps = Vec::new();
            if t.valence() == Valence::SymBilinear {
                for i in 0..n {
                    for j in i..n {
                        comps.push(comp(i, j));
                    }
                }
                TensorField::from_components(chart, Valence::SymBilinear, comps)
            } else {
                for i in 0..n {
                    for j in 0..n {
                        comps.push(comp(i, j));
                    }
                }
                TensorField::from_components(chart, Valence::Bilinear, comps)
            }
        }
        other => Err(Error::Valence {
            expected: "scalar, vector, k-form, or bilinear",
            found: other.name(),
        }),
    }
}

/// Christoffel symbols of the second kind for a metric,
/// Gamma^k_{ij} = 1/2 g^{kl} (d_i g_{lj} + d_j g_{li} - d_l g_{ij}).
///
/// For n <= 4 the inverse metric is computed symbolically and the symbols
/// are scalar fields; for larger n they are evaluated numerically per point.
#[derive(Debug, Clone)]
pub struct Christoffel {
    chart: Chart,
    g: TensorField,
    /// d_k g_{ij}, indexed k * count2 + sym_index(i, j).
    dg: Vec<ScalarField>,
    /// Gamma^k_{ij} with i <= j, indexed k * count2 + sym_index(i, j); only
    /// present when the symbolic inverse is available.
    symbolic: Option<Vec<ScalarField>>,
}

/// Evaluated Christoffel symbols at a point: Gamma^k_{ij}, symmetric in (i, j).
#[derive(Debug, Clone)]
pub struct ChristoffelValues {
    n: usize,
    vals: Vec<f64>,
}

impl ChristoffelValues {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.vals[k * n * (n + 1) / 2 + sym_index(i.min(j), i.max(j), n)]
    }
}

#[allow(clippy::needless_range_loop)]
pub fn christoffel(g: &TensorField) -> Result<Christoffel> {
    g.expect(Valence::SymBilinear)?;
    let chart = g.chart().clone();
    let n = chart.dim();
    let count2 = n * (n + 1) / 2;
    let mut dg = Vec::with_capacity(n * count2);
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                dg.push(g.comp2(i, j).diff_idx(k));
            }
        }
    }
    let dg_at = |k: usize, i: usize, j: usize| -> &ScalarField {
        &dg[k * count2 + sym_index(i.min(j), i.max(j), n)]
    };
    let symbolic = if n <= 4 {
        let inv = sym_matrix_inverse(&chart, &|i, j| g.comp2(i, j), n)?;
        let mut gamma = Vec::with_capacity(n * count2);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut acc = chart.zero_field();
                    for l in 0..n {
                        let inner = dg_at(i, l, j)
                            .add(dg_at(j, l, i))
                            .sub(dg_at(l, i, j));
                        acc = acc.add(&inv[k][l].mul(&inner));
                    }
                    gamma.push(acc.scale(0.5));
                }
            }
        }
        Some(gamma)
    } else {
        None
    };
    Ok(Christoffel {
        chart,
        g: g.clone(),
        dg,
        symbolic,
    })
}

impl Christoffel {
    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn is_symbolic(&self) -> bool {
        self.symbolic.is_some()
    }

    pub fn symbolic_component(&self, k: usize, i: usize, j: usize) -> Option<&ScalarField> {
        let n = self.chart.dim();
        let count2 = n * (n + 1) / 2;
        self.symbolic
            .as_ref()
            .map(|v| &v[k * count2 + sym_index(i.min(j), i.max(j), n)])
    }

    pub fn eval(&self, p: &[f64]) -> Result<ChristoffelValues> {
        let n = self.chart.dim();
        let count2 = n * (n + 1) / 2;
        if let Some(sym) = &self.symbolic {
            let mut vals = Vec::with_capacity(sym.len());
            for f in sym {
                let v = f.eval(p).map_err(|e| match e {
                    Error::Domain(_) => Error::SingularMetric { point: p.to_vec() },
                    other => other,
                })?;
                vals.push(v);
            }
            return Ok(ChristoffelValues { n, vals });
        }
        // numeric fallback for n > 4: invert g(p) per point
        let gm = self.g.eval_matrix(p)?;
        let inv = gm
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric { point: p.to_vec() })?;
        let mut dgv = vec![0.0; self.dg.len()];
        for (idx, f) in self.dg.iter().enumerate() {
            dgv[idx] = f.eval(p)?;
        }
        let dg_at =
            |k: usize, i: usize, j: usize| dgv[k * count2 + sym_index(i.min(j), i.max(j), n)];
        let mut vals = Vec::with_capacity(n * count2);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += inv[(k, l)] * (dg_at(i, l, j) + dg_at(j, l, i) - dg_at(l, i, j));
                    }
                    vals.push(0.5 * acc);
                }
            }
        }
        Ok(ChristoffelValues { n, vals })
    }

    /// Covariant derivative of the metric at a point (metricity defect):
    /// max |d_k g_ij - Gamma^l_{ki} g_lj - Gamma^l_{kj} g_il|.
    pub fn metricity_defect(&self, p: &[f64]) -> Result<f64> {
        let n = self.chart.dim();
        let count2 = n * (n + 1) / 2;
        let gamma = self.eval(p)?;
        let gm = self.g.eval_matrix(p)?;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let d = self.dg[k * count2 + sym_index(i.min(j), i.max(j), n)].eval(p)?;
                    let mut v = d;
                    for l in 0..n {
                        v -= gamma.get(l, k, i) * gm[(l, j)] + gamma.get(l, k, j) * gm[(i, l)];
                    }
                    worst = worst.max(v.abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Numeric inverse-metric at a point, with a singularity error.
pub fn inverse_metric_at(g: &TensorField, p: &[f64]) -> Result<DMatrix<f64>> {
    g.expect(Valence::SymBilinear)?;
    g.eval_matrix(p)?
        .try_inverse()
        .ok_or_else(|| Error::SingularMetric { point: p.to_vec() })
}

/// Wedge-style helper used in tests and fixtures: the 2-form e_i ^ e_j
/// scaled by a coefficient field.
pub fn two_form_from(
    chart: &Chart,
    entries: &[(usize, usize, ScalarField)],
) -> Result<TensorField> {
    let n = chart.dim();
    let mut comps = vec![chart.zero_field(); Valence::TwoForm.component_count(n)];
    for (i, j, f) in entries {
        if i == j || *i >= n || *j >= n {
            return Err(Error::InvalidInput(format!("bad 2-form index ({i},{j})")));
        }
        let (a, b, sf) = if i < j {
            (*i, *j, f.clone())
        } else {
            (*j, *i, f.neg())
        };
        let idx = pair_index(a, b, n);
        comps[idx] = comps[idx].add(&sf);
    }
    TensorField::from_components(chart.clone(), Valence::TwoForm, comps)
}

/// The 3-form coefficient * e_i ^ e_j ^ e_k  (indices must be strictly
/// increasing).
pub fn three_form_from(
    chart: &Chart,
    entries: &[(usize, usize, usize, ScalarField)],
) -> Result<TensorField> {
    let n = chart.dim();
    let mut comps = vec![chart.zero_field(); Valence::ThreeForm.component_count(n)];
    for (i, j, k, f) in entries {
        if !(i < j && j < k && *k < n) {
            return Err(Error::InvalidInput(format!(
                "3-form indices must be increasing, got ({i},{j},{k})"
            )));
        }
        let idx = triple_index(*i, *j, *k, n);
        comps[idx] = comps[idx].add(f);
    }
    TensorField::from_components(chart.clone(), Valence::ThreeForm, comps)
}
