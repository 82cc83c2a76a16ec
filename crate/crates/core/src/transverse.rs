//! Deciding the Dirac-Riemannian foliation property.
//!
//! Two independent routes are computed for each frame generator
//! e_a = (X_a, alpha_a):
//!
//! * the lemma route: T_a = L_{X_a} g + iota_{X_a} H - d alpha_a must lie in
//!   D+ (x) T*M + T*M (x) D- at every sample point, decided by a min-norm
//!   least-squares solve whose unknowns are the connection coefficient
//!   one-forms omega+- of the two compatibility connections;
//! * the bracket oracle: <[e_a, u_+], v_-> = T_a(u, v) must vanish for u, v
//!   ranging over annihilator bases of D+ and D-.
//!
//! When the verdict is "transverse", the solved omega+- are substituted into
//! the two compatibility equations (symmetric part on the lowered anchor,
//! antisymmetric part on the one-forms with the H/2 twist) and the residuals
//! are reported; this certifies gaugeability of the sigma model with target
//! data (g, H) along D. Quotient data for projectable D (a metric and a
//! closed 3-form on the local leaf space) is extracted when the scenario
//! supplies adapted coordinates and a flattening B-transform.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dirac::{DiracFrame, PointFrameData};
use crate::error::{Error, Result};
use crate::fields::calculus::{
    christoffel, exterior_derivative, interior_product, lie_derivative,
};
use crate::fields::tensor::sym_matrix_inverse;
use crate::fields::{Chart, Sampling, ScalarField, TensorField, Valence};
use crate::Thresholds;

/// The per-generator tensors T_a = L_{X_a} g + iota_{X_a} H - d alpha_a.
#[derive(Debug, Clone)]
pub struct LemmaTensor {
    tensors: Vec<TensorField>,
}

impl LemmaTensor {
    pub fn tensors(&self) -> &[TensorField] {
        &self.tensors
    }

    pub fn eval(&self, a: usize, p: &[f64]) -> Result<DMatrix<f64>> {
        self.tensors[a].eval_matrix(p)
    }
}

pub fn lemma_tensor(frame: &DiracFrame) -> Result<LemmaTensor> {
    let data = frame.data();
    let mut tensors = Vec::with_capacity(frame.rank());
    for s in frame.sections() {
        let lg = lie_derivative(s.vector(), data.metric())?;
        let ixh = interior_product(s.vector(), data.three_form())?;
        let da = exterior_derivative(s.one_form())?;
        let t = TensorField::bilinear_from_fn(data.chart(), |i, j| {
            lg.comp2(i, j).add(&ixh.comp2(i, j)).sub(&da.comp2(i, j))
        });
        tensors.push(t);
    }
    Ok(LemmaTensor { tensors })
}

/// Minimum-norm solution of
///   T = sum_b beta_b+ (x) w+_b - sum_b w-_b (x) beta_b-
/// in the Frobenius sense, with the defect norm as residual.
#[derive(Debug, Clone)]
pub struct MembershipSolution {
    /// Row b holds the coefficient one-form w+_{ab} in R^n.
    pub omega_plus: DMatrix<f64>,
    /// Row b holds w-_{ab}.
    pub omega_minus: DMatrix<f64>,
    pub residual: f64,
}

fn design_matrix(pfd: &PointFrameData) -> DMatrix<f64> {
    let n = pfd.dim();
    let k = pfd.rank();
    let mut a = DMatrix::zeros(n * n, 2 * k * n);
    for b in 0..k {
        for jp in 0..n {
            // w+_{b, jp} multiplies beta_b+ (x) e_jp
            let col = b * n + jp;
            for i in 0..n {
                a[(i * n + jp, col)] = pfd.beta_plus[(i, b)];
            }
            // w-_{b, ip} multiplies -e_ip (x) beta_b-
            let col = (k + b) * n + jp;
            let ip = jp;
            for j in 0..n {
                a[(ip * n + j, col)] = -pfd.beta_minus[(j, b)];
            }
        }
    }
    a
}

pub fn membership_solve(t: &DMatrix<f64>, pfd: &PointFrameData) -> Result<MembershipSolution> {
    membership_solve_inner(t, pfd, None)
}

/// Same least-squares problem solved after a seeded random orthogonal change
/// of basis on the unknowns. The residual is an invariant of the affine
/// solution set, so it must agree with the plain solve; used to test
/// precisely that.
pub fn membership_solve_mixed(
    t: &DMatrix<f64>,
    pfd: &PointFrameData,
    seed: u64,
) -> Result<MembershipSolution> {
    membership_solve_inner(t, pfd, Some(seed))
}

fn membership_solve_inner(
    t: &DMatrix<f64>,
    pfd: &PointFrameData,
    mix_seed: Option<u64>,
) -> Result<MembershipSolution> {
    let n = pfd.dim();
    let k = pfd.rank();
    let mut a = design_matrix(pfd);
    let q = mix_seed.map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 2 * k * n;
        let gauss = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let qr = gauss.qr();
        qr.q()
    });
    if let Some(q) = &q {
        a = &a * q;
    }
    let rhs = DVector::from_fn(n * n, |idx, _| t[(idx / n, idx % n)]);
    let svd = a.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12;
    let mut w = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let residual = (&a * &w - &rhs).norm();
    if let Some(q) = &q {
        w = q * w;
    }
    let mut omega_plus = DMatrix::zeros(k, n);
    let mut omega_minus = DMatrix::zeros(k, n);
    for b in 0..k {
        for j in 0..n {
            omega_plus[(b, j)] = w[b * n + j];
            omega_minus[(b, j)] = w[(k + b) * n + j];
        }
    }
    Ok(MembershipSolution {
        omega_plus,
        omega_minus,
        residual,
    })
}

impl MembershipSolution {
    /// Reassemble sum_b beta_b+ (x) w+_b - w-_b (x) beta_b- for comparison
    /// against T.
    pub fn reconstruct(&self, pfd: &PointFrameData) -> DMatrix<f64> {
        let n = pfd.dim();
        let k = pfd.rank();
        let mut out = DMatrix::zeros(n, n);
        for b in 0..k {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += pfd.beta_plus[(i, b)] * self.omega_plus[(b, j)]
                        - self.omega_minus[(b, i)] * pfd.beta_minus[(j, b)];
                }
            }
        }
        out
    }

    pub fn max_coefficient(&self) -> f64 {
        self.omega_plus
            .iter()
            .chain(self.omega_minus.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Connection coefficients solved at every sample point, one solution per
/// generator, in deterministic point order.
#[derive(Debug, Clone)]
pub struct ConnectionTable {
    pub points: Vec<DVector<f64>>,
    pub solutions: Vec<Vec<MembershipSolution>>,
    pub max_residual: f64,
    /// Info-only smoothness diagnostic: max ||omega(p) - omega(q)|| / |p - q|
    /// over nearest-neighbour sample pairs.
    pub continuity: Option<f64>,
}

pub fn solve_connections(
    frame: &DiracFrame,
    lemma: &LemmaTensor,
    sampling: &Sampling,
) -> Result<ConnectionTable> {
    let points = sampling.points(frame.data().chart())?;
    let solutions: Vec<Vec<MembershipSolution>> = points
        .par_iter()
        .map(|p| {
            let pfd = frame.point_frame(p.as_slice())?;
            (0..frame.rank())
                .map(|a| membership_solve(&lemma.eval(a, p.as_slice())?, &pfd))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let max_residual = solutions
        .iter()
        .flatten()
        .fold(0.0_f64, |m, s| m.max(s.residual));
    let continuity = continuity_diagnostic(&points, &solutions);
    Ok(ConnectionTable {
        points,
        solutions,
        max_residual,
        continuity,
    })
}

fn continuity_diagnostic(
    points: &[DVector<f64>],
    solutions: &[Vec<MembershipSolution>],
) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut nearest = usize::MAX;
        let mut best = f64::MAX;
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = (p - q).norm();
            if d < best {
                best = d;
                nearest = j;
            }
        }
        if nearest == usize::MAX || best == 0.0 {
            continue;
        }
        for (sa, sb) in solutions[i].iter().zip(&solutions[nearest]) {
            let diff = ((&sa.omega_plus - &sb.omega_plus).norm()
                + (&sa.omega_minus - &sb.omega_minus).norm())
                / best;
            worst = worst.max(diff);
        }
    }
    Some(worst)
}

/// Max over generators, annihilator basis vectors, and sample points of
/// |T_a(u, v)| with u in Ann(D+), v in Ann(D-). This is the pairing
/// <[e_a, u_+], v_->, so it vanishes exactly when the invariance condition
/// holds; it never touches the least-squares route.
pub fn bracket_oracle(
    frame: &DiracFrame,
    lemma: &LemmaTensor,
    sampling: &Sampling,
) -> Result<OracleReport> {
    let points = sampling.points(frame.data().chart())?;
    let max_abs = points
        .par_iter()
        .map(|p| {
            let pfd = frame.point_frame(p.as_slice())?;
            let mut worst: f64 = 0.0;
            for a in 0..frame.rank() {
                let t = lemma.eval(a, p.as_slice())?;
                for u in pfd.ann_plus.column_iter() {
                    for v in pfd.ann_minus.column_iter() {
                        let val = (u.transpose() * &t * v)[(0, 0)];
                        worst = worst.max(val.abs());
                    }
                }
            }
            Ok(worst)
        })
        .try_reduce(|| 0.0_f64, |a, b| Ok(a.max(b)))?;
    Ok(OracleReport { max_abs })
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub max_abs: f64,
}

/// Residuals of the two compatibility equations evaluated with the solved
/// connection coefficients (nabla = (omega+ + omega-)/2, phi = (omega+ - omega-)/2).
#[derive(Debug, Clone)]
pub struct EqReport {
    pub eq1_max: f64,
    pub eq2_max: f64,
}

pub fn check_eqs12(frame: &DiracFrame, table: &ConnectionTable) -> Result<EqReport> {
    let data = frame.data();
    let chart = data.chart();
    let n = chart.dim();
    let k = frame.rank();
    let gamma = christoffel(data.metric())?;

    // symbolic ingredients per generator
    struct GenFields {
        alpha: TensorField,
        rho_bar: TensorField,
        dalpha: Vec<ScalarField>,
        drho: Vec<ScalarField>,
        ixh: TensorField,
    }
    let mut gens = Vec::with_capacity(k);
    for s in frame.sections() {
        let alpha = s.one_form().clone();
        let rho_bar = data.lower(s.vector())?;
        let mut dalpha = Vec::with_capacity(n * n);
        let mut drho = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                dalpha.push(alpha.comp1(i).diff_idx(j));
                drho.push(rho_bar.comp1(i).diff_idx(j));
            }
        }
        let ixh = interior_product(s.vector(), data.three_form())?;
        gens.push(GenFields {
            alpha,
            rho_bar,
            dalpha,
            drho,
            ixh,
        });
    }

    let mut eq1_max: f64 = 0.0;
    let mut eq2_max: f64 = 0.0;
    for (p, sols) in table.points.iter().zip(&table.solutions) {
        let p = p.as_slice();
        let gv = gamma.eval(p)?;
        let mut alpha_vals = vec![DVector::zeros(n); k];
        let mut rho_vals = vec![DVector::zeros(n); k];
        for (b, gb) in gens.iter().enumerate() {
            alpha_vals[b] = gb.alpha.eval_vector(p)?;
            rho_vals[b] = gb.rho_bar.eval_vector(p)?;
        }
        for (a, gen) in gens.iter().enumerate() {
            let sol = &sols[a];
            let nabla =
                |b: usize, j: usize| 0.5 * (sol.omega_plus[(b, j)] + sol.omega_minus[(b, j)]);
            let phi =
                |b: usize, j: usize| 0.5 * (sol.omega_plus[(b, j)] - sol.omega_minus[(b, j)]);
            let ixh = gen.ixh.eval_matrix(p)?;
            let mut m_plus = DMatrix::zeros(n, n);
            let mut m_minus = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut mp = gen.drho[i * n + j].eval(p)?;
                    let mut mm = gen.dalpha[i * n + j].eval(p)?;
                    for l in 0..n {
                        mp -= gv.get(l, j, i) * rho_vals[a][l];
                        mm -= gv.get(l, j, i) * alpha_vals[a][l];
                    }
                    for b in 0..k {
                        mp -= nabla(b, j) * rho_vals[b][i] + phi(b, j) * alpha_vals[b][i];
                        mm -= nabla(b, j) * alpha_vals[b][i] + phi(b, j) * rho_vals[b][i];
                    }
                    // the H-twist enters the antisymmetric equation as
                    // + (iota_{X_a} H)_{ij} / 2
                    mm += 0.5 * ixh[(i, j)];
                    m_plus[(i, j)] = mp;
                    m_minus[(i, j)] = mm;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    eq1_max = eq1_max.max(0.5 * (m_plus[(i, j)] + m_plus[(j, i)]).abs());
                    eq2_max = eq2_max.max(0.5 * (m_minus[(i, j)] - m_minus[(j, i)]).abs());
                }
            }
        }
    }
    Ok(EqReport { eq1_max, eq2_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Transverse,
    NotTransverse,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Transverse => "transverse",
            Verdict::NotTransverse => "not_transverse",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Per-sample-point residual diagnostics.
#[derive(Debug, Clone)]
pub struct PointDiagnostic {
    pub point: Vec<f64>,
    pub lemma_residual: f64,
    pub oracle_value: f64,
}

#[derive(Debug, Clone)]
pub struct TransverseReport {
    pub lemma_max_residual: f64,
    pub oracle_max: f64,
    pub eq12: Option<EqReport>,
    pub verdict: Verdict,
    pub per_point: Vec<PointDiagnostic>,
    pub continuity: Option<f64>,
    /// True exactly when the verdict is transverse: the sigma model with
    /// target data (g, H) can be gauged along D.
    pub gaugeable: bool,
    pub table: ConnectionTable,
}

/// Full pipeline: lemma tensors, pointwise connection solve, bracket oracle,
/// verdict, and (when transverse) the compatibility-equation residuals.
///
/// Precondition: the frame has passed the Dirac checks (isotropy,
/// involutivity, regularity); see [`DiracFrame::validate`].
pub fn transverse_check(
    frame: &DiracFrame,
    sampling: &Sampling,
    thresholds: &Thresholds,
) -> Result<TransverseReport> {
    let lemma = lemma_tensor(frame)?;
    let table = solve_connections(frame, &lemma, sampling)?;
    let oracle = bracket_oracle(frame, &lemma, sampling)?;

    // per-point diagnostics recomputed serially in table order
    let mut per_point = Vec::with_capacity(table.points.len());
    for (p, sols) in table.points.iter().zip(&table.solutions) {
        let pfd = frame.point_frame(p.as_slice())?;
        let lemma_residual = sols.iter().fold(0.0_f64, |m, s| m.max(s.residual));
        let mut oracle_value: f64 = 0.0;
        for a in 0..frame.rank() {
            let t = lemma.eval(a, p.as_slice())?;
            for u in pfd.ann_plus.column_iter() {
                for v in pfd.ann_minus.column_iter() {
                    oracle_value = oracle_value.max((u.transpose() * &t * v)[(0, 0)].abs());
                }
            }
        }
        per_point.push(PointDiagnostic {
            point: p.as_slice().to_vec(),
            lemma_residual,
            oracle_value,
        });
    }

    let lemma_max = table.max_residual;
    let oracle_max = oracle.max_abs;
    let verdict = if lemma_max <= thresholds.pass && oracle_max <= thresholds.pass {
        Verdict::Transverse
    } else if lemma_max >= thresholds.fail && oracle_max >= thresholds.fail {
        Verdict::NotTransverse
    } else {
        // one of the residuals landed in the gap, or the routes disagree
        Verdict::Inconclusive
    };
    let eq12 = if verdict == Verdict::Transverse {
        Some(check_eqs12(frame, &table)?)
    } else {
        None
    };
    let continuity = table.continuity;
    Ok(TransverseReport {
        lemma_max_residual: lemma_max,
        oracle_max,
        eq12,
        verdict,
        per_point,
        continuity,
        gaugeable: verdict == Verdict::Transverse,
        table,
    })
}

/// Pointwise basis of V_D = D + (D-perp intersect V): the k frame columns
/// plus u_+ for u running over the Ann(D+) basis.
#[derive(Debug, Clone)]
pub struct VdBasis {
    /// 2n x n column basis.
    pub basis: DMatrix<f64>,
    /// Max |<column, e_a>| (the D-perp sandwich defect).
    pub d_perp_violation: f64,
}

impl VdBasis {
    /// Gram matrix of the canonical pairing on the basis columns.
    pub fn pairing_gram(&self) -> DMatrix<f64> {
        let n2 = self.basis.nrows();
        let j = crate::courant::pairing_matrix(n2 / 2);
        self.basis.transpose() * j * &self.basis
    }
}

pub fn build_vd(frame: &DiracFrame, p: &[f64]) -> Result<VdBasis> {
    let n = frame.dim();
    let k = frame.rank();
    let pfd = frame.point_frame(p)?;
    let gm = frame.data().metric_at(p)?;
    let mut basis = DMatrix::zeros(2 * n, n);
    for a in 0..k {
        basis.set_column(a, &pfd.d_mat.column(a).into_owned());
    }
    for (c, u) in pfd.ann_plus.column_iter().enumerate() {
        let gu = &gm * u;
        let mut col = DVector::zeros(2 * n);
        col.rows_mut(0, n).copy_from(&u.into_owned());
        col.rows_mut(n, n).copy_from(&gu);
        basis.set_column(k + c, &col);
    }
    // rank n
    let svd = basis.clone().svd(false, false);
    let sigma_min = svd.singular_values.iter().copied().fold(f64::MAX, f64::min);
    if sigma_min <= 1e-10 * svd.singular_values.max().max(1.0) {
        return Err(Error::RankDeficient {
            what: "V_D basis".into(),
            point: p.to_vec(),
            sigma: sigma_min,
        });
    }
    // sandwich D subset V_D subset D-perp
    let j = crate::courant::pairing_matrix(n);
    let pairings = pfd.d_mat.transpose() * &j * &basis;
    let d_perp_violation = pairings.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(VdBasis {
        basis,
        d_perp_violation,
    })
}

/// Adapted-coordinate description of the leaf directions plus the 2-form
/// whose B-transform straightens D to {(X, 0)}.
#[derive(Debug, Clone)]
pub struct QuotientSpec {
    pub leaf_coords: Vec<String>,
    pub flattening_b: TensorField,
}

#[derive(Debug, Clone)]
pub struct QuotientData {
    /// The degenerate symmetric form h = g(P u, P v), ker h containing the
    /// leaf directions, on the original chart.
    pub h: TensorField,
    /// The straightened 3-form H' = H - dB on the original chart.
    pub h_prime: TensorField,
    /// Quotient chart on the transverse coordinates.
    pub quotient_chart: Chart,
    /// Metric on the quotient chart.
    pub g_q: TensorField,
    /// Closed 3-form on the quotient chart.
    pub h_q: TensorField,
    /// Max leaf-derivative / leaf-contraction defect found while checking
    /// basic-ness (0 when everything was symbolically zero).
    pub basic_max: f64,
}

const ADAPTED_TOL: f64 = 1e-10;
const BASIC_TOL: f64 = 1e-10;

/// Proposition-1 pipeline for projectable D in adapted coordinates: flatten
/// D with the supplied B-transform, build the degenerate metric h by
/// g-orthogonal projection along the leaves, verify that h and H' are basic,
/// and restrict both to the transverse coordinates.
pub fn quotient_extract(
    frame: &DiracFrame,
    spec: &QuotientSpec,
    sampling: &Sampling,
) -> Result<QuotientData> {
    let data = frame.data();
    let chart = data.chart();
    let n = chart.dim();
    let k = frame.rank();
    if spec.leaf_coords.len() != k {
        return Err(Error::NotAdapted(format!(
            "{} leaf coordinates declared for a rank-{} frame",
            spec.leaf_coords.len(),
            k
        )));
    }
    let proj = frame.check_projectability(sampling)?;
    if proj.min_singular_value < Thresholds::default().regularity_sigma {
        return Err(Error::NotProjectable(format!(
            "anchor matrix min singular value {:.3e}",
            proj.min_singular_value
        )));
    }
    let mut leaf_idx = Vec::with_capacity(k);
    for name in &spec.leaf_coords {
        leaf_idx.push(
            chart
                .coord_index(name)
                .ok_or_else(|| Error::UnknownCoordinate { name: name.clone() })?,
        );
    }
    let transverse_idx: Vec<usize> = (0..n).filter(|i| !leaf_idx.contains(i)).collect();

    let points = sampling.points(chart)?;

    // adaptedness: anchors live in the leaf directions and span them
    for p in &points {
        let anchors = frame.anchor_matrix(p.as_slice())?;
        for &i in &transverse_idx {
            for a in 0..k {
                if anchors[(i, a)].abs() > ADAPTED_TOL {
                    return Err(Error::NotAdapted(format!(
                        "anchor component along {} is {:.3e} at {:?}",
                        chart.coord_names()[i],
                        anchors[(i, a)],
                        p.as_slice()
                    )));
                }
            }
        }
        let mut leaf_block = DMatrix::zeros(k, k);
        for (r, &i) in leaf_idx.iter().enumerate() {
            for a in 0..k {
                leaf_block[(r, a)] = anchors[(i, a)];
            }
        }
        let sigma_min = leaf_block
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::MAX, f64::min);
        if sigma_min < Thresholds::default().regularity_sigma {
            return Err(Error::NotAdapted(format!(
                "leaf block of the anchor matrix is rank-deficient (sigma {sigma_min:.3e})"
            )));
        }
    }

    // flatten D
    let data_prime = data.b_transform_data(&spec.flattening_b)?;
    let mut flatten_defect: f64 = 0.0;
    for s in frame.sections() {
        let s2 = data.b_transform_section(&spec.flattening_b, s)?;
        for p in &points {
            flatten_defect = flatten_defect.max(s2.one_form().max_abs_at(p.as_slice())?);
        }
    }
    if flatten_defect > ADAPTED_TOL {
        return Err(Error::NotFlattened {
            max_abs: flatten_defect,
        });
    }
    let h_prime = data_prime.three_form().clone();

    // h = g - rho_bar_a (G^{-1})^{ab} rho_bar_b with G_{ab} = g(X_a, X_b)
    let g = data.metric();
    let mut rho_bars = Vec::with_capacity(k);
    for s in frame.sections() {
        rho_bars.push(data.lower(s.vector())?);
    }
    let gram = |a: usize, b: usize| -> ScalarField {
        (0..n).fold(chart.zero_field(), |acc, i| {
            acc.add(&frame.sections()[a].vector().comp1(i).mul(rho_bars[b].comp1(i)))
        })
    };
    let gram_inv = sym_matrix_inverse(chart, &gram, k)?;
    let h_comp = |i: usize, j: usize| -> ScalarField {
        let mut acc = g.comp2(i, j);
        for a in 0..k {
            for b in 0..k {
                let term = rho_bars[a]
                    .comp1(i)
                    .mul(&gram_inv[a][b])
                    .mul(rho_bars[b].comp1(j));
                acc = acc.sub(&term);
            }
        }
        acc
    };
    let mut h_comps = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            h_comps.push(h_comp(i, j));
        }
    }
    let h = TensorField::from_components(chart.clone(), Valence::SymBilinear, h_comps)?;

    // basic-ness: leaf-derivatives of h and H' vanish, iota_X h = 0,
    // iota_X H' = 0, L_X H' = 0
    let mut basic_max: f64 = 0.0;
    for &l in &leaf_idx {
        for field in [&h, &h_prime] {
            let mut worst: f64 = 0.0;
            for comp in field.components() {
                let d = comp.diff_idx(l);
                if d.is_zero_ast() {
                    continue;
                }
                for p in &points {
                    worst = worst.max(d.eval(p.as_slice())?.abs());
                }
            }
            basic_max = basic_max.max(worst);
            if worst > BASIC_TOL {
                return Err(Error::BasicnessViolation {
                    what: format!(
                        "d/d{} of {}",
                        chart.coord_names()[l],
                        if field.valence() == Valence::SymBilinear {
                            "h"
                        } else {
                            "H'"
                        }
                    ),
                    norm: worst,
                });
            }
        }
    }
    for (a, s) in frame.sections().iter().enumerate() {
        let x = s.vector();
        let ixh_field = TensorField::oneform_from_fn(chart, |j| {
            (0..n).fold(chart.zero_field(), |acc, i| {
                acc.add(&x.comp1(i).mul(&h.comp2(i, j)))
            })
        });
        let ixhp = interior_product(x, &h_prime)?;
        let lxhp = lie_derivative(x, &h_prime)?;
        for (what, field) in [
            ("iota_X h", &ixh_field),
            ("iota_X H'", &ixhp),
            ("L_X H'", &lxhp),
        ] {
            let mut worst: f64 = 0.0;
            for p in &points {
                worst = worst.max(field.max_abs_at(p.as_slice())?);
            }
            basic_max = basic_max.max(worst);
            if worst > BASIC_TOL {
                return Err(Error::BasicnessViolation {
                    what: format!("{what} (generator {a})"),
                    norm: worst,
                });
            }
        }
    }

    // restriction to the transverse coordinates
    let q_names: Vec<String> = transverse_idx
        .iter()
        .map(|&i| chart.coord_names()[i].clone())
        .collect();
    let q_box: Vec<(f64, f64)> = transverse_idx
        .iter()
        .map(|&i| chart.sample_box()[i])
        .collect();
    let quotient_chart = Chart::new(q_names, q_box)?;
    let mut index_map = vec![None; n];
    for (new, &old) in transverse_idx.iter().enumerate() {
        index_map[old] = Some(new);
    }
    let restrict = |f: &ScalarField| -> Result<ScalarField> {
        let mut ast = f.ast().clone();
        for &l in &leaf_idx {
            let (lo, hi) = chart.sample_box()[l];
            ast = crate::fields::expr::substitute(&ast, l, 0.5 * (lo + hi));
        }
        Ok(quotient_chart.scalar(crate::fields::expr::remap_coords(&ast, &index_map)?))
    };
    let m = transverse_idx.len();
    let mut gq_comps = Vec::with_capacity(m * (m + 1) / 2);
    for a in 0..m {
        for b in a..m {
            gq_comps.push(restrict(&h.comp2(transverse_idx[a], transverse_idx[b]))?);
        }
    }
    let g_q = TensorField::from_components(quotient_chart.clone(), Valence::SymBilinear, gq_comps)?;
    let mut hq_comps = Vec::with_capacity(Valence::ThreeForm.component_count(m));
    for a in 0..m {
        for b in (a + 1)..m {
            for c in (b + 1)..m {
                hq_comps.push(restrict(&h_prime.comp3(
                    transverse_idx[a],
                    transverse_idx[b],
                    transverse_idx[c],
                ))?);
            }
        }
    }
    let h_q = TensorField::from_components(quotient_chart.clone(), Valence::ThreeForm, hq_comps)?;

    Ok(QuotientData {
        h,
        h_prime,
        quotient_chart,
        g_q,
        h_q,
        basic_max,
    })
}
