//! Courant-algebroid axioms for the Dorfman bracket over the scenario
//! corpus, all evaluated numerically at 100 seeded points: anchor
//! compatibility, the left Jacobi identity, the symmetric-square formula,
//! B-transform equivariance, and the reflection properties of R_V.

mod common;

use common::{dirac_corpus, plan100, section};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgm_core::courant::{pairing, CourantData, GeneralizedSection};
use tgm_core::fields::calculus::{exterior_derivative, interior_product};
use tgm_core::fields::{Chart, TensorField, Valence};
use tgm_core::transverse::lemma_tensor;

/// Three independent test sections per chart, mixing vector and form parts.
fn test_sections(chart: &Chart) -> Vec<GeneralizedSection> {
    if chart.dim() == 3 {
        vec![
            section(chart, &["1", "0", "x"], &["0", "x*y", "0"]),
            section(chart, &["0", "y", "0"], &["sin(y)", "0", "1"]),
            section(chart, &["x", "0", "1"], &["0", "0", "x^2"]),
        ]
    } else {
        vec![
            section(chart, &["1", "x"], &["0", "x*y"]),
            section(chart, &["0", "y"], &["sin(y)", "1"]),
            section(chart, &["x", "1"], &["y", "0"]),
        ]
    }
}

fn rho_of(s: &GeneralizedSection, f: &tgm_core::ScalarField) -> tgm_core::ScalarField {
    // rho(s) f = X^i d_i f
    let n = s.chart().dim();
    let mut acc = s.chart().zero_field();
    for i in 0..n {
        acc = acc.add(&s.vector().comp1(i).mul(&f.diff_idx(i)));
    }
    acc
}

#[test]
fn anchor_compatibility() {
    for sc in dirac_corpus() {
        let data = sc.frame.data();
        let secs = test_sections(data.chart());
        let points = plan100().points(data.chart()).unwrap();
        for e1 in &secs {
            for e2 in &secs {
                for e3 in &secs {
                    let lhs = rho_of(e1, &pairing(e2, e3).unwrap());
                    let rhs = pairing(&data.dorfman(e1, e2).unwrap(), e3)
                        .unwrap()
                        .add(&pairing(e2, &data.dorfman(e1, e3).unwrap()).unwrap());
                    for p in &points {
                        let v =
                            (lhs.eval(p.as_slice()).unwrap() - rhs.eval(p.as_slice()).unwrap()).abs();
                        assert!(v <= 1e-9, "{}: anchor compatibility defect {v}", sc.name);
                    }
                }
            }
        }
    }
}

#[test]
fn left_jacobi_identity() {
    for sc in dirac_corpus() {
        let data = sc.frame.data();
        let secs = test_sections(data.chart());
        let points = plan100().points(data.chart()).unwrap();
        let (e1, e2, e3) = (&secs[0], &secs[1], &secs[2]);
        let lhs = data.dorfman(e1, &data.dorfman(e2, e3).unwrap()).unwrap();
        let rhs = data
            .dorfman(&data.dorfman(e1, e2).unwrap(), e3)
            .unwrap()
            .add(&data.dorfman(e2, &data.dorfman(e1, e3).unwrap()).unwrap())
            .unwrap();
        for p in &points {
            let v = (lhs.eval(p.as_slice()).unwrap() - rhs.eval(p.as_slice()).unwrap()).norm();
            assert!(v <= 1e-9, "{}: Jacobi defect {v}", sc.name);
        }
    }
}

#[test]
fn symmetric_square_is_exact_one_form() {
    // [e, e] = (0, d iota_X alpha), which with this pairing normalization is
    // (0, d<e,e>/2)
    for sc in dirac_corpus() {
        let data = sc.frame.data();
        let points = plan100().points(data.chart()).unwrap();
        for e in test_sections(data.chart()) {
            let bracket = data.dorfman(&e, &e).unwrap();
            let ix_alpha = interior_product(e.vector(), e.one_form()).unwrap();
            let want = exterior_derivative(&ix_alpha).unwrap();
            for p in &points {
                let b = bracket.eval(p.as_slice()).unwrap();
                let n = data.chart().dim();
                for i in 0..n {
                    assert!(b[i].abs() <= 1e-9, "{}: vector part {b}", sc.name);
                }
                let w = want.eval_vector(p.as_slice()).unwrap();
                for i in 0..n {
                    assert!(
                        (b[n + i] - w[i]).abs() <= 1e-9,
                        "{}: form part mismatch",
                        sc.name
                    );
                }
            }
        }
    }
}

#[test]
fn b_transform_equivariance_and_pairing_invariance() {
    for sc in dirac_corpus() {
        let data = sc.frame.data();
        let chart = data.chart().clone();
        let b = if chart.dim() == 3 {
            TensorField::parse(&chart, Valence::TwoForm, &["x", "y*z", "sin(y)"]).unwrap()
        } else {
            TensorField::parse(&chart, Valence::TwoForm, &["x*y"]).unwrap()
        };
        let data_b = data.b_transform_data(&b).unwrap();
        let secs = test_sections(&chart);
        let points = plan100().points(&chart).unwrap();
        for s1 in &secs {
            for s2 in &secs {
                // pairing invariance, exact up to roundoff
                let before = pairing(s1, s2).unwrap();
                let after = pairing(
                    &data.b_transform_section(&b, s1).unwrap(),
                    &data.b_transform_section(&b, s2).unwrap(),
                )
                .unwrap();
                // equivariance: [B s1, B s2]_{H - dB} = B [s1, s2]_H
                let lhs = data_b
                    .dorfman(
                        &data.b_transform_section(&b, s1).unwrap(),
                        &data.b_transform_section(&b, s2).unwrap(),
                    )
                    .unwrap();
                let rhs = data
                    .b_transform_section(&b, &data.dorfman(s1, s2).unwrap())
                    .unwrap();
                for p in &points {
                    let dp = (before.eval(p.as_slice()).unwrap()
                        - after.eval(p.as_slice()).unwrap())
                    .abs();
                    assert!(dp <= 1e-12, "{}: pairing defect {dp}", sc.name);
                    let de =
                        (lhs.eval(p.as_slice()).unwrap() - rhs.eval(p.as_slice()).unwrap()).norm();
                    assert!(de <= 1e-9, "{}: equivariance defect {de}", sc.name);
                }
            }
        }
    }
}

#[test]
fn bracket_pairing_reproduces_lemma_tensor() {
    // <[e_a, u_+], v_-> = (L_X g + iota_X H - d alpha)(u, v) for the frame
    // generators, evaluated through the actual Dorfman bracket.
    for sc in dirac_corpus() {
        let data = sc.frame.data();
        let chart = data.chart().clone();
        let lemma = lemma_tensor(&sc.frame).unwrap();
        let vectors = if chart.dim() == 3 {
            vec![
                TensorField::parse(&chart, Valence::Vector, &["1", "x", "0"]).unwrap(),
                TensorField::parse(&chart, Valence::Vector, &["0", "y", "1"]).unwrap(),
            ]
        } else {
            vec![
                TensorField::parse(&chart, Valence::Vector, &["1", "x"]).unwrap(),
                TensorField::parse(&chart, Valence::Vector, &["0", "y"]).unwrap(),
            ]
        };
        let points = plan100().points(&chart).unwrap();
        for (a, e) in sc.frame.sections().iter().enumerate() {
            for u in &vectors {
                for v in &vectors {
                    let u_plus = data.plus_embed(u).unwrap();
                    let v_minus = data.minus_embed(v).unwrap();
                    let lhs = pairing(&data.dorfman(e, &u_plus).unwrap(), &v_minus).unwrap();
                    for p in &points {
                        let t = lemma.eval(a, p.as_slice()).unwrap();
                        let uv = u.eval_vector(p.as_slice()).unwrap();
                        let vv = v.eval_vector(p.as_slice()).unwrap();
                        let rhs = (uv.transpose() * &t * &vv)[(0, 0)];
                        let defect = (lhs.eval(p.as_slice()).unwrap() - rhs).abs();
                        assert!(defect <= 1e-9, "{}: identity defect {defect}", sc.name);
                    }
                }
            }
        }
    }
}

#[test]
fn reflection_is_involutive_orthogonal_and_positive() {
    for sc in dirac_corpus() {
        let data = sc.frame.data();
        let chart = data.chart().clone();
        let n = chart.dim();
        let secs = test_sections(&chart);
        let points = plan100().points(&chart).unwrap();
        for s in &secs {
            let rs = data.reflect_v(s).unwrap();
            let rrs = data.reflect_v(&rs).unwrap();
            let gv = pairing(s, &rs).unwrap();
            for t in &secs {
                let rt = data.reflect_v(t).unwrap();
                let before = pairing(s, t).unwrap();
                let after = pairing(&rs, &rt).unwrap();
                for p in &points {
                    assert!(
                        (before.eval(p.as_slice()).unwrap() - after.eval(p.as_slice()).unwrap())
                            .abs()
                            <= 1e-12
                    );
                }
            }
            for p in &points {
                // R_V^2 = id
                let d = (rrs.eval(p.as_slice()).unwrap() - s.eval(p.as_slice()).unwrap()).norm();
                assert!(d <= 1e-12, "{}: involutivity defect {d}", sc.name);
                // positivity of G_V
                let v = gv.eval(p.as_slice()).unwrap();
                let sval = s.eval(p.as_slice()).unwrap();
                assert!(v >= 0.0);
                if sval.norm() > 1e-8 {
                    assert!(v > 0.0, "{}: G_V degenerate on nonzero section", sc.name);
                }
            }
        }
        // random pointwise values: <s, R_V s> = 0 iff s = 0
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in points.iter().take(10) {
            let gvm = data.gv_matrix(p.as_slice()).unwrap();
            for _ in 0..100 {
                let v = DVector::from_fn(2 * n, |_, _| rng.random_range(-1.0..1.0));
                let q = (v.transpose() * &gvm * &v)[(0, 0)];
                assert!(q > 0.0);
            }
        }
    }
}

#[test]
fn decompose_matches_linear_solve() {
    // (0, p) -> a = g^{-1} p / 2, b = -g^{-1} p / 2 against a numeric solve
    let sc = common::s3_heisenberg();
    let data = sc.frame.data();
    let chart = data.chart().clone();
    let s = section(&chart, &["0", "0", "0"], &["0.3", "-1", "2"]);
    let (a, b) = data.decompose(&s).unwrap();
    for p in plan100().points(&chart).unwrap().iter().take(20) {
        let gm = data.metric_at(p.as_slice()).unwrap();
        let alpha = s.one_form().eval_vector(p.as_slice()).unwrap();
        let expect = gm.lu().solve(&alpha).unwrap() * 0.5;
        let av = a.eval_vector(p.as_slice()).unwrap();
        let bv = b.eval_vector(p.as_slice()).unwrap();
        assert!((&av - &expect).norm() <= 1e-12);
        assert!((&bv + &expect).norm() <= 1e-12);
    }
}

#[test]
fn courant_data_validates_positive_definiteness() {
    let chart = Chart::new(vec!["x", "y", "z"], vec![(-1.0, 1.0); 3]).unwrap();
    // g_xx = x is not positive on the box
    let g = TensorField::parse(&chart, Valence::SymBilinear, &["x", "0", "0", "1", "0", "1"])
        .unwrap();
    let h = TensorField::zero(&chart, Valence::ThreeForm);
    assert!(CourantData::new(g, h, &plan100()).is_err());
}
