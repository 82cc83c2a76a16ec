//! Shared fixtures: the scenario corpus used across the integration tests,
//! plus small independent oracles (finite differences).

#![allow(dead_code)]

use tgm_core::courant::{CourantData, GeneralizedSection};
use tgm_core::dirac::DiracFrame;
use tgm_core::fields::{Chart, Sampling, ScalarField, TensorField, Valence};
use tgm_core::loopspace::sigma_chart;
use tgm_core::transverse::QuotientSpec;

pub struct TestScenario {
    pub name: &'static str,
    pub frame: DiracFrame,
    pub quotient: Option<QuotientSpec>,
    pub x_loop: Option<Vec<ScalarField>>,
    pub expect_transverse: bool,
}

pub fn plan100() -> Sampling {
    Sampling {
        count: 100,
        seed: 42,
    }
}

pub fn section(chart: &Chart, x: &[&str], a: &[&str]) -> GeneralizedSection {
    GeneralizedSection::new(
        TensorField::parse(chart, Valence::Vector, x).unwrap(),
        TensorField::parse(chart, Valence::OneForm, a).unwrap(),
    )
    .unwrap()
}

fn circle_loop(scale: f64, center_x: f64) -> Vec<ScalarField> {
    let circle = sigma_chart();
    vec![
        circle
            .parse(&format!("{center_x} + {scale}*cos(sigma)"))
            .unwrap(),
        circle.parse(&format!("{scale}*sin(sigma)")).unwrap(),
        circle.parse("0").unwrap(),
    ]
}

/// Flat metric, no twist, D = span{(d/dz, 0)}.
pub fn s1_flat() -> TestScenario {
    let chart = Chart::new(vec!["x", "y", "z"], vec![(-1.5, 1.5); 3]).unwrap();
    let g = TensorField::parse(&chart, Valence::SymBilinear, &["1", "0", "0", "1", "0", "1"])
        .unwrap();
    let h = TensorField::zero(&chart, Valence::ThreeForm);
    let data = CourantData::new(g, h, &plan100()).unwrap();
    let frame = DiracFrame::new(
        data,
        vec![section(&chart, &["0", "0", "1"], &["0", "0", "0"])],
    )
    .unwrap();
    TestScenario {
        name: "s1_flat",
        quotient: Some(QuotientSpec {
            leaf_coords: vec!["z".into()],
            flattening_b: TensorField::zero(&chart, Valence::TwoForm),
        }),
        x_loop: Some(circle_loop(1.0, 0.0)),
        expect_transverse: true,
        frame,
    }
}

/// Flat metric, H = 2 dx^dy^dz, D = span{(d/dz, 2x dy)}; flattened by
/// B = 2x dy^dz.
pub fn s2_twisted() -> TestScenario {
    let chart = Chart::new(vec!["x", "y", "z"], vec![(-1.5, 1.5); 3]).unwrap();
    let g = TensorField::parse(&chart, Valence::SymBilinear, &["1", "0", "0", "1", "0", "1"])
        .unwrap();
    let h = TensorField::parse(&chart, Valence::ThreeForm, &["2"]).unwrap();
    let data = CourantData::new(g, h, &plan100()).unwrap();
    let frame = DiracFrame::new(
        data,
        vec![section(&chart, &["0", "0", "1"], &["0", "2*x", "0"])],
    )
    .unwrap();
    TestScenario {
        name: "s2_twisted",
        quotient: Some(QuotientSpec {
            leaf_coords: vec!["z".into()],
            flattening_b: TensorField::parse(&chart, Valence::TwoForm, &["0", "0", "2*x"])
                .unwrap(),
        }),
        x_loop: Some(circle_loop(1.0, 0.0)),
        expect_transverse: true,
    frame,
    }
}

/// Heisenberg metric dx^2 + dy^2 + (dz - x dy)^2, D = span{(d/dz, 0)}.
pub fn s3_heisenberg() -> TestScenario {
    let chart = Chart::new(vec!["x", "y", "z"], vec![(-1.0, 1.0); 3]).unwrap();
    let g = TensorField::parse(
        &chart,
        Valence::SymBilinear,
        &["1", "0", "0", "1 + x^2", "-x", "1"],
    )
    .unwrap();
    let h = TensorField::zero(&chart, Valence::ThreeForm);
    let data = CourantData::new(g, h, &plan100()).unwrap();
    let frame = DiracFrame::new(
        data,
        vec![section(&chart, &["0", "0", "1"], &["0", "0", "0"])],
    )
    .unwrap();
    TestScenario {
        name: "s3_heisenberg",
        quotient: Some(QuotientSpec {
            leaf_coords: vec!["z".into()],
            flattening_b: TensorField::zero(&chart, Valence::TwoForm),
        }),
        x_loop: Some(circle_loop(0.5, 0.0)),
        expect_transverse: true,
        frame,
    }
}

/// g = dx^2 + (1 + exp(x)) dy^2 + dz^2 on x in [0, 1], D = span{(d/dx, 0)}:
/// the leaf flow stretches the transverse metric, so the quotient does not
/// exist and V_D is not transverse.
pub fn s4_negative() -> TestScenario {
    let chart = Chart::new(
        vec!["x", "y", "z"],
        vec![(0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
    )
    .unwrap();
    let g = TensorField::parse(
        &chart,
        Valence::SymBilinear,
        &["1", "0", "0", "1 + exp(x)", "0", "1"],
    )
    .unwrap();
    let h = TensorField::zero(&chart, Valence::ThreeForm);
    let data = CourantData::new(g, h, &plan100()).unwrap();
    let frame = DiracFrame::new(
        data,
        vec![section(&chart, &["1", "0", "0"], &["0", "0", "0"])],
    )
    .unwrap();
    let circle = sigma_chart();
    TestScenario {
        name: "s4_negative",
        quotient: Some(QuotientSpec {
            leaf_coords: vec!["x".into()],
            flattening_b: TensorField::zero(&chart, Valence::TwoForm),
        }),
        x_loop: Some(vec![
            circle.parse("0.5 + 0.3*cos(sigma)").unwrap(),
            circle.parse("0.5*sin(sigma)").unwrap(),
            circle.parse("0").unwrap(),
        ]),
        expect_transverse: false,
        frame,
    }
}

/// Euclidean plane minus a disk around the origin, D spanned by the
/// rotation field (x d/dy - y d/dx, 0): an isometry, hence transverse.
pub fn s5_rotation() -> TestScenario {
    let chart = Chart::new(vec!["x", "y"], vec![(-2.0, 2.0); 2])
        .unwrap()
        .with_excluded("x^2 + y^2 - 0.25")
        .unwrap();
    let g = TensorField::parse(&chart, Valence::SymBilinear, &["1", "0", "1"]).unwrap();
    let h = TensorField::zero(&chart, Valence::ThreeForm);
    let data = CourantData::new(g, h, &plan100()).unwrap();
    let frame = DiracFrame::new(data, vec![section(&chart, &["-y", "x"], &["0", "0"])]).unwrap();
    TestScenario {
        name: "s5_rotation",
        quotient: None,
        x_loop: None,
        expect_transverse: true,
        frame,
    }
}

/// Rejection fixture: D = span{(d/dx, 0), (d/dy, x dz)} is isotropic and
/// regular but not involutive ([e1, e2] = (0, dz) leaves the span).
pub fn s6_non_involutive() -> TestScenario {
    let chart = Chart::new(vec!["x", "y", "z"], vec![(-1.0, 1.0); 3]).unwrap();
    let g = TensorField::parse(&chart, Valence::SymBilinear, &["1", "0", "0", "1", "0", "1"])
        .unwrap();
    let h = TensorField::zero(&chart, Valence::ThreeForm);
    let data = CourantData::new(g, h, &plan100()).unwrap();
    let frame = DiracFrame::new(
        data,
        vec![
            section(&chart, &["1", "0", "0"], &["0", "0", "0"]),
            section(&chart, &["0", "1", "0"], &["0", "0", "x"]),
        ],
    )
    .unwrap();
    TestScenario {
        name: "s6_non_involutive",
        quotient: None,
        x_loop: None,
        expect_transverse: false,
        frame,
    }
}

pub fn dirac_corpus() -> Vec<TestScenario> {
    vec![
        s1_flat(),
        s2_twisted(),
        s3_heisenberg(),
        s4_negative(),
        s5_rotation(),
    ]
}

/// Central finite difference of a scalar field, the independent oracle for
/// symbolic derivatives.
pub fn fd_partial(f: &ScalarField, p: &[f64], i: usize, step: f64) -> f64 {
    let mut plus = p.to_vec();
    plus[i] += step;
    let mut minus = p.to_vec();
    minus[i] -= step;
    (f.eval(&plus).unwrap() - f.eval(&minus).unwrap()) / (2.0 * step)
}
