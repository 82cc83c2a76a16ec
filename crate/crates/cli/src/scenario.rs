//! Scenario files: a declarative TOML dialect (conventionally `.scn`)
//! describing one chart, the ambient data (g, H), a Dirac frame, and the
//! optional quotient / loop sections.
//!
//! Rank-2 and rank-3 entries are keyed by coordinate names, either
//! concatenated single-letter names ("xy", "xyz") or underscore-joined
//! ("x1_x2"). Only canonically ordered keys are accepted: upper triangle
//! for the metric, strictly increasing for forms. Missing entries are zero.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use tgm_core::courant::{CourantData, GeneralizedSection};
use tgm_core::dirac::DiracFrame;
use tgm_core::fields::tensor::{pair_index, sym_index, triple_index};
use tgm_core::fields::{Chart, Sampling, ScalarField, TensorField, Valence};
use tgm_core::loopspace::sigma_chart;
use tgm_core::transverse::QuotientSpec;
use tgm_core::Thresholds;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    chart: ChartSection,
    metric: BTreeMap<String, String>,
    #[serde(default)]
    three_form: BTreeMap<String, String>,
    dirac_frame: Vec<FrameSection>,
    #[serde(default)]
    quotient: Option<QuotientSection>,
    #[serde(default, rename = "loop")]
    loop_section: Option<LoopSection>,
    #[serde(default)]
    tolerances: Option<ToleranceSection>,
    #[serde(default)]
    sample: Option<SampleSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartSection {
    coords: Vec<String>,
    #[serde(rename = "box")]
    sample_box: Vec<[f64; 2]>,
    #[serde(default)]
    excluded: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSection {
    vector: Vec<String>,
    one_form: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuotientSection {
    leaf_coords: Vec<String>,
    #[serde(default)]
    flattening_b: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoopSection {
    x: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToleranceSection {
    #[serde(default)]
    pass: Option<f64>,
    #[serde(default)]
    fail: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleSection {
    #[serde(default)]
    count: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

/// A fully compiled scenario: every expression parsed, the ambient data
/// validated at the sample points.
pub struct Scenario {
    pub name: String,
    pub frame: DiracFrame,
    pub quotient: Option<QuotientSpec>,
    pub x_loop: Option<Vec<ScalarField>>,
    pub thresholds: Thresholds,
    pub sampling: Sampling,
}

/// Split an entry key into coordinate indices: underscore-joined names, or
/// one character per coordinate when all names are single characters.
fn key_indices(key: &str, chart: &Chart, arity: usize) -> Result<Vec<usize>> {
    let parts: Vec<&str> = if key.contains('_') {
        key.split('_').collect()
    } else if key.chars().count() == arity {
        // per-character split; only meaningful for single-letter coordinates
        key.split("").filter(|s| !s.is_empty()).collect()
    } else {
        vec![key]
    };
    if parts.len() != arity {
        bail!("key \"{key}\" does not name {arity} coordinates");
    }
    parts
        .iter()
        .map(|p| {
            chart
                .coord_index(p)
                .ok_or_else(|| anyhow!("key \"{key}\": unknown coordinate \"{p}\""))
        })
        .collect()
}

fn build_metric(chart: &Chart, entries: &BTreeMap<String, String>) -> Result<TensorField> {
    let n = chart.dim();
    let mut comps = vec![chart.zero_field(); Valence::SymBilinear.component_count(n)];
    for (key, text) in entries {
        let idx = key_indices(key, chart, 2).with_context(|| "in [metric]")?;
        let (i, j) = (idx[0], idx[1]);
        if i > j {
            bail!(
                "[metric] key \"{key}\": only the upper triangle is accepted \
                 (use \"{}{}\")",
                chart.coord_names()[j],
                chart.coord_names()[i]
            );
        }
        let slot = sym_index(i, j, n);
        if !comps[slot].is_zero_ast() {
            bail!("[metric] key \"{key}\" duplicates an earlier entry");
        }
        comps[slot] = chart
            .parse(text)
            .with_context(|| format!("in [metric] entry \"{key}\""))?;
    }
    Ok(TensorField::from_components(
        chart.clone(),
        Valence::SymBilinear,
        comps,
    )?)
}

fn build_two_form(
    chart: &Chart,
    entries: &BTreeMap<String, String>,
    section: &str,
) -> Result<TensorField> {
    let n = chart.dim();
    let mut comps = vec![chart.zero_field(); Valence::TwoForm.component_count(n)];
    for (key, text) in entries {
        let idx = key_indices(key, chart, 2).with_context(|| format!("in [{section}]"))?;
        let (i, j) = (idx[0], idx[1]);
        if i >= j {
            bail!("[{section}] key \"{key}\": indices must be strictly increasing");
        }
        let slot = pair_index(i, j, n);
        if !comps[slot].is_zero_ast() {
            bail!("[{section}] key \"{key}\" duplicates an earlier entry");
        }
        comps[slot] = chart
            .parse(text)
            .with_context(|| format!("in [{section}] entry \"{key}\""))?;
    }
    Ok(TensorField::from_components(
        chart.clone(),
        Valence::TwoForm,
        comps,
    )?)
}

fn build_three_form(chart: &Chart, entries: &BTreeMap<String, String>) -> Result<TensorField> {
    let n = chart.dim();
    let mut comps = vec![chart.zero_field(); Valence::ThreeForm.component_count(n)];
    for (key, text) in entries {
        let idx = key_indices(key, chart, 3).with_context(|| "in [three_form]")?;
        let (i, j, k) = (idx[0], idx[1], idx[2]);
        if !(i < j && j < k) {
            bail!("[three_form] key \"{key}\": indices must be strictly increasing");
        }
        let slot = triple_index(i, j, k, n);
        if !comps[slot].is_zero_ast() {
            bail!("[three_form] key \"{key}\" duplicates an earlier entry");
        }
        comps[slot] = chart
            .parse(text)
            .with_context(|| format!("in [three_form] entry \"{key}\""))?;
    }
    Ok(TensorField::from_components(
        chart.clone(),
        Valence::ThreeForm,
        comps,
    )?)
}

/// Load and compile a scenario file. CLI overrides replace the file's
/// sampling and tolerance settings when given.
pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario file {}", path.display()))?;
    // reject multi-chart layouts with a clear message before strict parsing
    let table: toml::Table = toml::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    if table.contains_key("charts") {
        bail!(
            "{}: multi-chart scenarios are not supported; \
             define a single [chart] section",
            path.display()
        );
    }
    let file: ScenarioFile = toml::from_str(&text)
        .with_context(|| format!("invalid scenario schema in {}", path.display()))?;

    let mut chart = Chart::new(
        file.chart.coords.clone(),
        file.chart
            .sample_box
            .iter()
            .map(|b| (b[0], b[1]))
            .collect(),
    )?;
    if let Some(excluded) = &file.chart.excluded {
        chart = chart
            .with_excluded(excluded)
            .context("in [chart] excluded")?;
    }
    let n = chart.dim();

    let thresholds = {
        let mut t = Thresholds::default();
        if let Some(tol) = &file.tolerances {
            if let Some(p) = tol.pass {
                t.pass = p;
            }
            if let Some(f) = tol.fail {
                t.fail = f;
            }
        }
        if let Some(p) = overrides.tol_pass {
            t.pass = p;
        }
        if let Some(f) = overrides.tol_fail {
            t.fail = f;
        }
        if !(t.pass > 0.0 && t.fail > t.pass) {
            bail!("tolerances must satisfy 0 < pass < fail");
        }
        t
    };
    let sampling = Sampling {
        count: overrides
            .samples
            .or(file.sample.as_ref().and_then(|s| s.count))
            .unwrap_or(100),
        seed: overrides
            .seed
            .or(file.sample.as_ref().and_then(|s| s.seed))
            .unwrap_or(42),
    };

    let g = build_metric(&chart, &file.metric)?;
    let h = build_three_form(&chart, &file.three_form)?;
    let data = CourantData::new(g, h, &sampling)
        .context("ambient data validation (positive definite g, closed H)")?;

    if file.dirac_frame.is_empty() {
        bail!("at least one [[dirac_frame]] section is required");
    }
    let mut sections = Vec::with_capacity(file.dirac_frame.len());
    for (idx, fs) in file.dirac_frame.iter().enumerate() {
        if fs.vector.len() != n || fs.one_form.len() != n {
            bail!(
                "[[dirac_frame]] #{idx}: vector and one_form need {n} components each"
            );
        }
        let refs: Vec<&str> = fs.vector.iter().map(String::as_str).collect();
        let x = TensorField::parse(&chart, Valence::Vector, &refs)
            .with_context(|| format!("[[dirac_frame]] #{idx} vector"))?;
        let refs: Vec<&str> = fs.one_form.iter().map(String::as_str).collect();
        let alpha = TensorField::parse(&chart, Valence::OneForm, &refs)
            .with_context(|| format!("[[dirac_frame]] #{idx} one_form"))?;
        sections.push(GeneralizedSection::new(x, alpha)?);
    }
    let frame = DiracFrame::new(data, sections)?;

    let quotient = match &file.quotient {
        None => None,
        Some(q) => {
            for name in &q.leaf_coords {
                if chart.coord_index(name).is_none() {
                    bail!("[quotient] unknown leaf coordinate \"{name}\"");
                }
            }
            Some(QuotientSpec {
                leaf_coords: q.leaf_coords.clone(),
                flattening_b: build_two_form(&chart, &q.flattening_b, "quotient.flattening_b")?,
            })
        }
    };

    let x_loop = match &file.loop_section {
        None => None,
        Some(l) => {
            if l.x.len() != n {
                bail!("[loop] x needs {n} components");
            }
            let circle = sigma_chart();
            let comps = l
                .x
                .iter()
                .map(|t| circle.parse(t))
                .collect::<tgm_core::Result<Vec<_>>>()
                .context("in [loop] x")?;
            Some(comps)
        }
    };

    Ok(Scenario {
        name: file.name,
        frame,
        quotient,
        x_loop,
        thresholds,
        sampling,
    })
}

/// Command-line overrides for sampling and tolerances.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tol_pass: Option<f64>,
    pub tol_fail: Option<f64>,
}
