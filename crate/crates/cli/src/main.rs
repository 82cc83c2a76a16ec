//! `tgm` — scenario-driven verification of Dirac structures and transverse
//! generalized metrics on a single chart.
//!
//! Subcommands:
//!   check     Dirac axioms, both transversality routes, and the
//!             compatibility-equation residuals.
//!   quotient  Leaf-space metric and 3-form extraction for projectable D in
//!             adapted coordinates.
//!   loops     Discretized phase-space study: reduced Hamiltonian
//!             invariance under the constraint currents.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 inconclusive,
//! 3 input error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use tgm_cli::report::{
    Canonical, Checks, DiracBlock, LoopsBlock, LoopsRow, QuotientBlock, Report, Status,
    TransverseBlock,
};
use tgm_cli::scenario::{load_scenario, Overrides, Scenario};
use tgm_core::error::Error as CoreError;
use tgm_core::loopspace::{
    LoopFunctional,
    constraint_state, gauge_invariance_study, isotropy_anomaly, poisson_bracket, sigma_chart,
    Extension, SmearedCurrent,
};
use tgm_core::transverse::{quotient_extract, transverse_check, Verdict};

/// Residual bound for the solved compatibility equations.
const EQ_TOL: f64 = 1e-8;
/// A gauge study passes outright below this bracket size (exact symmetry).
const EXACT_SYMMETRY_TOL: f64 = 1e-8;
/// Plateau floor: brackets this large with no decay mean failure.
const PLATEAU_TOL: f64 = 1e-6;
const CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "tgm",
    version,
    about = "chart-local verification of transverse generalized metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (.scn)
    file: PathBuf,
    /// Write the JSON report to this path
    #[arg(long)]
    json: Option<PathBuf>,
    /// Override the sample point count
    #[arg(long)]
    samples: Option<usize>,
    /// Override the sampling seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the pass tolerance
    #[arg(long = "tol-pass")]
    tol_pass: Option<f64>,
    /// Override the fail threshold
    #[arg(long = "tol-fail")]
    tol_fail: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the Dirac frame and decide transversality
    Check(CommonArgs),
    /// Extract quotient data (leaf-space metric and 3-form)
    Quotient(CommonArgs),
    /// Run the loop-space reduced-Hamiltonian study
    Loops {
        #[command(flatten)]
        common: CommonArgs,
        /// Lattice resolutions, comma separated
        #[arg(long = "N", value_delimiter = ',', default_values_t = [64usize, 128, 256])]
        n_list: Vec<usize>,
        /// Use the flat R^{2n} inner product for the off-surface extension
        #[arg(long)]
        euclidean_extension: bool,
    },
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check(args) => run_command(&args, cmd_check),
Command::Quotient(args) => run_command(&args, cmd_quotient),
        Command::Loops {
            common,
            n_list,
            euclidean_extension,
        } => {
            let extension = if euclidean_extension {
                Extension::Euclidean
            } else {
                Extension::MetricOrthogonal
            };
            run_command(&common, move |sc, checks, timings| {
                cmd_loops(sc, checks, timings, &n_list, extension)
            })
        }
    };
    ExitCode::from(code as u8)
}

/// `TGM_THREADS` caps the rayon pool used for the sample-point sweeps.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("TGM_THREADS") {
        if let Ok(k) = v.parse::<usize>() {
            if k >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
        }
    }
}

fn run_command<F>(args: &CommonArgs, body: F) -> i32
where
    F: FnOnce(&Scenario, &mut Checks, &mut BTreeMap<String, f64>) -> Result<Status>,
{
    let overrides = Overrides {
        samples: args.samples,
        seed: args.seed,
        tol_pass: args.tol_pass,
        tol_fail: args.tol_fail,
    };
    let mut timings = BTreeMap::new();
    let t0 = Instant::now();
    let sc = match load_scenario(&args.file, &overrides) {
        Ok(sc) => sc,
        Err(err) => {
            eprintln!("input error: {err:#}");
            return 3;
        }
    };
    timings.insert("load".into(), ms_since(t0));

    let mut checks = Checks::default();
    let status = match body(&sc, &mut checks, &mut timings) {
        Ok(status) => status,
        Err(err) => {
            eprintln!("input error: {err:#}");
            return 3;
        }
    };

    let command = if checks.loops.is_some() {
        "loops"
    } else if checks.quotient.is_some() {
        "quotient"
    } else {
        "check"
    };
    let canonical = Canonical {
        scenario: sc.name.clone(),
        command: command.into(),
        seed: sc.sampling.seed,
        samples: sc.sampling.count,
        tolerance_pass: sc.thresholds.pass,
        tolerance_fail: sc.thresholds.fail,
        status,
        checks,
    };
    let report = Report::new(canonical, timings);
    print_human(&report);
    if let Some(path) = &args.json {
        if let Err(err) = std::fs::write(path, report.to_json_pretty()) {
            eprintln!("input error: cannot write {}: {err}", path.display());
            return 3;
        }
    }
    status.exit_code()
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn dirac_block(sc: &Scenario) -> Result<(DiracBlock, bool)> {
    let rep = sc.frame.validate(&sc.sampling, &sc.thresholds)?;
    let ok = rep.is_dirac(&sc.thresholds);
    Ok((
        DiracBlock {
            status: if ok { Status::Pass } else { Status::Fail },
            isotropy_max_violation: rep.isotropy.max_violation,
            involutivity_max_residual: rep.involutivity.max_residual,
            regularity_min_singular_value: rep.regularity.min_singular_value,
            projectability_min_singular_value: rep.projectability.min_singular_value,
            projectable: rep.projectability.passes(&sc.thresholds),
            regularity_failures: rep.involutivity.regularity_failures.len(),
        },
        ok,
    ))
}

fn cmd_check(
    sc: &Scenario,
    checks: &mut Checks,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Status> {
    let t = Instant::now();
    let (block, dirac_ok) = dirac_block(sc)?;
    timings.insert("dirac".into(), ms_since(t));
    checks.dirac = Some(block);
    if !dirac_ok {
        return Ok(Status::Fail);
    }

    let t = Instant::now();
    let rep = transverse_check(&sc.frame, &sc.sampling, &sc.thresholds)?;
    timings.insert("transverse".into(), ms_since(t));
    let max_coeff = rep
        .table
        .solutions
        .iter()
        .flatten()
        .fold(0.0_f64, |m, s| m.max(s.max_coefficient()));
    let eq_ok = rep
        .eq12
        .as_ref()
        .map(|eq| eq.eq1_max <= EQ_TOL && eq.eq2_max <= EQ_TOL)
        .unwrap_or(false);
    let status = match rep.verdict {
        Verdict::Transverse if eq_ok => Status::Pass,
        Verdict::Transverse => Status::Inconclusive,
        Verdict::NotTransverse => Status::Fail,
        Verdict::Inconclusive => Status::Inconclusive,
    };
    let statement = match rep.verdict {
        Verdict::Transverse => {
            "V_D is a transverse generalized metric: the sigma model with target \
             data (g, H) can be gauged along D"
                .to_string()
        }
        Verdict::NotTransverse => {
            "V_D is not a transverse generalized metric: no connection pair \
             satisfies the compatibility equations along D"
                .to_string()
        }
        Verdict::Inconclusive => {
            "residuals landed between the pass and fail thresholds".to_string()
        }
    };
    checks.transverse = Some(TransverseBlock {
        status,
        verdict: rep.verdict.as_str().into(),
        lemma_max_residual: rep.lemma_max_residual,
        oracle_max: rep.oracle_max,
        eq1_max: rep.eq12.as_ref().map(|e| e.eq1_max),
        eq2_max: rep.eq12.as_ref().map(|e| e.eq2_max),
        connection_continuity: rep.continuity,
        max_connection_coefficient: max_coeff,
        gaugeable: rep.gaugeable,
        statement,
    });
    Ok(status)
}

fn cmd_quotient(
    sc: &Scenario,
    checks: &mut Checks,
    timings: &mut BTreeMap<String, f64>,
) -> Result<Status> {
    let spec = sc.quotient.as_ref().ok_or_else(|| {
        anyhow::anyhow!("scenario has no [quotient] section (leaf_coords, flattening_b)")
    })?;
    let t = Instant::now();
    let (block, dirac_ok) = dirac_block(sc)?;
    timings.insert("dirac".into(), ms_since(t));
    checks.dirac = Some(block);
    if !dirac_ok {
        checks.quotient = Some(QuotientBlock {
            status: Status::Skipped,
            basic_max: None,
            diagnostic: Some("frame is not a Dirac structure".into()),
            g_q: None,
            h_q: None,
            h_prime_max_abs: None,
        });
        return Ok(Status::Fail);
    }
    let t = Instant::now();
    let result = quotient_extract(&sc.frame, spec, &sc.sampling);
    timings.insert("quotient".into(), ms_since(t));
    match result {
        Ok(q) => {
            let m = q.quotient_chart.dim();
            let mut gq = Vec::with_capacity(m);
            for i in 0..m {
                let mut row = Vec::with_capacity(m);
                for j in 0..m {
                    row.push(q.g_q.comp2(i, j).pretty());
                }
                gq.push(row);
            }
            let hq: Vec<String> = q.h_q.components().iter().map(|c| c.pretty()).collect();
            // max |H'| over the sample points, as a straightening diagnostic
            let mut hp_max: f64 = 0.0;
            for p in sc.sampling.points(sc.frame.data().chart())? {
                hp_max = hp_max.max(q.h_prime.max_abs_at(p.as_slice())?);
            }
            checks.quotient = Some(QuotientBlock {
                status: Status::Pass,
                basic_max: Some(q.basic_max),
                diagnostic: None,
                g_q: Some(gq),
                h_q: Some(hq),
                h_prime_max_abs: Some(hp_max),
            });
            Ok(Status::Pass)
        }
        Err(
            err @ (CoreError::NotProjectable(_)
            | CoreError::NotAdapted(_)
            | CoreError::NotFlattened { .. }
            | CoreError::BasicnessViolation { .. }),
        ) => {
            let basic_max = match &err {
                CoreError::BasicnessViolation { norm, .. } => Some(*norm),
                _ => None,
            };
            checks.quotient = Some(QuotientBlock {
                status: Status::Fail,
                basic_max,
                diagnostic: Some(err.to_string()),
                g_q: None,
                h_q: None,
                h_prime_max_abs: None,
            });
            Ok(Status::Fail)
        }
        Err(other) => Err(other.into()),
    }
}

fn cmd_loops(
    sc: &Scenario,
    checks: &mut Checks,
    timings: &mut BTreeMap<String, f64>,
    n_list: &[usize],
    extension: Extension,
) -> Result<Status> {
    let x_loop = sc
        .x_loop
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("scenario has no [loop] section"))?;
    if n_list.len() < 2 {
        anyhow::bail!("loops needs at least two resolutions (--N a,b,...)");
    }
    let t = Instant::now();
    let (block, dirac_ok) = dirac_block(sc)?;
    timings.insert("dirac".into(), ms_since(t));
    checks.dirac = Some(block);
    if !dirac_ok {
        return Ok(Status::Fail);
    }

    let t = Instant::now();
    let study = gauge_invariance_study(&sc.frame, x_loop, n_list, sc.sampling.seed, extension)?;
    timings.insert("gauge_study".into(), ms_since(t));

    // constraint-algebra closure and anomaly per resolution, over all
    // ordered generator pairs with the (cos, sin) smearing
    let t = Instant::now();
    let circle = sigma_chart();
    let phi1 = circle.parse("cos(sigma)").expect("static");
    let phi2 = circle.parse("sin(sigma)").expect("static");
    let mut closure_max = Vec::with_capacity(n_list.len());
    let mut anomaly_max = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let state = constraint_state(&sc.frame, x_loop, n, sc.sampling.seed)?;
        let mut worst_closure: f64 = 0.0;
        let mut worst_anomaly: f64 = 0.0;
        for s1 in sc.frame.sections() {
            for s2 in sc.frame.sections() {
                let c1 = SmearedCurrent::new(s1.clone(), phi1.clone())?;
                let c2 = SmearedCurrent::new(s2.clone(), phi2.clone())?;
                let lhs = poisson_bracket(&c1, &c2, &state, sc.frame.data())?;
                let br = sc.frame.data().dorfman(s1, s2)?;
                let c12 = SmearedCurrent::new(br, phi1.mul(&phi2))?;
                worst_closure = worst_closure.max((lhs - c12.value(&state)?).abs());
                worst_anomaly =
                    worst_anomaly.max(isotropy_anomaly(s1, s2, &phi1, &phi2, &state)?.abs());
            }
        }
        closure_max.push(worst_closure);
        anomaly_max.push(worst_anomaly);
    }
    timings.insert("closure".into(), ms_since(t));

    let b: Vec<f64> = study.rows.iter().map(|r| r.max_abs_bracket).collect();
    let constraints_ok = study
        .rows
        .iter()
        .all(|r| r.constraint_residual <= CONSTRAINT_TOL);
    let b_first = b[0];
    let b_last = *b.last().expect("at least two resolutions");
    let decay_ok =
        b_last <= EXACT_SYMMETRY_TOL || (b_last < b_first && study.endpoint_order >= 1.0);
    let plateau = b_last >= PLATEAU_TOL && study.endpoint_order <= 0.5;
    let closure_ok = closure_max.last().map(|v| *v <= EXACT_SYMMETRY_TOL).unwrap_or(true)
        || closure_max.windows(2).all(|w| w[1] <= 0.5 * w[0]);
    let status = if !constraints_ok {
        Status::Inconclusive
    } else if decay_ok && closure_ok {
        Status::Pass
    } else if plateau {
        Status::Fail
    } else {
        Status::Inconclusive
    };
    checks.loops = Some(LoopsBlock {
        status,
        extension: match extension {
            Extension::MetricOrthogonal => "metric_orthogonal".into(),
            Extension::Euclidean => "euclidean".into(),
        },
        rows: study
            .rows
            .iter()
            .map(|r| LoopsRow {
                n_sites: r.n_sites,
                max_abs_bracket: r.max_abs_bracket,
                hamiltonian_v: r.hamiltonian_v,
                hamiltonian_w: r.hamiltonian_w,
                constraint_residual: r.constraint_residual,
            })
            .collect(),
        observed_orders: study.observed_orders.clone(),
        endpoint_order: study.endpoint_order,
        closure_max,
        anomaly_max,
    });
    Ok(status)
}

fn print_human(report: &Report) {
    let c = &report.canonical;
    println!(
        "scenario {} [{}]  seed {}  samples {}",
        c.scenario, c.command, c.seed, c.samples
    );
    if let Some(d) = &c.checks.dirac {
        println!(
            "  dirac axioms        {}  (isotropy {:.3e}, involutivity {:.3e}, \
             regularity sigma {:.3e}, projectable: {})",
            d.status.as_str(),
            d.isotropy_max_violation,
            d.involutivity_max_residual,
            d.regularity_min_singular_value,
            d.projectable
        );
    }
    if let Some(t) = &c.checks.transverse {
        println!(
            "  transverse verdict  {}  (lemma {:.3e}, oracle {:.3e})",
            t.verdict, t.lemma_max_residual, t.oracle_max
        );
        if let (Some(e1), Some(e2)) = (t.eq1_max, t.eq2_max) {
            println!(
                "  compatibility eqs   eq1 {:.3e}  eq2 {:.3e}  |omega| {:.3e}",
                e1, e2, t.max_connection_coefficient
            );
        }
        println!("  {}", t.statement);
    }
    if let Some(q) = &c.checks.quotient {
        match q.status {
            Status::Pass => {
                println!(
                    "  quotient            pass  (basic-ness defect {:.3e}, |H'| {:.3e})",
                    q.basic_max.unwrap_or(0.0),
                    q.h_prime_max_abs.unwrap_or(0.0)
                );
                if let Some(gq) = &q.g_q {
                    println!("  g_Q = {gq:?}");
                }
                if let Some(hq) = &q.h_q {
                    println!("  H_Q = {hq:?}");
                }
            }
            _ => println!(
                "  quotient            {}  ({})",
                q.status.as_str(),
                q.diagnostic.as_deref().unwrap_or("")
            ),
        }
    }
    if let Some(l) = &c.checks.loops {
        println!("  loops study         {}  ({})", l.status.as_str(), l.extension);
        for row in &l.rows {
            println!(
                "    N = {:5}  max|{{mu, H_W}}| = {:.6e}  H_V = {:.6e}  H_W = {:.6e}  \
                 constraint = {:.3e}",
                row.n_sites,
                row.max_abs_bracket,
                row.hamiltonian_v,
                row.hamiltonian_w,
                row.constraint_residual
            );
        }
        println!(
            "    decay orders {:?} (endpoint {:.2})  closure {:?}  anomaly {:?}",
            l.observed_orders, l.endpoint_order, l.closure_max, l.anomaly_max
        );
    }
    println!("status: {}  (report {})", c.status.as_str(), report.report_hash);
}
