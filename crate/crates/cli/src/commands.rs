use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use asis_core::hetero::{solve_gp, verify_design, CutCost, GpOptions, HeteroDesignProblem};
use asis_core::homo::{design_homogeneous, CostFunction, HomoDesignProblem, HomoDesignReport, HomogeneousParams, RateBounds};
use asis_core::meanfield::{check_irreducible, integrate_bound, spectral_abscissa, IntegrationMethod};
use asis_core::sim::{estimate_probabilities, simulate, EnsembleConfig, Execution, SimOptions};
use asis_core::{Error, Graph, MeanFieldSystem, ModelParams};
use serde::Serialize;

use crate::config::{ExecutionMode, GenerateSpec, LoadedConfig};
use crate::error::CliError;
use crate::setup::{generate_graph, initial_state, load_graph, load_rates, GraphInfo};

/// Slack on `eta <= -alpha` below which a design is not reported as a success.
pub const CERT_SLACK: f64 = 1e-6;
const ETA_TOL: f64 = 1e-12;

pub struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    pub fn new(lc: &LoadedConfig, cli_out: Option<&Path>) -> Self {
        let dir = cli_out
            .map(Path::to_path_buf)
            .or_else(|| lc.config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Self { dir }
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Output(format!("cannot create {}: {e}", self.dir.display())))?;
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("report serialises");
        s.push('\n');
        self.write(name, &s)
    }
}

fn say(line: std::fmt::Arguments<'_>) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_fmt(line);
    let _ = out.write_all(b"\n");
}

macro_rules! say {
    ($($t:tt)*) => { say(format_args!($($t)*)) };
}

fn checked(lc: &LoadedConfig) -> Result<(), CliError> {
    let issues = lc.validate();
    if issues.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(issues))
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    graph: &'a GraphInfo,
    seed: u64,
    runs: usize,
    horizon: f64,
    times: &'a [f64],
    prevalence: Vec<f64>,
    final_prevalence: f64,
    extinction_fraction: f64,
    trajectory_events: usize,
    trajectory_absorbed: bool,
}

pub fn simulate_cmd(lc: &LoadedConfig, out: &Outputs) -> Result<(), CliError> {
    checked(lc)?;
    let sim = lc
        .config
        .simulation
        .as_ref()
        .ok_or_else(|| lc.issue(None, "missing [simulation] section"))?;
    let (g, info) = load_graph(lc)?;
    let params = load_rates(lc, &g)?.params(lc)?;
    params.validate(&g)?;
    let init = initial_state(lc, &g, sim.initial_infected.as_deref())?;
    let grid = sim.sample_times();
    let options = SimOptions {
        stop_when_disease_free: sim.stop_when_disease_free,
    };
    let cfg = EnsembleConfig {
        horizon: sim.horizon,
        grid: grid.clone(),
        runs: sim.runs,
        seed: sim.seed,
        options: options.clone(),
        execution: match sim.execution {
            ExecutionMode::Sequential => Execution::Sequential,
            ExecutionMode::Parallel => Execution::Parallel,
        },
    };
    let est = estimate_probabilities(&g, &params, &init, &cfg)?;
    let traj = simulate(&g, &params, &init, sim.horizon, &grid, sim.seed, &options)?;

    let prevalence: Vec<f64> = (0..grid.len()).map(|k| est.prevalence(k)).collect();
    let summary = SimulationSummary {
        graph: &info,
        seed: sim.seed,
        runs: sim.runs,
        horizon: sim.horizon,
        times: &grid,
        final_prevalence: prevalence.last().copied().unwrap_or(f64::NAN),
        prevalence,
        extinction_fraction: est.extinction_fraction(),
        trajectory_events: traj.events.len(),
        trajectory_absorbed: traj.absorbed,
    };
    out.write("ensemble.csv", &est.to_csv(&g, sim.with_pairs))?;
    out.write("trajectory.csv", &traj.to_csv(&g))?;
    let path = out.write_json("summary.json", &summary)?;
    say!("runs: {} (seed {})", sim.runs, sim.seed);
    say!("final prevalence at t={}: {:.6}", grid.last().unwrap_or(&sim.horizon), summary.final_prevalence);
    say!("extinct fraction: {:.6}", summary.extinction_fraction);
    say!("wrote {}", path.parent().unwrap_or(Path::new(".")).display());
    Ok(())
}

#[derive(Serialize)]
struct HomogeneousReport {
    beta: f64,
    delta: f64,
    phi: f64,
    psi: f64,
    rho: f64,
    lambda_plus: f64,
    threshold: f64,
    /// `delta - threshold`; positive means stable.
    margin: f64,
    degenerate: bool,
    eta_minus_lambda_plus: f64,
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    graph: &'a GraphInfo,
    eta: f64,
    stable: bool,
    dimension: usize,
    irreducible: bool,
    power_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meets_decay: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    homogeneous: Option<HomogeneousReport>,
    static_regime: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn bound_csv(g: &Graph, times: &[f64], values: &[Vec<f64>]) -> String {
    let mut s = String::from("t");
    for &l in g.labels() {
        s.push_str(&format!(",p_{l}"));
    }
    s.push('\n');
    for (t, z) in times.iter().zip(values) {
        s.push_str(&format!("{t}"));
        for p in &z[..g.node_count()] {
            s.push_str(&format!(",{p}"));
        }
        s.push('\n');
    }
    s
}

pub fn analyze_cmd(lc: &LoadedConfig, out: &Outputs) -> Result<(), CliError> {
    checked(lc)?;
    let (g, info) = load_graph(lc)?;
    let params = load_rates(lc, &g)?.params(lc)?;
    params.validate(&g)?;
    if !g.is_strongly_connected() {
        return Err(Error::Disconnected.into());
    }
    let sys = MeanFieldSystem::assemble(&g, &params)?;
    let irreducible = check_irreducible(&sys);
    let cert = spectral_abscissa(&sys, ETA_TOL)?;
    let alpha = lc.config.design.as_ref().map(|d| d.alpha);

    let static_regime = params.phi.iter().all(|&x| x == 0.0) && params.psi.iter().all(|&x| x == 0.0);
    let homogeneous = match params.as_homogeneous() {
        Some((beta, delta, phi, psi)) => {
            let (rho, _) = g.spectral_radius(1e-13)?;
            let h = HomogeneousParams {
                beta,
                delta,
                phi,
                psi,
                rho,
            };
            Some(HomogeneousReport {
                beta,
                delta,
                phi,
                psi,
                rho,
                lambda_plus: h.lambda_plus(),
                threshold: h.threshold(),
                margin: h.margin(),
                degenerate: h.is_degenerate(),
                eta_minus_lambda_plus: cert.eta - h.lambda_plus(),
            })
        }
        None => None,
    };
    let note = static_regime.then(|| match &homogeneous {
        Some(h) => format!(
            "static SIS regime, threshold delta vs beta*rho: delta = {}, beta*rho = {}",
            h.delta,
            h.beta * h.rho
        ),
        None => "static SIS regime, threshold delta vs beta*rho".to_string(),
    });
    let report = AnalysisReport {
        graph: &info,
        eta: cert.eta,
        stable: cert.stable,
        dimension: cert.dimension,
        irreducible,
        power_iterations: cert.iterations,
        alpha,
        meets_decay: alpha.map(|a| cert.meets_decay(a, 0.0)),
        homogeneous,
        static_regime,
        note,
    };
    let path = out.write_json("certificate.json", &report)?;

    say!("eta(M) = {:.12e}", report.eta);
    say!("stable: {}", if report.stable { "yes" } else { "no" });
    say!("irreducible: {}", if irreducible { "yes" } else { "no" });
    if let Some(h) = &report.homogeneous {
        say!("lambda_+ = {:.12e} (rho = {:.12e})", h.lambda_plus, h.rho);
        say!("|eta - lambda_+| = {:.3e}", h.eta_minus_lambda_plus.abs());
        say!("threshold margin delta - threshold = {:.12e}", h.margin);
        if h.degenerate {
            say!("degenerate case beta*rho = phi");
        }
    }
    if let (Some(a), Some(ok)) = (report.alpha, report.meets_decay) {
        say!("decay target alpha = {a}: {}", if ok { "met" } else { "not met" });
    }
    if let Some(n) = &report.note {
        say!("{n}");
    }

    if let Some(sim) = &lc.config.simulation {
        let init = initial_state(lc, &g, sim.initial_infected.as_deref())?;
        let z0 = sys.initial_vector(&init.infected, &init.live);
        let grid = sim.sample_times();
        let b = integrate_bound(&sys, &z0, &grid, IntegrationMethod::default())?;
        out.write("bound.csv", &bound_csv(&g, &b.times, &b.values))?;
    }
    say!("wrote {}", path.parent().unwrap_or(Path::new(".")).display());
    Ok(())
}

fn design_alpha(lc: &LoadedConfig) -> Result<f64, CliError> {
    Ok(lc
        .config
        .design
        .as_ref()
        .ok_or_else(|| lc.issue(None, "missing [design] section"))?
        .alpha)
}

#[derive(Serialize)]
struct HomoDesignDoc<'a> {
    graph: &'a GraphInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(flatten)]
    report: HomoDesignReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    active: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    degenerate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
}

pub fn design_homo_cmd(lc: &LoadedConfig, out: &Outputs) -> Result<(), CliError> {
    checked(lc)?;
    let alpha = design_alpha(lc)?;
    let design = lc.config.design.as_ref().expect("checked above");
    let b = lc
        .config
        .bounds
        .ok_or_else(|| lc.issue(None, "missing [bounds] section"))?;
    let psi_hi = b
        .psi_hi
        .ok_or_else(|| lc.issue(Some("bounds"), "design-homo needs `psi_hi`"))?;
    let (g, info) = load_graph(lc)?;
    let rates = load_rates(lc, &g)?;
    let homog = |key: &str, v: &[f64]| -> Result<f64, CliError> {
        let x = v[0];
        if v.iter().all(|&y| y == x) {
            Ok(x)
        } else {
            Err(lc.issue(Some(key), "design-homo needs a homogeneous rate").into())
        }
    };
    let beta = homog("params.beta", &rates.beta)?;
    let delta = homog("params.delta", &rates.delta)?;
    let r = design.r.unwrap_or(2.0 * b.phi_hi);
    let prob = HomoDesignProblem {
        alpha,
        bounds: RateBounds {
            phi_lo: b.phi_lo,
            phi_hi: b.phi_hi,
            psi_lo: b.psi_lo,
            psi_hi,
        },
        cut_cost: design.cut_cost.unwrap_or(CostFunction::NormalizedReciprocal {
            r,
            lo: b.phi_lo,
            hi: b.phi_hi,
        }),
        rewire_cost: design.rewire_cost.unwrap_or(CostFunction::Zero),
        nodes: g.node_count(),
        edges: g.edge_count(),
    };
    // Checked before the designer so that a disconnected graph is a validation error.
    ModelParams::homogeneous(&g, beta, delta, b.phi_lo, psi_hi.max(f64::MIN_POSITIVE))
        .check_standing_assumption(&g)?;
    match design_homogeneous(&g, &prob, beta, delta) {
        Ok(d) => {
            let eta = d.certificate.eta;
            let doc = HomoDesignDoc {
                graph: &info,
                rho: Some(d.rho),
                report: d.report(),
                active: Some(d.optimum.active),
                degenerate: Some(d.optimum.degenerate),
                eta: Some(eta),
            };
            let path = out.write_json("homo_design.json", &doc)?;
            say!("phi* = {:.12e}, psi* = {:.12e}", d.optimum.phi, d.optimum.psi);
            say!("cost = {:.12e}", d.optimum.cost);
            say!("lambda_+ = {:.12e}, eta(M) = {:.12e}", d.optimum.lambda_plus, eta);
            say!("wrote {}", path.display());
            if !d.certificate.meets_decay(alpha, CERT_SLACK) {
                return Err(CliError::Numerical(format!(
                    "numerical failure: certificate eta = {eta:.6e} does not meet -alpha = {:.6e}",
                    -alpha
                )));
            }
            Ok(())
        }
        Err(Error::Infeasible { best_decay, alpha }) => {
            let doc = HomoDesignDoc {
                graph: &info,
                rho: None,
                report: HomoDesignReport {
                    phi: None,
                    psi: None,
                    cost: None,
                    lambda_plus: None,
                    alpha,
                    feasible: false,
                    best_decay: Some(best_decay),
                },
                active: None,
                degenerate: None,
                eta: None,
            };
            out.write_json("homo_design.json", &doc)?;
            Err(Error::Infeasible { best_decay, alpha }.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct InfeasibleDoc<'a> {
    graph: &'a GraphInfo,
    alpha: f64,
    feasible: bool,
    best_decay: f64,
}

pub fn design_hetero_cmd(lc: &LoadedConfig, out: &Outputs) -> Result<(), CliError> {
    checked(lc)?;
    let alpha = design_alpha(lc)?;
    let design = lc.config.design.as_ref().expect("checked above");
    let b = lc
        .config
        .bounds
        .ok_or_else(|| lc.issue(None, "missing [bounds] section"))?;
    let r = design.r.unwrap_or(2.0 * b.phi_hi);
    let cost = match &design.posynomial {
        Some(c) => c.clone(),
        None => CutCost::normalized_reciprocal(r, b.phi_lo, b.phi_hi)
            .map_err(|e| lc.issue(Some("design"), e.to_string()))?,
    };
    let prob = HeteroDesignProblem {
        alpha,
        phi_lo: b.phi_lo,
        phi_hi: b.phi_hi,
        r,
        cost,
    };
    prob.validate().map_err(|e| lc.issue(Some("design"), e.to_string()))?;
    let (g, info) = load_graph(lc)?;
    let base = load_rates(lc, &g)?.params(lc)?;
    let mut opts = GpOptions {
        cert_tol: CERT_SLACK,
        ..GpOptions::default()
    };
    if let Some(t) = design.gap_tol {
        opts.barrier.gap_tol = t;
    }
    let result = match solve_gp(&g, &base, &prob, &opts) {
        Ok(r) => r,
        Err(Error::Infeasible { best_decay, alpha }) => {
            out.write_json(
                "hetero_design.json",
                &InfeasibleDoc {
                    graph: &info,
                    alpha,
                    feasible: false,
                    best_decay,
                },
            )?;
            return Err(Error::Infeasible { best_decay, alpha }.into());
        }
        Err(e) => return Err(e.into()),
    };

    // Independent re-check at the reported rates.
    let designed = ModelParams {
        phi: result.phi.clone(),
        ..base
    };
    let cert = verify_design(&g, &designed, alpha)?;
    let mut doc: serde_json::Value = serde_json::from_str(&result.to_json(&g)).expect("design json");
    doc["graph"] = serde_json::to_value(&info).expect("graph info");
    doc["feasible"] = true.into();
    out.write_json("hetero_design.json", &doc)?;
    out.write("phi_vs_degree.csv", &result.degree_csv(&g))?;
    let path = out.write("certificate.json", &(cert.to_json() + "\n"))?;

    let trend = result.degree_trend(&g);
    say!("objective = {:.12e}, cost = {:.12e}", result.objective, result.cost);
    say!("eta(M) = {:.12e} (target <= {:.6e})", cert.eta, -alpha);
    say!(
        "phi range [{:.6e}, {:.6e}]",
        result.phi.iter().copied().fold(f64::INFINITY, f64::min),
        result.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    if trend.is_finite() {
        say!("spearman(degree, phi) = {trend:.4}");
    } else {
        say!("spearman(degree, phi) undefined (constant rates)");
    }
    say!("wrote {}", path.parent().unwrap_or(Path::new(".")).display());
    if !cert.meets_decay(alpha, CERT_SLACK) {
        return Err(CliError::Numerical(format!(
            "numerical failure: certificate eta = {:.6e} does not meet -alpha = {:.6e}",
            cert.eta, -alpha
        )));
    }
    Ok(())
}

pub fn gen_graph_cmd(spec: &GenerateSpec, out: &Path) -> Result<(), CliError> {
    let g = generate_graph(spec).map_err(CliError::Validation)?;
    let json = out.extension().and_then(|e| e.to_str()) == Some("json");
    let text = if json {
        let mut doc: serde_json::Value = serde_json::from_str(&g.to_json()).expect("graph json");
        doc["generator"] = serde_json::to_value(spec).expect("spec");
        serde_json::to_string_pretty(&doc).expect("graph json") + "\n"
    } else {
        let mut s = format!(
            "# asis gen-graph {}\n",
            serde_json::to_string(spec).expect("spec")
        );
        s.push_str(&g.to_edge_list());
        s
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(out, text).map_err(|e| CliError::Output(format!("cannot write {}: {e}", out.display())))?;
    say!("{} nodes, {} edges -> {}", g.node_count(), g.edge_count(), out.display());
    Ok(())
}

/// Dry run: everything short of the numerical work.
pub fn validate_cmd(lc: &LoadedConfig) -> Result<(), CliError> {
    checked(lc)?;
    let (g, _) = load_graph(lc)?;
    if lc.config.params.is_some() {
        let rates = load_rates(lc, &g)?;
        if let Some(psi) = &rates.psi {
            let p = ModelParams {
                beta: rates.beta.clone(),
                delta: rates.delta.clone(),
                phi: rates.phi.clone(),
                psi: psi.clone(),
            };
            p.validate(&g)?;
        }
        if let Some(sim) = &lc.config.simulation {
            initial_state(lc, &g, sim.initial_infected.as_deref())?;
        }
    }
    if let (Some(d), Some(b)) = (&lc.config.design, &lc.config.bounds) {
        let r = d.r.unwrap_or(2.0 * b.phi_hi);
        if let Some(c) = &d.posynomial {
            c.validate().map_err(|e| lc.issue(Some("design.posynomial"), e.to_string()))?;
        } else {
            CutCost::normalized_reciprocal(r, b.phi_lo, b.phi_hi)
                .map_err(|e| lc.issue(Some("design"), e.to_string()))?;
        }
    }
    say!(
        "config ok: {} nodes, {} edges, connected: {}, sections: {}",
        g.node_count(),
        g.edge_count(),
        if g.is_strongly_connected() { "yes" } else { "no" },
        lc.sections().join(", ")
    );
    Ok(())
}
