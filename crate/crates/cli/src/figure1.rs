//! The capacity-versus-input-persistence sweep: one fixed random system,
//! AR(1), MA(1) and ARMA(1,1) inputs over a parameter grid.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;
use rccap_core::capacity::{self, BoundsOptions, EmpiricalOptions};
use rccap_core::{ArmaProcessSpec, StateSystem};
use serde_json::json;

use crate::config::{ExperimentConfig, Model};
use crate::gen::{derive_seed, make_figure1_system, Figure1System};

pub const CSV_HEADER: &str = "model,phi,theta,mc,fc,bound_rho,bound_spectral,bound_gershgorin,flags";

#[derive(Debug, Clone, PartialEq)]
pub struct Figure1Row {
    pub model: Model,
    pub phi: f64,
    pub theta: f64,
    pub mc: f64,
    pub fc: f64,
    pub bound_rho: f64,
    pub bound_spectral: f64,
    pub bound_gershgorin: f64,
    pub flags: Vec<String>,
}

impl Figure1Row {
    pub fn to_csv(&self) -> String {
        let flags: Vec<String> = self.flags.iter().map(|f| f.replace([',', '\n'], ";")).collect();
        format!(
            "{},{:.2},{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.model.name(),
            self.phi,
            self.theta,
            self.mc,
            self.fc,
            self.bound_rho,
            self.bound_spectral,
            self.bound_gershgorin,
            flags.join("|")
        )
    }
}

#[derive(Debug, Clone)]
pub struct Figure1Output {
    pub system: Figure1System,
    pub rows: Vec<Figure1Row>,
}

impl Figure1Output {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn system_json(&self) -> serde_json::Value {
        let doc = StateSystem::from(self.system.system.clone()).to_document();
        json!({
            "system": doc,
            "achieved_spectral_radius": self.system.achieved_rho,
            "sigma_max": self.system.system.sigma_max(),
            "sigma_capped": self.system.sigma_capped,
            "attempts": self.system.attempts,
        })
    }
}

/// Runs `f` on a pool capped by `RCCAP_THREADS` when set.
pub fn with_thread_cap<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var("RCCAP_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    match cap.filter(|&n| n > 0) {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

/// Computes every row of the sweep. Each grid point draws its input path
/// from its own stream derived from `(seed, index)`.
pub fn compute_figure1(config: &ExperimentConfig) -> anyhow::Result<Figure1Output> {
    config.validate()?;
    let system = make_figure1_system(config.n, config.spectral_radius, config.seed)?;
    let options = EmpiricalOptions {
        debias: config.debias,
        ..Default::default()
    };
    let points = config.points();
    let rows: Vec<anyhow::Result<Figure1Row>> = with_thread_cap(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(index, &(model, phi, theta))| {
                let spec = ArmaProcessSpec::new(phi, theta, config.sigma)?;
                let report = capacity::total_capacity_empirical(
                    &system.system,
                    &spec,
                    config.tau_max,
                    config.length,
                    derive_seed(config.seed, index as u64),
                    &options,
                )?;
                let bounds = capacity::theoretical_bounds(&spec.autocovariance(), config.n, &BoundsOptions::default())?;
                let mut flags = report.flags.clone();
                flags.extend(bounds.flags.iter().cloned());
                Ok(Figure1Row {
                    model,
                    phi,
                    theta,
                    mc: report.mc_total,
                    fc: report.fc_total,
                    bound_rho: bounds.rho_bound,
                    bound_spectral: bounds.spectral_bound,
                    bound_gershgorin: bounds.gershgorin,
                    flags,
                })
            })
            .collect()
    });
    let mut rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        (a.model, a.phi, a.theta)
            .partial_cmp(&(b.model, b.phi, b.theta))
            .expect("finite parameters")
    });
    Ok(Figure1Output { system, rows })
}

/// Computes the sweep and writes `figure1.csv`, `figure1_system.json` and,
/// with `plot`, one SVG per model into the output directory.
pub fn run_figure1(config: &ExperimentConfig, plot: bool) -> anyhow::Result<(Figure1Output, Vec<PathBuf>)> {
    let output = compute_figure1(config)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let csv_path = dir.join("figure1.csv");
    std::fs::write(&csv_path, output.csv()).with_context(|| format!("writing {}", csv_path.display()))?;
    written.push(csv_path);
    let sys_path = dir.join("figure1_system.json");
    std::fs::write(&sys_path, serde_json::to_string_pretty(&output.system_json())?)?;
    written.push(sys_path);
    if plot {
        let mut models: Vec<Model> = output.rows.iter().map(|r| r.model).collect();
        models.dedup();
        for m in models {
            let rows: Vec<&Figure1Row> = output.rows.iter().filter(|r| r.model == m).collect();
            let path = dir.join(format!("figure1_{}.svg", m.name()));
            std::fs::write(&path, svg_chart(m, &rows))?;
            written.push(path);
        }
    }
    Ok((output, written))
}

fn sweep_value(model: Model, row: &Figure1Row) -> f64 {
    match model {
        Model::Ma1 => row.theta,
        _ => row.phi,
    }
}

/// Line chart of the capacities and bounds against the sweep parameter.
pub fn svg_chart(model: Model, rows: &[&Figure1Row]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let xs: Vec<f64> = rows.iter().map(|r| sweep_value(model, r)).collect();
    let series: [(&str, &str, Vec<f64>); 5] = [
        ("MC", "#1f77b4", rows.iter().map(|r| r.mc).collect()),
        ("FC", "#ff7f0e", rows.iter().map(|r| r.fc).collect()),
        ("rho bound", "#2ca02c", rows.iter().map(|r| r.bound_rho).collect()),
        ("spectral bound", "#d62728", rows.iter().map(|r| r.bound_spectral).collect()),
        ("gershgorin", "#9467bd", rows.iter().map(|r| r.bound_gershgorin).collect()),
    ];
    let (x0, x1) = xs.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let y1 = series
        .iter()
        .flat_map(|s| s.2.iter().copied())
        .fold(1.0f64, f64::max);
    let sx = |x: f64| PAD + if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.5 } * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y.max(0.0) / y1 * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W / 2.0 - 40.0, H - 12.0, model.name());
    let _ = writeln!(s, r#"<text x="4" y="{}">{:.1}</text>"#, PAD, y1);
    for (k, (label, color, ys)) in series.iter().enumerate() {
        let pts: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{label}</text>"#,
            PAD + 10.0,
            PAD + 14.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
