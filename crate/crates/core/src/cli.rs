//! Study dispatch: parse a scenario config, run the requested study, and
//! write plot-ready CSVs plus a summary table and a run manifest.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::feasibility::gamma_critical_numeric;
use crate::guidance::GuidanceLaw;
use crate::mge::{
    build_mge, fixed_vs_critical_study, monte_carlo, n_prime_study, trajectory_shaping_study,
    EngagementSetup, GammaMode, MgeScenario, NoiseConvention,
};
use crate::model::TimeGrid;
use crate::sbgp::{sbgp_approx_gain, sbgp_saddle_check, GainMode, SbgpScenario};
use crate::sim::RNG_NAME;

/// The studies the front end knows how to run. Each maps to one batch of
/// output artifacts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    SbgpGains,
    SbgpSaddle,
    MgeCompare,
    MgeGamma,
    MgeNprime,
    MgeShaping,
    GammaSearch,
}

impl Study {
    pub const ALL: [Study; 7] = [
        Study::SbgpGains,
        Study::SbgpSaddle,
        Study::MgeCompare,
        Study::MgeGamma,
        Study::MgeNprime,
        Study::MgeShaping,
        Study::GammaSearch,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Study::SbgpGains => "sbgp-gains",
            Study::SbgpSaddle => "sbgp-saddle",
            Study::MgeCompare => "mge-compare",
            Study::MgeGamma => "mge-gamma",
            Study::MgeNprime => "mge-nprime",
            Study::MgeShaping => "mge-shaping",
            Study::GammaSearch => "gamma-search",
        }
    }
}

impl FromStr for Study {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown study '{s}'")))
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully resolved study request.
#[derive(Clone, Debug)]
pub struct StudySpec {
    pub study: Study,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Vec<(String, String)>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    #[serde(default = "d_vc")]
    vc: f64,
    #[serde(default = "d_t_missile")]
    t_missile: f64,
    #[serde(default = "d_theta")]
    theta: f64,
    #[serde(default = "d_b")]
    b: f64,
    #[serde(default = "d_w_weight")]
    w_weight: f64,
    #[serde(default = "d_gamma")]
    gamma: f64,
    #[serde(default = "d_tf")]
    tf: f64,
    #[serde(default)]
    q11: f64,
    #[serde(default = "d_w_cmd")]
    w_cmd: f64,
    #[serde(default = "d_u_sat")]
    u_sat: f64,
    #[serde(default)]
    x20: f64,
    /// SBGP initial-uncertainty weight.
    #[serde(default = "d_one")]
    y0: f64,
    /// SBGP initial separation [m].
    #[serde(default = "d_one")]
    x0: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    #[serde(default = "d_eta")]
    eta: f64,
    /// "bridging" (per-sample variance V/dt) or "per-sample" (sigma = eta).
    #[serde(default = "d_convention")]
    convention: String,
    #[serde(default = "d_eta_list")]
    eta_list: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default = "d_dt")]
    dt: f64,
    #[serde(default = "d_runs")]
    runs: usize,
    #[serde(default = "d_seed")]
    seed: u64,
    #[serde(default = "d_threshold")]
    threshold: f64,
    #[serde(default = "d_gamma_fixed")]
    gamma_fixed: f64,
    #[serde(default = "d_q11_list")]
    q11_list: Vec<f64>,
    #[serde(default = "d_delta_list")]
    delta_list: Vec<f64>,
}

fn d_vc() -> f64 {
    300.0
}
fn d_t_missile() -> f64 {
    0.1
}
fn d_theta() -> f64 {
    0.5
}
fn d_b() -> f64 {
    1000.0
}
fn d_w_weight() -> f64 {
    3.0
}
fn d_gamma() -> f64 {
    2.5
}
fn d_tf() -> f64 {
    3.0
}
fn d_w_cmd() -> f64 {
    9.81
}
fn d_u_sat() -> f64 {
    4.0 * 9.81
}
fn d_one() -> f64 {
    1.0
}
fn d_eta() -> f64 {
    0.5e-3
}
fn d_convention() -> String {
    "bridging".to_string()
}
fn d_eta_list() -> Vec<f64> {
    vec![0.5e-3, 0.6e-3, 0.9e-3]
}
fn d_dt() -> f64 {
    1e-3
}
fn d_runs() -> usize {
    200
}
fn d_seed() -> u64 {
    1
}
fn d_threshold() -> f64 {
    0.36
}
fn d_gamma_fixed() -> f64 {
    3.0
}
fn d_q11_list() -> Vec<f64> {
    vec![0.0, 10.0, 50.0]
}
fn d_delta_list() -> Vec<f64> {
    vec![0.1, 0.2]
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Config {
    scenario: ScenarioSection,
    noise: NoiseSection,
    run: RunSection,
}

impl Config {
    fn mge_scenario(&self) -> Result<MgeScenario> {
        let convention = match self.noise.convention.as_str() {
            "bridging" => NoiseConvention::Bridging,
            "per-sample" => NoiseConvention::PerSample,
            other => {
                return Err(Error::Config(format!(
                    "noise convention '{other}' (expected 'bridging' or 'per-sample')"
                )))
            }
        };
        Ok(MgeScenario {
            vc: self.scenario.vc,
            t_missile: self.scenario.t_missile,
            theta: self.scenario.theta,
            b: self.scenario.b,
            w_weight: self.scenario.w_weight,
            eta: self.noise.eta,
            gamma: self.scenario.gamma,
            tf: self.scenario.tf,
            q11: self.scenario.q11,
            w_cmd: self.scenario.w_cmd,
            u_sat: self.scenario.u_sat,
            x20: self.scenario.x20,
            dt: self.run.dt,
            noise: convention,
        })
    }

    fn sbgp_scenario(&self) -> SbgpScenario {
        SbgpScenario {
            b: self.scenario.b,
            v: self.noise.eta * self.noise.eta,
            y0: self.scenario.y0,
            gamma: self.scenario.gamma,
            tf: self.scenario.tf,
            x0: self.scenario.x0,
        }
    }
}

fn apply_overrides(table: &mut toml::Table, overrides: &[(String, String)]) -> Result<()> {
    for (key, value) in overrides {
        let mut parts = key.splitn(2, '.');
        let (section, field) = match (parts.next(), parts.next()) {
            (Some(s), Some(f)) => (s, f),
            _ => {
                return Err(Error::Config(format!(
                    "override key '{key}' must be section.field"
                )))
            }
        };
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let sub = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{section}' is not a section")))?;
        let parsed = if let Ok(i) = value.parse::<i64>() {
            toml::Value::Integer(i)
        } else if let Ok(f) = value.parse::<f64>() {
            toml::Value::Float(f)
        } else if let Ok(b) = value.parse::<bool>() {
            toml::Value::Boolean(b)
        } else if value.starts_with('[') {
            format!("x = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|t| t.get("x").cloned())
                .unwrap_or_else(|| toml::Value::String(value.clone()))
        } else {
            toml::Value::String(value.clone())
        };
        sub.insert(field.to_string(), parsed);
    }
    Ok(())
}

fn load_config(spec: &StudySpec) -> Result<(Config, String)> {
    let text = fs::read_to_string(&spec.config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec.config_path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    apply_overrides(&mut table, &spec.overrides)?;
    if let Some(seed) = spec.seed {
        let run = table
            .entry("run".to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if let Some(sub) = run.as_table_mut() {
            sub.insert("seed".to_string(), toml::Value::Integer(seed as i64));
        }
    }
    let echo = toml::to_string_pretty(&table)
        .map_err(|e| Error::Config(format!("config echo failed: {e}")))?;
    let config: Config = table
        .try_into()
        .map_err(|e| Error::Config(format!("config schema error: {e}")))?;
    Ok((config, echo))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

fn write_manifest(dir: &Path, spec: &StudySpec, config_echo: &str, seed: u64) -> Result<()> {
    let manifest = serde_json::json!({
        "study": spec.study.name(),
        "seed": seed,
        "rng": RNG_NAME,
        "version": env!("CARGO_PKG_VERSION"),
        "build": git_describe(),
        "timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "config": config_echo,
    });
    write_file(
        dir,
        "meta.json",
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Run one study end to end. Returns the process exit code: 0 on success,
/// 2 when the requested attenuation level is infeasible, 1 on config errors.
pub fn run_study(spec: &StudySpec) -> i32 {
    match run_study_inner(spec) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Io(_) | Error::Domain(_) => 1,
                _ => 2,
            }
        }
    }
}

fn run_study_inner(spec: &StudySpec) -> Result<()> {
    let (config, echo) = load_config(spec)?;
    if let Some(workers) = spec.workers {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    fs::create_dir_all(&spec.out_dir)?;
    let seed = config.run.seed;

    let summary = match spec.study {
        Study::SbgpGains => study_sbgp_gains(&config, &spec.out_dir)?,
        Study::SbgpSaddle => study_sbgp_saddle(&config, &spec.out_dir)?,
        Study::MgeCompare => study_mge_compare(&config, &spec.out_dir)?,
        Study::MgeGamma => study_mge_gamma(&config, &spec.out_dir)?,
        Study::MgeNprime => study_mge_nprime(&config, &spec.out_dir)?,
        Study::MgeShaping => study_mge_shaping(&config, &spec.out_dir)?,
        Study::GammaSearch => study_gamma_search(&config, &spec.out_dir)?,
    };
    write_file(&spec.out_dir, "summary.txt", &summary)?;
    write_manifest(&spec.out_dir, spec, &echo, seed)?;
    print!("{summary}");
    Ok(())
}

fn study_sbgp_gains(config: &Config, out: &Path) -> Result<String> {
    let sc = config.sbgp_scenario();
    let mut csv = String::from("mode,eta,t_go,gain_abs\n");
    let mut summary = String::from("SBGP steady-state gain magnitude sweep\n");
    for &eta in &config.noise.eta_list {
        let v = eta * eta;
        for mode in [GainMode::FixedGamma, GainMode::CriticalGamma] {
            let label = match mode {
                GainMode::FixedGamma => "fixed",
                GainMode::CriticalGamma => "critical",
            };
            let mut ok = true;
            for i in 0..=100 {
                let t_go = sc.tf * (1.0 - i as f64 / 100.0).max(1e-3);
                match sbgp_approx_gain(t_go, sc.b, v, sc.gamma, mode) {
                    Ok(g) => csv.push_str(&format!(
                        "{label},{},{},{}\n",
                        fmt_f(eta),
                        fmt_f(t_go),
                        fmt_f(g.abs())
                    )),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            summary.push_str(&format!(
                "  eta = {eta:.3e}, {label}: {}\n",
                if ok { "computed" } else { "infeasible" }
            ));
        }
    }
    write_file(out, "sbgp_gains.csv", &csv)?;
    Ok(summary)
}

fn study_sbgp_saddle(config: &Config, out: &Path) -> Result<String> {
    let sc = config.sbgp_scenario();
    let mut csv = String::from("delta,j_w_perturbed,j_saddle,j_u_perturbed,ordering_ok\n");
    let mut summary = String::from("SBGP saddle-point perturbation check\n");
    let mut all_ok = true;
    for &delta in &config.run.delta_list {
        let costs = sbgp_saddle_check(&sc, delta, config.run.dt)?;
        let ok = costs.j_w_perturbed <= costs.j_saddle + 1e-9
            && costs.j_saddle <= costs.j_u_perturbed + 1e-9;
        all_ok &= ok;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f(delta),
            fmt_f(costs.j_w_perturbed),
            fmt_f(costs.j_saddle),
            fmt_f(costs.j_u_perturbed),
            ok
        ));
        summary.push_str(&format!(
            "  delta = {delta}: J(u*,w) = {:.6} <= J* = {:.6} <= J(u,w*) = {:.6}  [{}]\n",
            costs.j_w_perturbed,
            costs.j_saddle,
            costs.j_u_perturbed,
            if ok { "ok" } else { "VIOLATED" }
        ));
    }
    write_file(out, "sbgp_saddle.csv", &csv)?;
    if !all_ok {
        return Err(Error::Domain("saddle ordering violated".to_string()));
    }
    Ok(summary)
}

fn study_mge_compare(config: &Config, out: &Path) -> Result<String> {
    let sc = config.mge_scenario()?;
    // The DA guarantee is void if Omega loses positivity anywhere on the
    // horizon, so refuse to run the batch at an infeasible level.
    let grid = TimeGrid::new(0.0, sc.tf, sc.dt)?;
    let (ok, _) = crate::feasibility::is_feasible(&build_mge(&sc), sc.gamma, 0.0, &grid);
    if !ok {
        return Err(Error::InfeasibleGamma {
            gamma: sc.gamma,
            reason: "Omega not positive definite over the horizon".to_string(),
        });
    }
    let setup = EngagementSetup::new(sc)?;
    let laws = [
        GuidanceLaw::Da,
        GuidanceLaw::Perfect,
        GuidanceLaw::Separation,
        GuidanceLaw::Pn { n_prime: 3.0 },
    ];
    let mut csv = String::from("law,cep_cm,mean_effort,runs,failures\n");
    let mut summary = format!(
        "MGE strategy comparison (gamma = {}, runs = {}, seed = {})\n{:<16}{:>10}{:>14}\n",
        sc.gamma, config.run.runs, config.run.seed, "law", "CEP[cm]", "Effort"
    );
    for law in laws {
        let mc = monte_carlo(&setup, law, config.run.runs, config.run.seed)?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            law.label(),
            fmt_f(mc.cep_cm),
            fmt_f(mc.mean_effort),
            mc.runs,
            mc.failures
        ));
        summary.push_str(&format!(
            "{:<16}{:>10.1}{:>14.1}\n",
            law.label(),
            mc.cep_cm,
            mc.mean_effort
        ));
    }
    write_file(out, "mge_compare.csv", &csv)?;
    Ok(summary)
}

fn study_mge_gamma(config: &Config, out: &Path) -> Result<String> {
    let sc = config.mge_scenario()?;
    let rows = fixed_vs_critical_study(
        &sc,
        &config.noise.eta_list,
        config.run.gamma_fixed,
        config.run.threshold,
        config.run.runs,
        config.run.seed,
    )?;
    let mut csv = String::from(
        "eta,gamma_fixed,cep_fixed_cm,effort_fixed,gamma_critical,cep_critical_cm,effort_critical\n",
    );
    let mut summary = String::from("Fixed vs (near) critical attenuation level\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f(r.eta),
            fmt_f(r.gamma_fixed),
            fmt_f(r.cep_fixed_cm),
            fmt_f(r.effort_fixed),
            fmt_f(r.gamma_critical),
            fmt_f(r.cep_critical_cm),
            fmt_f(r.effort_critical)
        ));
        summary.push_str(&format!(
            "  eta = {:.2e}: fixed gamma {} -> CEP {:.1} cm / {:.1}; critical gamma {:.3} -> CEP {:.1} cm / {:.1}\n",
            r.eta,
            r.gamma_fixed,
            r.cep_fixed_cm,
            r.effort_fixed,
            r.gamma_critical,
            r.cep_critical_cm,
            r.effort_critical
        ));
    }
    write_file(out, "mge_gamma.csv", &csv)?;
    Ok(summary)
}

fn study_mge_nprime(config: &Config, out: &Path) -> Result<String> {
    let sc = config.mge_scenario()?;
    let mut summary = String::from("Equivalent navigation constant traces\n");
    for (mode, name) in [
        (GammaMode::Fixed, "fixed"),
        (GammaMode::Critical, "critical"),
    ] {
        let mut base = sc;
        if mode == GammaMode::Fixed {
            base.gamma = config.run.gamma_fixed;
        }
        let traces = n_prime_study(&base, &config.noise.eta_list, mode, config.run.threshold)?;
        let mut csv = String::from("eta,t,n_prime\n");
        for (eta, trace) in &traces {
            for (t, np) in trace.times.iter().zip(&trace.n_prime) {
                csv.push_str(&format!("{},{},{}\n", fmt_f(*eta), fmt_f(*t), fmt_f(*np)));
            }
            let mid = trace.n_prime[trace.n_prime.len() / 2];
            summary.push_str(&format!(
                "  {name} mode, eta = {eta:.2e}: N' at mid-horizon = {mid:.3}\n"
            ));
        }
        write_file(out, &format!("mge_nprime_{name}.csv"), &csv)?;
    }
    Ok(summary)
}

fn study_mge_shaping(config: &Config, out: &Path) -> Result<String> {
    let sc = config.mge_scenario()?;
    let results = trajectory_shaping_study(
        &sc,
        &config.run.q11_list,
        config.run.threshold,
        config.run.seed,
    )?;
    let mut omega_csv = String::from("q11,t,omega_det\n");
    let mut traj_csv = String::from("q11,t,x1\n");
    let mut summary = String::from("Trajectory shaping sweep\n");
    for r in &results {
        if let Some(trace) = &r.omega {
            for (t, d) in trace.times.iter().zip(&trace.det_values) {
                omega_csv.push_str(&format!("{},{},{}\n", fmt_f(r.q11), fmt_f(*t), fmt_f(*d)));
            }
            summary.push_str(&format!(
                "  q11 = {}: min|Omega| = {:.4}, local minima at {:?} [{}]\n",
                r.q11,
                trace.min_det,
                trace
                    .argmin_times
                    .iter()
                    .map(|t| (t * 1000.0).round() / 1000.0)
                    .collect::<Vec<_>>(),
                if r.feasible { "feasible" } else { "INFEASIBLE" }
            ));
        } else {
            summary.push_str(&format!("  q11 = {}: finite escape [INFEASIBLE]\n", r.q11));
        }
        if let Some(rec) = &r.record {
            for (t, x) in rec.times.iter().zip(&rec.x_series) {
                traj_csv.push_str(&format!("{},{},{}\n", fmt_f(r.q11), fmt_f(*t), fmt_f(x[0])));
            }
        }
    }
    write_file(out, "mge_shaping_omega.csv", &omega_csv)?;
    write_file(out, "mge_shaping_traj.csv", &traj_csv)?;
    Ok(summary)
}

fn study_gamma_search(config: &Config, out: &Path) -> Result<String> {
    let sc = config.mge_scenario()?;
    let model = build_mge(&sc);
    let grid = TimeGrid::new(0.0, sc.tf, sc.dt)?;
    let result = gamma_critical_numeric(&model, config.run.threshold, 1e-3, &grid)?;
    let csv = format!(
        "eta,threshold,gamma_c,min_omega,iterations\n{},{},{},{},{}\n",
        fmt_f(sc.eta),
        fmt_f(result.threshold),
        fmt_f(result.gamma_c),
        fmt_f(result.feasible_margin),
        result.iterations
    );
    write_file(out, "gamma_search.csv", &csv)?;
    Ok(format!(
        "Critical attenuation search: eta = {:.2e}, threshold = {}\n  gamma_c = {:.4}, min|Omega| = {:.4} ({} iterations)\n",
        sc.eta, result.threshold, result.gamma_c, result.feasible_margin, result.iterations
    ))
}
