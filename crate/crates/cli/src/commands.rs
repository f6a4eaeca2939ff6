use std::fs;
use std::path::{Path, PathBuf};

use rvseries::estimation::{
    compare_to_theory, default_hill_k, estimate_tail_ratio, hill_estimate, remainder_decay_probe,
    resolve_u_grid, write_csv, DecayTable, TailRatioEstimate, VerdictReport,
};
use rvseries::exec::run_batches;
use rvseries::models::SeriesModel;
use rvseries::theory::{
    certify, closed_form_constant, limit_constant_mc, LimitConstant, McBudget, MomentCheckParams,
    MomentReport, Verdict,
};
use rvseries::{Exec, StreamKey, TailSet};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Stream ids separating the random inputs of one run.
const ESTIMATE_STREAM: u64 = 0;
const THEORY_STREAM: u64 = 1;
const HILL_STREAM: u64 = 2;
const DECAY_STREAM: u64 = 3;
const CHECK_STREAM: u64 = 4;

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration; exit code 1.
    Usage(String),
    /// Failed condition, verdict or analytic step; exit code 2.
    Analytic(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Analytic(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Analytic(m) => f.write_str(m),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn analytic(e: impl std::fmt::Display) -> Failure {
    Failure::Analytic(e.to_string())
}

/// A configuration with command-line overrides applied.
pub struct Run {
    pub config: ExperimentConfig,
    pub exec: Exec,
    out: PathBuf,
}

impl Run {
    pub fn new(
        mut config: ExperimentConfig,
        seed: Option<u64>,
        workers: Option<usize>,
        out: Option<PathBuf>,
    ) -> Self {
        if let Some(s) = seed {
            config.estimation.seed = s;
        }
        let out = out
            .or_else(|| config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        config.output.dir = Some(out.clone());
        config.report = None;
        Self {
            config,
            exec: Exec::from_workers(workers),
            out,
        }
    }

    fn seed(&self) -> u64 {
        self.config.estimation.seed
    }

    fn key(&self, stream: u64) -> StreamKey {
        StreamKey::with_id(self.seed(), stream)
    }

    fn model(&self) -> Result<SeriesModel, Failure> {
        self.config.build_model().map_err(usage)
    }

    fn tail_set(&self) -> Result<TailSet, Failure> {
        self.config.tail_set.build().map_err(usage)
    }

    fn certify(&self, model: &mut SeriesModel) -> Result<MomentReport, Failure> {
        let check = &self.config.check;
        let params = MomentCheckParams::for_model(model)
            .with_cap(check.cap)
            .with_mc(McBudget {
                draws: check.mc_draws,
                horizon: check.mc_horizon,
                key: self.key(CHECK_STREAM),
                exec: self.exec,
            });
        certify(model, &params).map_err(analytic)
    }

    /// Certifies and refuses failing models unless the override is set.
    fn gated_model(&self) -> Result<(SeriesModel, MomentReport), Failure> {
        let mut model = self.model()?;
        let report = self.certify(&mut model)?;
        if report.verdict != Verdict::Pass && !self.config.check.override_gate {
            return Err(Failure::Analytic(format!(
                "moment conditions {:?}: {}; set check.override = true to proceed anyway",
                report.verdict,
                failing(&report)
            )));
        }
        Ok((model, report))
    }

    fn constant(&self, model: &SeriesModel, b: &TailSet) -> Result<LimitConstant, Failure> {
        if let Some(t) = self.config.theory {
            return Ok(LimitConstant {
                set: Some(b.clone()),
                ..LimitConstant::exact(t.constant)
            });
        }
        if let Some(c) = closed_form_constant(model, b).map_err(analytic)? {
            return Ok(c);
        }
        limit_constant_mc(
            model,
            b,
            self.config.estimation.theory_draws,
            self.key(THEORY_STREAM),
            self.exec,
        )
        .map_err(analytic)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| usage(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    /// The resolved config plus a `[report]` table; parseable as a config.
    fn write_report<R: Serialize>(
        &self,
        name: &str,
        command: &str,
        report: &R,
    ) -> Result<PathBuf, Failure> {
        let mut table = toml::Table::try_from(&self.config).map_err(analytic)?;
        let mut body = toml::Table::try_from(report).map_err(analytic)?;
        body.insert("command".into(), command.into());
        body.insert("seed".into(), toml::Value::Integer(self.seed() as i64));
        table.insert("report".into(), body.into());
        let text = toml::to_string(&table).map_err(analytic)?;
        self.write(name, text.as_bytes())
    }
}

fn failing(report: &MomentReport) -> String {
    report
        .conditions
        .iter()
        .filter(|c| c.gating && c.verdict != Verdict::Pass)
        .map(|c| format!("{} = {} ({:?})", c.quantity, c.value, c.verdict))
        .collect::<Vec<_>>()
        .join(", ")
}

fn print_report(report: &MomentReport) {
    println!(
        "alpha = {}, epsilon = {}, regime {:?}",
        report.alpha, report.epsilon, report.regime
    );
    for c in &report.conditions {
        let tag = if c.gating { "" } else { " (informational)" };
        println!(
            "  {:?} {}: {} [{:?}]{tag}",
            c.verdict, c.quantity, c.value, c.id
        );
    }
    println!("verdict: {:?}", report.verdict);
}

pub fn check(run: &Run) -> Result<(), Failure> {
    let mut model = run.model()?;
    let report = run.certify(&mut model)?;
    print_report(&report);
    let path = run.write_report("check.toml", "check", &report)?;
    println!("report: {}", path.display());
    if report.verdict == Verdict::Pass {
        Ok(())
    } else {
        Err(Failure::Analytic(format!(
            "moment conditions {:?}: {}",
            report.verdict,
            failing(&report)
        )))
    }
}

#[derive(Serialize)]
struct TheoryRecord<'a> {
    conditions: &'a MomentReport,
    constant: &'a LimitConstant,
}

pub fn theory(run: &Run) -> Result<(), Failure> {
    let (model, report) = run.gated_model()?;
    let b = run.tail_set()?;
    let constant = run.constant(&model, &b)?;
    println!(
        "limit constant {} ({:?})",
        constant.value, constant.provenance
    );
    let path = run.write_report(
        "theory.toml",
        "theory",
        &TheoryRecord {
            conditions: &report,
            constant: &constant,
        },
    )?;
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    verdict: &'a VerdictReport,
    constant: &'a LimitConstant,
    estimate: &'a TailRatioEstimate,
}

pub fn estimate(run: &Run) -> Result<(), Failure> {
    let (model, _) = run.gated_model()?;
    let b = run.tail_set()?;
    let constant = run.constant(&model, &b)?;
    let est = &run.config.estimation;
    let u = resolve_u_grid(model.noise(), &est.u_grid()).map_err(usage)?;
    let estimate = estimate_tail_ratio(
        &model,
        &b,
        &u,
        est.n_sims,
        run.key(ESTIMATE_STREAM),
        run.exec,
    )
    .map_err(analytic)?;
    let verdict = compare_to_theory(&estimate, &constant, est.rule()).map_err(analytic)?;

    let mut table = Vec::new();
    write_csv(&estimate, Some(constant.value), &mut table).map_err(analytic)?;
    let csv_path = run.write("estimate.csv", &table)?;
    let mut plot = csv::Writer::from_writer(Vec::new());
    plot.write_record(["u", "ratio", "lower", "upper", "theory"])
        .map_err(analytic)?;
    for (i, &ui) in estimate.u.iter().enumerate() {
        let (r, s) = (estimate.ratio[i], estimate.stderr[i]);
        plot.write_record(
            [
                ui,
                r,
                r - est.sigmas * s,
                r + est.sigmas * s,
                constant.value,
            ]
            .map(|v| v.to_string()),
        )
        .map_err(analytic)?;
    }
    run.write("plot.csv", &plot.into_inner().map_err(analytic)?)?;
    let path = run.write_report(
        "verdict.toml",
        "estimate",
        &EstimateRecord {
            verdict: &verdict,
            constant: &constant,
            estimate: &estimate,
        },
    )?;

    for (i, &ui) in estimate.u.iter().enumerate() {
        println!(
            "u = {ui:.4}: ratio {:.4} +- {:.4} ({} exceedances), z = {:.2}",
            estimate.ratio[i], estimate.stderr[i], estimate.exceedances[i], verdict.z[i]
        );
    }
    println!(
        "theory {:.4}; judged at u = {:.4}: |{:.4} - {:.4}| vs allowance {:.4}",
        verdict.theory, verdict.u, verdict.ratio, verdict.theory, verdict.allowance
    );
    println!("table: {}\nreport: {}", csv_path.display(), path.display());
    if verdict.pass {
        println!("verdict: pass");
        Ok(())
    } else {
        Err(Failure::Analytic("verdict: fail".into()))
    }
}

#[derive(Serialize)]
struct HillRecord {
    alpha_hat: f64,
    k: usize,
    n: u64,
    alpha: f64,
}

#[derive(Serialize)]
struct ProbeRecord<'a> {
    decay: &'a DecayTable,
    hill: &'a HillRecord,
}

fn model_norms(
    model: &SeriesModel,
    n: u64,
    key: StreamKey,
    exec: Exec,
) -> Result<Vec<f64>, Failure> {
    // fail on the gate before the batched loop
    model.sampler(key).map_err(analytic)?;
    let (d, _) = model.dims();
    let parts = run_batches(exec, n, key, |batch| {
        let mut sampler = model.sampler(batch.key).expect("checked above");
        let mut x = vec![0.0; d];
        (0..batch.len)
            .map(|_| {
                sampler.next_into(&mut x);
                x.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.concat())
}

pub fn probe(run: &Run) -> Result<(), Failure> {
    let (model, _) = run.gated_model()?;
    let cfg = &run.config.probe;
    let u = model.noise().tail_quantile(cfg.level).map_err(usage)?;
    let decay = remainder_decay_probe(
        &model,
        &cfg.n_list,
        u,
        cfg.n_sims,
        run.key(DECAY_STREAM),
        run.exec,
    )
    .map_err(analytic)?;
    let norms = model_norms(&model, cfg.hill_sims, run.key(HILL_STREAM), run.exec)?;
    let k = cfg.hill_k.unwrap_or_else(|| default_hill_k(norms.len()));
    let alpha_hat = hill_estimate(&norms, k).map_err(analytic)?;
    let hill = HillRecord {
        alpha_hat,
        k,
        n: cfg.hill_sims,
        alpha: model.alpha(),
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "crude_ratio",
        "crude_stderr",
        "conditional_ratio",
        "conditional_stderr",
    ])
    .map_err(analytic)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in &decay.rows {
        w.write_record([
            r.n.to_string(),
            r.crude_ratio.to_string(),
            r.crude_stderr.to_string(),
            opt(r.conditional_ratio),
            opt(r.conditional_stderr),
        ])
        .map_err(analytic)?;
    }
    let csv_path = run.write("probe.csv", &w.into_inner().map_err(analytic)?)?;
    let path = run.write_report(
        "probe.toml",
        "probe",
        &ProbeRecord {
            decay: &decay,
            hill: &hill,
        },
    )?;

    println!("remainder ratios at u = {u:.4}:");
    for r in &decay.rows {
        match r.conditional_ratio {
            Some(c) => println!("  n = {:>3}: {c:.4e} (crude {:.4e})", r.n, r.crude_ratio),
            None => println!(
                "  n = {:>3}: {:.4e} +- {:.1e}",
                r.n, r.crude_ratio, r.crude_stderr
            ),
        }
    }
    for t in &decay.truncated_noise {
        println!("  |Z_j| <= {} u: {:.4e}", t.tau, t.ratio);
    }
    println!(
        "Hill estimate {alpha_hat:.4} (k = {k}, n = {}; alpha = {})",
        cfg.hill_sims,
        model.alpha()
    );
    println!("table: {}\nreport: {}", csv_path.display(), path.display());
    Ok(())
}

pub fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}
