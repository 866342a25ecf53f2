use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use padic_heat::cauchy::SolutionHandle;
use padic_heat::markov::{occupancy_histogram, IncrementSampler};
use padic_heat::verify::{annulus_partition, median_level, run_check, CheckResult, VerifyOptions, CHECK_NAMES};
use padic_heat::{Certification, ErrorReceipt, Execution, KernelEvaluator, PAdicVector};
use serde::Serialize;

use crate::config::{Format, ProblemConfig};

/// Process exit status of a finished command.
pub type Status = u8;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn out_path(cfg: &ProblemConfig, name: &str) -> Result<std::path::PathBuf> {
    fs::create_dir_all(&cfg.output.dir).with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    Ok(cfg.output.dir.join(name))
}

pub fn write_effective_config(cfg: &ProblemConfig) -> Result<()> {
    write_json(&out_path(cfg, "effective_config.json")?, cfg)
}

fn evaluator(cfg: &ProblemConfig) -> Result<KernelEvaluator> {
    let f = cfg.polynomial()?;
    let cert = match f.certify(cfg.caps.depth_cap, cfg.caps.max_points)? {
        Certification::Elliptic(c) => c,
        Certification::NotElliptic { witness } => bail!("symbol is not elliptic: it vanishes at {witness}"),
        Certification::Inconclusive { depth, unresolved } => bail!(
            "ellipticity not certified: {} classes unresolved at depth {depth}; raise caps.depth_cap",
            unresolved.len()
        ),
    };
    KernelEvaluator::with_config(f, cert, cfg.beta, cfg.kernel_config()).map_err(|e| anyhow!("beta: {e}"))
}

#[derive(Serialize)]
struct CertificateReport {
    status: &'static str,
    prime: u64,
    dim: usize,
    degree: u32,
    /// `C₀ = p^{c0_log_p}`, `C₁ = p^{c1_log_p}`.
    c0_log_p: Option<i64>,
    c1_log_p: Option<i64>,
    modulus_exponent: Option<u32>,
    table_size: Option<usize>,
    witness_depth: Option<u32>,
    witness: Option<Vec<String>>,
    unresolved_classes: Option<usize>,
}

pub fn certify(cfg: &ProblemConfig) -> Result<Status> {
    let f = cfg.polynomial()?;
    let start = Instant::now();
    let outcome = f.certify(cfg.caps.depth_cap, cfg.caps.max_points)?;
    let elapsed = start.elapsed();
    let mut report = CertificateReport {
        status: "",
        prime: cfg.symbol.prime,
        dim: cfg.symbol.dim,
        degree: cfg.symbol.degree,
        c0_log_p: None,
        c1_log_p: None,
        modulus_exponent: None,
        table_size: None,
        witness_depth: None,
        witness: None,
        unresolved_classes: None,
    };
    let status = match &outcome {
        Certification::Elliptic(c) => {
            report.status = "elliptic";
            report.c0_log_p = Some(-c.c0_exponent());
            report.c1_log_p = Some(-c.c1_exponent());
            report.modulus_exponent = Some(c.modulus());
            report.table_size = Some(c.table().len());
            report.witness_depth = Some(c.witness_depth());
            0
        }
        Certification::NotElliptic { witness } => {
            report.status = "not_elliptic";
            report.witness = Some(witness.to_digit_strings());
            2
        }
        Certification::Inconclusive { unresolved, .. } => {
            report.status = "inconclusive";
            report.unresolved_classes = Some(unresolved.len());
            3
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    eprintln!("certified in {:.3} s", elapsed.as_secs_f64());
    write_json(&out_path(cfg, "certificate.json")?, &report)?;
    if let Certification::Elliptic(c) = &outcome {
        write_json(&out_path(cfg, "value_table.json")?, c.table())?;
    }
    Ok(status)
}

#[derive(Serialize)]
struct Row {
    x: Vec<String>,
    t: f64,
    re: f64,
    im: f64,
    truncation_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_principle_margin: Option<f64>,
}

impl Row {
    fn new(x: &PAdicVector, t: f64, r: &ErrorReceipt) -> Row {
        Row {
            x: x.to_digit_strings(),
            t,
            re: r.value.re,
            im: r.value.im,
            truncation_bound: r.truncation_bound,
            max_principle_margin: None,
        }
    }
}

#[derive(Serialize)]
struct Table<'a> {
    kind: &'static str,
    prime: u64,
    beta: f64,
    rows: &'a [Row],
}

fn write_table(cfg: &ProblemConfig, stem: &str, kind: &'static str, rows: &[Row]) -> Result<()> {
    if matches!(cfg.output.format, Format::Csv | Format::Both) {
        let mut w = csv::Writer::from_path(out_path(cfg, &format!("{stem}.csv"))?)?;
        let mut header: Vec<String> = (1..=cfg.symbol.dim).map(|i| format!("x{i}")).collect();
        header.extend(["t", "re", "im", "truncation_bound"].map(String::from));
        let margin = rows.first().is_some_and(|r| r.max_principle_margin.is_some());
        if margin {
            header.push("max_principle_margin".into());
        }
        w.write_record(&header)?;
        for r in rows {
            let mut rec = r.x.clone();
            rec.extend([r.t, r.re, r.im, r.truncation_bound].map(num));
            if let Some(m) = r.max_principle_margin {
                rec.push(num(m));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    if matches!(cfg.output.format, Format::Json | Format::Both) {
        let table = Table {
            kind,
            prime: cfg.symbol.prime,
            beta: cfg.beta,
            rows,
        };
        write_json(&out_path(cfg, &format!("{stem}.json"))?, &table)?;
    }
    Ok(())
}

/// Shortest round-trip rendering, as in the JSON outputs.
fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

/// Points outer, times inner.
fn grid(xs: &[PAdicVector], ts: &[f64]) -> Vec<(PAdicVector, f64)> {
    xs.iter().flat_map(|x| ts.iter().map(move |&t| (x.clone(), t))).collect()
}

pub fn kernel(cfg: &ProblemConfig) -> Result<Status> {
    let xs = cfg.space_grid()?;
    let ts = cfg.time_grid(false)?;
    let ev = evaluator(cfg)?;
    let pts = grid(&xs, &ts);
    let rows = ev
        .eval_grid(&pts, cfg.tol, Execution::default())
        .into_iter()
        .zip(&pts)
        .map(|(r, (x, t))| Ok(Row::new(x, *t, &r.with_context(|| format!("Z({x}, {t})"))?)))
        .collect::<Result<Vec<_>>>()?;
    write_table(cfg, "kernel", "heat_kernel", &rows)?;
    eprintln!("wrote {} kernel values to {}", rows.len(), cfg.output.dir.display());
    Ok(0)
}

pub fn solve(cfg: &ProblemConfig) -> Result<Status> {
    let xs = cfg.space_grid()?;
    let ts = cfg.time_grid(true)?;
    let datum = cfg.datum()?;
    let sup = datum.sup_norm();
    let ev = evaluator(cfg)?;
    let horizon = ts.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let h = SolutionHandle::new(ev, datum, horizon)?;
    let pts = grid(&xs, &ts);
    let rows = h
        .evaluate_grid(&pts, cfg.tol, Execution::default())
        .into_iter()
        .zip(&pts)
        .map(|(r, (x, t))| {
            let r = r.with_context(|| format!("u({x}, {t})"))?;
            let mut row = Row::new(x, *t, &r);
            row.max_principle_margin = Some(sup - r.value.norm());
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    write_table(cfg, "solution", "cauchy_solution", &rows)?;
    eprintln!("wrote {} solution values to {}", rows.len(), cfg.output.dir.display());
    Ok(0)
}

#[derive(Serialize)]
struct PathLine {
    path: u64,
    step: usize,
    increment_digits: Vec<String>,
    position_digits: Vec<String>,
    radius_exponent: i64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    outside_root: bool,
}

#[derive(Serialize)]
struct ChiSquareFile {
    step: usize,
    t: f64,
    paths: u64,
    outside_partition: u64,
    max_sigma: f64,
    statistic: Option<f64>,
    degrees_of_freedom: Option<usize>,
    quantile_999: Option<f64>,
    passes: Option<bool>,
}

pub fn simulate(cfg: &ProblemConfig) -> Result<Status> {
    let sim = &cfg.simulate;
    if sim.steps == 0 {
        bail!("simulate.steps must be at least 1");
    }
    if sim.paths == 0 {
        bail!("simulate.paths must be at least 1");
    }
    let start = cfg.start()?;
    let ev = evaluator(cfg)?;
    let sampler = IncrementSampler::new(ev.clone(), sim.sampler.clone())?;
    let paths = sampler.simulate_paths(&start, sim.steps, cfg.seed, sim.paths, Execution::default())?;

    let mut w = BufWriter::new(File::create(out_path(cfg, "paths.jsonl")?)?);
    for path in &paths {
        for (i, s) in path.steps.iter().enumerate() {
            let line = PathLine {
                path: path.path_index,
                step: i + 1,
                increment_digits: s.representative.to_digit_strings(),
                position_digits: s.position.to_digit_strings(),
                radius_exponent: s.increment.radius_exponent(),
                outside_root: s.outside,
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
    }
    w.flush()?;

    let t = sim.steps as f64 * sim.sampler.dt;
    let (lo, hi) = match sim.histogram_radii {
        Some(r) => r,
        None => {
            let mid = median_level(&ev, t, -sim.sampler.precision + 1, sampler.outer() + 4)?;
            (mid - 2, mid + 3)
        }
    };
    if lo > hi || lo < -sim.sampler.precision {
        bail!("simulate.histogram_radii: need precision-admissible lo <= hi, got ({lo}, {hi})");
    }
    let partition = annulus_partition(&start, lo, hi)?;
    let mut hist = occupancy_histogram(&paths, &partition, sim.steps)?;
    hist.attach_exact(&ev, &start, t, 1e-12)?;

    let mut cw = csv::Writer::from_path(out_path(cfg, "histogram.csv")?)?;
    let mut header: Vec<String> = (1..=cfg.symbol.dim).map(|i| format!("center{i}")).collect();
    header.extend(["radius_exponent", "count", "frequency", "exact_mass"].map(String::from));
    cw.write_record(&header)?;
    for b in &hist.bins {
        let mut rec = b.ball.center().to_digit_strings();
        rec.push(b.ball.radius_exponent().to_string());
        rec.push(b.count.to_string());
        rec.push(num(b.frequency));
        rec.push(b.exact_mass.map_or(String::new(), num));
        cw.write_record(&rec)?;
    }
    cw.flush()?;

    let chi = hist.chi_square();
    let report = ChiSquareFile {
        step: sim.steps,
        t,
        paths: hist.total,
        outside_partition: hist.outside,
        max_sigma: hist.max_sigma(),
        statistic: chi.map(|c| c.statistic),
        degrees_of_freedom: chi.map(|c| c.degrees_of_freedom),
        quantile_999: chi.map(|c| c.quantile),
        passes: chi.map(|c| c.passes()),
    };
    write_json(&out_path(cfg, "chi_square.json")?, &report)?;
    eprintln!(
        "simulated {} paths of {} steps; chi^2 {}",
        sim.paths,
        sim.steps,
        chi.map_or("unavailable (too few populated bins)".to_string(), |c| format!(
            "{:.2} on {} dof (99.9% quantile {:.2})",
            c.statistic, c.degrees_of_freedom, c.quantile
        ))
    );
    Ok(0)
}

pub fn verify(cfg: &ProblemConfig) -> Result<Status> {
    let names: Vec<String> = if cfg.verify.checks.is_empty() {
        CHECK_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        cfg.verify.checks.clone()
    };
    for n in &names {
        if !CHECK_NAMES.contains(&n.as_str()) {
            bail!("unknown check `{n}`; expected one of {}", CHECK_NAMES.join(", "));
        }
    }
    let opts = VerifyOptions {
        tol: cfg.tol,
        seed: cfg.seed,
        samples: cfg.verify.samples,
        exec: Execution::default(),
        corrupt_certificate: cfg.verify.corrupt_certificate,
    };
    let mut results: Vec<CheckResult> = Vec::new();
    for n in &names {
        let r = run_check(n, &opts)?;
        println!("{}", serde_json::to_string(&r)?);
        eprintln!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
        results.push(r);
    }
    write_json(&out_path(cfg, "verify.json")?, &results)?;
    Ok(if results.iter().all(|r| r.passed) { 0 } else { 1 })
}
