use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ecc_core::engine::{run_ecc_with, Progress};
use ecc_core::exact::enumerate_exact;
use ecc_core::metrics::{compute_metrics, MetricsReport, MetricsRow};
use ecc_core::params::parse_config_text;
use ecc_core::schedule::{lambda_set, StateIndex};
use ecc_core::sim::{simulate as run_sim, SimReport};
use ecc_core::{validate_config, DerivedModel, ExactProb, Scalar};
use serde::Serialize;

use crate::output::{emit, write_lines, write_rows};
use crate::{
    AnalyzeArgs, CompareArgs, EnumerateArgs, Failure, Format, ModelArgs, Precision, SimulateArgs,
    SweepArgs,
};

fn raw_config(args: &ModelArgs) -> Result<BTreeMap<String, String>> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            raw.insert(k.to_string(), v);
        }
    };
    put("n_nodes", args.nodes.map(|v| v.to_string()));
    put("theta", args.theta.map(|v| v.to_string()));
    put("workers", args.workers.map(|v| v.to_string()));
    put("mac_min_be", args.min_be.map(|v| v.to_string()));
    put("mac_max_be", args.max_be.map(|v| v.to_string()));
    put("mac_max_csma_backoffs", args.max_backoffs.map(|v| v.to_string()));
    put("mac_max_frame_retries", args.max_retries.map(|v| v.to_string()));
    put("d_tx", args.d_tx.map(|v| v.to_string()));
    put("conditioning", args.conditioning.clone());
    put("chain_cap", args.chain_cap.map(|v| v.to_string()));
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {kv:?}");
        };
        raw.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(raw)
}

fn build_model(args: &ModelArgs) -> Result<DerivedModel> {
    Ok(validate_config(&raw_config(args)?)?)
}

fn write_pdf(model: &DerivedModel, report: &MetricsReport, format: Format, path: &std::path::Path) -> Result<()> {
    write_rows(format, Some(path), &report.pdf_rows(model.timing()))
}

fn report_progress(p: &Progress) {
    eprintln!(
        "[{:>8.1}s] examined {} finalised {} pending {}",
        p.elapsed.as_secs_f64(),
        p.examined,
        p.finalized,
        p.pending
    );
}

fn analyze_as<T: Scalar>(model: &DerivedModel, args: &AnalyzeArgs) -> Result<MetricsReport> {
    let progress: Option<&(dyn Fn(&Progress) + Sync)> = if args.progress {
        Some(&report_progress)
    } else {
        None
    };
    let out = run_ecc_with::<T>(model, progress)?;
    if out.budget_exceeded {
        bail!(
            "chain cap of {} reached after {} chains; raise --chain-cap or --theta",
            model.config.chain_cap,
            out.stats.examined
        );
    }
    if let Some(path) = &args.dump_chains {
        write_lines(path, out.chains.iter().map(|c| c.dump_line()))?;
    }
    Ok(compute_metrics(
        model,
        &out.chains,
        out.stats.wall_time.as_secs_f64(),
    )?)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let model = build_model(&args.model)?;
    let report = match args.precision {
        Precision::F64 => analyze_as::<f64>(&model, args)?,
        Precision::F32 => analyze_as::<f32>(&model, args)?,
        Precision::Rational => analyze_as::<ExactProb>(&model, args)?,
    };
    if let Some(path) = &args.pdf_out {
        write_pdf(&model, &report, args.out.format, path)?;
    }
    emit(&args.out, &[report.row()])
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let model = build_model(&args.model)?;
    let sim = run_sim(&model, args.runs, args.seed, args.histogram.is_some());
    let report = sim.to_metrics(model.theta());
    if let Some(path) = &args.pdf_out {
        write_pdf(&model, &report, args.out.format, path)?;
    }
    if let (Some(path), Some(hist)) = (&args.histogram, &sim.histogram) {
        let rows: Vec<HistogramRow> = hist
            .iter()
            .map(|(key, &count)| HistogramRow {
                events: key
                    .iter()
                    .map(|(kind, start)| format!("{}@{start}", kind.tag()))
                    .collect::<Vec<_>>()
                    .join(" "),
                count,
                p: count as f64 / sim.runs as f64,
            })
            .collect();
        write_rows(args.out.format, Some(path), &rows)?;
    }
    emit(&args.out, &[report.row()])
}

#[derive(Debug, Serialize)]
struct HistogramRow {
    events: String,
    count: u64,
    p: f64,
}

fn enumerate_as<T: Scalar>(model: &DerivedModel, args: &EnumerateArgs) -> Result<MetricsReport> {
    let started = Instant::now();
    let dist = enumerate_exact::<T>(model)?;
    let chains = dist.to_chains();
    if let Some(path) = &args.dump_chains {
        write_lines(path, chains.iter().map(|c| c.dump_line()))?;
    }
    Ok(compute_metrics(model, &chains, started.elapsed().as_secs_f64())?)
}

pub fn enumerate(args: &EnumerateArgs) -> Result<()> {
    let model = build_model(&args.model)?;
    let report = match args.precision {
        Precision::F64 => enumerate_as::<f64>(&model, args)?,
        Precision::F32 => enumerate_as::<f32>(&model, args)?,
        Precision::Rational => enumerate_as::<ExactProb>(&model, args)?,
    };
    if let Some(path) = &args.pdf_out {
        write_pdf(&model, &report, args.out.format, path)?;
    }
    emit(&args.out, &[report.row()])
}

#[derive(Debug, Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    n: usize,
    theta: f64,
    coverage: f64,
    chains: u64,
    r_pct: f64,
    l_ms: f64,
    e_mj: f64,
    time_s: f64,
}

fn sweep_values(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() || to < from {
        bail!("sweep range must satisfy from <= to and step > 0");
    }
    let count = ((to - from) / step + 1e-9).floor() as u64 + 1;
    Ok((0..count).map(|k| from + k as f64 * step).collect())
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        v.to_string()
    }
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let base = raw_config(&args.model)?;
    let mut rows = Vec::new();
    for value in sweep_values(args.from, args.to, args.step)? {
        let mut raw = base.clone();
        raw.insert(args.param.clone(), format_value(value));
        let model = validate_config(&raw).with_context(|| format!("{} = {value}", args.param))?;
        let report = if args.simulate {
            run_sim(&model, args.runs, args.seed, false).to_metrics(model.theta())
        } else {
            let out = run_ecc_with::<f64>(&model, None)?;
            if out.budget_exceeded {
                bail!("chain cap reached at {} = {value}", args.param);
            }
            compute_metrics(&model, &out.chains, out.stats.wall_time.as_secs_f64())?
        };
        let MetricsRow {
            n,
            theta,
            coverage,
            chains,
            r_pct,
            l_ms,
            e_mj,
            time_s,
        } = report.row();
        rows.push(SweepRow {
            param: args.param.clone(),
            value,
            n,
            theta,
            coverage,
            chains,
            r_pct,
            l_ms,
            e_mj,
            time_s,
        });
    }
    emit(&args.out, &rows)
}

#[derive(Debug, Serialize)]
struct CompareRow {
    metric: &'static str,
    analytic: f64,
    simulated: f64,
    se: f64,
    delta: f64,
    z: f64,
    significant: bool,
    tested: bool,
}

fn compare_row(metric: &'static str, analytic: f64, simulated: f64, se: f64, sigma: f64, tested: bool) -> CompareRow {
    let delta = analytic - simulated;
    let z = if se > 0.0 {
        delta / se
    } else if delta == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(delta)
    };
    CompareRow {
        metric,
        analytic,
        simulated,
        se,
        delta,
        z,
        significant: z.abs() > sigma,
        tested,
    }
}

fn compare_rows(ecc: &MetricsReport, sim: &SimReport, sigma: f64) -> Vec<CompareRow> {
    vec![
        compare_row(
            "r_pct",
            ecc.delivery_ratio * 100.0,
            sim.delivery_ratio * 100.0,
            sim.delivery_ratio_se * 100.0,
            sigma,
            true,
        ),
        compare_row(
            "l_ms",
            ecc.latency_mean * 1e3,
            sim.latency_mean * 1e3,
            sim.latency_mean_se * 1e3,
            sigma,
            true,
        ),
        compare_row(
            "e_mj",
            ecc.energy_total * 1e3,
            sim.energy_total * 1e3,
            sim.energy_total_se * 1e3,
            sigma,
            false,
        ),
    ]
}

/// Energy is reported alongside but does not decide the exit status.
pub fn compare(args: &CompareArgs) -> Result<(), Failure> {
    let model = build_model(&args.model)?;
    if args.runs < 2 {
        return Err(Failure::Model(anyhow::anyhow!("--runs must be at least 2")));
    }
    let out = run_ecc_with::<f64>(&model, None).map_err(anyhow::Error::from)?;
    if out.budget_exceeded {
        return Err(Failure::Model(anyhow::anyhow!("chain cap reached")));
    }
    let ecc = compute_metrics(&model, &out.chains, out.stats.wall_time.as_secs_f64())
        .map_err(anyhow::Error::from)?;
    let sim = run_sim(&model, args.runs, args.seed, false);
    let rows = compare_rows(&ecc, &sim, args.sigma);
    emit(&args.out, &rows)?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| r.tested && r.significant)
        .map(|r| r.metric)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Comparison(format!(
            "{} beyond {} standard errors",
            failed.join(", "),
            args.sigma
        )))
    }
}

pub fn debug_lambda(args: &ModelArgs, i: usize, j: usize) -> Result<()> {
    let mut raw = raw_config(args)?;
    raw.entry("n_nodes".into()).or_insert_with(|| "1".into());
    let model = validate_config(&raw)?;
    let s = StateIndex::new(i, j);
    if !s.is_valid(&model) {
        bail!(
            "state ({i}, {j}) outside 1..={} x 1..={}",
            model.b_max,
            model.t_max
        );
    }
    println!("{}", lambda_set(&model, s));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid_includes_endpoint() {
        assert_eq!(sweep_values(1.0, 5.0, 1.0).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(sweep_values(0.0, 0.3, 0.1).unwrap().len(), 4);
        assert!(sweep_values(2.0, 1.0, 1.0).is_err());
        assert!(sweep_values(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn integral_values_print_without_fraction() {
        assert_eq!(format_value(3.0), "3");
        assert_eq!(format_value(1e-5), "0.00001");
    }

    #[test]
    fn z_scores() {
        let r = compare_row("x", 1.0, 0.5, 0.1, 3.0, true);
        assert!((r.z - 5.0).abs() < 1e-12 && r.significant);
        let r = compare_row("x", 1.0, 1.0, 0.0, 3.0, true);
        assert!(!r.significant);
        assert!(compare_row("x", 1.0, 0.9, 0.0, 3.0, true).significant);
    }
}
