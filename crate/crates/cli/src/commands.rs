use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use blockgibbs::analysis::{
    correlation_surface, detect_outlier_block, pair_correlation, pair_table, pair_table_marginalized, rate_lower_bound,
    JointAllocationTable,
};
use blockgibbs::config::{read_allocation, ExperimentConfig, Overrides};
use blockgibbs::diagnostics::{acceptance_report, acf_binary, psm, read_ordering};
use blockgibbs::sampler::{run_chains, ChainTrace};
use blockgibbs::Model;

use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    let mut overrides = Overrides { seed: cli.seed, output_dir: cli.out.clone(), ..Overrides::default() };
    match &cli.command {
        Command::Simulate { clustered } => overrides.clustered = *clustered,
        Command::Sample { chains, clustered } => {
            overrides.chains = *chains;
            overrides.clustered = *clustered;
        }
        _ => {}
    }
    let path = cli.config.as_ref().ok_or_else(|| anyhow!("--config is required")).context("config::load")?;
    let config = ExperimentConfig::from_path(path)
        .with_context(|| format!("reading {}", path.display()))
        .context("config::load")?
        .merged(&overrides);
    config.validate().context("config::validate")?;
    fs::create_dir_all(&config.output_dir).context("io::create_output_dir")?;
    write_text(&config.output_dir.join("config.toml"), &config.to_toml_string()?).context("config::echo")?;

    match &cli.command {
        Command::Simulate { .. } => simulate(&config),
        Command::Sample { .. } => sample(&config),
        Command::AnalyzePair => analyze_pair(&config),
        Command::Bound => bound(&config),
        Command::Surface => surface(&config),
        Command::Psm => similarity(&config),
        Command::Acf => acf(&config),
        Command::DetectOutliers => detect(&config),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn model(config: &ExperimentConfig) -> Result<Model<f64>> {
    let (data, _) = config.load_dataset().context("simulate::load_dataset")?;
    let hp = config.hyperparameters.build().context("model::hyperparameters")?;
    Model::new(data, hp).context("model::new")
}

fn simulate(config: &ExperimentConfig) -> Result<()> {
    let (data, sim) = config.load_dataset().context("simulate::simulate")?;
    let sim = sim.ok_or_else(|| anyhow!("dataset is a file, nothing to simulate")).context("simulate::simulate")?;
    let dir = &config.output_dir;
    let mut w = create(&dir.join("data.csv"))?;
    data.write_csv(&mut w).context("simulate::write_csv")?;
    w.flush()?;
    let mut w = create(&dir.join("labels.csv"))?;
    sim.write_labels(&mut w).context("simulate::write_labels")?;
    w.flush()?;
    Ok(())
}

fn sample(config: &ExperimentConfig) -> Result<()> {
    let model = model(config)?;
    config.sampler.validate(&model).context("sampler::validate")?;
    let traces = run_chains(&model, &config.sampler, config.chains).context("sampler::run_chains")?;
    let mut reports = Vec::new();
    for (c, trace) in traces.iter().enumerate() {
        let mut w = create(&config.trace_path(c))?;
        trace.write_jsonl(&mut w).context("sampler::write_jsonl")?;
        w.flush()?;
        reports.push(acceptance_report(trace));
    }
    let json = if reports.len() == 1 { serde_json::to_string(&reports[0])? } else { serde_json::to_string(&reports)? };
    write_text(&config.output_dir.join("acceptance.json"), &json)
}

fn read_trace(config: &ExperimentConfig) -> Result<ChainTrace> {
    let path = config.analysis.trace.clone().unwrap_or_else(|| config.trace_path(0));
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    ChainTrace::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// The configured pair table with the pair (and block) held out of the allocation.
fn table(config: &ExperimentConfig) -> Result<JointAllocationTable<f64>> {
    let model = model(config)?;
    let [i, j] = config.analysis.pair.ok_or_else(|| anyhow!("analysis.pair is not set")).context("config::pair")?;
    let (i, j) = (i - 1, j - 1);
    let path = config.analysis.allocation.as_ref().ok_or_else(|| anyhow!("analysis.allocation is not set")).context("config::allocation")?;
    let mut complement = read_allocation(path).context("config::read_allocation")?;
    if complement.len() != model.n() {
        return Err(anyhow!("allocation has {} entries for {} observations", complement.len(), model.n()))
            .context("config::read_allocation");
    }
    complement[i] = None;
    complement[j] = None;
    match &config.analysis.block {
        Some(block) => {
            for &b in block.indices() {
                if b >= model.n() {
                    return Err(anyhow!("block member {} out of range", b + 1)).context("config::block");
                }
                complement[b] = None;
            }
            pair_table_marginalized(&model, &complement, block, i, j, config.analysis.multiset)
                .context("latent_correlation::pair_table_marginalized")
        }
        None => pair_table(&model, &complement, i, j).context("latent_correlation::pair_table"),
    }
}

fn analyze_pair(config: &ExperimentConfig) -> Result<()> {
    let t = table(config)?;
    let mut w = create(&config.output_dir.join("pair_table.csv"))?;
    t.write_csv(&mut w).context("latent_correlation::write_csv")?;
    w.flush()?;
    let correlation = if t.k() == 2 { pair_correlation(&t).ok() } else { None };
    let json = serde_json::json!({
        "pair": config.analysis.pair,
        "marginalized": t.conditioning().marginalized.iter().map(|m| m + 1).collect::<Vec<_>>(),
        "correlation": correlation,
    });
    write_text(&config.output_dir.join("pair.json"), &json.to_string())
}

fn bound(config: &ExperimentConfig) -> Result<()> {
    let t = table(config)?;
    let b = rate_lower_bound(&t).context("latent_correlation::rate_lower_bound")?;
    write_text(&config.output_dir.join("bound.json"), &b.to_json()?)
}

fn surface(config: &ExperimentConfig) -> Result<()> {
    let spec = config.analysis.surface.as_ref().ok_or_else(|| anyhow!("analysis.surface is not set")).context("config::surface")?;
    let hp = config.hyperparameters.build().context("model::hyperparameters")?;
    let s = correlation_surface(spec, &hp).context("latent_correlation::correlation_surface")?;
    let mut w = create(&config.output_dir.join("surface.csv"))?;
    s.write_csv(&mut w).context("latent_correlation::write_csv")?;
    w.flush()?;
    Ok(())
}

fn similarity(config: &ExperimentConfig) -> Result<()> {
    let trace = read_trace(config).context("diagnostics::read_trace")?;
    let mut p = psm(&trace, config.analysis.burn_in, config.analysis.thin).context("diagnostics::psm")?;
    if let Some(path) = &config.analysis.ordering {
        let order = read_ordering(BufReader::new(File::open(path)?)).context("diagnostics::read_ordering")?;
        p = p.permuted(&order).context("diagnostics::permuted")?;
    }
    let mut w = create(&config.output_dir.join("psm.csv"))?;
    p.write_csv(&mut w).context("diagnostics::write_csv")?;
    w.flush()?;
    Ok(())
}

fn acf(config: &ExperimentConfig) -> Result<()> {
    let req = config.analysis.acf.as_ref().ok_or_else(|| anyhow!("analysis.acf is not set")).context("config::acf")?;
    let trace = read_trace(config).context("diagnostics::read_trace")?;
    let components: Vec<usize> = req.components.iter().map(|c| c - 1).collect();
    let series = acf_binary(&trace, req.site - 1, &components, req.max_lag, config.analysis.burn_in)
        .context("diagnostics::acf_binary")?;
    let mut w = create(&config.output_dir.join("acf.csv"))?;
    series.write_csv(&mut w).context("diagnostics::write_csv")?;
    w.flush()?;
    Ok(())
}

fn detect(config: &ExperimentConfig) -> Result<()> {
    let model = model(config)?;
    let path = config.analysis.allocation.as_ref().ok_or_else(|| anyhow!("analysis.allocation is not set")).context("config::allocation")?;
    let alloc = read_allocation(path).context("config::read_allocation")?;
    let state = model.state_from_partial(&alloc).context("model::state_from_partial")?;
    let block = detect_outlier_block(&model, &state, &config.analysis.detection).context("latent_correlation::detect_outlier_block")?;
    let json = serde_json::json!({ "block": block.map(Vec::<usize>::from) });
    write_text(&config.output_dir.join("block.json"), &json.to_string())
}
