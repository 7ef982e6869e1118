//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use gnarharx::error::{Error, Result};
use gnarharx::eval::{rank_models, write_ranking_csv, EvalInput, ModelMeta};
use gnarharx::forecast::{
    run_backtest, write_coefficients_csv, write_forecasts_csv, NetworkMode,
};
use gnarharx::model::{param_count, ModelSpec};
use gnarharx::network::{edge_count, jaccard, NetworkFile};
use gnarharx::panel::{align, log_transform, overnight_returns, split_returns, TimeSeriesPanel};
use gnarharx::sim::simulate;

use crate::config::{
    BacktestConfig, EvaluateConfig, IngestConfig, SimulateConfig,
};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn echo_config<T: serde::Serialize>(config: &T, out: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(config)?;
    std::fs::write(out.join("config.json"), text + "\n")?;
    Ok(())
}

/// Build the derived series (log RV, good/bad returns, overnight returns),
/// align everything on common dates, and write one CSV per series.
pub fn cmd_ingest(cfg: &IngestConfig, out: &Path) -> Result<()> {
    let mut panels: BTreeMap<String, TimeSeriesPanel> = BTreeMap::new();

    let log_rv = match (&cfg.rv, &cfg.log_rv) {
        (Some(rv_path), None) => log_transform(&TimeSeriesPanel::read_csv(rv_path)?)?,
        (None, Some(path)) => TimeSeriesPanel::read_csv(path)?,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidInput(
                "configure either rv or log_rv, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "ingest needs an rv or log_rv input".into(),
            ))
        }
    };
    panels.insert("log_rv".into(), log_rv);

    if let Some(path) = &cfg.returns {
        let returns = TimeSeriesPanel::read_csv(path)?;
        let (good, bad) = split_returns(&returns);
        panels.insert("returns".into(), returns);
        panels.insert("good".into(), good);
        panels.insert("bad".into(), bad);
    }
    match (&cfg.opens, &cfg.closes) {
        (Some(opens_path), Some(closes_path)) => {
            let mut pair = BTreeMap::new();
            pair.insert("opens".to_string(), TimeSeriesPanel::read_csv(opens_path)?);
            pair.insert("closes".to_string(), TimeSeriesPanel::read_csv(closes_path)?);
            let (aligned, _) = align(&pair)?;
            panels.insert(
                "on".into(),
                overnight_returns(&aligned["opens"], &aligned["closes"])?,
            );
        }
        (None, None) => {}
        _ => {
            return Err(Error::InvalidInput(
                "opens and closes must be configured together".into(),
            ))
        }
    }
    if let Some(path) = &cfg.iv {
        panels.insert("iv".into(), TimeSeriesPanel::read_csv(path)?);
    }

    let (aligned, report) = align(&panels)?;
    ensure_dir(out)?;
    echo_config(cfg, out)?;
    for (name, panel) in &aligned {
        panel.write_csv(&out.join(format!("{name}.csv")))?;
    }
    println!(
        "aligned {} series on {} common dates",
        aligned.len(),
        report.n_common_dates
    );
    for (name, dropped) in &report.dropped {
        println!("  {name}: dropped {dropped} dates");
    }
    Ok(())
}

pub fn cmd_simulate(cfg: &SimulateConfig, out: &Path, seed: Option<u64>) -> Result<()> {
    let spec = cfg.to_sim_spec(seed)?;
    let (log_rv, exog) = simulate(&spec)?;
    ensure_dir(out)?;
    let mut resolved = cfg.clone();
    resolved.seed = spec.seed;
    echo_config(&resolved, out)?;
    log_rv.write_csv(&out.join("log_rv.csv"))?;
    for (name, panel) in &exog {
        panel.write_csv(&out.join(format!("{name}.csv")))?;
    }
    println!(
        "simulated {} nodes x {} dates (seed {}) into {}",
        log_rv.n_nodes(),
        log_rv.n_rows(),
        spec.seed,
        out.display()
    );
    Ok(())
}

fn network_mode_label(mode: NetworkMode) -> &'static str {
    match mode {
        NetworkMode::FullyConnected => "FC",
        NetworkMode::GraphicalLasso => "GL",
        NetworkMode::Empty => "none",
    }
}

pub fn cmd_backtest(cfg: &BacktestConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let mut panels: BTreeMap<String, TimeSeriesPanel> = BTreeMap::new();
    panels.insert("log_rv".into(), TimeSeriesPanel::read_csv(&cfg.data.log_rv)?);
    if let Some(path) = &cfg.data.returns {
        panels.insert("returns".into(), TimeSeriesPanel::read_csv(path)?);
    }
    for (name, path) in &cfg.data.exog {
        if name == "log_rv" || name == "returns" {
            return Err(Error::InvalidInput(format!(
                "exogenous series may not be named {name}"
            )));
        }
        panels.insert(name.clone(), TimeSeriesPanel::read_csv(path)?);
    }
    let (aligned, report) = align(&panels)?;
    if report.dropped.values().any(|&d| d > 0) {
        for (name, dropped) in &report.dropped {
            if *dropped > 0 {
                println!("aligned {name}: dropped {dropped} dates");
            }
        }
    }
    let log_rv = &aligned["log_rv"];
    let returns = aligned.get("returns");
    let exog: BTreeMap<String, TimeSeriesPanel> = aligned
        .iter()
        .filter(|(name, _)| name.as_str() != "log_rv" && name.as_str() != "returns")
        .map(|(name, panel)| (name.clone(), panel.clone()))
        .collect();

    ensure_dir(out)?;
    echo_config(cfg, out)?;

    let mut results = Vec::new();
    let mut meta = BTreeMap::new();
    for model_cfg in &cfg.models {
        let spec = ModelSpec::new(
            model_cfg.variant,
            model_cfg.stages,
            model_cfg.exog.clone(),
        );
        let rolling = cfg.rolling_for(model_cfg);
        let result = run_backtest(log_rv, &exog, returns, &spec, &rolling)?;

        let model_dir = out.join(&model_cfg.label);
        ensure_dir(&model_dir)?;
        write_forecasts_csv(&result, &model_dir.join("forecasts.csv"))?;
        write_coefficients_csv(&result, &model_dir.join("coefficients.csv"))?;
        let networks_dir = model_dir.join("networks");
        ensure_dir(&networks_dir)?;
        for (date, network) in &result.network_trajectory {
            NetworkFile::from_network(network, log_rv.node_ids())?
                .write_json(&networks_dir.join(format!("{date}.json")))?;
        }

        println!(
            "backtested {}: {} forecasts over {} refits",
            model_cfg.label,
            result.forecasts.n_rows() * result.forecasts.n_nodes(),
            result.coefficient_trajectory.len()
        );
        meta.insert(
            model_cfg.label.clone(),
            ModelMeta {
                variant: model_cfg.variant.to_string(),
                network: network_mode_label(rolling.network_mode).to_string(),
                exogenous: model_cfg
                    .exog
                    .iter()
                    .map(|e| e.name.clone())
                    .collect::<Vec<_>>()
                    .join(";"),
            },
        );
        results.push((
            model_cfg.label.clone(),
            result,
            param_count(&spec, log_rv.n_nodes()),
        ));
    }

    let borrowed: Vec<(String, &gnarharx::forecast::BacktestResult, usize)> = results
        .iter()
        .map(|(label, result, count)| (label.clone(), result, *count))
        .collect();
    let summaries = rank_models(&borrowed)?;
    write_ranking_csv(&summaries, &meta, &out.join("ranking.csv"))?;
    for s in &summaries {
        println!(
            "  {}: qlike {:.6} (rel {:.4}), mse rel {:.4}, {} params",
            s.label, s.qlike, s.rel_qlike, s.rel_mse, s.n_params
        );
    }
    Ok(())
}

/// Rebuild actual/forecast panels from a `forecasts.csv` written by
/// `backtest`.
pub fn read_forecasts_csv(path: &Path) -> Result<(TimeSeriesPanel, TimeSeriesPanel)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut dates: Vec<String> = Vec::new();
    let mut nodes: Vec<String> = Vec::new();
    let mut actuals: Vec<f64> = Vec::new();
    let mut forecasts: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 5 {
            return Err(Error::InvalidPanel(format!(
                "{}: expected 5 fields per row",
                path.display()
            )));
        }
        let date = record[0].to_string();
        let node = record[1].to_string();
        if dates.last() != Some(&date) {
            dates.push(date);
        }
        if dates.len() == 1 {
            nodes.push(node);
        } else if nodes[(actuals.len()) % nodes.len()] != node {
            return Err(Error::InvalidPanel(format!(
                "{}: node order changes between dates",
                path.display()
            )));
        }
        let parse = |field: &str| -> Result<f64> {
            field.trim().parse().map_err(|_| {
                Error::InvalidPanel(format!("{}: bad number {field:?}", path.display()))
            })
        };
        actuals.push(parse(&record[2])?);
        forecasts.push(parse(&record[3])?);
    }
    if dates.is_empty() {
        return Err(Error::InvalidPanel(format!("{}: empty file", path.display())));
    }
    if actuals.len() != dates.len() * nodes.len() {
        return Err(Error::InvalidPanel(format!(
            "{}: incomplete date/node grid",
            path.display()
        )));
    }
    let actual_panel = TimeSeriesPanel::new(
        nodes.clone(),
        dates.clone(),
        DMatrix::from_row_slice(dates.len(), nodes.len(), &actuals),
    )?;
    let forecast_panel = TimeSeriesPanel::new(
        nodes,
        dates,
        DMatrix::from_row_slice(actual_panel.n_rows(), actual_panel.n_nodes(), &forecasts),
    )?;
    Ok((actual_panel, forecast_panel))
}

pub fn cmd_evaluate(cfg: &EvaluateConfig, out: &Path) -> Result<()> {
    if cfg.entries.is_empty() {
        return Err(Error::InvalidInput("no entries to evaluate".into()));
    }
    let mut panels = Vec::new();
    for entry in &cfg.entries {
        panels.push(read_forecasts_csv(&entry.forecasts)?);
    }
    let inputs: Vec<EvalInput<'_>> = cfg
        .entries
        .iter()
        .zip(panels.iter())
        .map(|(entry, (actuals, forecasts))| EvalInput {
            label: entry.label.clone(),
            actuals,
            forecasts,
            n_params: entry.n_params,
        })
        .collect();
    let summaries = gnarharx::eval::rank_panels(&inputs)?;
    let meta: BTreeMap<String, ModelMeta> = cfg
        .entries
        .iter()
        .map(|entry| {
            (
                entry.label.clone(),
                ModelMeta {
                    variant: entry.variant.clone(),
                    network: entry.network.clone(),
                    exogenous: entry.exogenous.clone(),
                },
            )
        })
        .collect();
    ensure_dir(out)?;
    echo_config(cfg, out)?;
    write_ranking_csv(&summaries, &meta, &out.join("ranking.csv"))?;
    for s in &summaries {
        println!(
            "  {}: qlike {:.6} (rel {:.4}), mse rel {:.4}",
            s.label, s.qlike, s.rel_qlike, s.rel_mse
        );
    }
    Ok(())
}

/// Edge counts and consecutive Jaccard similarity for a directory of dated
/// network JSON files; the first row has no previous network to compare to.
pub fn cmd_network_stats(networks_dir: &Path, out: &Path) -> Result<()> {
    let mut files: Vec<_> = std::fs::read_dir(networks_dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no network JSON files in {}",
            networks_dir.display()
        )));
    }
    ensure_dir(out)?;
    let mut writer = csv::Writer::from_path(out.join("network_stats.csv"))?;
    writer.write_record(["refit_date", "edge_count", "jaccard_vs_previous"])?;
    let mut previous: Option<gnarharx::network::Network> = None;
    for path in &files {
        let file = NetworkFile::read_json(path)?;
        let network = file.to_network()?;
        let date = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let jac = match &previous {
            Some(prev) => format!("{}", jaccard(&network, prev)?),
            None => String::new(),
        };
        writer.write_record([
            date.as_str(),
            &format!("{}", edge_count(&network)),
            jac.as_str(),
        ])?;
        previous = Some(network);
    }
    writer.flush()?;
    println!(
        "wrote network stats for {} networks to {}",
        files.len(),
        out.join("network_stats.csv").display()
    );
    Ok(())
}
