use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hgrw_core::diagnostics::{homophily_report, target_complexity, ComplexityVariant, HomophilyReport};
use hgrw_core::io::{load_graph, save_graph, synth_generate, SynthConfig};
use hgrw_core::metapath::{compose_metapath, enumerate_metapaths, homophily_stats, HomophilyStats};
use hgrw_core::msl::{load_checkpoint, save_checkpoint, train as train_msl, write_loss_csv, LambdaSchedule};
use hgrw_core::pipeline::{prepare, rewire_graph, PipelineConfig};
use hgrw_core::rewire::{write_plan_tsv, CandidatePool};
use hgrw_core::{Error, HeteroGraph, MetaPath, MslConfig, RewireConfig, Split, TargetsConfig};
use serde::Serialize;

use crate::{CliError, DiagArgs, InspectArgs, LambdaScheduleArg, PoolArg, RewireArgs, SynthArgs, TrainArgs, VariantArg};

pub const PLAN_FILE: &str = "rewire_plan.tsv";
pub const REPORT_JSON: &str = "homophily_report.json";
pub const REPORT_TSV: &str = "homophily_report.tsv";

/// Homophily tally of a symmetrized meta-path subgraph, `None` when it has
/// no labeled edge.
fn path_stats(g: &HeteroGraph, path: &MetaPath) -> Result<(usize, Option<HomophilyStats>), CliError> {
    let sub = compose_metapath(g, path, true)?;
    match homophily_stats(&sub.adjacency, &g.labels) {
        Ok(s) => Ok((sub.edge_count(), Some(s))),
        Err(Error::UndefinedRatio) => Ok((sub.edge_count(), None)),
        Err(e) => Err(e.into()),
    }
}

pub fn inspect(a: &InspectArgs) -> Result<(), CliError> {
    let g = load_graph(&a.dir)?;
    g.ensure_valid()?;
    let s = &g.schema;
    let train = g.splits.iter().filter(|&&sp| sp == Split::Train).count();
    println!(
        "target type {} ({} nodes, {} classes, {} train)",
        s.node_types[g.target_type].name,
        g.target_count(),
        g.num_classes,
        train
    );
    for t in &s.node_types {
        println!("node type {}: {} nodes, {} features", t.name, t.count, t.feature_dim);
    }
    for (r, adj) in s.relations.iter().zip(&g.adjacency) {
        println!(
            "relation {}: {} -> {}, {} edges",
            r.name,
            s.node_types[r.src].name,
            s.node_types[r.dst].name,
            adj.nnz()
        );
    }
    let paths = enumerate_metapaths(s, g.target_type, a.max_path_len);
    println!("metapath\tedges\thr\tcoverage");
    let mut best: Option<(f64, String)> = None;
    for p in &paths {
        let label = p.label(s);
        let (edges, stats) = path_stats(&g, p)?;
        match stats {
            Some(st) => {
                println!("{label}\t{edges}\t{:.4}\t{:.4}", st.ratio, st.coverage());
                if best.as_ref().is_none_or(|(b, _)| st.ratio > *b) {
                    best = Some((st.ratio, label));
                }
            }
            None => println!("{label}\t{edges}\tn/a\t0.0000"),
        }
    }
    match best {
        Some((mh, label)) => println!("MH {mh:.4} ({label})"),
        None => println!("MH n/a"),
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        nodes: a.nodes,
        classes: a.classes,
        relation_homophily: a.homophily.clone(),
        aux_sizes: a.aux_sizes.clone(),
        aux_homophily: a.aux_homophily,
        aux_links: a.aux_links,
        feature_dim: a.feature_dim,
        mean_degree: a.mean_degree,
        mean_separation: a.separation,
        noise: a.noise,
        train_fraction: a.train_fraction,
        seed: a.seed,
    };
    let g = synth_generate(&cfg)?;
    save_graph(&g, &a.out, a.feature_format.into())?;
    println!(
        "wrote {} target nodes and {} relations to {}",
        g.target_count(),
        g.schema.relations.len(),
        a.out.display()
    );
    Ok(())
}

fn parse_paths(g: &HeteroGraph, specs: &[String]) -> Result<Option<Vec<MetaPath>>, CliError> {
    if specs.is_empty() {
        return Ok(None);
    }
    specs
        .iter()
        .map(|s| MetaPath::parse(&g.schema, s).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn default_loss_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let g = load_graph(&a.dir)?;
    let cfg = PipelineConfig {
        max_path_len: a.max_path_len,
        paths: parse_paths(&g, &a.paths)?,
        targets: TargetsConfig {
            num_hops: a.num_hops,
            alpha: a.alpha,
            ..Default::default()
        },
        msl: MslConfig {
            hidden_dim: a.hidden_dim,
            num_hops: a.num_hops,
            epochs_attr: a.epochs_attr,
            epochs_label: a.epochs_label,
            learning_rate: a.lr,
            weight_decay: a.weight_decay,
            batch_rows: a.k1,
            batch_cols: a.k2,
            windows_per_epoch: a.windows_per_epoch,
            concat_distribution_features: a.concat_dist,
            keep_attr_loss: !a.drop_attr_loss,
            lambda_schedule: match a.lambda_schedule {
                LambdaScheduleArg::Step => LambdaSchedule::PerStep,
                LambdaScheduleArg::Epoch => LambdaSchedule::PerEpoch,
            },
            seed: a.seed,
        },
        ..Default::default()
    };
    let prepared = prepare(&g, &cfg)?;
    let paths = prepared.paths();
    let out = train_msl(&g, &paths, &prepared.targets, &cfg.msl, &cfg.moo)?;
    save_checkpoint(&a.out, &out.model, &g.schema)?;
    let labels: Vec<String> = paths.iter().map(|p| p.label(&g.schema)).collect();
    let loss_path = a.loss_csv.clone().unwrap_or_else(|| default_loss_path(&a.out));
    write_loss_csv(&loss_path, &out.history, &labels)?;
    if let Some(last) = out.history.last() {
        let finals: Vec<String> = labels
            .iter()
            .zip(&last.losses)
            .map(|(l, v)| format!("{l}={v:.4}"))
            .collect();
        println!("trained {} meta-paths for {} epochs; final losses {}", labels.len(), out.history.len(), finals.join(" "));
    }
    println!("wrote {} and {}", a.out.display(), loss_path.display());
    Ok(())
}

fn write_report(dir: &Path, report: &HomophilyReport) -> Result<(), CliError> {
    fs::write(dir.join(REPORT_JSON), report.to_json()?)?;
    let mut w = BufWriter::new(File::create(dir.join(REPORT_TSV))?);
    report.write_tsv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn rewire(a: &RewireArgs) -> Result<(), CliError> {
    let g = load_graph(&a.dir)?;
    let model = load_checkpoint(&a.model)?.into_model_for(&g.schema)?;
    let rewire_cfg = RewireConfig {
        edge_budget: a.edge_budget,
        epsilon: a.epsilon,
        gamma: a.gamma,
        block_size: a.block_size,
        candidate_pool: match a.candidate_pool {
            PoolArg::All => CandidatePool::All,
            PoolArg::TwoHop => CandidatePool::TwoHop,
        },
    };
    rewire_cfg.validate()?;
    let cfg = PipelineConfig {
        paths: Some(model.paths.clone()),
        targets: TargetsConfig {
            num_hops: model.config.num_hops,
            ..Default::default()
        },
        msl: model.config.clone(),
        rewire: rewire_cfg,
        ..Default::default()
    };
    let prepared = prepare(&g, &cfg)?;
    let (merged, _, plans) = rewire_graph(&g, &model, &prepared, &cfg.rewire)?;
    save_graph(&merged, &a.out, a.feature_format.into())?;
    let mut w = BufWriter::new(File::create(a.out.join(PLAN_FILE))?);
    write_plan_tsv(&mut w, &plans)?;
    w.flush()?;
    let report = homophily_report(&g, &merged, &prepared.paths())?;
    write_report(&a.out, &report)?;
    report.write_tsv(&mut std::io::stdout().lock())?;
    let (adds, rems): (usize, usize) = plans
        .iter()
        .fold((0, 0), |(x, y), p| (x + p.additions.len(), y + p.removals.len()));
    println!("{adds} additions, {rems} removals; wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct PathDiagnostics {
    metapath: String,
    edges: usize,
    hr: Option<f64>,
    coverage: f64,
    /// Complexity after one mean aggregation over the subgraph.
    complexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    complexity_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct DiagReport {
    variant: ComplexityVariant,
    norm: f64,
    /// Complexity of the raw target features.
    feature_complexity: Option<f64>,
    mh: Option<f64>,
    mh_path: Option<String>,
    paths: Vec<PathDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<HomophilyReport>,
}

/// Numeric failures of one measurement are recorded, not fatal.
fn soft(r: hgrw_core::Result<f64>) -> Result<(Option<f64>, Option<String>), CliError> {
    match r {
        Ok(v) => Ok((Some(v), None)),
        Err(e) if e.class() == hgrw_core::ErrorClass::Numeric => Ok((None, Some(e.to_string()))),
        Err(e) => Err(e.into()),
    }
}

pub fn diag(a: &DiagArgs) -> Result<(), CliError> {
    let g = load_graph(&a.dir)?;
    g.ensure_valid()?;
    let variant = match a.variant {
        VariantArg::Linear => ComplexityVariant::Linear,
        VariantArg::Squared => ComplexityVariant::Squared,
    };
    let mut paths = Vec::new();
    for p in enumerate_metapaths(&g.schema, g.target_type, a.max_path_len) {
        let sub = compose_metapath(&g, &p, true)?;
        let (edges, stats) = path_stats(&g, &p)?;
        let (complexity, complexity_error) = soft(target_complexity(&g, Some(&sub.adjacency), variant, a.norm))?;
        paths.push(PathDiagnostics {
            metapath: p.label(&g.schema),
            edges,
            hr: stats.map(|s| s.ratio),
            coverage: stats.map_or(0.0, |s| s.coverage()),
            complexity,
            complexity_error,
        });
    }
    let best = paths
        .iter()
        .filter_map(|p| p.hr.map(|hr| (hr, p.metapath.clone())))
        .fold(None::<(f64, String)>, |acc, (hr, l)| match acc {
            Some((b, _)) if b >= hr => acc,
            _ => Some((hr, l)),
        });
    let comparison = match &a.baseline {
        Some(dir) => {
            let before = load_graph(dir)?;
            let base_paths = enumerate_metapaths(&before.schema, before.target_type, a.max_path_len);
            Some(homophily_report(&before, &g, &base_paths)?)
        }
        None => None,
    };
    let report = DiagReport {
        variant,
        norm: a.norm,
        feature_complexity: soft(target_complexity(&g, None, variant, a.norm))?.0,
        mh: best.as_ref().map(|b| b.0),
        mh_path: best.map(|b| b.1),
        paths,
        comparison,
    };
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    fs::write(&a.report, json)?;
    match (report.mh, &report.mh_path) {
        (Some(mh), Some(p)) => println!("MH {mh:.4} ({p}); {} meta-paths", report.paths.len()),
        _ => println!("MH n/a; {} meta-paths", report.paths.len()),
    }
    if let Some(c) = &report.comparison {
        println!("MH before {:.4}, after {:.4}", c.mh_before, c.mh_after);
    }
    println!("wrote {}", a.report.display());
    Ok(())
}
