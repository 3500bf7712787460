//! Headless driver for the attention-flow engine.
//!
//! Every subcommand prints one canonical JSON document, byte-identical to
//! the matching server response for the same inputs.

use std::path::{Path, PathBuf};

use attnflow_core::fixture::{self, Shape};
use attnflow_core::report::{self, to_canonical};
use attnflow_core::{
    build_attention_graph, combined_traversal, compute_influence, load_export, merge_graphs,
    run_query, write_export, Config, Export, FlowError, Graph, HeadFilter, Query, Result,
    DEFAULT_ALPHA,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "attnflow", version, about = "Attention-flow graphs from exported transformer attention")]
pub struct Cli {
    /// Write output here instead of standard out.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a file is a well-formed export.
    Validate { path: PathBuf },
    /// Attention graph of one export.
    Graph {
        path: PathBuf,
        #[command(flatten)]
        params: GraphParams,
    },
    /// Per-token influence at one layer; with two exports and `--model merged`,
    /// the circle comparison.
    Influence {
        path: PathBuf,
        other: Option<PathBuf>,
        #[command(flatten)]
        params: GraphParams,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, value_enum, default_value_t = Model::A)]
        model: Model,
    },
    /// Run a traversal query given as JSON, e.g. `{"kind":"upstream","node":[2,0]}`.
    Query {
        path: PathBuf,
        other: Option<PathBuf>,
        #[command(flatten)]
        params: GraphParams,
        #[arg(long, value_enum, default_value_t = Model::A)]
        model: Model,
        /// Query document; `@file` reads it from a file.
        #[arg(long)]
        query: String,
    },
    /// Merged graph of two exports of the same sentence pair.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        params: GraphParams,
    },
    /// Write a synthetic or hand-built `.attn` file to `--output` and print
    /// its summary.
    Fixture {
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        #[arg(long, default_value_t = 3)]
        seq: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Preset::Synthetic)]
        preset: Preset,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GraphParams {
    #[arg(long, default_value = "0.1")]
    pub tau: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Allowed heads per matrix, e.g. `12:1,3;11:4`.
    #[arg(long)]
    pub heads: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    A,
    B,
    Merged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Synthetic,
    T1,
    T1Variant,
    Uniform,
    Identity,
}

impl GraphParams {
    pub fn config(&self) -> Result<Config> {
        let tau = parse_tau(&self.tau)?;
        let mut cfg = Config::new(tau);
        if let Some(h) = self.heads.as_deref().filter(|h| !h.trim().is_empty()) {
            cfg = cfg.with_head_filter(h.parse::<HeadFilter>()?);
        }
        Ok(cfg)
    }
}

pub fn parse_tau(s: &str) -> Result<f32> {
    let tau = attnflow_core::scalar::parse_weight::<f32>(s)
        .ok_or_else(|| FlowError::InvalidTau(s.to_string()))?;
    Config::validate_tau(tau)?;
    Ok(tau)
}

fn graph_for(export: &Export, params: &GraphParams) -> Result<Graph> {
    build_attention_graph(export, &params.config()?)
}

fn pick_model<'a>(model: Model, a: &'a Export, b: Option<&'a Export>) -> Result<&'a Export> {
    match (model, b) {
        (Model::A, _) => Ok(a),
        (Model::B, Some(b)) => Ok(b),
        _ => Err(FlowError::Usage("this model needs a second export".into())),
    }
}

fn load_pair(a: &Path, b: Option<&Path>) -> Result<(Export, Option<Export>)> {
    let a = load_export(a)?;
    let b = b.map(load_export).transpose()?;
    if let Some(b) = &b {
        if a.sequence() != b.sequence() {
            return Err(FlowError::TokenMismatch);
        }
    }
    Ok((a, b))
}

fn read_query(arg: &str) -> Result<Query> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|source| FlowError::IoFailure {
            path: path.into(),
            source,
        })?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| FlowError::InvalidQuery(e.to_string()))
}

/// Runs one command and returns the document to print.
pub fn execute(cli: &Cli) -> Result<String> {
    let doc = match &cli.command {
        Command::Validate { path } => report::validation_document(&load_export(path)?),
        Command::Graph { path, params } => {
            let export = load_export(path)?;
            let graph = graph_for(&export, params)?;
            report::graph_document(&export, &graph, params.alpha)?
        }
        Command::Influence {
            path,
            other,
            params,
            layer,
            model,
        } => {
            let (a, b) = load_pair(path, other.as_deref())?;
            if *model == Model::Merged {
                let b = b.as_ref().ok_or_else(|| {
                    FlowError::Usage("merged influence needs two exports".into())
                })?;
                let (ga, gb) = (graph_for(&a, params)?, graph_for(b, params)?);
                let merged = merge_graphs(&ga, &gb)?;
                let ta = compute_influence(&a, &ga, params.alpha)?;
                let tb = compute_influence(b, &gb, params.alpha)?;
                report::comparison_document(&merged, &ta, &tb, *layer)?
            } else {
                let export = pick_model(*model, &a, b.as_ref())?;
                let graph = graph_for(export, params)?;
                let table = compute_influence(export, &graph, params.alpha)?;
                report::influence_document(&graph, &table, *layer)?
            }
        }
        Command::Query {
            path,
            other,
            params,
            model,
            query,
        } => {
            let (a, b) = load_pair(path, other.as_deref())?;
            let query = read_query(query)?;
            if *model == Model::Merged {
                let b = b.as_ref().ok_or_else(|| {
                    FlowError::Usage("merged queries need two exports".into())
                })?;
                let merged = merge_graphs(&graph_for(&a, params)?, &graph_for(b, params)?)?;
                report::tagged_query_document(&combined_traversal(&merged, &query)?)
            } else {
                let export = pick_model(*model, &a, b.as_ref())?;
                report::query_document(&run_query(&graph_for(export, params)?, &query)?)
            }
        }
        Command::Diff { a, b, params } => {
            let (a, b) = load_pair(a, Some(b))?;
            let b = b.expect("second export loaded");
            let merged = merge_graphs(&graph_for(&a, params)?, &graph_for(&b, params)?)?;
            report::merged_document(&a, &b, &merged, params.alpha)?
        }
        Command::Fixture {
            layers,
            heads,
            seq,
            seed,
            preset,
        } => {
            let to = cli.output.as_ref().ok_or_else(|| {
                FlowError::Usage("fixture needs --output for the binary file".into())
            })?;
            let shape = Shape {
                layers: *layers,
                heads: *heads,
                seq_len: *seq,
            };
            if !matches!(preset, Preset::T1 | Preset::T1Variant)
                && (*layers == 0 || *heads == 0 || *seq == 0)
            {
                return Err(FlowError::Usage("layers, heads and seq must be positive".into()));
            }
            let export = match preset {
                Preset::Synthetic => fixture::synthetic(&shape, *seed),
                Preset::T1 => fixture::t1(),
                Preset::T1Variant => fixture::t1_variant(),
                Preset::Uniform => fixture::uniform(&shape),
                Preset::Identity => fixture::identity(&shape),
            };
            write_export(&export, to)?;
            report::validation_document(&export)
        }
    };
    Ok(to_canonical(&doc))
}

/// Runs the CLI: the document goes to `--output` (or standard out), except
/// for `fixture`, whose `--output` receives the binary file.
pub fn run(cli: &Cli) -> Result<Option<String>> {
    let doc = execute(cli)?;
    match (&cli.command, &cli.output) {
        (Command::Fixture { .. }, _) | (_, None) => Ok(Some(doc)),
        (_, Some(path)) => {
            std::fs::write(path, doc).map_err(|source| FlowError::IoFailure {
                path: path.clone(),
                source,
            })?;
            Ok(None)
        }
    }
}
