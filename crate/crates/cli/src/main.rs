//! `nma`: runs the analysis stages over files, serves the result over HTTP, and
//! queries or renames against a running server.

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nma_client::Client;
use nma_core::explain::Explanation;
use nma_core::ingest::LogLine;
use nma_core::pipeline::{self, PipelineConfig, Query};
use nma_core::synth::SynthConfig;
use nma_core::{LinkageKind, NmaConfig, NodeId};
use nma_service::SessionConfig;

#[derive(Parser)]
#[command(name = "nma", version, about = "Near-miss analysis of classifier probability logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic log with a planted two-level hierarchy.
    Synth(SynthArgs),
    /// Near-miss statistics → connection graph.
    Build(PipelineArgs),
    /// Graph → shortest-path metric → dendrogram (JSON and Newick).
    Cluster(PipelineArgs),
    /// Name dendrogram nodes from the taxonomy, user overrides on top.
    Name(PipelineArgs),
    /// Explain a label, or the decided label of one log record.
    Explain(ExplainArgs),
    /// Score explanations against a reference annotation.
    Score(PipelineArgs),
    /// build, cluster, then name and score when a taxonomy and reference are given.
    RunAll(PipelineArgs),
    /// Partition at a cut height.
    Clusters(ClustersArgs),
    /// Rename a dendrogram node, on a server or in the local artifacts.
    Rename(RenameArgs),
    /// Serve the named dendrogram over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct PipelineArgs {
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Defaults to overrides.json in the output directory.
    #[arg(long)]
    overrides: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Near misses are taken from the top k entries.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Minimum probability for a near miss and for an edge.
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
    #[arg(long, default_value_t = LinkageKind::Average)]
    linkage: LinkageKind,
    /// Let misclassified records contribute too.
    #[arg(long)]
    include_misclassified: bool,
    /// Row label in the score table.
    #[arg(long, default_value = "model")]
    model: String,
    /// Also write the capped distance matrix.
    #[arg(long)]
    dump_distances: bool,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let nma = NmaConfig {
            k: self.k,
            t: self.threshold,
            correct_only: !self.include_misclassified,
        };
        nma.validate()?;
        Ok(PipelineConfig {
            labels: self.labels.clone(),
            log: self.log.clone(),
            taxonomy: self.taxonomy.clone(),
            reference: self.reference.clone(),
            overrides: self.overrides.clone(),
            out_dir: self.out.clone(),
            nma,
            linkage: self.linkage,
            model: self.model.clone(),
            dump_distances: self.dump_distances,
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "synth")]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 2)]
    subgroups: usize,
    #[arg(long, default_value_t = 3)]
    labels_per_subgroup: usize,
    #[arg(long, default_value_t = 0.05)]
    eps_subgroup: f64,
    #[arg(long, default_value_t = 0.01)]
    eps_group: f64,
    #[arg(long, default_value_t = 20)]
    images_per_label: usize,
    #[arg(long, default_value_t = 10)]
    top_m: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, conflicts_with = "record", required_unless_present = "record")]
    label: Option<String>,
    /// One log line as JSON.
    #[arg(long)]
    record: Option<String>,
    /// Ask a running server instead of reading local artifacts.
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct ClustersArgs {
    #[arg(long)]
    cut: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct RenameArgs {
    #[arg(long)]
    node: NodeId,
    #[arg(long)]
    name: String,
    #[arg(long)]
    server: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    overrides: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory holding named_dendrogram.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    overrides: Option<PathBuf>,
    /// label<TAB>image-url sidecar for hover previews.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    addr: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Build(a) => {
            let s = pipeline::cmd_build(&a.config()?)?;
            println!(
                "{} records, {} accepted ({:.1}%), {} contributing, {} edges, {} isolated labels",
                s.ingest.total_records,
                s.ingest.accepted,
                100.0 * s.accept_rate,
                s.contributing,
                s.edge_count,
                s.isolated_labels.len()
            );
            Ok(())
        }
        Command::Cluster(a) => {
            let s = pipeline::cmd_cluster(&a.config()?)?;
            println!("root height {}", s.root_height);
            Ok(())
        }
        Command::Name(a) => {
            let cfg = a.config()?;
            pipeline::cmd_name(&cfg)?;
            println!("{}", cfg.artifact(pipeline::NAMED_DENDROGRAM_FILE).display());
            Ok(())
        }
        Command::Explain(a) => explain(a),
        Command::Score(a) => {
            print!("{}", pipeline::cmd_score(&a.config()?)?.to_table(&a.model));
            Ok(())
        }
        Command::RunAll(a) => {
            let cfg = a.config()?;
            let r = pipeline::run_all(&cfg)?;
            println!(
                "{} labels, {} edges, root height {}",
                r.cluster.leaves, r.build.edge_count, r.cluster.root_height
            );
            if let Some(score) = r.score {
                print!("{}", score.to_table(&cfg.model));
            }
            Ok(())
        }
        Command::Clusters(a) => clusters(a),
        Command::Rename(a) => rename(a),
        Command::Serve(a) => serve(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        groups: a.groups,
        subgroups: a.subgroups,
        labels_per_subgroup: a.labels_per_subgroup,
        eps_subgroup: a.eps_subgroup,
        eps_group: a.eps_group,
        images_per_label: a.images_per_label,
        top_m: a.top_m,
        seed: a.seed,
    };
    let p = pipeline::cmd_synth(&cfg, &a.out)?;
    for path in [&p.labels, &p.log, &p.taxonomy, &p.reference] {
        println!("{}", path.display());
    }
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Runtime::new()?)
}

fn explain(a: ExplainArgs) -> Result<()> {
    let query = match (&a.label, &a.record) {
        (Some(l), _) => Query::Label(l.clone()),
        (None, Some(r)) => {
            let line: LogLine = serde_json::from_str(r).context("--record is not a valid log line")?;
            Query::Record(line)
        }
        (None, None) => bail!("one of --label or --record is required"),
    };
    let e: Explanation = match &a.server {
        Some(url) => {
            let client = Client::new(url.clone());
            runtime()?.block_on(async {
                match &query {
                    Query::Label(l) => client.explain(l).await,
                    Query::Record(r) => client.classify_explain(r).await,
                }
            })?
        }
        None => pipeline::cmd_explain(&a.pipeline.config()?, &query)?,
    };
    print!("{}", e.render());
    println!("{}", e.summary());
    Ok(())
}

fn clusters(a: ClustersArgs) -> Result<()> {
    let rows: Vec<(Option<String>, Vec<String>)> = match &a.server {
        Some(url) => {
            let view = runtime()?.block_on(Client::new(url.clone()).clusters(a.cut))?;
            view.clusters.into_iter().map(|c| (c.name, c.members)).collect()
        }
        None => {
            let dg = pipeline::load_dendrogram(&a.out.join(pipeline::NAMED_DENDROGRAM_FILE))?;
            dg.cut_nodes(a.cut)?
                .into_iter()
                .map(|id| {
                    let members = dg.members(id).into_iter().map(|m| dg.labels().name(m).to_string());
                    (dg.name(id).map(str::to_string), members.collect())
                })
                .collect()
        }
    };
    for (name, members) in rows {
        println!("{}\t{}", name.unwrap_or_else(|| "-".into()), members.join(", "));
    }
    Ok(())
}

fn rename(a: RenameArgs) -> Result<()> {
    let name = match &a.server {
        Some(url) => runtime()?
            .block_on(Client::new(url.clone()).rename(a.node, &a.name))?
            .name,
        None => {
            let mut cfg = PipelineConfig::new(&a.out);
            cfg.overrides = a.overrides.clone();
            let dg = pipeline::cmd_rename(&cfg, a.node, &a.name)?;
            dg.name(a.node).map(str::to_string)
        }
    };
    println!("node {} is now {}", a.node, name.unwrap_or_default());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let cfg = SessionConfig {
        dendrogram: a.out.join(pipeline::NAMED_DENDROGRAM_FILE),
        overrides: Some(a.overrides.unwrap_or_else(|| a.out.join(pipeline::OVERRIDES_FILE))),
        images: a.images,
    };
    let addr = SocketAddr::new(a.addr, a.port);
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        nma_service::serve(listener, cfg).await?;
        Ok(())
    })
}
