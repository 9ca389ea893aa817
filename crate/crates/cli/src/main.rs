mod error;
mod model_spec;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use rdpg::cluster::{angle_cluster, gmm_em, hsbm_decompose, kmeans, select_k_bic, BicCell, CovarianceClass, HsbmConfig, HsbmTree, KSelector, MotifCut};
use rdpg::embedding::{
    ase, directed_ase, lse, normalized_laplacian, omni_embed, omnibus_matrix, select_dimension, DimensionMethod, Embedding, EmbeddingFlags,
    EmbeddingKind, OmnibusBlocks, USVT_DEFAULT_FACTOR,
};
use rdpg::experiments::{experiment_clt, CltReport};
use rdpg::graph::{augment_diagonal, sample_from_positions};
use rdpg::io::{read_edge_list, read_matrix_csv, write_edge_list, write_matrix_csv};
use rdpg::limits::{linspace, ratio_surface, write_surface_csv, SurfaceFamily};
use rdpg::model::draw_positions;
use rdpg::spectral::{svd_topk, symmetric_singular_values};
use rdpg::testing::{bootstrap_test, mmd_test, omnibus_test, procrustes_test, Bandwidth, KernelSpec, MmdVariant, NullModel, SemiparVariant, TestReport};
use rdpg::{Graph, ProbabilityMatrix, SeedStream};

use error::{CliError, CliResult};
use model_spec::{matrix_to_rows, ModelSpec};

#[derive(Parser)]
#[command(name = "rdpg", version, about = "Random dot product graph inference toolkit")]
struct Cli {
    /// Worker threads for replicate loops.
    #[arg(long, global = true, env = "RDPG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph from a latent position model.
    Sample(SampleArgs),
    /// Spectral embedding of one or more graphs.
    Embed(EmbedArgs),
    /// Choose an embedding dimension from a scree of singular values.
    DimSelect(DimSelectArgs),
    /// Semiparametric bootstrap test of equal latent positions.
    TestSemipar(SemiparArgs),
    /// Kernel MMD test of equal latent position distributions.
    TestNonpar(NonparArgs),
    /// Omnibus or Procrustes test with a Monte Carlo null.
    TestOmnibus(OmnibusArgs),
    /// Grid of ASE/LSE Chernoff ratios over a block model family.
    ChernoffSurface(SurfaceArgs),
    /// Empirical versus limiting ASE covariances for a block model.
    CltCheck(CltArgs),
    /// Cluster the rows of an embedding.
    Cluster(ClusterArgs),
    /// Hierarchical decomposition into subgraphs and motifs.
    Hsbm(HsbmArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Sbm,
    Dcsbm,
    Mmsbm,
    Dirichlet,
    Rdpg,
}

#[derive(Args)]
struct ModelArgs {
    /// Model family; alternatively give --model-file.
    #[arg(long, value_enum, conflicts_with = "model_file")]
    model: Option<ModelKind>,
    /// JSON model file.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Block probability matrix (CSV).
    #[arg(long = "B", value_name = "CSV")]
    b: Option<PathBuf>,
    /// Block weights.
    #[arg(long, value_delimiter = ',')]
    pi: Vec<f64>,
    /// Dirichlet concentration.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Unit-norm block directions for dcsbm (CSV).
    #[arg(long, value_name = "CSV")]
    atoms: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    theta_low: f64,
    #[arg(long, default_value_t = 1.0)]
    theta_high: f64,
    /// Fixed latent positions for rdpg (CSV).
    #[arg(long, value_name = "CSV")]
    positions: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    seed: u64,
    /// Edge list output.
    #[arg(long)]
    out: PathBuf,
    /// Latent positions output (CSV).
    #[arg(long)]
    positions_out: Option<PathBuf>,
    /// Block labels output, one per line.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ase,
    Lse,
    Directed,
    Omnibus,
}

#[derive(Clone, Copy, ValueEnum)]
enum DimMethodArg {
    Profile,
    Usvt,
}

#[derive(Clone, Copy)]
enum DimArg {
    Fixed(usize),
    Auto,
}

fn parse_dim(s: &str) -> Result<DimArg, String> {
    if s == "auto" {
        return Ok(DimArg::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or 'auto', got {s:?}")),
        Ok(d) => Ok(DimArg::Fixed(d)),
    }
}

#[derive(Args)]
struct DimensionArgs {
    /// Scree rule used when --d is auto.
    #[arg(long, value_enum, default_value = "profile")]
    dim_method: DimMethodArg,
    /// USVT threshold factor applied to √n.
    #[arg(long)]
    usvt_factor: Option<f64>,
    /// Length of the scree examined when choosing d.
    #[arg(long, default_value_t = 20)]
    max_d: usize,
}

#[derive(Args)]
struct EmbedArgs {
    /// Edge list(s); omnibus takes two or more.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Embedding dimension or "auto".
    #[arg(long, value_parser = parse_dim)]
    d: DimArg,
    #[arg(long, value_enum, default_value = "ase")]
    kind: KindArg,
    /// Augment the diagonal with scaled degrees before an ASE.
    #[arg(long)]
    diag_augment: bool,
    #[command(flatten)]
    dims: DimensionArgs,
    /// Coordinates output (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Metadata output; defaults to <out>.json.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct DimSelectArgs {
    /// Edge list whose spectrum forms the scree.
    #[arg(long = "in", conflicts_with = "values")]
    input: Option<PathBuf>,
    /// Singular values (CSV, one per line or one row).
    #[arg(long)]
    values: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "profile")]
    method: DimMethodArg,
    #[arg(long)]
    usvt_factor: Option<f64>,
    #[arg(long, default_value_t = 20)]
    max_d: usize,
    /// Matrix vertex count for USVT when --values is given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    /// First graph (edge list).
    #[arg(long)]
    a: PathBuf,
    /// Second graph (edge list).
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    seed: u64,
    /// Report output (JSON); stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SemiparVariantArg {
    Identity,
    Scaling,
    Diagonal,
}

#[derive(Args)]
struct SemiparArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value_t = 200)]
    bs: usize,
    #[arg(long, value_enum, default_value = "identity")]
    variant: SemiparVariantArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MmdVariantArg {
    Raw,
    Scaled,
    Projected,
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth, String> {
    if s == "median" {
        return Ok(Bandwidth::MedianHeuristic);
    }
    match s.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(format!("expected a positive bandwidth or 'median', got {s:?}")),
    }
}

#[derive(Args)]
struct NonparArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_enum, default_value = "raw")]
    variant: MmdVariantArg,
    #[arg(long, default_value_t = 500)]
    n_perm: usize,
    /// Gaussian kernel bandwidth or "median".
    #[arg(long, value_parser = parse_bandwidth, default_value = "median")]
    bandwidth: Bandwidth,
}

#[derive(Clone, Copy, ValueEnum)]
enum PairedArg {
    Omnibus,
    Procrustes,
}

#[derive(Args)]
struct OmnibusArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value_t = 500)]
    mc: usize,
    #[arg(long, value_enum, default_value = "omnibus")]
    statistic: PairedArg,
    /// Known null edge probabilities (CSV); estimated from the mean graph if absent.
    #[arg(long, value_name = "CSV")]
    null_p: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    TwoBlock,
    ThreeBlock,
}

#[derive(Args)]
struct SurfaceArgs {
    #[arg(long, value_enum, default_value = "two-block")]
    family: FamilyArg,
    /// Block weights; defaults to 0.6,0.4 or 0.8,0.1,0.1.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    p_min: f64,
    #[arg(long, default_value_t = 0.9)]
    p_max: f64,
    #[arg(long, default_value_t = 17)]
    p_steps: usize,
    #[arg(long, default_value_t = -0.3, allow_negative_numbers = true)]
    r_min: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    r_max: f64,
    #[arg(long, default_value_t = 25)]
    r_steps: usize,
    /// Sample size scaling the Chernoff exponents.
    #[arg(long, default_value_t = 1e4)]
    n: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CltArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Vertex counts.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterMethod {
    Kmeans,
    Gmm,
    Angle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CovArg {
    Full,
    Diagonal,
    Spherical,
}

impl From<CovArg> for CovarianceClass {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Full => CovarianceClass::Full,
            CovArg::Diagonal => CovarianceClass::Diagonal,
            CovArg::Spherical => CovarianceClass::Spherical,
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Embedding coordinates (CSV).
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "gmm")]
    method: ClusterMethod,
    /// Number of clusters.
    #[arg(long, conflicts_with = "kmax")]
    k: Option<usize>,
    /// Largest K considered by BIC (gmm only).
    #[arg(long)]
    kmax: Option<usize>,
    /// Covariance classes; several are compared by BIC.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "full")]
    covariance: Vec<CovArg>,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_motif_cut(s: &str) -> Result<MotifCut, String> {
    if s == "gap" {
        return Ok(MotifCut::LargestGap);
    }
    s.parse::<usize>()
        .ok()
        .filter(|&c| c > 0)
        .map(MotifCut::Fixed)
        .ok_or_else(|| format!("expected 'gap' or a positive motif count, got {s:?}"))
}

#[derive(Args)]
struct HsbmArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    top_dim: usize,
    #[arg(long, default_value_t = 2)]
    sub_dim: usize,
    /// Subgraphs at or below this size are not split.
    #[arg(long, default_value_t = 50)]
    min_size: usize,
    /// Fixed number of subgraphs per split.
    #[arg(long, conflicts_with = "kmax")]
    k: Option<usize>,
    /// Largest number of subgraphs considered by BIC.
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
    /// Motif dendrogram cut: "gap" or a motif count.
    #[arg(long, value_parser = parse_motif_cut, default_value = "gap")]
    motif_cut: MotifCut,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn read_graph(path: &Path) -> CliResult<Graph> {
    Ok(read_edge_list(open(path)?, None)?)
}

fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    Ok(read_matrix_csv(open(path)?)?)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}").and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
                _ => Ok(()),
            }
        }
    }
}

fn warn(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "warning": kind, "message": message }));
}

fn model_spec(args: &ModelArgs) -> CliResult<ModelSpec> {
    if let Some(path) = &args.model_file {
        return Ok(serde_json::from_reader(std::io::BufReader::new(open(path)?))?);
    }
    let Some(kind) = args.model else {
        return Err(CliError::usage("give --model or --model-file"));
    };
    let need = |p: &Option<PathBuf>, flag: &str| -> CliResult<Vec<Vec<f64>>> {
        let path = p.as_ref().ok_or_else(|| CliError::usage(format!("--model needs {flag}")))?;
        Ok(matrix_to_rows(&read_matrix(path)?))
    };
    Ok(match kind {
        ModelKind::Sbm => ModelSpec::Sbm {
            b: need(&args.b, "--B")?,
            pi: args.pi.clone(),
        },
        ModelKind::Dcsbm => ModelSpec::Dcsbm {
            atoms: need(&args.atoms, "--atoms")?,
            pi: args.pi.clone(),
            theta_low: args.theta_low,
            theta_high: args.theta_high,
        },
        ModelKind::Mmsbm => ModelSpec::Mmsbm {
            b: need(&args.b, "--B")?,
            alpha: args.alpha.clone(),
        },
        ModelKind::Dirichlet => ModelSpec::Dirichlet { alpha: args.alpha.clone() },
        ModelKind::Rdpg => ModelSpec::Rdpg {
            positions: need(&args.positions, "--positions")?,
        },
    })
}

fn cmd_sample(args: &SampleArgs) -> CliResult<()> {
    let spec = model_spec(&args.model)?;
    let model = spec.build()?;
    let stream = SeedStream::new(args.seed);
    let draw = draw_positions(&model, args.n, stream.named("positions"))?;
    let g = sample_from_positions(&draw.positions, stream.named("graph"), args.directed, true)?;
    let mut w = create(&args.out)?;
    writeln!(w, "# rdpg sample model={} seed={}", spec.name(), args.seed).map_err(|e| CliError::io(&args.out, e))?;
    write_edge_list(&g, &mut w)?;
    w.flush().map_err(|e| CliError::io(&args.out, e))?;
    if let Some(p) = &args.positions_out {
        write_matrix_csv(&draw.positions, create(p)?)?;
    }
    if let Some(p) = &args.labels_out {
        let labels = draw.labels.as_ref().ok_or_else(|| CliError::usage("--labels-out needs a block model"))?;
        let mut w = create(p)?;
        for l in labels {
            writeln!(w, "{l}").map_err(|e| CliError::io(p, e))?;
        }
        w.flush().map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

fn dimension_method(method: DimMethodArg, factor: Option<f64>, n: usize) -> DimensionMethod {
    match method {
        DimMethodArg::Profile => DimensionMethod::ProfileLikelihood,
        DimMethodArg::Usvt => DimensionMethod::Usvt {
            factor: factor.unwrap_or(USVT_DEFAULT_FACTOR),
            n,
        },
    }
}

fn method_name(m: &DimensionMethod) -> &'static str {
    match m {
        DimensionMethod::ProfileLikelihood => "profile",
        DimensionMethod::Usvt { .. } => "usvt",
    }
}

/// Leading singular values of the matrix an embedding of this kind decomposes.
fn scree(graphs: &[Graph], kind: KindArg, diag_augment: bool, len: usize) -> CliResult<Vec<f64>> {
    let g = &graphs[0];
    let values = match kind {
        KindArg::Ase => {
            let h = if diag_augment { augment_diagonal(g)? } else { g.clone() };
            symmetric_singular_values(h.adjacency(), len.min(h.n()))?
        }
        KindArg::Lse => symmetric_singular_values(&normalized_laplacian(g.adjacency())?, len.min(g.n()))?,
        KindArg::Directed => svd_topk(g.adjacency(), len.min(g.n()))?.singular_values,
        KindArg::Omnibus => {
            let m = omnibus_matrix(graphs)?;
            let k = len.min(m.nrows());
            symmetric_singular_values(&m, k)?
        }
    };
    Ok(values)
}

#[derive(Serialize)]
struct EmbedMeta {
    command: &'static str,
    inputs: Vec<String>,
    seed: Option<u64>,
    kind: EmbeddingKind,
    n: usize,
    d: usize,
    d_auto: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    dimension_method: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scree: Option<Vec<f64>>,
    spectrum: Vec<f64>,
    flags: EmbeddingFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    blocks: Option<OmnibusBlocks>,
    warnings: Vec<String>,
}

fn cmd_embed(args: &EmbedArgs) -> CliResult<()> {
    let graphs = args.inputs.iter().map(|p| read_graph(p)).collect::<CliResult<Vec<_>>>()?;
    if !matches!(args.kind, KindArg::Omnibus) && graphs.len() != 1 {
        return Err(CliError::usage("only omnibus embeddings take several inputs"));
    }
    if args.diag_augment && !matches!(args.kind, KindArg::Ase) {
        return Err(CliError::usage("--diag-augment applies to ase only"));
    }
    let n = graphs[0].n();
    let (d, method, values) = match args.d {
        DimArg::Fixed(d) => (d, None, None),
        DimArg::Auto => {
            let values = scree(&graphs, args.kind, args.diag_augment, args.dims.max_d)?;
            let rows = if matches!(args.kind, KindArg::Omnibus) { n * graphs.len() } else { n };
            let m = dimension_method(args.dims.dim_method, args.dims.usvt_factor, rows);
            (select_dimension(&values, m)?, Some(method_name(&m)), Some(values))
        }
    };
    let emb: Embedding = match args.kind {
        KindArg::Ase => ase(&graphs[0], d, args.diag_augment)?,
        KindArg::Lse => lse(&graphs[0], d)?,
        KindArg::Directed => directed_ase(&graphs[0], d)?,
        KindArg::Omnibus => omni_embed(&graphs, d)?,
    };
    let mut warnings = Vec::new();
    if emb.flags.rank_deficient {
        let msg = format!("{} of {d} embedding columns are zero", emb.flags.padded_columns);
        warn("RankDeficient", &msg);
        warnings.push("RankDeficient".to_string());
    }
    if emb.flags.indefinite {
        warn("Indefinite", "a retained eigenvalue is negative");
        warnings.push("Indefinite".to_string());
    }
    write_matrix_csv(&emb.coords, create(&args.out)?)?;
    let meta = EmbedMeta {
        command: "embed",
        inputs: args.inputs.iter().map(|p| p.display().to_string()).collect(),
        seed: None,
        kind: emb.kind,
        n,
        d,
        d_auto: matches!(args.d, DimArg::Auto),
        dimension_method: method,
        scree: values,
        spectrum: emb.spectrum.clone(),
        flags: emb.flags,
        blocks: emb.blocks,
        warnings,
    };
    let meta_path = args.meta.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".json");
        PathBuf::from(p)
    });
    write_json(&meta, Some(&meta_path))
}

#[derive(Serialize)]
struct DimSelectOutput {
    command: &'static str,
    seed: Option<u64>,
    method: &'static str,
    d_hat: usize,
    values: Vec<f64>,
}

fn cmd_dim_select(args: &DimSelectArgs) -> CliResult<()> {
    let (values, n) = match (&args.input, &args.values) {
        (Some(path), None) => {
            let g = read_graph(path)?;
            let v = if g.is_directed() {
                svd_topk(g.adjacency(), args.max_d.min(g.n()))?.singular_values
            } else {
                symmetric_singular_values(g.adjacency(), args.max_d.min(g.n()))?
            };
            (v, g.n())
        }
        (None, Some(path)) => {
            let m = read_matrix(path)?;
            let v: Vec<f64> = m.iter().copied().collect();
            let n = args.n.unwrap_or(v.len());
            (v, n)
        }
        _ => return Err(CliError::usage("give exactly one of --in and --values")),
    };
    let m = dimension_method(args.method, args.usvt_factor, n);
    let d_hat = select_dimension(&values, m)?;
    write_json(
        &DimSelectOutput {
            command: "dim-select",
            seed: None,
            method: method_name(&m),
            d_hat,
            values,
        },
        args.out.as_deref(),
    )
}

/// Test report with its null replicates.
#[derive(Serialize)]
struct TestOutput<'a> {
    command: &'static str,
    #[serde(flatten)]
    report: &'a TestReport,
    replicates: &'a [f64],
}

fn emit_report(command: &'static str, report: &TestReport, out: Option<&Path>) -> CliResult<()> {
    write_json(
        &TestOutput {
            command,
            report,
            replicates: &report.replicates,
        },
        out,
    )
}

fn read_pair(p: &PairArgs) -> CliResult<(Graph, Graph)> {
    Ok((read_graph(&p.a)?, read_graph(&p.b)?))
}

fn cmd_semipar(args: &SemiparArgs) -> CliResult<()> {
    let (a, b) = read_pair(&args.pair)?;
    let variant = match args.variant {
        SemiparVariantArg::Identity => SemiparVariant::Identity,
        SemiparVariantArg::Scaling => SemiparVariant::Scaling,
        SemiparVariantArg::Diagonal => SemiparVariant::Diagonal,
    };
    let report = bootstrap_test(&a, &b, args.pair.d, args.bs, variant, args.pair.alpha, SeedStream::new(args.pair.seed))?;
    emit_report("test-semipar", &report, args.pair.out.as_deref())
}

fn cmd_nonpar(args: &NonparArgs) -> CliResult<()> {
    let (a, b) = read_pair(&args.pair)?;
    let variant = match args.variant {
        MmdVariantArg::Raw => MmdVariant::Raw,
        MmdVariantArg::Scaled => MmdVariant::Scaled,
        MmdVariantArg::Projected => MmdVariant::Projected,
    };
    let kernel = KernelSpec { bandwidth: args.bandwidth };
    let report = mmd_test(&a, &b, args.pair.d, variant, args.n_perm, &kernel, args.pair.alpha, SeedStream::new(args.pair.seed))?;
    emit_report("test-nonpar", &report, args.pair.out.as_deref())
}

fn cmd_omnibus(args: &OmnibusArgs) -> CliResult<()> {
    let (a, b) = read_pair(&args.pair)?;
    let null = match &args.null_p {
        Some(path) => NullModel::Supplied(ProbabilityMatrix::new(read_matrix(path)?)?),
        None => NullModel::EstimateFromMean,
    };
    let stream = SeedStream::new(args.pair.seed);
    let p = &args.pair;
    let report = match args.statistic {
        PairedArg::Omnibus => omnibus_test(&a, &b, p.d, args.mc, &null, p.alpha, stream)?,
        PairedArg::Procrustes => procrustes_test(&a, &b, p.d, args.mc, &null, p.alpha, stream)?,
    };
    emit_report("test-omnibus", &report, p.out.as_deref())
}

fn cmd_surface(args: &SurfaceArgs) -> CliResult<()> {
    let weights = |default: &[f64]| if args.weights.is_empty() { default.to_vec() } else { args.weights.clone() };
    let family = match args.family {
        FamilyArg::TwoBlock => {
            let w = weights(&[0.6, 0.4]);
            let w: [f64; 2] = w.try_into().map_err(|_| CliError::usage("two-block needs 2 weights"))?;
            SurfaceFamily::TwoBlockRank1 { weights: w }
        }
        FamilyArg::ThreeBlock => {
            let w = weights(&[0.8, 0.1, 0.1]);
            let w: [f64; 3] = w.try_into().map_err(|_| CliError::usage("three-block needs 3 weights"))?;
            SurfaceFamily::ThreeBlockPQ { weights: w }
        }
    };
    if args.p_steps == 0 || args.r_steps == 0 {
        return Err(CliError::usage("grid step counts must be positive"));
    }
    let cells = ratio_surface(&family, &linspace(args.p_min, args.p_max, args.p_steps), &linspace(args.r_min, args.r_max, args.r_steps), args.n);
    let mut w = create(&args.out)?;
    write_surface_csv(&cells, &mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&args.out, e))
}

#[derive(Serialize)]
struct CltOutput {
    command: &'static str,
    model: ModelSpec,
    #[serde(flatten)]
    report: CltReport,
}

fn cmd_clt(args: &CltArgs) -> CliResult<()> {
    let spec = model_spec(&args.model)?;
    let mixture = spec.mixture()?;
    let report = experiment_clt(&mixture, &args.n, args.trials, SeedStream::new(args.seed))?;
    write_json(
        &CltOutput {
            command: "clt-check",
            model: spec,
            report,
        },
        args.out.as_deref(),
    )
}

#[derive(Serialize)]
struct ClusterOutput {
    command: &'static str,
    seed: u64,
    method: &'static str,
    k: usize,
    labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inertia: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance: Option<CovarianceClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loglik: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bic_table: Option<Vec<BicCell>>,
}

fn cmd_cluster(args: &ClusterArgs) -> CliResult<()> {
    let points = read_matrix(&args.input)?;
    let stream = SeedStream::new(args.seed);
    let mut out = ClusterOutput {
        command: "cluster",
        seed: args.seed,
        method: "",
        k: 0,
        labels: Vec::new(),
        inertia: None,
        covariance: None,
        loglik: None,
        bic: None,
        bic_table: None,
    };
    let need_k = || args.k.ok_or_else(|| CliError::usage("this method needs --k"));
    match args.method {
        ClusterMethod::Kmeans => {
            let r = kmeans(&points, need_k()?, args.restarts, stream)?;
            out.method = "kmeans";
            out.k = r.centers.nrows();
            out.labels = r.labels;
            out.inertia = Some(r.inertia);
        }
        ClusterMethod::Angle => {
            let k = need_k()?;
            out.method = "angle";
            out.k = k;
            out.labels = angle_cluster(&points, k, stream)?;
        }
        ClusterMethod::Gmm => {
            let classes: Vec<CovarianceClass> = args.covariance.iter().map(|&c| c.into()).collect();
            let model = match (args.k, args.kmax) {
                (Some(k), None) => {
                    if classes.len() != 1 {
                        return Err(CliError::usage("a fixed --k takes one covariance class"));
                    }
                    gmm_em(&points, k, classes[0], args.restarts, stream)?
                }
                (None, Some(kmax)) => {
                    let (m, table) = select_k_bic(&points, kmax, &classes, args.restarts, stream)?;
                    out.bic_table = Some(table);
                    m
                }
                _ => return Err(CliError::usage("gmm needs --k or --kmax")),
            };
            out.method = "gmm";
            out.k = model.k;
            out.covariance = Some(model.class);
            out.loglik = Some(model.loglik);
            out.bic = Some(model.bic);
            out.labels = model.labels;
        }
    }
    write_json(&out, args.out.as_deref())
}

#[derive(Serialize)]
struct HsbmOutput {
    command: &'static str,
    seed: u64,
    config: HsbmConfig,
    #[serde(flatten)]
    tree: HsbmTree,
}

fn cmd_hsbm(args: &HsbmArgs) -> CliResult<()> {
    let g = read_graph(&args.input)?;
    let selector = match (args.k, args.kmax) {
        (Some(k), None) => KSelector::Fixed(k),
        (None, Some(kmax)) => KSelector::Bic { kmax },
        _ => return Err(CliError::usage("hsbm needs --k or --kmax")),
    };
    let mut config = HsbmConfig::new(args.top_dim, args.sub_dim, args.min_size, selector);
    config.max_depth = args.max_depth;
    config.motif_cut = args.motif_cut;
    let tree = hsbm_decompose(&g, &config, SeedStream::new(args.seed))?;
    if tree.truncated {
        warn("DepthCapReached", &format!("decomposition stopped at depth {}", args.max_depth));
    }
    write_json(
        &HsbmOutput {
            command: "hsbm",
            seed: args.seed,
            config,
            tree,
        },
        args.out.as_deref(),
    )
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Embed(a) => cmd_embed(a),
        Command::DimSelect(a) => cmd_dim_select(a),
        Command::TestSemipar(a) => cmd_semipar(a),
        Command::TestNonpar(a) => cmd_nonpar(a),
        Command::TestOmnibus(a) => cmd_omnibus(a),
        Command::ChernoffSurface(a) => cmd_surface(a),
        Command::CltCheck(a) => cmd_clt(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Hsbm(a) => cmd_hsbm(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage(e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code as u8)
        }
    }
}
