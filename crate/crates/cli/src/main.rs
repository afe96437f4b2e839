//! `poltree`: train, apply and evaluate welfare-maximizing policy trees from
//! CSV files of features and per-treatment policy scores.
//!
//! Exit codes: 0 success (warnings go to stderr), 2 usage or validation
//! error (one `error: ...` line on stderr), 3 internal invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poltree::constraints::{adjust_costs_for_shares, apply_costs, CostVector, ShareConstraint};
use poltree::data::split_data;
use poltree::eval::{
    allocate_best_score, allocate_observed, allocate_random, evaluate, render_report_csv,
    render_report_text, Allocation, AllocationSource,
};
use poltree::ingest::schema_for;
use poltree::render::{render_rules, to_dot};
use poltree::synth::{generate, GeneratorSpec, SynthFeature};
use poltree::{
    load_csv, search_sequential, write_csv, PolicyData, PolicyTree, Schema, SearchConfig,
    SearchResult,
};

#[derive(Parser)]
#[command(name = "poltree", version, about = "Policy trees for treatment assignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a CSV into train-forest / train-policy / predict parts.
    Split(SplitArgs),
    /// Search for the welfare-maximizing policy tree.
    Train(TrainArgs),
    /// Apply a stored tree to a CSV and write (id, treatment label).
    Assign(AssignArgs),
    /// Evaluate welfare and treatment shares of baselines and stored trees.
    Report(ReportArgs),
    /// Render a stored tree as rule text or DOT.
    Export(ExportArgs),
    /// Generate a synthetic population with a planted policy.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON schema sidecar mapping columns to roles.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Fractions for the three parts, summing to 1.
    #[arg(long, default_value = "0.4,0.4,0.2")]
    proportions: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <prefix>_{train_forest,train_policy,predict}.csv
    /// and <prefix>_schema.json.
    #[arg(long)]
    out_prefix: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Split levels of the (first) tree; 0 trains a single leaf.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Comma list of extra sequential stage depths, e.g. "1" for a X+1 tree
    /// or "1,1" for two further stages.
    #[arg(long)]
    extra_depths: Option<String>,
    /// Maximum treatment shares, comma list in treatment order.
    #[arg(long)]
    max_shares: Option<String>,
    /// Minimum rows per leaf (default: max(5, 3 * number of treatments)).
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Candidate thresholds per feature at the bottom level.
    #[arg(long, default_value_t = 100)]
    approx: usize,
    /// Categorical combination budget at the bottom level.
    #[arg(long, default_value_t = 100)]
    cat_combinations: usize,
    /// Evaluate every midpoint and every category subset.
    #[arg(long)]
    exact: bool,
    /// Relative minimum gain for keeping a split.
    #[arg(long, default_value_t = 1e-12)]
    gain_epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output path for the tree JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AssignArgs {
    /// Stored tree JSON.
    #[arg(long)]
    tree: PathBuf,
    #[command(flatten)]
    input: DataArgs,
    /// Output CSV of (id, treatment).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Stored tree JSON (repeatable).
    #[arg(long)]
    tree: Vec<PathBuf>,
    /// Shares for the random baseline (default: observed shares when
    /// available, else uniform).
    #[arg(long)]
    random_shares: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    tree: PathBuf,
    /// Output format: "rules" or "dot".
    #[arg(long)]
    format: String,
    /// Optional data whose routed shares are appended to rule lines.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    treatments: usize,
    /// Comma list of feature kinds: "cont", "ord:<levels>", "cat:<categories>".
    #[arg(long, default_value = "cont,cont,cat:4")]
    features: String,
    #[arg(long, default_value_t = 2)]
    planted_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value_t = 0.5)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <prefix>.csv, <prefix>_schema.json and
    /// <prefix>_oracle.json.
    #[arg(long)]
    out_prefix: String,
}

enum CliError {
    Validation(String),
    Internal(String),
}

impl CliError {
    fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split(args) => cmd_split(args),
        Command::Train(args) => cmd_train(args),
        Command::Assign(args) => cmd_assign(args),
        Command::Report(args) => cmd_report(args),
        Command::Export(args) => cmd_export(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error: internal invariant violated: {msg}");
            ExitCode::from(3)
        }
    }
}

fn parse_f64_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("{what}: `{s}` is not a number")))
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("{what}: `{s}` is not an integer")))
        })
        .collect()
}

fn load(input: &DataArgs) -> CliResult<PolicyData> {
    let schema = Schema::from_path(&input.schema).map_err(CliError::validation)?;
    let load = load_csv(&input.data, &schema).map_err(CliError::validation)?;
    if load.dropped_rows > 0 {
        eprintln!(
            "note: dropped {} row(s) with missing values from {}",
            load.dropped_rows,
            input.data.display()
        );
    }
    Ok(load.data)
}

fn load_tree(path: &Path) -> CliResult<PolicyTree> {
    let text = std::fs::read_to_string(path).map_err(CliError::validation)?;
    PolicyTree::from_json(&text).map_err(CliError::validation)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(CliError::validation)
}

fn shares_line(shares: &[f64], labels: &[String]) -> String {
    shares
        .iter()
        .zip(labels)
        .map(|(s, l)| format!("{l}={:.2}%", s * 100.0))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_split(args: SplitArgs) -> CliResult<()> {
    let data = load(&args.input)?;
    let proportions = parse_f64_list(&args.proportions, "--proportions")?;
    let proportions: [f64; 3] = proportions
        .try_into()
        .map_err(|_| CliError::Validation("--proportions needs exactly three fractions".into()))?;
    let split = split_data(&data, proportions, args.seed).map_err(CliError::validation)?;

    let schema_out = format!("{}_schema.json", args.out_prefix);
    write_text(Path::new(&schema_out), &schema_for(&data).to_json())?;
    for (name, part) in [
        ("train_forest", &split.train_forest),
        ("train_policy", &split.train_policy),
        ("predict", &split.predict),
    ] {
        let path = format!("{}_{}.csv", args.out_prefix, name);
        write_csv(part, Path::new(&path)).map_err(CliError::validation)?;
        println!("{name}: {} rows -> {path}", part.n());
    }
    println!("schema -> {schema_out}");
    Ok(())
}

struct Constrained {
    cost: CostVector,
    adjusted: PolicyData,
}

fn calibrate(data: &PolicyData, max_shares: &str) -> CliResult<Constrained> {
    let shares = parse_f64_list(max_shares, "--max-shares")?;
    if shares.len() != data.d() {
        return Err(CliError::Validation(format!(
            "--max-shares needs {} values (one per treatment), got {}",
            data.d(),
            shares.len()
        )));
    }
    let constraint = ShareConstraint::new(shares);
    let cost = adjust_costs_for_shares(data, &constraint).map_err(CliError::validation)?;
    if !cost.converged {
        eprintln!(
            "warning: cost calibration hit the {}-iteration cap; realized shares may exceed caps",
            constraint.max_iterations
        );
    }
    let adjusted = data
        .with_scores(apply_costs(data.scores(), &cost).map_err(CliError::validation)?)
        .map_err(CliError::validation)?;
    Ok(Constrained { cost, adjusted })
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let data = load(&args.input)?;
    println!("data: n={} d={} p={}", data.n(), data.d(), data.p());

    let constrained = match &args.max_shares {
        Some(spec) => Some(calibrate(&data, spec)?),
        None => None,
    };
    let train_data = constrained.as_ref().map_or(&data, |c| &c.adjusted);
    if let Some(c) = &constrained {
        println!(
            "costs: [{}] iterations={} converged={} best-score shares: {}",
            c.cost
                .costs
                .iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(", "),
            c.cost.iterations_used,
            c.cost.converged,
            shares_line(&c.cost.achieved_shares, data.treatment_labels()),
        );
    }

    let config = SearchConfig {
        depth: args.depth,
        approx_points: args.approx,
        cat_combinations: args.cat_combinations,
        min_leaf_size: args.min_leaf,
        exact_mode: args.exact,
        gain_epsilon: args.gain_epsilon,
        seed: args.seed,
        threads: args.threads,
    };
    let extra_depths = match &args.extra_depths {
        Some(spec) => parse_usize_list(spec, "--extra-depths")?,
        None => Vec::new(),
    };
    let result: SearchResult =
        search_sequential(train_data, &extra_depths, &config).map_err(CliError::validation)?;
    if result.no_splittable_feature {
        eprintln!("warning: no feature offered a split at the root; the tree is a single leaf");
    }
    if result.reward != result.tree.train.welfare_total {
        return Err(CliError::Internal(format!(
            "search reward {} does not match recomputed welfare {}",
            result.reward, result.tree.train.welfare_total
        )));
    }

    println!(
        "stage {}: reward={:.6} welfare_mean={:.6} leaves={} nodes_evaluated={} wall_time={:?}",
        result.tree.stage,
        result.reward,
        result.tree.train.welfare_mean,
        result.tree.root.leaf_count(),
        result.nodes_evaluated,
        result.wall_time,
    );
    if constrained.is_some() {
        // Training ran on cost-adjusted scores; report realized welfare and
        // shares in original outcome units as well.
        let assignment = result.tree.assign(&data).map_err(CliError::validation)?;
        let report = evaluate(
            &[Allocation {
                policy_name: "tree".into(),
                assignments: assignment.treatments,
                source: AllocationSource::Tree,
            }],
            &data,
        )
        .map_err(CliError::validation)?;
        let row = &report.rows[0];
        println!(
            "on original scores: welfare_mean={:.6} shares: {}",
            row.welfare_mean,
            shares_line(&row.treatment_shares, data.treatment_labels()),
        );
    }

    write_text(&args.out, &result.tree.to_json())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_assign(args: AssignArgs) -> CliResult<()> {
    let tree = load_tree(&args.tree)?;
    let data = load(&args.input)?;
    let assignment = tree.assign(&data).map_err(CliError::validation)?;
    if assignment.unseen_categories > 0 {
        eprintln!(
            "warning: {} value(s) of categorical features were unseen at training time \
             and routed to the \"not in\" branch",
            assignment.unseen_categories
        );
    }
    let mut out = String::from("id,treatment\n");
    let mut counts = vec![0usize; tree.treatment_labels.len()];
    for (id, &t) in data.row_ids().iter().zip(&assignment.treatments) {
        counts[t] += 1;
        out.push_str(id);
        out.push(',');
        out.push_str(&tree.treatment_labels[t]);
        out.push('\n');
    }
    write_text(&args.out, &out)?;
    let shares: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / data.n() as f64)
        .collect();
    println!(
        "assigned {} rows -> {} | shares: {}",
        data.n(),
        args.out.display(),
        shares_line(&shares, &tree.treatment_labels),
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> CliResult<()> {
    let data = load(&args.input)?;
    let mut allocations = Vec::new();

    match allocate_observed(&data) {
        Some(mut alloc) => {
            alloc.policy_name = "observed".into();
            allocations.push(alloc);
        }
        None => eprintln!("note: no observed treatment column; the observed row is omitted"),
    }

    let random_shares = match &args.random_shares {
        Some(spec) => {
            let shares = parse_f64_list(spec, "--random-shares")?;
            if shares.len() != data.d() {
                return Err(CliError::Validation(format!(
                    "--random-shares needs {} values, got {}",
                    data.d(),
                    shares.len()
                )));
            }
            shares
        }
        None => match data.observed_treatment() {
            Some(observed) => {
                let mut counts = vec![0usize; data.d()];
                for &t in observed {
                    counts[t] += 1;
                }
                counts.iter().map(|&c| c as f64 / data.n() as f64).collect()
            }
            None => vec![1.0 / data.d() as f64; data.d()],
        },
    };
    allocations
        .push(allocate_random(data.n(), &random_shares, args.seed).map_err(CliError::validation)?);
    allocations.push(allocate_best_score(&data));

    for path in &args.tree {
        let tree = load_tree(path)?;
        let assignment = tree.assign(&data).map_err(CliError::validation)?;
        if assignment.unseen_categories > 0 {
            eprintln!(
                "warning: {}: {} unseen categorical value(s) routed right",
                path.display(),
                assignment.unseen_categories
            );
        }
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        allocations.push(Allocation {
            policy_name: format!("tree:{stem}"),
            assignments: assignment.treatments,
            source: AllocationSource::Tree,
        });
    }

    let report = evaluate(&allocations, &data).map_err(CliError::validation)?;
    print!("{}", render_report_text(&report));
    if let Some(out) = &args.out {
        write_text(out, &render_report_csv(&report))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CliResult<()> {
    let tree = load_tree(&args.tree)?;
    let text = match args.format.as_str() {
        "dot" => to_dot(&tree),
        "rules" => {
            let data = match (&args.data, &args.schema) {
                (Some(data), Some(schema)) => Some(load(&DataArgs {
                    data: data.clone(),
                    schema: schema.clone(),
                })?),
                _ => None,
            };
            render_rules(&tree, data.as_ref()).map_err(CliError::validation)?
        }
        other => {
            return Err(CliError::Validation(format!(
                "--format must be \"rules\" or \"dot\", got `{other}`"
            )))
        }
    };
    match &args.out {
        Some(path) => write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn parse_features(text: &str) -> CliResult<Vec<SynthFeature>> {
    text.split(',')
        .map(|item| {
            let item = item.trim();
            if item == "cont" {
                return Ok(SynthFeature::Continuous);
            }
            if let Some(levels) = item.strip_prefix("ord:") {
                let levels = levels
                    .parse::<u32>()
                    .map_err(|_| CliError::Validation(format!("bad feature spec `{item}`")))?;
                return Ok(SynthFeature::OrderedDiscrete { levels });
            }
            if let Some(categories) = item.strip_prefix("cat:") {
                let categories = categories
                    .parse::<u32>()
                    .map_err(|_| CliError::Validation(format!("bad feature spec `{item}`")))?;
                return Ok(SynthFeature::Categorical { categories });
            }
            Err(CliError::Validation(format!(
                "bad feature spec `{item}` (use cont, ord:<levels> or cat:<categories>)"
            )))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let spec = GeneratorSpec {
        n: args.n,
        treatments: args.treatments,
        features: parse_features(&args.features)?,
        planted_depth: args.planted_depth,
        signal: args.signal,
        noise_sd: args.noise_sd,
        seed: args.seed,
    };
    let out = generate(&spec).map_err(CliError::validation)?;

    let csv_path = format!("{}.csv", args.out_prefix);
    let schema_path = format!("{}_schema.json", args.out_prefix);
    let oracle_path = format!("{}_oracle.json", args.out_prefix);
    write_csv(&out.data, Path::new(&csv_path)).map_err(CliError::validation)?;
    write_text(Path::new(&schema_path), &schema_for(&out.data).to_json())?;
    write_text(Path::new(&oracle_path), &out.oracle.to_json())?;
    println!(
        "simulated n={} d={} p={} (planted depth {}) -> {csv_path}, {schema_path}, {oracle_path}",
        out.data.n(),
        out.data.d(),
        out.data.p(),
        args.planted_depth,
    );
    println!(
        "oracle welfare_mean={:.6}",
        out.oracle.train.welfare_mean
    );
    Ok(())
}
