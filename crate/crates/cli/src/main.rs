//! Command-line front end: geodesic structure, KMS flows, the large-beta
//! criterion, state checks and the realization constructions.
//!
//! Numeric output uses 17 significant digits and fixed seeds so that repeated
//! runs produce byte-identical artifacts; timing goes to stderr only.

use bratteli::algebra::{
    build_level_algebra, check_ground, check_kms, gibbs_state, limit_flow_defect,
    local_kms_infinity_state, trace_to_ground, BlockState, LevelAlgebra, DEFAULT_GROUND_SEED,
    DEFAULT_PATH_CAP,
};
use bratteli::construct::{
    construct_ground_ceiling, construct_rigid_kms, construct_uhf_embedding, main_theorem_pipeline,
    reverify, ConstructionCertificate, SupernaturalSpec,
};
use bratteli::geodesic::{
    extract_geodesic_subdiagram, ground_state_algebra_profile, subdiagram_report_json,
    DEFAULT_LOOKAHEAD,
};
use bratteli::limits::{flow_csv, multi_seed_kms_distribution, FlowOptions};
use bratteli::stats::{l1_convergence_report, l1_reports_csv, matrix_dump, TailBound};
use bratteli::util::{fmt_g17, fnv1a_hex};
use bratteli::{DiagramSpec, TieMode};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

const EXIT_VALIDATION: u8 = 2;
const EXIT_UNCERTIFIED: u8 = 3;
const EXIT_CONSTRUCTION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "bratteli",
    about = "Analyze leveled diagrams with arrow potentials: geodesics, KMS flows, constructions",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the geodesic subdiagram and its block profile
    Geodesics(GeodesicsArgs),
    /// Iterate the KMS vertex-distribution flow from multiple seeds
    Kms(KmsArgs),
    /// Large-beta convergence criterion and the local-KMS-infinity simplex
    KmsInfinity(KmsInfinityArgs),
    /// Run a realization construction and write its certificate
    Construct(ConstructArgs),
    /// Check a state file against the KMS identity or the ground form
    Check(CheckArgs),
    /// Write canonical state files for a diagram level
    State(StateArgs),
}

#[derive(Args)]
struct GeodesicsArgs {
    /// Diagram JSON file
    file: PathBuf,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_LOOKAHEAD)]
    lookahead: usize,
    /// Analyze the negated potential (ceiling side)
    #[arg(long)]
    neg: bool,
    /// Write a DOT rendering with the surviving structure highlighted
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Write the JSON report
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct KmsArgs {
    file: PathBuf,
    /// Comma-separated inverse temperatures
    #[arg(long, value_delimiter = ',', required = true)]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Base level of the reported distribution
    #[arg(long, default_value_t = 1)]
    level: usize,
    /// Minimum number of seeds
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Dump the per-gap column-normalized matrices to a text file
    #[arg(long)]
    matrices: Option<PathBuf>,
}

#[derive(Args)]
struct KmsInfinityArgs {
    file: PathBuf,
    #[arg(long = "beta-grid", value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0, 8.0])]
    beta_grid: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    depth: usize,
    /// Write rows (gap, beta, l1_distance, partial_sum)
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConstructArgs {
    #[command(subcommand)]
    kind: ConstructKind,
}

#[derive(Subcommand)]
enum ConstructKind {
    /// Fatten a diagram inside a supernatural one, margins per gap
    UhfEmbed {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1u64])]
        margins: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = [2u64])]
        uhf: Vec<u64>,
        /// Treat the factor list as finite instead of cycling it
        #[arg(long)]
        uhf_finite: bool,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagram_out: Option<PathBuf>,
    },
    /// Prescribed ground and ceiling targets, unique KMS flow
    GroundCeiling {
        #[arg(long)]
        plus: PathBuf,
        #[arg(long)]
        minus: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [2u64])]
        uhf: Vec<u64>,
        #[arg(long)]
        uhf_finite: bool,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagram_out: Option<PathBuf>,
    },
    /// Keep the KMS structure of a base potential, collapse ground/ceiling
    RigidKms {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [2u64])]
        uhf: Vec<u64>,
        #[arg(long)]
        uhf_finite: bool,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagram_out: Option<PathBuf>,
    },
    /// Full pipeline: tensor the two constructions
    Main {
        #[arg(long)]
        kms: PathBuf,
        #[arg(long)]
        plus: PathBuf,
        #[arg(long)]
        minus: PathBuf,
        #[arg(long = "uhf1", value_delimiter = ',', default_values_t = [2u64])]
        uhf_1: Vec<u64>,
        #[arg(long = "uhf2", value_delimiter = ',', default_values_t = [2u64])]
        uhf_2: Vec<u64>,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diagram_out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CheckArgs {
    file: PathBuf,
    #[arg(long)]
    level: usize,
    #[arg(long)]
    state: PathBuf,
    /// Run the KMS identity check at this inverse temperature
    #[arg(long)]
    beta: Option<f64>,
    /// Run the ground-form check
    #[arg(long)]
    ground: bool,
    #[arg(long, default_value_t = 25)]
    trials: usize,
    /// Write the structured report
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct StateArgs {
    #[command(subcommand)]
    kind: StateKind,
}

#[derive(Args)]
struct StateCommon {
    /// Diagram JSON file
    file: PathBuf,
    #[arg(long)]
    level: usize,
    /// Comma-separated weights (default uniform)
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum StateKind {
    /// Gibbs state with prescribed vertex weights
    Gibbs {
        #[command(flatten)]
        common: StateCommon,
        #[arg(long)]
        beta: f64,
    },
    /// Uniform-on-minimizers state with prescribed vertex weights
    LocalInfinity {
        #[command(flatten)]
        common: StateCommon,
    },
    /// Trace on the geodesic subdiagram pushed through the compression;
    /// weights range over the surviving blocks
    TraceGround {
        #[command(flatten)]
        common: StateCommon,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let code = run(cli);
    eprintln!("elapsed: {:?}", start.elapsed());
    code
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Geodesics(args) => cmd_geodesics(args),
        Command::Kms(args) => cmd_kms(args),
        Command::KmsInfinity(args) => cmd_kms_infinity(args),
        Command::Construct(args) => cmd_construct(args),
        Command::Check(args) => cmd_check(args),
        Command::State(args) => cmd_state(args),
    }
}

fn load_spec(path: &PathBuf) -> Result<(DiagramSpec, String), ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(ExitCode::from(EXIT_VALIDATION));
        }
    };
    match DiagramSpec::from_json(&text) {
        Ok(spec) => Ok((spec, fnv1a_hex(text.as_bytes()))),
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(EXIT_VALIDATION))
        }
    }
}

fn write_file(path: &PathBuf, content: &str) -> Result<(), ExitCode> {
    if let Err(e) = std::fs::write(path, content) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return Err(ExitCode::from(EXIT_VALIDATION));
    }
    Ok(())
}

fn mode() -> TieMode {
    TieMode::from_env()
}

fn cmd_geodesics(args: GeodesicsArgs) -> ExitCode {
    let (raw, hash) = match load_spec(&args.file) {
        Ok(x) => x,
        Err(c) => return c,
    };
    let spec = if args.neg { raw.negate_potential() } else { raw };
    let side = if args.neg { "ceiling" } else { "ground" };
    println!("command: geodesics");
    println!("input: {} (fnv1a {hash})", args.file.display());
    println!("mode: {:?}, side: {side}", mode());

    // clamp the lookahead to the horizon of finite presentations
    let lookahead = match spec.available_depth() {
        Some(avail) if avail >= args.depth => args.lookahead.min(avail - args.depth),
        _ => args.lookahead,
    };
    let sub = match extract_geodesic_subdiagram(&spec, args.depth, lookahead, mode()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                bratteli::error::GeodesicError::Diagram(
                    bratteli::DiagramError::DepthExceeded { .. },
                ) => EXIT_UNCERTIFIED,
                bratteli::error::GeodesicError::Uncertified { .. } => EXIT_UNCERTIFIED,
                _ => EXIT_VALIDATION,
            };
            return ExitCode::from(code);
        }
    };
    let profile = match ground_state_algebra_profile(&sub, &spec) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    println!("certification: {}", sub.certification);
    let descriptions: Vec<String> = (1..=sub.depth).map(|j| profile.describe(j)).collect();
    let stable = descriptions.windows(2).all(|w| w[0] == w[1]);
    if stable && !descriptions.is_empty() {
        println!(
            "{side}-state profile: {} at every level (1..={})",
            descriptions[0], sub.depth
        );
    } else {
        for (j, d) in descriptions.iter().enumerate() {
            println!("level {}: {d}", j + 1);
        }
    }
    let dims = profile.dims(sub.depth);
    if dims.iter().all(|d| d == &num_bigint::BigUint::from(1u32)) {
        println!("extreme {side} states: {}", dims.len());
    }
    for j in 1..=sub.depth {
        let names: Vec<&str> = sub.surviving[j]
            .iter()
            .map(|&v| spec.level_names(j)[v].as_str())
            .collect();
        println!(
            "level {j}: surviving vertices [{}], geodesic prefixes {}",
            names.join(", "),
            sub.geo_counts[j]
                .iter()
                .fold(num_bigint::BigUint::ZERO, |a, c| a + c)
        );
    }

    if let Some(dot_path) = &args.dot {
        let highlight = sub.dot_highlight();
        match spec.to_dot(sub.depth, Some(&highlight)) {
            Ok(dot) => {
                if let Err(c) = write_file(dot_path, &dot) {
                    return c;
                }
                println!("dot written: {}", dot_path.display());
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    if let Some(json_path) = &args.json {
        if let Err(c) = write_file(json_path, &subdiagram_report_json(&sub, &spec)) {
            return c;
        }
        println!("json written: {}", json_path.display());
    }
    ExitCode::SUCCESS
}

fn cmd_kms(args: KmsArgs) -> ExitCode {
    let (spec, hash) = match load_spec(&args.file) {
        Ok(x) => x,
        Err(c) => return c,
    };
    println!("command: kms");
    println!("input: {} (fnv1a {hash})", args.file.display());
    let opts = FlowOptions::default();
    let mut csv_rows = Vec::new();
    let mut all_converged = true;
    for &beta in &args.beta {
        match multi_seed_kms_distribution(&spec, beta, args.level, args.depth, args.seeds, opts) {
            Ok(report) => {
                let names = spec.level_names(args.level);
                let rendered: Vec<String> = report
                    .consensus()
                    .iter()
                    .enumerate()
                    .map(|(v, x)| format!("{}={}", names[v], fmt_g17(*x)))
                    .collect();
                let lead = report.distributions[0].clone();
                println!(
                    "beta {}: level {} distribution [{}] | residual {} | seeds {} | max pairwise l1 {} | agree(1e-8) {} | converged {}",
                    fmt_g17(beta),
                    args.level,
                    rendered.join(", "),
                    fmt_g17(lead.residual),
                    report.distributions.len(),
                    fmt_g17(report.max_pairwise_l1),
                    report.agree(1e-8),
                    report.all_converged,
                );
                all_converged &= report.all_converged;
                csv_rows.push((beta, lead));
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    if let Some(csv_path) = &args.csv {
        if let Err(c) = write_file(csv_path, &flow_csv(&spec, &csv_rows)) {
            return c;
        }
        println!("csv written: {}", csv_path.display());
    }
    if let Some(m_path) = &args.matrices {
        let mut dump = String::new();
        for &beta in &args.beta {
            dump.push_str(&format!("beta {}\n", fmt_g17(beta)));
            for gap in 1..=args.depth.max(args.level) {
                match bratteli::stats::stochastic_matrix(&spec, gap, beta) {
                    Ok(m) => dump.push_str(&matrix_dump(&spec, &m)),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(EXIT_VALIDATION);
                    }
                }
            }
        }
        if let Err(c) = write_file(m_path, &dump) {
            return c;
        }
        println!("matrices written: {}", m_path.display());
    }
    if !all_converged {
        eprintln!("warning: iteration budget exhausted before the tolerance was reached");
        return ExitCode::from(EXIT_UNCERTIFIED);
    }
    ExitCode::SUCCESS
}

fn cmd_kms_infinity(args: KmsInfinityArgs) -> ExitCode {
    let (spec, hash) = match load_spec(&args.file) {
        Ok(x) => x,
        Err(c) => return c,
    };
    println!("command: kms-infinity");
    println!("input: {} (fnv1a {hash})", args.file.display());

    // the local-KMS-infinity simplex is the trace simplex of the surviving
    // subdiagram
    let depth = args.depth;
    let geo_depth = depth.min(8);
    let geo_lookahead = match spec.available_depth() {
        Some(avail) if avail >= geo_depth => DEFAULT_LOOKAHEAD.min(avail - geo_depth),
        _ => DEFAULT_LOOKAHEAD,
    };
    match extract_geodesic_subdiagram(&spec, geo_depth, geo_lookahead, mode()) {
        Ok(sub) => {
            if let Ok(p) = ground_state_algebra_profile(&sub, &spec) {
                println!(
                    "local-KMS-infinity simplex: traces on blocks {} at level {geo_depth} (certification {})",
                    p.describe(geo_depth),
                    sub.certification
                );
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }

    let mut reports = Vec::new();
    for &beta in &args.beta_grid {
        match l1_convergence_report(&spec, beta, depth, mode()) {
            Ok(r) => {
                let tail_text = match &r.tail {
                    TailBound::Zero => "zero".to_string(),
                    TailBound::Geometric {
                        ratio,
                        bound,
                        window,
                    } => format!(
                        "geometric over last {window} gaps: ratio {}, bound {}",
                        fmt_g17(*ratio),
                        fmt_g17(*bound)
                    ),
                    TailBound::Inconclusive { reason } => format!("inconclusive ({reason})"),
                };
                let total = r
                    .certified_total()
                    .map(fmt_g17)
                    .unwrap_or_else(|| "uncertified".into());
                println!(
                    "beta {}: partial sum {} over {} gaps | tail {} | certified total {}",
                    fmt_g17(beta),
                    fmt_g17(r.partial_sum),
                    depth,
                    tail_text,
                    total
                );
                reports.push(r);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }

    if let Some(csv_path) = &args.csv {
        if let Err(c) = write_file(csv_path, &l1_reports_csv(&reports)) {
            return c;
        }
        println!("csv written: {}", csv_path.display());
    }

    let totals: Vec<Option<f64>> = reports.iter().map(|r| r.certified_total()).collect();
    let all_certified = totals.iter().all(|t| t.is_some());
    let holds = all_certified && {
        let vals: Vec<f64> = totals.iter().map(|t| t.unwrap()).collect();
        let all_zero = vals.iter().all(|&v| v <= 1e-12);
        let decreasing = vals.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        all_zero || (decreasing && vals.last().unwrap() <= &(0.5 * vals[0]))
    };
    if holds {
        println!("criterion: holds (certified distance totals vanish along the beta grid)");
        println!("conclusion: all local KMS_infinity states are KMS_infinity states");
    } else {
        println!("criterion: not certified on this grid");
        let beta_max = args
            .beta_grid
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if let Ok(agreement) = multi_seed_kms_distribution(
            &spec,
            beta_max,
            1,
            depth.saturating_sub(1).max(1),
            5,
            FlowOptions::default(),
        ) {
            if agreement.agree(1e-8) {
                let names = spec.level_names(1);
                let rendered: Vec<String> = agreement
                    .consensus()
                    .iter()
                    .enumerate()
                    .map(|(v, x)| format!("{}={}", names[v], fmt_g17(*x)))
                    .collect();
                println!(
                    "unique KMS_infinity candidate: barycenter flow [{}] ({} seeds agree within {}, residual {})",
                    rendered.join(", "),
                    agreement.distributions.len(),
                    fmt_g17(agreement.max_pairwise_l1),
                    fmt_g17(agreement.distributions[0].residual),
                );
            }
        }
    }
    ExitCode::SUCCESS
}

fn parse_uhf(factors: &[u64], finite: bool) -> Result<SupernaturalSpec, ExitCode> {
    SupernaturalSpec::new(factors.to_vec(), !finite).map_err(|e| {
        eprintln!("error: invalid supernatural data: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn finish_construction(
    cert: Result<ConstructionCertificate, bratteli::ConstructError>,
    out: &PathBuf,
    diagram_out: Option<&PathBuf>,
) -> ExitCode {
    let cert = match cert {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONSTRUCTION);
        }
    };
    // re-run the verification before writing anything
    let rechecked = match reverify(&cert) {
        Ok(checks) => checks,
        Err(e) => {
            eprintln!("error: re-verification failed: {e}");
            return ExitCode::from(EXIT_CONSTRUCTION);
        }
    };
    println!("construction: {}", cert.construction);
    for c in &rechecked {
        println!(
            "check {}: {} ({})",
            c.name,
            if c.ok { "ok" } else { "FAILED" },
            c.detail
        );
    }
    if let Err(c) = write_file(out, &cert.to_json()) {
        return c;
    }
    println!("certificate written: {}", out.display());
    if let Some(d) = diagram_out {
        if let Err(c) = write_file(d, &cert.output.to_json()) {
            return c;
        }
        println!("diagram written: {}", d.display());
    }
    if rechecked.iter().any(|c| !c.ok) {
        eprintln!("error: verification table contains failures");
        return ExitCode::from(EXIT_CONSTRUCTION);
    }
    ExitCode::SUCCESS
}

fn cmd_construct(args: ConstructArgs) -> ExitCode {
    match args.kind {
        ConstructKind::UhfEmbed {
            base,
            margins,
            uhf,
            uhf_finite,
            depth,
            out,
            diagram_out,
        } => {
            let (base_spec, _) = match load_spec(&base) {
                Ok(x) => x,
                Err(c) => return c,
            };
            let uhf = match parse_uhf(&uhf, uhf_finite) {
                Ok(u) => u,
                Err(c) => return c,
            };
            finish_construction(
                construct_uhf_embedding(&base_spec, &margins, &uhf, depth),
                &out,
                diagram_out.as_ref(),
            )
        }
        ConstructKind::GroundCeiling {
            plus,
            minus,
            uhf,
            uhf_finite,
            depth,
            out,
            diagram_out,
        } => {
            let (plus_spec, _) = match load_spec(&plus) {
                Ok(x) => x,
                Err(c) => return c,
            };
            let (minus_spec, _) = match load_spec(&minus) {
                Ok(x) => x,
                Err(c) => return c,
            };
            let uhf = match parse_uhf(&uhf, uhf_finite) {
                Ok(u) => u,
                Err(c) => return c,
            };
            finish_construction(
                construct_ground_ceiling(&plus_spec, &minus_spec, &uhf, depth),
                &out,
                diagram_out.as_ref(),
            )
        }
        ConstructKind::RigidKms {
            base,
            uhf,
            uhf_finite,
            depth,
            out,
            diagram_out,
        } => {
            let (base_spec, _) = match load_spec(&base) {
                Ok(x) => x,
                Err(c) => return c,
            };
            let uhf = match parse_uhf(&uhf, uhf_finite) {
                Ok(u) => u,
                Err(c) => return c,
            };
            finish_construction(
                construct_rigid_kms(&base_spec, &uhf, depth),
                &out,
                diagram_out.as_ref(),
            )
        }
        ConstructKind::Main {
            kms,
            plus,
            minus,
            uhf_1,
            uhf_2,
            depth,
            out,
            diagram_out,
        } => {
            let (kms_spec, _) = match load_spec(&kms) {
                Ok(x) => x,
                Err(c) => return c,
            };
            let (plus_spec, _) = match load_spec(&plus) {
                Ok(x) => x,
                Err(c) => return c,
            };
            let (minus_spec, _) = match load_spec(&minus) {
                Ok(x) => x,
                Err(c) => return c,
            };
            let u1 = match parse_uhf(&uhf_1, false) {
                Ok(u) => u,
                Err(c) => return c,
            };
            let u2 = match parse_uhf(&uhf_2, false) {
                Ok(u) => u,
                Err(c) => return c,
            };
            finish_construction(
                main_theorem_pipeline(&kms_spec, &plus_spec, &minus_spec, &u1, &u2, depth),
                &out,
                diagram_out.as_ref(),
            )
        }
    }
}

// ----- state file I/O -----

fn state_to_json(spec: &DiagramSpec, state: &BlockState) -> String {
    use serde_json::json;
    let names = spec.level_names(state.level);
    let blocks: Vec<serde_json::Value> = state
        .blocks
        .iter()
        .enumerate()
        .map(|(v, b)| {
            let matrix: Vec<Vec<[String; 2]>> = (0..b.dim)
                .map(|i| {
                    (0..b.dim)
                        .map(|j| [fmt_g17(b[(i, j)].re), fmt_g17(b[(i, j)].im)])
                        .collect()
                })
                .collect();
            json!({"vertex": names[v], "matrix": matrix})
        })
        .collect();
    serde_json::to_string_pretty(&json!({"level": state.level, "blocks": blocks})).unwrap()
}

fn state_from_json(
    spec: &DiagramSpec,
    alg: &LevelAlgebra,
    text: &str,
) -> Result<BlockState, String> {
    #[derive(serde::Deserialize)]
    struct StateFile {
        level: usize,
        blocks: Vec<BlockFile>,
    }
    #[derive(serde::Deserialize)]
    struct BlockFile {
        vertex: String,
        matrix: Vec<Vec<[serde_json::Value; 2]>>,
    }
    let file: StateFile = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    if file.level != alg.level {
        return Err(format!(
            "state level {} does not match the requested level {}",
            file.level, alg.level
        ));
    }
    let names = spec.level_names(alg.level);
    let mut blocks: Vec<bratteli::matrix::CMat> = alg
        .blocks
        .iter()
        .map(|b| bratteli::matrix::CMat::zeros(b.dim()))
        .collect();
    let to_f64 = |v: &serde_json::Value| -> Result<f64, String> {
        match v {
            serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| "bad number".to_string()),
            serde_json::Value::String(s) => s.parse().map_err(|e| format!("bad number: {e}")),
            _ => Err("expected a number".into()),
        }
    };
    for bf in &file.blocks {
        let v = names
            .iter()
            .position(|n| n == &bf.vertex)
            .ok_or_else(|| format!("unknown vertex `{}` at level {}", bf.vertex, alg.level))?;
        let dim = alg.blocks[v].dim();
        if bf.matrix.len() != dim || bf.matrix.iter().any(|row| row.len() != dim) {
            return Err(format!(
                "block `{}` has shape {}x?, the algebra block is {dim}x{dim}",
                bf.vertex,
                bf.matrix.len()
            ));
        }
        for (i, row) in bf.matrix.iter().enumerate() {
            for (j, entry) in row.iter().enumerate() {
                blocks[v][(i, j)] = Complex64::new(to_f64(&entry[0])?, to_f64(&entry[1])?);
            }
        }
    }
    Ok(BlockState {
        level: alg.level,
        blocks,
    })
}

fn render_path(spec: &DiagramSpec, path: &bratteli::FinitePath) -> String {
    let mut out = String::from(spec.root_name());
    for (level, step) in path.steps.iter().enumerate() {
        let bundles = spec.bundles_at(level + 1).expect("path within depth");
        let b = &bundles[step.bundle];
        out.push_str(&format!(
            " -({},{})-> {}",
            step.bundle,
            step.copy,
            spec.level_names(level + 1)[b.to]
        ));
    }
    out
}

fn cmd_check(args: CheckArgs) -> ExitCode {
    let (spec, hash) = match load_spec(&args.file) {
        Ok(x) => x,
        Err(c) => return c,
    };
    println!("command: check");
    println!("input: {} (fnv1a {hash})", args.file.display());
    let alg = match build_level_algebra(&spec, args.level, DEFAULT_PATH_CAP) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let state_text = match std::fs::read_to_string(&args.state) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.state.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let state = match state_from_json(&spec, &alg, &state_text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if let Err(e) = state.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }

    let mut ran = false;
    let mut json_reports: Vec<serde_json::Value> = Vec::new();
    if let Some(beta) = args.beta {
        ran = true;
        match check_kms(&alg, &state, beta) {
            Ok(report) => {
                println!(
                    "kms check at beta {}: max violation {} over {} quadruples",
                    fmt_g17(beta),
                    fmt_g17(report.max_violation),
                    report.quadruples_checked
                );
                if let Some(w) = &report.witness {
                    let b = &alg.blocks[w.vertex];
                    println!(
                        "witness quadruple at vertex {}: mu={} mu'={} nu={} nu'={}",
                        spec.level_names(args.level)[w.vertex],
                        render_path(&spec, &b.paths[w.mu]),
                        render_path(&spec, &b.paths[w.mu_prime]),
                        render_path(&spec, &b.paths[w.nu]),
                        render_path(&spec, &b.paths[w.nu_prime]),
                    );
                }
                json_reports.push(serde_json::json!({
                    "check": "kms",
                    "beta": fmt_g17(beta),
                    "max_violation": fmt_g17(report.max_violation),
                    "witness": report.witness.as_ref().map(|w| serde_json::json!({
                        "vertex": spec.level_names(args.level)[w.vertex],
                        "mu": w.mu, "mu_prime": w.mu_prime,
                        "nu": w.nu, "nu_prime": w.nu_prime,
                    })),
                    "quadruples_checked": report.quadruples_checked,
                    "tolerances": {"pass": "1e-12"},
                }));
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    if args.ground {
        ran = true;
        match check_ground(&alg, &state, args.trials, DEFAULT_GROUND_SEED) {
            Ok(report) => {
                println!(
                    "ground check: min value {} | unit sweep + {} random trials (seed {:#x}) | max imaginary part {}",
                    fmt_g17(report.min_value),
                    report.trials,
                    report.seed,
                    fmt_g17(report.max_imag),
                );
                if let Some(w) = &report.witness {
                    if w.value < 0.0 {
                        let b = &alg.blocks[w.vertex];
                        println!(
                            "violating unit: E(mu,nu) with mu={} nu={}",
                            render_path(&spec, &b.paths[w.mu]),
                            render_path(&spec, &b.paths[w.nu]),
                        );
                    }
                }
                json_reports.push(serde_json::json!({
                    "check": "ground",
                    "min_value": fmt_g17(report.min_value),
                    "witness": report.witness.as_ref().map(|w| serde_json::json!({
                        "vertex": spec.level_names(args.level)[w.vertex],
                        "mu": w.mu, "nu": w.nu, "value": fmt_g17(w.value),
                    })),
                    "seed": format!("{:#x}", report.seed),
                    "trials": report.trials,
                    "tolerances": {"pass": "-1e-10"},
                }));
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    if let Some(json_path) = &args.json {
        let doc = serde_json::to_string_pretty(&serde_json::json!({
            "input": {"path": args.file.display().to_string(), "fnv1a": hash},
            "level": args.level,
            "reports": json_reports,
        }))
        .unwrap();
        if let Err(c) = write_file(json_path, &doc) {
            return c;
        }
        println!("json written: {}", json_path.display());
    }
    if !ran {
        eprintln!("error: nothing to check; pass --beta and/or --ground");
        return ExitCode::from(EXIT_VALIDATION);
    }
    ExitCode::SUCCESS
}

fn cmd_state(args: StateArgs) -> ExitCode {
    let common = match &args.kind {
        StateKind::Gibbs { common, .. } => common,
        StateKind::LocalInfinity { common } => common,
        StateKind::TraceGround { common } => common,
    };
    let (spec, _) = match load_spec(&common.file) {
        Ok(x) => x,
        Err(c) => return c,
    };
    let alg = match build_level_algebra(&spec, common.level, DEFAULT_PATH_CAP) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let width = spec.level_size(common.level);
    let uniform = vec![1.0 / width as f64; width];
    let weights = common.weights.clone();
    let out = common.out.clone();
    let result = match &args.kind {
        StateKind::Gibbs { beta, .. } => {
            let w = weights.unwrap_or(uniform);
            gibbs_state(&alg, *beta, &w)
        }
        StateKind::LocalInfinity { .. } => {
            let w = weights.unwrap_or(uniform);
            // weights outside the image of the minimizer flow cannot extend
            // to a coherent family; warn but still build the level state
            if let Ok(defect) = limit_flow_defect(&spec, common.level, 8, mode(), &w) {
                if defect > 1e-9 {
                    eprintln!(
                        "warning: weights are {defect:.3e} away from the limit-flow image; \
                         the level state is built anyway"
                    );
                }
            }
            local_kms_infinity_state(&alg, mode(), &w)
        }
        StateKind::TraceGround { .. } => {
            let lookahead = match spec.available_depth() {
                Some(avail) if avail >= common.level => DEFAULT_LOOKAHEAD.min(avail - common.level),
                _ => DEFAULT_LOOKAHEAD,
            };
            match extract_geodesic_subdiagram(&spec, common.level, lookahead, mode()) {
                Ok(sub) => {
                    let survivors: Vec<usize> =
                        sub.surviving[common.level].iter().cloned().collect();
                    let w = weights
                        .unwrap_or_else(|| vec![1.0 / survivors.len() as f64; survivors.len()]);
                    if w.len() != survivors.len() {
                        eprintln!(
                            "error: {} weights for {} surviving blocks",
                            w.len(),
                            survivors.len()
                        );
                        return ExitCode::from(EXIT_VALIDATION);
                    }
                    let map: BTreeMap<usize, f64> = survivors.into_iter().zip(w).collect();
                    trace_to_ground(&alg, &sub, &map)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_VALIDATION);
                }
            }
        }
    };
    match result {
        Ok(state) => {
            if let Err(c) = write_file(&out, &state_to_json(&spec, &state)) {
                return c;
            }
            println!("state written: {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}
