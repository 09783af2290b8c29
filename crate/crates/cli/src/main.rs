use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dgm_cli::doc::Document;
use dgm_cli::report::EXIT_SCHEMA;
use dgm_cli::{run, Command, Options};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Md,
}

/// Checks on curved L-infinity algebroids described by a JSON document.
#[derive(Parser, Debug)]
#[command(name = "dgm", version)]
struct Args {
    command: Command,
    /// Input document; `-` or absent reads stdin.
    input: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    report_format: Format,
    /// Degree window as `lo..hi`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_window)]
    window: Option<(i32, i32)>,
    /// Largest Hochschild arity kept (hkr-check, hochschild-window).
    #[arg(long)]
    truncate_arity: Option<usize>,
    /// Largest differential order in each Hochschild slot.
    #[arg(long)]
    truncate_order: Option<u32>,
    /// Truncation order of the Todd series.
    #[arg(long)]
    todd_order: Option<usize>,
    /// Bundle to work on when the document has several.
    #[arg(long)]
    bundle: Option<String>,
    /// Morphism to work on when the document has several.
    #[arg(long)]
    morphism: Option<String>,
    /// Connection names, comma separated; `flat` is always available.
    #[arg(long, value_delimiter = ',')]
    connection: Vec<String>,
    /// Coordinate isomorphism for the naturality square of hkr-check.
    #[arg(long)]
    isomorphism: Option<String>,
    /// Complexes for `cohomology`, separated by `;`: functions, vectors, forms, tensors:p,q.
    #[arg(long, value_delimiter = ';')]
    complex: Vec<String>,
    /// For `classify`: none, fibration, linear-fibration, weak-equivalence, acyclic-fibration.
    #[arg(long)]
    require: Option<String>,
}

fn parse_window(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once("..").ok_or("expected lo..hi")?;
    let lo = a.trim().parse::<i32>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<i32>().map_err(|e| e.to_string())?;
    if lo > hi {
        return Err(format!("empty window {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn read_input(path: &Option<PathBuf>) -> std::io::Result<String> {
    match path {
        Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p),
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let fail = |msg: String| {
        eprintln!("dgm: {msg}");
        ExitCode::from(EXIT_SCHEMA as u8)
    };
    let text = match read_input(&args.input) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read input: {e}")),
    };
    let doc = match Document::parse(&text) {
        Ok(d) => d,
        Err(e) => return fail(e.0),
    };
    let opts = Options {
        bundle: args.bundle,
        morphism: args.morphism,
        connections: args.connection,
        isomorphism: args.isomorphism,
        complexes: args.complex,
        require: args.require,
        window: args.window,
        truncate_arity: args.truncate_arity,
        truncate_order: args.truncate_order,
        todd_order: args.todd_order,
    };
    let report = match run(args.command, &doc, &opts) {
        Ok(r) => r,
        Err(e) => return fail(e.0),
    };
    let out = match args.report_format {
        Format::Json => report.to_json(),
        Format::Md => report.to_markdown(),
    };
    match &args.output {
        Some(p) => {
            if let Err(e) = std::fs::write(p, &out) {
                return fail(format!("cannot write {}: {e}", p.display()));
            }
        }
        None => print!("{out}"),
    }
    ExitCode::from(report.exit_code as u8)
}
