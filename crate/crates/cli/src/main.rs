use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dmfv::branches::{enumerate_paths, parse_label, run_path, splice, verify_all_paths, verify_path, Mode, PathOptions, PathSpec, DEFAULT_PATH_LIMIT};
use dmfv::diag::{format_report, Format, Report};
use dmfv::fluidics::{Policy, VerifyOptions};
use dmfv::graph::{parse_sg, reconstruct, SeqGraph};
use dmfv::inject::{inject, substitute, InjectKind};
use dmfv::isa::{parse_program_bytes, serialize_program, Program};
use dmfv::pins::PinMap;
use dmfv::render::{animate, frame_at, last_tick, to_ascii, to_svg, Frame};

#[derive(Parser)]
#[command(name = "dmfv", version, about = "Verify digital-microfluidic actuation programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check design rules and, with --sg, the realized protocol.
    Verify(VerifyArgs),
    /// Print the sequencing graph realized by a program.
    Graph(GraphArgs),
    /// List the execution paths of a program with conditionals.
    Paths(PathsArgs),
    /// Write a mutated copy of a program.
    Inject(InjectArgs),
    /// Draw the chip at one tick or at every tick.
    Render(RenderArgs),
}

#[derive(Args)]
struct PathSel {
    /// Only the path with these recovery outcomes, e.g. `01`.
    #[arg(long, value_name = "BITS", conflicts_with = "all_paths")]
    path: Option<String>,
    /// Every path (the default when the program has conditionals).
    #[arg(long)]
    all_paths: bool,
}

#[derive(Args)]
struct VerifyArgs {
    program: PathBuf,
    /// Pin map; enables pin-constrained checking.
    #[arg(long, value_name = "FILE")]
    pins: Option<PathBuf>,
    /// Specified sequencing graph; enables conformance checking.
    #[arg(long, value_name = "FILE")]
    sg: Option<PathBuf>,
    /// Completion bound, overriding the program's own.
    #[arg(long, value_name = "N")]
    tmax: Option<u32>,
    #[command(flatten)]
    sel: PathSel,
    /// Stop at the first violation (default).
    #[arg(long, conflicts_with = "all")]
    first_error: bool,
    /// Report every violation; later ones are marked secondary.
    #[arg(long)]
    all: bool,
    #[arg(long, value_enum, default_value_t = OutFormat::Text)]
    format: OutFormat,
    /// Leave waste nodes out of conformance.
    #[arg(long)]
    ignore_waste: bool,
    /// Maximum number of conditionals to expand.
    #[arg(long, default_value_t = DEFAULT_PATH_LIMIT)]
    path_limit: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphFormat {
    Dot,
    Sg,
}

#[derive(Args)]
struct GraphArgs {
    program: PathBuf,
    #[arg(long, value_enum, default_value_t = GraphFormat::Dot)]
    format: GraphFormat,
    /// Path to reconstruct when the program has conditionals; defaults to
    /// no recovery taken.
    #[arg(long, value_name = "BITS")]
    path: Option<String>,
}

#[derive(Args)]
struct PathsArgs {
    program: PathBuf,
    /// Print the spliced lines of each path.
    #[arg(long)]
    lines: bool,
    #[arg(long, default_value_t = DEFAULT_PATH_LIMIT)]
    path_limit: usize,
}

#[derive(Args)]
struct InjectArgs {
    program: PathBuf,
    /// e1..e7 or pins; omit when using --line.
    #[arg(required_unless_present = "line")]
    kind: Option<InjectKind>,
    /// Tick of a line to replace by hand.
    #[arg(long, value_name = "T", requires = "with", conflicts_with = "kind")]
    line: Option<u32>,
    /// Replacement instructions for --line.
    #[arg(long, value_name = "INSTRS")]
    with: Option<String>,
    /// Base pin map for pin mutations; one pin per electrode otherwise.
    #[arg(long, value_name = "FILE")]
    pins: Option<PathBuf>,
    /// Output file; a pin mutation writes its map to the same name with a
    /// `.pins` extension. Standard output otherwise.
    #[arg(long, short, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameFormat {
    Ascii,
    Svg,
}

#[derive(Args)]
struct RenderArgs {
    program: PathBuf,
    /// Tick to draw; defaults to the last one.
    #[arg(long, value_name = "T", conflicts_with = "animate")]
    at: Option<u32>,
    /// Every tick from 1 to the end of the run.
    #[arg(long)]
    animate: bool,
    #[arg(long, value_enum, default_value_t = FrameFormat::Ascii)]
    format: FrameFormat,
    /// Output file, or directory for animated SVG.
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "BITS")]
    path: Option<String>,
}

/// Input that could not be read or parsed; exit status 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| InputError(format!("{e:#}")).into())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    input(fs::read(path).with_context(|| format!("cannot read {}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    input(fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())))
}

fn load_program(path: &Path) -> Result<Program> {
    let bytes = read(path)?;
    input(parse_program_bytes(&bytes).with_context(|| format!("{}", path.display())))
}

fn load_sg(path: &Path) -> Result<SeqGraph> {
    let text = read_text(path)?;
    input(parse_sg(&text).with_context(|| format!("{}", path.display())))
}

fn load_pins(path: &Path, p: &Program) -> Result<PinMap> {
    let text = read_text(path)?;
    let map = input(PinMap::parse(&text).with_context(|| format!("{}", path.display())))?;
    let d = map.dims();
    if (d.rows, d.cols) != (p.header.rows, p.header.cols) {
        return input(Err(anyhow::anyhow!(
            "{}: pin map is {}x{}, chip is {}x{}",
            path.display(),
            d.rows,
            d.cols,
            p.header.rows,
            p.header.cols
        )));
    }
    Ok(map)
}

fn select_path(p: &Program, bits: Option<&str>) -> Result<PathSpec> {
    let k = p.conditional_count();
    let taken = match bits {
        Some(b) => input(parse_label(b, k).map_err(anyhow::Error::from))?,
        None => vec![false; k],
    };
    input(splice(p, &taken).map_err(anyhow::Error::from))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let p = load_program(&a.program)?;
    let spec = a.sg.as_deref().map(load_sg).transpose()?;
    let map = a.pins.as_deref().map(|f| load_pins(f, &p)).transpose()?;
    let opts = PathOptions {
        verify: VerifyOptions { policy: if a.all { Policy::All } else { Policy::FirstError }, t_max: a.tmax },
        mode: map.as_ref().map_or(Mode::General, Mode::Pins),
        spec: spec.as_ref(),
        ignore_waste: a.ignore_waste,
        limit: a.path_limit,
    };
    let reports: Vec<Report> = match &a.sel.path {
        Some(bits) => vec![verify_path(&p, &select_path(&p, Some(bits))?, &opts)],
        None => input(verify_all_paths(&p, &opts).map_err(anyhow::Error::from))?,
    };
    let format = match a.format {
        OutFormat::Text => Format::Text,
        OutFormat::Json => Format::Json,
    };
    print!("{}", format_report(&reports, format));
    Ok(reports.iter().all(Report::passed))
}

fn cmd_graph(a: &GraphArgs) -> Result<bool> {
    let p = load_program(&a.program)?;
    let path = select_path(&p, a.path.as_deref())?;
    let (trace, report) = run_path(&p, &path, &PathOptions::default());
    if !report.passed() {
        eprint!("{}", format_report(&[report], Format::Text));
        return Ok(false);
    }
    let g = reconstruct(&trace)?;
    match a.format {
        GraphFormat::Dot => print!("{}", g.to_dot(p.header.accuracy)),
        GraphFormat::Sg => print!("{}", g.to_sg()),
    }
    Ok(true)
}

fn cmd_paths(a: &PathsArgs) -> Result<bool> {
    let p = load_program(&a.program)?;
    let paths = input(enumerate_paths(&p, a.path_limit).map_err(anyhow::Error::from))?;
    for path in &paths {
        let label = if path.label.is_empty() { "-" } else { path.label.as_str() };
        let last = path.lines.last().map_or(0, |l| l.t);
        println!("{label} lines={} t={last}", path.lines.len());
        if a.lines {
            let mut q = p.clone();
            q.main = path.lines.clone();
            q.recoveries.clear();
            for line in serialize_program(&q).lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())) {
                println!("  {line}");
            }
        }
    }
    Ok(true)
}

fn cmd_inject(a: &InjectArgs) -> Result<bool> {
    let p = load_program(&a.program)?;
    let base = a.pins.as_deref().map(|f| load_pins(f, &p)).transpose()?;
    let m = match (a.kind, a.line) {
        (Some(kind), _) => inject(&p, kind, base.as_ref())?,
        (None, Some(t)) => substitute(&p, t, a.with.as_deref().unwrap_or_default())?,
        (None, None) => bail!("give an injection kind or --line"),
    };
    eprintln!("{}", m.summary);
    match (&m.pins, &a.out) {
        (Some(map), Some(out)) => {
            write_out(Some(out), &serialize_program(&m.program))?;
            write_out(Some(&out.with_extension("pins")), &map.to_text())?;
        }
        (Some(map), None) => write_out(None, &map.to_text())?,
        (None, out) => write_out(out.as_deref(), &serialize_program(&m.program))?,
    }
    Ok(true)
}

fn draw(f: &Frame, format: FrameFormat) -> String {
    match format {
        FrameFormat::Ascii => to_ascii(f),
        FrameFormat::Svg => to_svg(f),
    }
}

fn cmd_render(a: &RenderArgs) -> Result<bool> {
    let p = load_program(&a.program)?;
    let path = select_path(&p, a.path.as_deref())?;
    let (trace, report) = run_path(&p, &path, &PathOptions::default());
    if a.animate {
        let frames = animate(&trace, &report);
        match (a.format, &a.out) {
            (FrameFormat::Svg, Some(dir)) => {
                fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
                let w = last_tick(&trace).to_string().len();
                for f in &frames {
                    let file = dir.join(format!("t{:0w$}.svg", f.t));
                    write_out(Some(&file), &to_svg(f))?;
                }
            }
            (format, out) => {
                let text: Vec<String> = frames.iter().map(|f| draw(f, format)).collect();
                write_out(out.as_deref(), &text.join("\n"))?;
            }
        }
    } else {
        let f = frame_at(&trace, &report, a.at.unwrap_or_else(|| last_tick(&trace)))?;
        write_out(a.out.as_deref(), &draw(&f, a.format))?;
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Paths(a) => cmd_paths(a),
        Command::Inject(a) => cmd_inject(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<InputError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
