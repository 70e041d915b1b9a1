use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use ivmaps::checks::{check_h3, estimate_theta0};
use ivmaps::coupling::{derive_constants, run_coupling, CouplingMode};
use ivmaps::families::StandardFamily;
use ivmaps::hofbauer::{build_tower, lift_mass_profile, projection_defect, DEFAULT_NODE_CAP};
use ivmaps::io::{csv, density_csv, num, out_dir, parse_map_arg, write_text};
use ivmaps::measure::{closed_form_vssv_density, pushforward, ulam_matrix, PiecewiseDensity, PushOptions, UlamPartition};
use ivmaps::repro::{run_recipe, RECIPES};
use ivmaps::stats::{birkhoff_clt_report, correlation_series, CorrelationMethod, Observable};
use ivmaps::{Error, Interval, MapModel, Result};

#[derive(Parser, Debug)]
#[command(name = "ivmaps", version, about = "Countable-branch interval map diagnostics")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed for sampled quantities.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON object of flag values; entries override command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the one-step expansion (h1) or magnet (h3) hypotheses.
    #[command(subcommand)]
    Verify(Verify),
    /// Estimate the invariant density.
    Density(DensityArgs),
    /// Operate on a standard family document.
    #[command(subcommand)]
    Family(FamilyCmd),
    /// Run the magnet coupling and write its ledger.
    Couple(CoupleArgs),
    /// Build the Hofbauer tower.
    Tower(TowerArgs),
    /// Lift Lebesgue measure to the tower and report level masses.
    TowerMass(TowerMassArgs),
    /// Correlation series `Cov(f, g∘T^n)`.
    Mix(MixArgs),
    /// Birkhoff-sum CLT diagnostic.
    Clt(CltArgs),
    /// Run a named reproduction recipe.
    Repro(ReproArgs),
}

#[derive(Args, Debug)]
struct MapArg {
    /// Map file, inline JSON, or shorthand (doubling, dyadic:M, vssv:λ[:K], rychlik[:K], linear-tail:r[:K]).
    #[arg(long)]
    map: String,
    /// Use the n-th iterate of the map.
    #[arg(long, default_value_t = 1)]
    iterate: usize,
}

impl MapArg {
    fn load(&self) -> Result<MapModel> {
        let m = parse_map_arg(&self.map)?;
        if self.iterate == 1 {
            Ok(m)
        } else {
            m.with_iterate(self.iterate)
        }
    }
}

#[derive(Subcommand, Debug)]
enum Verify {
    H1 {
        #[command(flatten)]
        map: MapArg,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    H3 {
        #[command(flatten)]
        map: MapArg,
        #[arg(long)]
        magnet: Interval,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        /// Seed windows `a,b`; defaults to the branch domains.
        #[arg(long = "window")]
        windows: Vec<Interval>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DensityMethod {
    Ulam,
    Iterate,
    ClosedForm,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    map: MapArg,
    #[arg(long, value_enum, default_value = "ulam")]
    method: DensityMethod,
    #[arg(long, default_value_t = 1 << 14)]
    bins: usize,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum FamilyCmd {
    /// Push the family forward `n` steps.
    Iterate {
        #[command(flatten)]
        common: FamilyArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Cut every pair at the given points.
    Cut {
        #[command(flatten)]
        common: FamilyArgs,
        #[arg(long, value_delimiter = ',')]
        points: Vec<f64>,
    },
    /// Print `Z(G)` at exponent `q0`.
    Z {
        #[command(flatten)]
        common: FamilyArgs,
        #[arg(long, default_value_t = 0.3)]
        q0: f64,
    },
}

#[derive(Args, Debug)]
struct FamilyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    map: MapArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    #[command(flatten)]
    map: MapArg,
    #[arg(long)]
    magnet: Interval,
    /// Family document; Lebesgue on (0,1] when absent.
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value = "empirical")]
    mode: CouplingMode,
    #[arg(long, default_value_t = 0.3)]
    q0: f64,
    #[arg(long, default_value_t = 0.1)]
    delta0: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TowerArgs {
    #[command(flatten)]
    map: MapArg,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    node_cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TowerMassArgs {
    #[command(flatten)]
    map: MapArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MixMethod {
    Exact,
    Mc,
}

#[derive(Args, Debug)]
struct MixArgs {
    #[command(flatten)]
    map: MapArg,
    /// Observable file or inline JSON.
    #[arg(long)]
    f: String,
    /// Defaults to `f`.
    #[arg(long)]
    g: Option<String>,
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    #[arg(long, value_enum, default_value = "exact")]
    method: MixMethod,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CltArgs {
    #[command(flatten)]
    map: MapArg,
    #[arg(long)]
    f: String,
    /// Birkhoff horizon.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReproArgs {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(RECIPES))]
    name: String,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where an artifact goes: the explicit path, else `$IVMAPS_OUT_DIR/<name>`,
/// else standard output.
fn emit(explicit: Option<&Path>, default_name: &str, text: &str) -> Result<()> {
    let target = explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(ivmaps::io::OUT_DIR_ENV).map(|d| PathBuf::from(d).join(default_name)));
    match target {
        Some(p) => {
            write_text(&p, text)?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load_observable(arg: &str) -> Result<Observable> {
    let path = Path::new(arg);
    if path.is_file() {
        Observable::load(path)
    } else {
        Observable::from_json(arg)
    }
}

/// Turns a JSON config object into trailing `--key value` arguments.
fn config_args(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Parse("config must be a JSON object".into()))?;
    let mut out = Vec::new();
    for (key, value) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            serde_json::Value::Bool(true) => out.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => out.extend([flag, s.clone()]),
            serde_json::Value::Array(items) => {
                for item in items {
                    let s = item.as_str().map_or_else(|| item.to_string(), str::to_string);
                    out.extend([flag.clone(), s]);
                }
            }
            other => out.extend([flag, other.to_string()]),
        }
    }
    Ok(out)
}

fn override_self(cmd: clap::Command) -> clap::Command {
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    names
        .iter()
        .fold(cmd.args_override_self(true), |c, n| c.mut_subcommand(n, override_self))
}

fn parse_cli() -> Cli {
    let mut argv: Vec<String> = std::env::args().collect();
    let cmd = override_self(Cli::command());
    let first = cmd.clone().get_matches_from(&argv);
    if let Some(cfg) = first.get_one::<PathBuf>("config") {
        match config_args(cfg) {
            Ok(extra) => argv.extend(extra),
            Err(e) => {
                eprintln!("error: {e}");
                std::process::exit(e.exit_code());
            }
        }
    }
    let matches = cmd.get_matches_from(argv);
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn main() -> ExitCode {
    let cli = parse_cli();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: {e}");
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// `Ok(false)` reports a completed run whose check failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify(Verify::H1 { map, q, delta, out }) => {
            let m = map.load()?;
            let r = estimate_theta0(&m, q, delta)?;
            let text = csv(
                &["window_left", "window_right", "sum", "error_bar"],
                r.probes.iter().map(|p| {
                    [num(p.sum.window.left), num(p.sum.window.right), num(p.sum.value), num(p.sum.error_bar)]
                }),
            );
            emit(out.as_deref(), "h1.csv", &text)?;
            eprintln!(
                "theta_hat = {:.6} at {} ({})",
                r.theta_hat,
                r.worst_window,
                if r.pass { "pass" } else { "fail" }
            );
            Ok(r.pass)
        }
        Command::Verify(Verify::H3 { map, magnet, n_max, windows, out }) => {
            let m = map.load()?;
            let seeds: Vec<Interval> = if windows.is_empty() {
                m.branches().iter().map(|b| b.domain).collect()
            } else {
                windows
            };
            let r = check_h3(&m, magnet, &seeds, n_max)?;
            emit(out.as_deref(), "h3.json", &(serde_json::to_string_pretty(&r)? + "\n"))?;
            match r.n_c {
                Some(n) => eprintln!("n_c = {n}"),
                None => eprintln!("magnet not reached by every seed within {n_max} steps"),
            }
            Ok(r.n_c.is_some())
        }
        Command::Density(a) => {
            let m = a.map.load()?;
            let d = match a.method {
                DensityMethod::Ulam => {
                    let s = ulam_matrix(&m, a.bins, UlamPartition::BranchAligned)?.stationary_density()?;
                    eprintln!("power iteration: {} steps, residual {:.3e}", s.iterations, s.residual);
                    s.density
                }
                DensityMethod::Iterate => {
                    let (d, rep) = pushforward(&m, &PiecewiseDensity::lebesgue(), a.steps, &PushOptions::default())?;
                    eprintln!("tail loss {:.3e}, coarsened {}", rep.tail_loss, rep.coarsened);
                    d
                }
                DensityMethod::ClosedForm => match m.generator() {
                    ivmaps::maps::Generator::Vssv { lambda } => closed_form_vssv_density(*lambda, m.truncation())?.density,
                    _ => {
                        return Err(Error::InvalidParameter(
                            "closed-form density is only available for vssv maps".into(),
                        ))
                    }
                },
            };
            emit(a.out.as_deref(), "density.csv", &density_csv(&d))?;
            Ok(true)
        }
        Command::Family(cmd) => {
            let (common, op) = match cmd {
                FamilyCmd::Iterate { common, n } => (common, FamilyOp::Iterate(n)),
                FamilyCmd::Cut { common, points } => (common, FamilyOp::Cut(points)),
                FamilyCmd::Z { common, q0 } => (common, FamilyOp::Z(q0)),
            };
            let m = common.map.load()?;
            let fam = StandardFamily::load(&common.input)?;
            let text = match op {
                FamilyOp::Iterate(n) => fam.iterate(&m, n)?.to_json()? + "\n",
                FamilyOp::Cut(points) => fam.cut(&points).to_json()? + "\n",
                FamilyOp::Z(q0) => format!("{}\n", num(fam.z_value(q0))),
            };
            emit(common.out.as_deref(), "family.json", &text)?;
            Ok(true)
        }
        Command::Couple(a) => {
            let m = a.map.load()?;
            let fam = match &a.family {
                Some(p) => StandardFamily::load(p)?,
                None => StandardFamily::lebesgue(Interval::UNIT),
            };
            let k = derive_constants(&m, a.q0, a.delta0, a.magnet, a.mode)?;
            let ledger = run_coupling(&m, &fam, &k, a.rounds, true)?;
            let text = csv(
                &["round", "time", "coupled_mass", "cumulative", "residual", "residual_Z", "delta_observed"],
                ledger.rounds.iter().map(|r| {
                    [
                        r.round.to_string(),
                        r.time.to_string(),
                        num(r.coupled_mass),
                        num(r.cumulative),
                        num(r.residual),
                        num(r.residual_z),
                        num(r.delta_observed),
                    ]
                }),
            );
            emit(a.out.as_deref(), "ledger.csv", &text)?;
            eprintln!("warmup {} steps, theta_hat {:.6}", ledger.warmup, ledger.theta_hat);
            Ok(true)
        }
        Command::Tower(a) => {
            let m = a.map.load()?;
            let t = build_tower(&m, a.depth, a.node_cap)?;
            emit(a.out.as_deref(), "tower.json", &(t.to_json()? + "\n"))?;
            eprintln!(
                "{} nodes, {} edges, max level {}{}",
                t.len(),
                t.edges.len(),
                t.max_level(),
                if t.partial { " (partial)" } else { "" }
            );
            Ok(true)
        }
        Command::TowerMass(a) => {
            let m = a.map.load()?;
            let t = build_tower(&m, a.depth, DEFAULT_NODE_CAP)?;
            let p = lift_mass_profile(&m, &t, a.n)?;
            let defect = projection_defect(&m, &p)?;
            let text = csv(
                &["level", "mass", "cesaro"],
                p.levels.iter().enumerate().map(|(l, v)| {
                    [l.to_string(), num(*v), p.cesaro.get(l).map_or_else(String::new, |c| num(*c))]
                }),
            );
            emit(a.out.as_deref(), "tower_mass.csv", &text)?;
            eprintln!(
                "tail loss {:.3e}, unresolved {:.3e}, projection defect {:.3e}",
                p.tail_loss, p.unresolved, defect
            );
            Ok(true)
        }
        Command::Mix(a) => {
            let m = a.map.load()?;
            let f = load_observable(&a.f)?;
            let g = match &a.g {
                Some(s) => load_observable(s)?,
                None => f.clone(),
            };
            let method = match a.method {
                MixMethod::Exact => CorrelationMethod::Exact,
                MixMethod::Mc => CorrelationMethod::MonteCarlo {
                    samples: a.samples,
                    seed: cli.seed,
                },
            };
            let s = correlation_series(&m, &f, &g, a.n_max, &method)?;
            emit(a.out.as_deref(), "mix.csv", &s.csv())?;
            if let Some(fit) = s.fit {
                eprintln!("fitted rate {:.6}", fit.rate);
            }
            Ok(true)
        }
        Command::Clt(a) => {
            let m = a.map.load()?;
            let f = load_observable(&a.f)?;
            let r = birkhoff_clt_report(&m, &f, a.n, a.samples, cli.seed)?;
            emit(a.out.as_deref(), "clt.json", &(serde_json::to_string_pretty(&r)? + "\n"))?;
            eprintln!(
                "KS {:.6} (threshold {:.6}), variance slope {:.6} vs sigma^2 {:.6}",
                r.ks, r.ks_threshold, r.variance_slope, r.sigma2
            );
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            Ok(true)
        }
        Command::Repro(a) => {
            let dir = out_dir(a.out.as_deref());
            let outcome = run_recipe(&a.name, &dir, cli.seed)?;
            print!("{}", outcome.table());
            for p in &outcome.artifacts {
                eprintln!("wrote {}", p.display());
            }
            Ok(outcome.passed())
        }
    }
}

enum FamilyOp {
    Iterate(usize),
    Cut(Vec<f64>),
    Z(f64),
}
