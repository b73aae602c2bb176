//! Front end for `atseg`: argument parsing, presets, run manifests and
//! dispatch to the 1D or 2D solver.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use atseg::driver::output::OutputSink;
use atseg::driver::{run_segmentation, select_epsilon, select_scale, RunConfig, RunSummary};
use atseg::fem::{ReactionQuadrature, SegParams};
use atseg::geometry::DomainBox;
use atseg::imagefield::{pgm, Analytic, ImageField};
use clap::{ArgGroup, Parser, ValueEnum};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Lattice density used when measuring `|∇g|` for the selection rules.
const GRAD_SAMPLES_PER_CELL: usize = 4;

/// Raster of 2D snapshots for analytic inputs.
const ANALYTIC_RASTER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 1D tanh step with slope 100.
    #[value(name = "tanh1d-100")]
    Tanh1d100,
    /// 1D tanh step with slope 20, auto epsilon and auto scaling.
    #[value(name = "tanh1d-20")]
    Tanh1d20,
    /// 2D dark disc of radius 0.05.
    #[value(name = "circle2d")]
    Circle2d,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

/// Either a fixed value or the automatic selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Auto,
    Value(f64),
}

impl FromStr for Choice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Choice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Choice::Value(v)),
            Ok(_) => Err(format!("expected a positive finite number, got {s}")),
            Err(_) => Err(format!("expected 'auto' or a number, got {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Input {
    Preset(Preset),
    Image(PathBuf),
}

/// Every setting that determines a run. Serialized verbatim into the
/// manifest so a run can be repeated with `--manifest`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub input: Input,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_eps: f64,
    pub eps: Choice,
    pub scale: Choice,
    pub grad_cr: f64,
    pub n: usize,
    pub final_time: f64,
    pub macro_dt: f64,
    pub tau: f64,
    pub seed: u64,
    pub noise: f64,
    pub output_every: usize,
    pub adapt_mesh: bool,
    pub deterministic: bool,
    pub out_dir: PathBuf,
}

impl RunSpec {
    /// Defaults for a preset or for a user image.
    pub fn defaults(input: Input) -> Self {
        let base = RunSpec {
            input: input.clone(),
            alpha: 1e-3,
            beta: 1e-2,
            gamma: 1e-5,
            k_eps: 1e-10,
            eps: Choice::Auto,
            scale: Choice::Auto,
            grad_cr: 3e3,
            n: 70,
            final_time: 0.3,
            macro_dt: 0.05,
            tau: 0.01,
            seed: 42,
            noise: 0.25,
            output_every: 20,
            adapt_mesh: true,
            deterministic: false,
            out_dir: PathBuf::from("atseg-out"),
        };
        let tanh = RunSpec {
            alpha: 0.01,
            beta: 1e-3,
            gamma: 1e-3,
            k_eps: 1e-9,
            n: 200,
            final_time: 20.0,
            noise: 0.0,
            ..base.clone()
        };
        match input {
            Input::Image(_) => base,
            Input::Preset(Preset::Tanh1d100) => RunSpec {
                eps: Choice::Value(0.01),
                scale: Choice::Value(1.0),
                ..tanh
            },
            Input::Preset(Preset::Tanh1d20) => tanh,
            Input::Preset(Preset::Circle2d) => RunSpec {
                eps: Choice::Value(1e-3),
                n: 50,
                final_time: 7.0,
                noise: 0.0,
                ..base
            },
        }
    }

    pub fn dimension(&self) -> Result<usize, CliError> {
        match &self.input {
            Input::Preset(Preset::Tanh1d100 | Preset::Tanh1d20) => Ok(1),
            Input::Preset(Preset::Circle2d) => Ok(2),
            Input::Image(path) => Ok(if read_pgm(path)?.height == 1 { 1 } else { 2 }),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "atseg", version, about = "Phase-field image segmentation on an adaptive moving mesh")]
#[command(group(ArgGroup::new("source").required(true).args(["image", "preset", "manifest"])))]
pub struct Cli {
    /// Grey-scale PGM (P2/P5); a single-row image is treated as 1D.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Repeat the run recorded in a manifest; only `--out-dir` may be combined with it.
    #[arg(long, conflicts_with_all = [
        "alpha", "beta", "gamma", "keps", "eps", "grad_cr", "scale", "n", "final_time",
        "macro_dt", "tau", "seed", "noise", "deterministic", "output_every", "frozen_mesh",
    ])]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub keps: Option<f64>,
    /// `auto` or a positive value.
    #[arg(long)]
    pub eps: Option<Choice>,
    #[arg(long)]
    pub grad_cr: Option<f64>,
    /// Grey-level scale `L`: `auto` or a value ≥ 1.
    #[arg(long)]
    pub scale: Option<Choice>,
    /// Cells per side of the initial mesh.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "T")]
    pub final_time: Option<f64>,
    #[arg(long)]
    pub macro_dt: Option<f64>,
    /// Mesh relaxation time.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Half-width of the uniform noise added to g.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Omit wall-clock data from outputs so reruns are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
    /// Snapshot cadence in macro steps; 0 keeps only the final snapshot.
    #[arg(long)]
    pub output_every: Option<usize>,
    /// Keep the initial uniform mesh.
    #[arg(long)]
    pub frozen_mesh: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Solver(atseg::Error),
}

impl CliError {
    /// Process exit code: 2 usage, 3 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use atseg::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 1,
            CliError::Solver(E::Io { .. }) => 1,
            CliError::Solver(
                E::InvalidParameter(_) | E::ImageParse { .. } | E::FlatImage | E::DimensionMismatch { .. },
            ) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
            CliError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<atseg::Error> for CliError {
    fn from(e: atseg::Error) -> Self {
        CliError::Solver(e)
    }
}

/// Resolves parsed flags into a complete run specification.
pub fn resolve(cli: &Cli) -> Result<RunSpec, CliError> {
    if let Some(path) = &cli.manifest {
        let mut spec = read_manifest(path)?.spec;
        if let Some(dir) = &cli.out_dir {
            spec.out_dir = dir.clone();
        }
        return Ok(spec);
    }
    let input = match (&cli.image, cli.preset) {
        (Some(p), None) => Input::Image(p.clone()),
        (None, Some(p)) => Input::Preset(p),
        _ => return Err(CliError::Usage("exactly one of --image and --preset is required".into())),
    };
    let mut s = RunSpec::defaults(input);
    macro_rules! take {
        ($($field:ident <- $flag:ident),* $(,)?) => {
            $(if let Some(v) = cli.$flag { s.$field = v; })*
        };
    }
    take!(alpha <- alpha, beta <- beta, gamma <- gamma, k_eps <- keps, eps <- eps, grad_cr <- grad_cr,
          scale <- scale, n <- n, final_time <- final_time, macro_dt <- macro_dt, tau <- tau,
          seed <- seed, noise <- noise, output_every <- output_every);
    if let Some(dir) = &cli.out_dir {
        s.out_dir = dir.clone();
    }
    s.deterministic = cli.deterministic;
    s.adapt_mesh = !cli.frozen_mesh;
    check(&s)?;
    Ok(s)
}

fn check(s: &RunSpec) -> Result<(), CliError> {
    let positive = [
        ("--alpha", s.alpha),
        ("--beta", s.beta),
        ("--grad-cr", s.grad_cr),
        ("--T", s.final_time),
        ("--macro-dt", s.macro_dt),
        ("--tau", s.tau),
    ];
    for (flag, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Usage(format!("{flag} must be positive, got {v}")));
        }
    }
    for (flag, v) in [("--gamma", s.gamma), ("--keps", s.k_eps), ("--noise", s.noise)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CliError::Usage(format!("{flag} must be non-negative, got {v}")));
        }
    }
    if let Choice::Value(l) = s.scale {
        if l < 1.0 {
            return Err(CliError::Usage(format!("--scale must be at least 1, got {l}")));
        }
    }
    if s.n < 2 {
        return Err(CliError::Usage(format!("--n must be at least 2, got {}", s.n)));
    }
    Ok(())
}

/// Parameters that were computed rather than given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effective {
    pub dimension: usize,
    pub eps: f64,
    /// Value of the selection rule, reported even when `eps` was given.
    pub eps_rule: Option<f64>,
    pub mean_grad: f64,
    pub grad_max: f64,
    pub grad_min: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: String,
    pub message: Option<String>,
    pub phi_min: Option<f64>,
    pub phi_argmin: Option<Vec<f64>>,
    pub accepted_steps: Option<usize>,
    pub rejected_steps: Option<usize>,
    pub mesh_fallbacks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub spec: RunSpec,
    pub effective: Option<Effective>,
    pub outcome: Option<Outcome>,
    /// Wall-clock data, absent in deterministic mode.
    pub started_unix: Option<u64>,
    pub elapsed_seconds: Option<f64>,
}

impl Manifest {
    pub fn new(spec: RunSpec) -> Self {
        let started_unix = (!spec.deterministic)
            .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0));
        Manifest {
            program: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec,
            effective: None,
            outcome: None,
            started_unix,
            elapsed_seconds: None,
        }
    }
}

pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifest is always serializable");
    fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid manifest: {e}", path.display())))
}

fn read_pgm(path: &Path) -> Result<pgm::Pgm, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(pgm::parse(&bytes)?)
}

/// Selection-rule inputs are measured on the noise-free field.
fn select<const D: usize>(spec: &RunSpec, clean: &ImageField<f64, D>) -> Result<Effective, CliError> {
    let stats = clean.grad_stats(GRAD_SAMPLES_PER_CELL);
    let rule = select_epsilon(&stats, spec.alpha, spec.beta);
    let (eps, eps_rule, mean_grad) = match (spec.eps, rule) {
        (Choice::Value(e), Ok(r)) => (e, Some(r.eps), r.mean_grad),
        (Choice::Value(e), Err(_)) => (e, None, 0.0),
        (Choice::Auto, Ok(r)) => (r.eps, Some(r.eps), r.mean_grad),
        (Choice::Auto, Err(e)) => return Err(e.into()),
    };
    let scale = match spec.scale {
        Choice::Value(l) => l,
        Choice::Auto => select_scale(stats.grad_max, spec.grad_cr)?,
    };
    Ok(Effective {
        dimension: D,
        eps,
        eps_rule,
        mean_grad,
        grad_max: stats.grad_max,
        grad_min: stats.grad_min,
        scale,
    })
}

fn params(spec: &RunSpec, eff: &Effective) -> SegParams<f64> {
    SegParams {
        alpha: spec.alpha,
        beta: spec.beta,
        gamma: spec.gamma,
        k_eps: spec.k_eps,
        eps: eff.eps,
        scale: eff.scale,
        grad_cr: spec.grad_cr,
        final_time: spec.final_time,
        output_every: spec.output_every,
        reaction: ReactionQuadrature::default(),
    }
}

/// Builds the solver configuration for one dimension.
fn config<const D: usize>(
    spec: &RunSpec,
    clean: ImageField<f64, D>,
    raster: [usize; 2],
) -> Result<(RunConfig<f64, D>, Effective), CliError> {
    let eff = select(spec, &clean)?;
    let image = clean.add_noise(spec.noise, spec.seed)?;
    let mut cfg = RunConfig::new(image, params(spec, &eff), spec.n);
    cfg.macro_dt = spec.macro_dt;
    cfg.motion.tau = spec.tau;
    cfg.adapt_mesh = spec.adapt_mesh;
    cfg.output = Some(OutputSink::new(&spec.out_dir, raster));
    Ok((cfg, eff))
}

pub fn config_1d(spec: &RunSpec) -> Result<(RunConfig<f64, 1>, Effective), CliError> {
    let domain = DomainBox::<f64, 1>::unit();
    let (clean, raster) = match &spec.input {
        Input::Preset(Preset::Tanh1d100) => (ImageField::analytic(Analytic::tanh1d(100.0), domain), [0, 0]),
        Input::Preset(Preset::Tanh1d20) => (ImageField::analytic(Analytic::tanh1d(20.0), domain), [0, 0]),
        Input::Image(path) => (ImageField::<f64, 1>::load_pgm(path, domain)?, [0, 0]),
        Input::Preset(p) => return Err(CliError::Usage(format!("preset {p} is not one-dimensional"))),
    };
    config(spec, clean, raster)
}

pub fn config_2d(spec: &RunSpec) -> Result<(RunConfig<f64, 2>, Effective), CliError> {
    let domain = DomainBox::<f64, 2>::unit();
    let (clean, raster) = match &spec.input {
        Input::Preset(Preset::Circle2d) => (
            ImageField::analytic(Analytic::circle2d(), domain),
            [ANALYTIC_RASTER, ANALYTIC_RASTER],
        ),
        Input::Image(path) => {
            let img = read_pgm(path)?;
            let raster = [img.width, img.height];
            (ImageField::from_pgm(&img, domain)?, raster)
        }
        Input::Preset(p) => return Err(CliError::Usage(format!("preset {p} is not two-dimensional"))),
    };
    config(spec, clean, raster)
}

fn outcome<const D: usize>(res: &Result<RunSummary<f64, D>, atseg::Error>) -> Outcome {
    match res {
        Ok(s) => {
            let (x, v) = s.phi_argmin();
            Outcome {
                status: "ok".into(),
                message: None,
                phi_min: Some(v),
                phi_argmin: Some(x.to_vec()),
                accepted_steps: Some(s.stats.accepted),
                rejected_steps: Some(s.stats.rejected),
                mesh_fallbacks: Some(s.mesh_fallbacks),
            }
        }
        Err(e) => Outcome {
            status: "failed".into(),
            message: Some(e.to_string()),
            phi_min: None,
            phi_argmin: None,
            accepted_steps: None,
            rejected_steps: None,
            mesh_fallbacks: None,
        },
    }
}

fn execute<const D: usize>(
    mut manifest: Manifest,
    built: Result<(RunConfig<f64, D>, Effective), CliError>,
) -> Result<Manifest, CliError> {
    let (cfg, eff) = built?;
    log::info!(
        "eps = {:e} (rule {:?}), L = {}, seed = {}, noise = {}",
        eff.eps,
        eff.eps_rule,
        eff.scale,
        manifest.spec.seed,
        manifest.spec.noise
    );
    manifest.effective = Some(eff);
    let dir = manifest.spec.out_dir.clone();
    write_manifest(&manifest, &dir)?;
    let clock = Instant::now();
    let res = run_segmentation(&cfg);
    manifest.outcome = Some(outcome(&res));
    if !manifest.spec.deterministic {
        manifest.elapsed_seconds = Some(clock.elapsed().as_secs_f64());
    }
    write_manifest(&manifest, &dir)?;
    res?;
    Ok(manifest)
}

/// Runs a resolved specification, writing outputs and the manifest into
/// `spec.out_dir`.
pub fn run(spec: RunSpec) -> Result<Manifest, CliError> {
    check(&spec)?;
    let dim = spec.dimension()?;
    let manifest = Manifest::new(spec);
    match dim {
        1 => {
            let built = config_1d(&manifest.spec);
            execute(manifest, built)
        }
        _ => {
            let built = config_2d(&manifest.spec);
            execute(manifest, built)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("atseg").chain(args.iter().copied()))
    }

    #[test]
    fn tanh_preset_with_explicit_eps() {
        let s = resolve(&parse(&["--preset", "tanh1d-100", "--eps", "0.01"]).unwrap()).unwrap();
        assert_eq!(s.input, Input::Preset(Preset::Tanh1d100));
        assert_eq!((s.alpha, s.beta, s.gamma, s.k_eps), (0.01, 1e-3, 1e-3, 1e-9));
        assert_eq!(s.eps, Choice::Value(0.01));
        assert_eq!(s.scale, Choice::Value(1.0));
        assert_eq!((s.n, s.final_time, s.seed), (200, 20.0, 42));
    }

    #[test]
    fn circle_preset() {
        let s = resolve(&parse(&["--preset", "circle2d", "--eps", "1e-3"]).unwrap()).unwrap();
        assert_eq!((s.alpha, s.beta, s.gamma, s.k_eps), (1e-3, 1e-2, 1e-5, 1e-10));
        assert_eq!((s.n, s.final_time, s.scale), (50, 7.0, Choice::Auto));
        assert_eq!(s.grad_cr, 3e3);
        let (cfg, eff) = config_2d(&s).unwrap();
        assert!((eff.grad_max - 24.4955).abs() < 1e-3);
        assert!((eff.scale - 3e3 / eff.grad_max).abs() < 1e-12);
        assert_eq!(cfg.params.scale, eff.scale);
    }

    #[test]
    fn auto_selection_path() {
        let s = resolve(&parse(&["--preset", "tanh1d-20", "--eps", "auto", "--scale", "auto"]).unwrap()).unwrap();
        let (_, eff) = config_1d(&s).unwrap();
        assert!((eff.grad_max - 10.0).abs() < 5e-3);
        assert_eq!(eff.scale, 3e3 / eff.grad_max);
        let expect = 1e-3 / (2.0 * 0.01 * eff.mean_grad * eff.mean_grad);
        assert_eq!(Some(eff.eps), eff.eps_rule);
        assert!((eff.eps - expect).abs() < 1e-15);
    }

    #[test]
    fn overrides_apply() {
        let s = resolve(
            &parse(&[
                "--preset", "tanh1d-100", "--alpha", "0.5", "--n", "33", "--T", "2", "--macro-dt", "0.1", "--tau",
                "0.2", "--seed", "7", "--noise", "0.1", "--frozen-mesh", "--deterministic",
            ])
            .unwrap(),
        )
        .unwrap();
        assert_eq!((s.alpha, s.n, s.final_time, s.macro_dt, s.tau), (0.5, 33, 2.0, 0.1, 0.2));
        assert_eq!((s.seed, s.noise, s.adapt_mesh, s.deterministic), (7, 0.1, false, true));
    }

    #[test]
    fn usage_errors() {
        assert!(parse(&[]).is_err());
        assert!(parse(&["--preset", "circle2d", "--image", "x.pgm"]).is_err());
        assert!(parse(&["--preset", "circle2d", "--bogus"]).is_err());
        assert!(parse(&["--preset", "nope"]).is_err());
        assert!(parse(&["--preset", "circle2d", "--eps", "-1"]).is_err());
        assert!(parse(&["--manifest", "m.json", "--alpha", "1"]).is_err());
        let err = resolve(&parse(&["--preset", "circle2d", "--scale", "0.5"]).unwrap()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = resolve(&parse(&["--preset", "circle2d", "--n", "1"]).unwrap()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn choice_parsing() {
        assert_eq!("auto".parse::<Choice>().unwrap(), Choice::Auto);
        assert_eq!("AUTO".parse::<Choice>().unwrap(), Choice::Auto);
        assert_eq!("2.5".parse::<Choice>().unwrap(), Choice::Value(2.5));
        assert!("0".parse::<Choice>().is_err());
        assert!("nan".parse::<Choice>().is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let spec = RunSpec::defaults(Input::Image(PathBuf::from("a b.pgm")));
        let mut m = Manifest::new(spec);
        m.effective = Some(Effective {
            dimension: 2,
            eps: 3e-5,
            eps_rule: Some(3e-5),
            mean_grad: 4.0,
            grad_max: 8.0,
            grad_min: 0.0,
            scale: 375.0,
        });
        let text = serde_json::to_string(&m).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(text.contains("\"seed\":42"));
        assert!(text.contains("\"eps\":3e-5") || text.contains("\"eps\":0.00003"));
    }

    #[test]
    fn deterministic_manifest_has_no_clock() {
        let mut spec = RunSpec::defaults(Input::Preset(Preset::Tanh1d100));
        spec.deterministic = true;
        let m = Manifest::new(spec);
        assert_eq!(m.started_unix, None);
    }
}
