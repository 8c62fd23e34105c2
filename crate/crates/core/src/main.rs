#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use smoothing_lab::cascade::{self, StoppingLineConfig};
use smoothing_lab::conditions::check_conditions;
use smoothing_lab::diagnostics::{self, default_probe_count, default_radii, sphere_grid};
use smoothing_lab::io::{self, fmt_f64, fmt_opt, manifest_path, RunManifest};
use smoothing_lab::spectral::{self, AlphaSearch, ProfileConfig};
use smoothing_lab::support::{self, cone_hull, empirical_support_check, enumerate_semigroup, lambda_set};
use smoothing_lab::{Error, ModelSpec, Result};

#[derive(Parser)]
#[command(name = "smoothing-lab", version, about = "Fixed points of the smoothing transform with matrix weights")]
struct Cli {
    /// Seed for every random choice; required by sampling subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    /// Pool iteration when m(1) = 1, stopping-line sampler otherwise.
    Auto,
    Iterate,
    StoppingLine,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the fixed point and write a pool snapshot.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        rounds: usize,
        /// Initial pool value, comma separated (default: Perron vector of E[Σ A_i]).
        #[arg(long, value_delimiter = ',')]
        init: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Branching levels of the stopping-line sampler.
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// κ(s), m(s), κ̃(s), γ, α and a₀.
    Spectrum {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        s_min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        s_max: f64,
        #[arg(long, default_value_t = 0.25)]
        s_step: f64,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        /// Fail with exit code 3 when no α is found.
        #[arg(long)]
        require_alpha: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Eigen-directions, support hull and l1/l2 witnesses.
    Support {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        /// Pool snapshot to compare with the hull.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transform decay, survival counts, harmonic moments and small balls.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long, default_value_t = 128)]
        directions: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.02,0.05,0.1,0.2")]
        deltas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.4,1.5")]
        harmonic_b: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Verdict table for the structural conditions.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("global pool set once");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::InvalidArgument(format!("{command} needs --seed")))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, k, rounds, init, method, levels, out } => {
            let seed = require_seed(cli.seed, "simulate")?;
            let spec = ModelSpec::load(&model)?;
            simulate(&spec, &model, seed, k, rounds, init, method, levels, &out)
        }
        Command::Spectrum { model, s_min, s_max, s_step, grid, trials, require_alpha, out_dir } => {
            let seed = require_seed(cli.seed, "spectrum")?;
            let spec = ModelSpec::load(&model)?;
            if !(s_step > 0.0) || s_max < s_min {
                return Err(Error::InvalidArgument("need s_step > 0 and s_max >= s_min".into()));
            }
            let n = ((s_max - s_min) / s_step + 1e-9).floor() as usize;
            let s_grid: Vec<f64> = (0..=n).map(|i| s_min + i as f64 * s_step).collect();
            let config = ProfileConfig { s_grid, grid_size: grid, trials, seed, ..Default::default() };
            spectrum(&spec, &model, &config, require_alpha, &out_dir)
        }
        Command::Support { model, depth, pool, out } => {
            let spec = ModelSpec::load(&model)?;
            support_cmd(&spec, &model, depth, pool.as_deref(), &out)
        }
        Command::Diagnose { model, pool, probes, directions, deltas, harmonic_b, out_dir } => {
            let spec = ModelSpec::load(&model)?;
            let pool_data = io::read_pool_csv(&pool)?;
            if pool_data.dim() != spec.dim() {
                return Err(Error::DimensionMismatch { expected: spec.dim(), got: pool_data.dim() });
            }
            let probes = probes.unwrap_or_else(|| default_probe_count(spec.dim()));
            diagnose(&spec, &model, &pool, &pool_data, probes, directions, &deltas, &harmonic_b, &out_dir)
        }
        Command::Check { model, depth } => {
            let spec = ModelSpec::load(&model)?;
            let verdicts = check_conditions(&spec, depth)?;
            println!("{:<10} {:<30} {:<8} detail", "condition", "name", "status");
            for v in verdicts {
                println!("{:<10} {:<30} {:<8} {}", v.condition, v.name, v.status.as_str(), v.detail);
            }
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    spec: &ModelSpec,
    model: &Path,
    seed: u64,
    k: usize,
    rounds: usize,
    init: Option<Vec<f64>>,
    method: Method,
    levels: usize,
    out: &Path,
) -> Result<()> {
    let mut manifest = RunManifest::new(model, "simulate", Some(seed));
    manifest.param("k", k);
    let critical = (spec.m_one() - 1.0).abs() <= 1e-9;
    let pool = match (method, critical) {
        (Method::Iterate, _) | (Method::Auto, true) => {
            let init = match init {
                Some(v) => v,
                None => cascade::default_init(spec)?,
            };
            manifest.param("method", "iterate").param("rounds", rounds).param("init", &init);
            cascade::run_fixed_point(spec, k, rounds, &init, seed)?.pool
        }
        _ => {
            let alpha = spectral::find_alpha(spec, 1e-9, AlphaSearch { seed: rng_tag(seed), ..Default::default() })?;
            manifest.param("method", "stopping-line").param("alpha", alpha.alpha).param("levels", levels);
            cascade::stopping_line_pool(spec, k, StoppingLineConfig { alpha: alpha.alpha, levels }, seed)?
        }
    };
    create_parent(out)?;
    io::write_pool_csv(out, &pool)?;
    manifest.output_paths.push(out.to_path_buf());
    io::write_json(&manifest_path(out), &manifest)?;
    println!("wrote {} samples of dimension {} to {}", pool.len(), pool.dim(), out.display());
    Ok(())
}

fn rng_tag(seed: u64) -> u64 {
    smoothing_lab::rng::derive(seed, 0xA1FA)
}

fn spectrum(spec: &ModelSpec, model: &Path, config: &ProfileConfig, require_alpha: bool, out_dir: &Path) -> Result<()> {
    let profile = spectral::spectral_profile(spec, config)?;
    if require_alpha && profile.alpha.is_none() {
        return Err(Error::NotFound("no root of m(s) = 1 in (0, 1]".into()));
    }
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("spectrum.csv");
    let rows: Vec<Vec<String>> = (0..profile.s_grid.len())
        .map(|i| {
            vec![
                fmt_f64(profile.s_grid[i]),
                fmt_f64(profile.kappa[i].value),
                fmt_f64(profile.kappa[i].stderr),
                fmt_f64(profile.m[i].value),
                fmt_opt(profile.kappa_tilde[i]),
            ]
        })
        .collect();
    io::write_table(&csv_path, &["s", "kappa", "stderr", "m", "kappa_tilde"], &rows)?;
    let json_path = out_dir.join("spectrum.json");
    let summary = json!({
        "gamma": profile.gamma.value,
        "gamma_stderr": profile.gamma.stderr,
        "log_inverse_mean_n": -spec.expected_n().ln(),
        "alpha": profile.alpha,
        "a0": profile.a0,
        "m_one": spec.m_one(),
        "expected_n": spec.expected_n(),
        "prob_n_one": spec.prob_n_equals(1),
    });
    io::write_json(&json_path, &summary)?;
    let mut manifest = RunManifest::new(model, "spectrum", Some(config.seed));
    manifest.param("config", config);
    manifest.output_paths = vec![csv_path, json_path.clone()];
    io::write_json(&manifest_path(&json_path), &manifest)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn support_cmd(spec: &ModelSpec, model: &Path, depth: usize, pool: Option<&Path>, out: &Path) -> Result<()> {
    let enumeration = enumerate_semigroup(spec, depth)?;
    let lambda = lambda_set(&enumeration)?;
    let search = support::search_l1_l2(spec, depth)?;
    let hull = if lambda.directions.is_empty() { None } else { Some(cone_hull(&lambda.points(), spec.esssup_n())?) };
    let check = match (pool, &hull) {
        (Some(p), Some(h)) => Some(empirical_support_check(&io::read_pool_csv(p)?, h, support::MEMBERSHIP_TOL)?),
        _ => None,
    };
    let summary = json!({
        "lambda_directions": lambda.directions,
        "lambda_stable": lambda.stable,
        "hull_extremes": hull.as_ref().map(|h| &h.extremes),
        "inside_fraction": check.as_ref().map(|c| c.inside_fraction),
        "gaps": check.as_ref().map(|c| &c.gaps),
        "l1": search.l1.as_ref().map(|w| json!({"matrix": w.matrix, "radius": w.radius})),
        "l2": search.l2.as_ref().map(|w| json!({"matrix": w.matrix, "radius": w.radius})),
        "certificates": {
            "l1": search.l1.as_ref().map(|w| &w.certificate),
            "l2": search.l2.as_ref().map(|w| &w.certificate),
            "depth": search.depth,
        },
    });
    create_parent(out)?;
    io::write_json(out, &summary)?;
    let mut manifest = RunManifest::new(model, "support", None);
    manifest.param("depth", depth).param("pool", pool);
    manifest.output_paths.push(out.to_path_buf());
    io::write_json(&manifest_path(out), &manifest)?;
    println!(
        "{} directions, inside_fraction = {}, l1 = {}, l2 = {}",
        lambda.directions.len(),
        check.as_ref().map_or("n/a".to_string(), |c| c.inside_fraction.to_string()),
        search.l1.as_ref().map_or("none".to_string(), |w| w.radius.to_string()),
        search.l2.as_ref().map_or("none".to_string(), |w| w.radius.to_string()),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn diagnose(
    spec: &ModelSpec,
    model: &Path,
    pool_path: &Path,
    pool: &cascade::SamplePool,
    probes: usize,
    directions: usize,
    deltas: &[f64],
    harmonic_b: &[f64],
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let curve = diagnostics::transform_curve(pool, &default_radii(), probes)?;
    let curve_path = out_dir.join("curve.csv");
    let rows: Vec<Vec<String>> = (0..curve.radii.len())
        .map(|i| vec![fmt_f64(curve.radii[i]), fmt_f64(curve.modulus[i]), fmt_f64(curve.stderr[i])])
        .collect();
    io::write_table(&curve_path, &["radius", "sup_modulus", "stderr"], &rows)?;
    let fit = diagnostics::decay_fit(&curve);

    let t_grid = sphere_grid(spec.dim(), directions);
    let kills = diagnostics::kill_counts(spec, &t_grid, deltas)?;
    let kill_path = out_dir.join("killcounts.csv");
    let mut header: Vec<String> = (1..=spec.dim()).map(|i| format!("t{i}")).collect();
    header.extend(["delta", "mean", "law"].map(String::from));
    let mut rows = Vec::new();
    for (ti, t) in kills.t_grid.iter().enumerate() {
        for (di, &delta) in kills.delta_grid.iter().enumerate() {
            let mut row: Vec<String> = t.iter().map(|&x| fmt_f64(x)).collect();
            row.push(fmt_f64(delta));
            row.push(fmt_f64(kills.means[ti][di]));
            let law: Vec<String> = kills.counts[ti][di].iter().map(|(n, p)| format!("{n}:{}", fmt_f64(*p))).collect();
            row.push(law.join(";"));
            rows.push(row);
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    io::write_table(&kill_path, &header_refs, &rows)?;

    let harmonic: Vec<_> = harmonic_b
        .iter()
        .map(|&b| diagnostics::harmonic_moment(pool, b, diagnostics::HARMONIC_FLOORS[1]))
        .collect::<Result<_>>()?;
    let small_ball = diagnostics::small_ball_exponent(pool, None);

    let summary = json!({
        "a_hat_ecf": fit.as_ref().ok().map(|f| json!({"a_hat": f.a_hat, "ci": [f.ci.0, f.ci.1], "radii_used": f.radii_used})),
        "a_hat_ecf_error": fit.as_ref().err().map(|e| e.to_string()),
        "min_E_Ndelta": kills.delta_grid.iter().zip(&kills.min_mean).map(|(d, m)| json!({"delta": d, "min_mean": m})).collect::<Vec<_>>(),
        "delta0": kills.delta0(0.0),
        "a0_smallball": small_ball.as_ref().ok().map(|s| json!({"slope": s.slope, "ci": [s.ci.0, s.ci.1]})),
        "a0_smallball_error": small_ball.as_ref().err().map(|e| e.to_string()),
        "harmonic_table": harmonic,
    });
    let json_path = out_dir.join("diagnose.json");
    io::write_json(&json_path, &summary)?;
    let mut manifest = RunManifest::new(model, "diagnose", None);
    manifest
        .param("pool", pool_path)
        .param("probes", probes)
        .param("directions", directions)
        .param("deltas", deltas)
        .param("harmonic_b", harmonic_b)
        .param("radii", &curve.radii);
    manifest.output_paths = vec![curve_path, kill_path, json_path.clone()];
    io::write_json(&manifest_path(&json_path), &manifest)?;
    println!(
        "a_hat_ecf = {}, min E[N_0] = {}",
        fit.as_ref().map_or("n/a".to_string(), |f| f.a_hat.to_string()),
        kills.min_mean[0]
    );
    Ok(())
}
