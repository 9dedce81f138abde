//! Command-line surface: data generation, set construction, single-cell
//! synthesis, result validation, full benchmark reproduction and a quick
//! self-test.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use setmem::experiments::{
    self, assemble_plant, build_sets, config_from_map, config_to_map, generate_data,
    read_dataset, write_dataset, ConstraintKind, PriorKind, ScenarioConfig,
};
use setmem::fileio::{self, KvMap};
use setmem::synth::{self, BoundCheck, SynthesisOptions};
use setmem::Estimator64;

#[derive(Parser)]
#[command(
    name = "setmem",
    about = "Set-membership identification and robust estimator synthesis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario configuration file (flat key = value text).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in benchmark preset (1 or 2) used when no config is given.
    #[arg(long)]
    example: Option<u8>,
    /// Seed override for data generation.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it (x.csv, y.csv, wp.csv, meta.txt).
    GenData {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build every prior, per-sample and structural description and write
    /// the bundle.
    BuildSets {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Existing dataset directory; regenerated from the config when
        /// absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize one grid cell and write the estimator plus its report.
    Synth {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Prior column: stacked | ball | informativity | combined.
        #[arg(long)]
        prior: String,
        /// Constraint row: none | data | structural | combined.
        #[arg(long)]
        constraints: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check a stored synthesis result; exits 2 on refutation.
    Validate {
        /// Result directory written by `synth`.
        #[arg(long)]
        result: PathBuf,
        /// Number of sampled plants driven through the closed loop.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Run a full benchmark grid and write table.csv / table.md.
    Reproduce {
        /// Benchmark preset: 1 or 2.
        #[arg(long)]
        example: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quick property suite; exits nonzero on any failure.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::GenData { scenario, out } => {
            let cfg = resolve_config(&scenario)?;
            let ds = generate_data(&cfg)?;
            write_dataset(&cfg, &ds, &out)?;
            println!(
                "wrote dataset with {} samples to {}",
                cfg.n_samples,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::BuildSets { scenario, data, out } => {
            let (cfg, ds) = load_or_generate(&scenario, data.as_deref())?;
            let sets = build_sets(&cfg, &ds)?;
            write_bundle(&out, &sets)?;
            println!("wrote description bundle to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth {
            scenario,
            data,
            prior,
            constraints,
            out,
        } => {
            let (cfg, ds) = load_or_generate(&scenario, data.as_deref())?;
            let prior = PriorKind::parse(&prior)?;
            let cset = ConstraintKind::parse(&constraints)?;
            let sets = build_sets(&cfg, &ds)?;
            let plant = assemble_plant(&cfg, &sets, prior, cset)?;
            let opts = SynthesisOptions::default();
            let result = synth::synthesize(&plant, &opts)?;
            let check = synth::verify_robust_bound(&plant, &result.estimator, result.gamma, &opts)?;
            let certified = matches!(check, BoundCheck::Certified { .. });
            let report =
                synth::validate_by_sampling(&plant, &result, cfg.validation_samples, cfg.seed)?;
            write_result(&out, &cfg, prior, cset, &result, certified, &report)?;
            println!(
                "gamma = {:.6} (certified: {certified}, sampled max ratio {:.4})",
                result.gamma, report.max_ratio
            );
            if !certified || !report.pass {
                bail!("synthesis produced a bound that failed re-verification");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { result, samples } => {
            let verdict = validate_result(&result, samples)?;
            match verdict {
                Ok(detail) => {
                    println!("PASS: {detail}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(report) => {
                    eprintln!("REFUTED: {report}");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Reproduce { example, seed, out } => {
            let table = experiments::reproduce(example, seed, &out)?;
            print!("{}", table.to_markdown());
            println!("wrote {} and table.md", out.join("table.csv").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest { seed } => {
            let mut failed = 0;
            for (name, pass, detail) in experiments::selftest(seed) {
                println!("{}: {name} ({detail})", if pass { "PASS" } else { "FAIL" });
                if !pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                bail!("{failed} self-test check(s) failed");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn resolve_config(args: &ScenarioArgs) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match (&args.config, args.example) {
        (Some(path), _) => config_from_map(&KvMap::read(path)?)
            .with_context(|| format!("reading {}", path.display()))?,
        (None, Some(example)) => experiments::preset_config(example, 0)?,
        (None, None) => bail!("provide --config or --example"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_or_generate(
    args: &ScenarioArgs,
    data: Option<&Path>,
) -> anyhow::Result<(ScenarioConfig, experiments::Dataset)> {
    if let Some(dir) = data {
        let (cfg, ds) = read_dataset(dir)?;
        return Ok((cfg, ds));
    }
    let cfg = resolve_config(args)?;
    let ds = generate_data(&cfg)?;
    Ok((cfg, ds))
}

fn write_bundle(dir: &Path, sets: &experiments::ScenarioSets) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let mut write_group = |group: &str,
                           map: &std::collections::BTreeMap<PriorKind, experiments::BlockQmis>|
     -> anyhow::Result<()> {
        for (kind, block) in map {
            for (label, list) in [("ab", &block.ab), ("cd", &block.cd)] {
                for (i, q) in list.iter().enumerate() {
                    let name = format!("{group}_{}_{label}_{i:03}.qmi", kind.name());
                    fileio::write_qmi(&dir.join(&name), q)?;
                    manifest.push_str(&name);
                    manifest.push('\n');
                }
            }
        }
        Ok(())
    };
    write_group("prior", &sets.priors)?;
    write_group("data", &sets.data_qmis)?;
    write_group("structural", &sets.structural_qmis)?;
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn write_result(
    dir: &Path,
    cfg: &ScenarioConfig,
    prior: PriorKind,
    cset: ConstraintKind,
    result: &synth::SynthesisResult<f64>,
    certified: bool,
    report: &synth::ValidationReport<f64>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    fileio::write_matrix(&dir.join("ae.csv"), &result.estimator.a_e)?;
    fileio::write_matrix(&dir.join("be.csv"), &result.estimator.b_e)?;
    fileio::write_matrix(&dir.join("ce.csv"), &result.estimator.c_e)?;
    fileio::write_matrix(&dir.join("de.csv"), &result.estimator.d_e)?;
    config_to_map(cfg).write(&dir.join("config.txt"))?;
    let mut kv = KvMap::new();
    kv.set("gamma", result.gamma);
    kv.set("prior", prior.name());
    kv.set("constraints", cset.name());
    kv.set("certified", certified);
    kv.set("validated", report.pass);
    kv.set("validation.max_ratio", report.max_ratio);
    kv.set("validation.samples", report.samples);
    let taus: Vec<String> = result
        .multipliers
        .taus()
        .iter()
        .map(|v| v.to_string())
        .collect();
    let lambdas: Vec<String> = result
        .multipliers
        .lambdas()
        .iter()
        .map(|v| v.to_string())
        .collect();
    kv.set("multipliers.base", taus.join(", "));
    kv.set("multipliers.extra", lambdas.join(", "));
    kv.write(&dir.join("result.txt"))?;
    Ok(())
}

/// Re-checks a stored result: rebuilds the scenario sets deterministically
/// from the embedded config, then requires both the Lyapunov certificate and
/// the sampled closed loops to confirm the stored γ.
fn validate_result(dir: &Path, samples: usize) -> anyhow::Result<Result<String, String>> {
    let kv = KvMap::read(&dir.join("result.txt"))?;
    let cfg = config_from_map(&KvMap::read(&dir.join("config.txt"))?)?;
    let gamma = kv.get_f64("gamma")?;
    let prior = PriorKind::parse(kv.get_str("prior")?)?;
    let cset = ConstraintKind::parse(kv.get_str("constraints")?)?;
    let estimator = Estimator64::new(
        fileio::read_matrix(&dir.join("ae.csv"))?,
        fileio::read_matrix(&dir.join("be.csv"))?,
        fileio::read_matrix(&dir.join("ce.csv"))?,
        fileio::read_matrix(&dir.join("de.csv"))?,
    )?;

    let ds = generate_data(&cfg)?;
    let sets = build_sets(&cfg, &ds)?;
    let plant = assemble_plant(&cfg, &sets, prior, cset)?;
    let opts = SynthesisOptions::default();
    match synth::verify_robust_bound(&plant, &estimator, gamma, &opts)? {
        BoundCheck::Certified { margin, .. } => {
            let shim = synth::SynthesisResult {
                estimator: estimator.clone(),
                gamma,
                multipliers: setmem::qmi::MultiplierVector::new(vec![0.0, 0.0], vec![])
                    .map_err(|e| anyhow!(e.to_string()))?,
                lyapunov: nalgebra::DMatrix::zeros(0, 0),
                solver_status: String::new(),
                solver_violation: 0.0,
            };
            let report = synth::validate_by_sampling(&plant, &shim, samples, cfg.seed ^ 0xda7a)?;
            if report.pass {
                Ok(Ok(format!(
                    "gamma {gamma:.6} certified (margin {margin:.2e}) and confirmed on {} sampled plants (max ratio {:.4})",
                    report.samples, report.max_ratio
                )))
            } else {
                Ok(Err(format!(
                    "sampled closed loop exceeds the stored bound: worst norm {:.6} vs gamma {gamma:.6}",
                    report.worst_norm
                )))
            }
        }
        BoundCheck::Refuted { report } => Ok(Err(report)),
    }
}
