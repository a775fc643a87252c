use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use twoac::harness::{
    density_path, emit_report, estimate, load_correspondences, ransac_iterations, write_correspondences,
    write_truth, EstimationConfig, HarnessError, VotingDomain,
};
use twoac::minimal_solver::solve_two_ac;
use twoac::root_gate::{gate_observability, FocalLimits};
use twoac::selection::SelectionConfig;
use twoac::synth::{generate, AffinityNoise, SceneConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_ESTIMATION: u8 = 3;

#[derive(Parser)]
#[command(name = "twoac", version, about = "Focal length and fundamental matrix from two affine correspondences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AffinityNoiseKind {
    Recompute,
    Additive,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and export its correspondences.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600.0)]
        focal: f64,
        #[arg(long, default_value_t = 5)]
        planes: usize,
        #[arg(long, default_value_t = 50)]
        samples_per_plane: usize,
        /// Pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        /// Factor applied to image-2 v coordinates.
        #[arg(long, default_value_t = 1.0)]
        aspect: f64,
        #[arg(long, value_enum, default_value_t = AffinityNoiseKind::Recompute)]
        affinity_noise: AffinityNoiseKind,
        /// Entry noise per pixel of sigma when --affinity-noise additive.
        #[arg(long, default_value_t = 0.01)]
        affinity_scale: f64,
        /// Correspondence file to write.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth JSON; defaults to <out>.truth.json.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Solve one pair of correspondences and list every candidate.
    Solve {
        #[arg(long)]
        matches: PathBuf,
        /// Zero-based indices of the two correspondences.
        #[arg(long, num_args = 2, default_values_t = [0, 1])]
        pair: Vec<usize>,
        #[arg(long, num_args = 2, default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
        principal_point: Vec<f64>,
        #[arg(long, default_value_t = FocalLimits::DEFAULT_MIN)]
        min_focal: f64,
        #[arg(long, default_value_t = FocalLimits::DEFAULT_MAX)]
        max_focal: f64,
    },
    /// Run the full sampling and selection pipeline.
    Estimate {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 10.0)]
        bandwidth: f64,
        #[arg(long, default_value_t = FocalLimits::DEFAULT_MIN)]
        min_focal: f64,
        #[arg(long, default_value_t = FocalLimits::DEFAULT_MAX)]
        max_focal: f64,
        #[arg(long, num_args = 2, default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
        principal_point: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Vote over relative error (percent) against this known focal length.
        #[arg(long)]
        ground_truth: Option<f64>,
        /// JSON report path; the density curve goes next to it.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print RANSAC iteration budgets.
    RansacIters {
        #[arg(long, value_delimiter = ',', default_values_t = [2, 5, 6, 7, 8])]
        sample_sizes: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.8])]
        outlier_ratios: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
}

fn exit_code(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Parse { .. } | HarnessError::Io { .. } => EXIT_PARSE,
        HarnessError::InsufficientCorrespondences(_) | HarnessError::NoSurvivingRoots | HarnessError::Selection(_) => {
            EXIT_ESTIMATION
        }
        _ => EXIT_FAILURE,
    }
}

fn load(path: &std::path::Path, pp: &[f64]) -> Result<Vec<twoac::geometry::AffineCorrespondence>, HarnessError> {
    let loaded = load_correspondences(path, (pp[0], pp[1]))?;
    if !loaded.skipped_singular.is_empty() {
        eprintln!(
            "warning: skipped {} line(s) with singular affinity: {:?}",
            loaded.skipped_singular.len(),
            loaded.skipped_singular
        );
    }
    Ok(loaded.correspondences)
}

fn limits(min: f64, max: f64) -> Result<FocalLimits, HarnessError> {
    FocalLimits::new(min, max).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Synth {
            seed,
            focal,
            planes,
            samples_per_plane,
            noise,
            outliers,
            aspect,
            affinity_noise,
            affinity_scale,
            out,
            truth,
        } => {
            let cfg = SceneConfig {
                focal,
                planes,
                samples_per_plane,
                noise_sigma: noise,
                outlier_fraction: outliers,
                aspect_ratio: aspect,
                affinity_noise: match affinity_noise {
                    AffinityNoiseKind::Recompute => AffinityNoise::Recompute,
                    AffinityNoiseKind::Additive => AffinityNoise::Additive { scale: affinity_scale },
                },
                ..SceneConfig::with_seed(seed)
            };
            let scene = generate(&cfg).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
            write_correspondences(&out, &scene.measured())?;
            let truth = truth.unwrap_or_else(|| out.with_extension("truth.json"));
            write_truth(&truth, &scene)?;
            println!(
                "wrote {} correspondences ({} outliers) to {}, ground truth to {}",
                scene.correspondences.len(),
                scene.outlier_count(),
                out.display(),
                truth.display()
            );
        }
        Command::Solve { matches, pair, principal_point, min_focal, max_focal } => {
            let acs = load(&matches, &principal_point)?;
            let limits = limits(min_focal, max_focal)?;
            let (i, j) = (pair[0], pair[1]);
            if i == j || i >= acs.len() || j >= acs.len() {
                return Err(HarnessError::InvalidConfig(format!(
                    "pair ({i}, {j}) invalid for {} correspondences",
                    acs.len()
                )));
            }
            let sample = [acs[i], acs[j]];
            let candidates = match solve_two_ac(&sample[0], &sample[1]) {
                Ok(c) => c,
                Err(e) => {
                    println!("no candidates: {e}");
                    return Err(HarnessError::NoSurvivingRoots);
                }
            };
            println!("{:>14} {:>12} {:>9} {:>10}  F (row-major)", "focal", "residual", "physical", "observable");
            for c in &candidates {
                let physical = limits.contains(c.focal);
                let observable = physical && matches!(gate_observability(c, &sample), Ok((true, _)));
                let f: Vec<String> = c.fundamental.entries().iter().map(|v| format!("{v:.6e}")).collect();
                println!(
                    "{:>14.6} {:>12.3e} {:>9} {:>10}  {}",
                    c.focal,
                    c.trace_residual,
                    physical,
                    observable,
                    f.join(" ")
                );
            }
        }
        Command::Estimate {
            matches,
            iterations,
            bandwidth,
            min_focal,
            max_focal,
            principal_point,
            seed,
            ground_truth,
            report,
        } => {
            let acs = load(&matches, &principal_point)?;
            let selection =
                SelectionConfig::new(bandwidth).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
            let cfg = EstimationConfig {
                iterations,
                selection,
                limits: limits(min_focal, max_focal)?,
                principal_point: (principal_point[0], principal_point[1]),
                seed,
                domain: match ground_truth {
                    Some(f) if f > 0.0 => VotingDomain::RelativePercent { ground_truth: f },
                    Some(f) => return Err(HarnessError::InvalidConfig(format!("ground truth {f} must be positive"))),
                    None => VotingDomain::FocalPixels,
                },
            };
            let result = estimate(&acs, &cfg)?;
            println!("focal {:.6}", result.focal);
            println!("kernel_voting_focal {:.6}", result.voting_focal);
            println!("pool {}", result.pool.len());
            let f: Vec<String> = result.fundamental.entries().iter().map(|v| format!("{v:.9e}")).collect();
            println!("F {}", f.join(" "));
            if let Some(path) = report {
                emit_report(&result, &path)?;
                println!("report {} density {}", path.display(), density_path(&path).display());
            }
        }
        Command::RansacIters { sample_sizes, outlier_ratios, confidence } => {
            print!("{:>8}", "outliers");
            for m in &sample_sizes {
                print!(" {:>10}", format!("m={m}"));
            }
            println!();
            for eps in &outlier_ratios {
                print!("{:>7}%", eps * 100.0);
                for &m in &sample_sizes {
                    print!(" {:>10}", ransac_iterations(m, *eps, confidence)?);
                }
                println!();
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
