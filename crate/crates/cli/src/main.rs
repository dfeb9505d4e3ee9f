mod eval;
mod gallery_cmd;
mod segment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spotid_core::gallery::{LightCondition, Provenance};
use spotid_core::matching::MatchMethod;

#[derive(Parser)]
#[command(name = "spotid", version, about = "Spot-pattern segmentation and identification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Method {
    Icp,
    IcpProcrustes,
}

impl From<Method> for MatchMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Icp => MatchMethod::Icp,
            Method::IcpProcrustes => MatchMethod::IcpProcrustes,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Light {
    Normal,
    Ideal,
    HardExposed,
}

impl From<Light> for LightCondition {
    fn from(l: Light) -> Self {
        match l {
            Light::Normal => LightCondition::Normal,
            Light::Ideal => LightCondition::Ideal,
            Light::HardExposed => LightCondition::HardExposed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Source {
    GroundTruth,
    Automatic,
}

impl From<Source> for Provenance {
    fn from(s: Source) -> Self {
        match s {
            Source::GroundTruth => Provenance::GroundTruth,
            Source::Automatic => Provenance::Automatic,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a cropped scale photograph into a spot mask.
    Segment {
        input: PathBuf,
        /// Flat TOML file with SegmentationParams keys; defaults otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the dark- and bright-thread masks next to the output.
        #[arg(long)]
        emit_threads: bool,
    },
    /// Rank gallery scales by dissimilarity to a query mask.
    Identify {
        mask: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long, value_enum, default_value = "icp-procrustes")]
        method: Method,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Leave this `individual:scale` out of the ranking.
        #[arg(long)]
        exclude: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Compare machine masks against ground truth (files paired by name).
    EvalSeg {
        gt_dir: PathBuf,
        seg_dir: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        report: ReportFormat,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// EER, FAR/FRR curves and Top-1/Top-5 from a dissimilarity matrix CSV.
    EvalId {
        matrix: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        report: ReportFormat,
        #[arg(long, default_value_t = spotid_core::evaluation::DEFAULT_STEPS)]
        steps: usize,
        /// Store the operating point in this gallery for the service's advisory threshold.
        #[arg(long, requires = "method")]
        calibrate: Option<PathBuf>,
        /// Method that produced the matrix (required with --calibrate).
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score every scale of a gallery against every other scale.
    BuildMatrix {
        /// Gallery providing the queries (rows).
        #[arg(long)]
        source: PathBuf,
        /// Gallery providing the targets (columns); defaults to the source.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "icp-procrustes")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic gallery with known identities.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        individuals: usize,
        #[arg(long, default_value_t = 3)]
        samples: usize,
        #[arg(long, default_value_t = 1.0)]
        jitter: f64,
        #[arg(long, default_value_t = 8.0)]
        max_rotation_deg: f64,
        #[arg(long, default_value_t = 8.0)]
        max_translation_px: f64,
        #[arg(long, default_value_t = 2016)]
        seed: u64,
    },
    /// Render a synthetic half-dark/half-overexposed scale photograph and its ground truth.
    SynthScene {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Add a mask to a gallery as a new scale sample.
    Enroll {
        mask: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        individual: String,
        /// Next free `s<n>` when omitted.
        #[arg(long)]
        scale: Option<String>,
        #[arg(long, value_enum, default_value = "normal")]
        light: Light,
        #[arg(long, value_enum, default_value = "ground-truth")]
        provenance: Source,
    },
    /// Run the review HTTP service.
    Serve {
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = spotid_service::DEFAULT_MAX_UPLOAD_BYTES)]
        max_upload_bytes: usize,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Segment {
            input,
            params,
            out,
            emit_threads,
        } => segment::segment(&input, params.as_deref(), &out, emit_threads),
        Command::Identify {
            mask,
            gallery,
            method,
            top,
            exclude,
            json,
        } => gallery_cmd::identify(&mask, &gallery, method.into(), top, exclude.as_deref(), json),
        Command::EvalSeg {
            gt_dir,
            seg_dir,
            report,
            out,
        } => eval::eval_seg(&gt_dir, &seg_dir, report, out.as_deref()),
        Command::EvalId {
            matrix,
            report,
            steps,
            calibrate,
            method,
            out,
        } => eval::eval_id(&matrix, report, steps, calibrate.as_deref(), method.map(Into::into), out.as_deref()),
        Command::BuildMatrix {
            source,
            target,
            method,
            out,
        } => eval::build_matrix(&source, target.as_deref(), method.into(), &out),
        Command::Synth {
            out,
            individuals,
            samples,
            jitter,
            max_rotation_deg,
            max_translation_px,
            seed,
        } => gallery_cmd::synth(&out, individuals, samples, jitter, max_rotation_deg, max_translation_px, seed),
        Command::SynthScene { image, gt, seed } => segment::synth_scene(&image, &gt, seed),
        Command::Enroll {
            mask,
            gallery,
            individual,
            scale,
            light,
            provenance,
        } => gallery_cmd::enroll(&mask, &gallery, &individual, scale.as_deref(), light.into(), provenance.into()),
        Command::Serve {
            gallery,
            port,
            host,
            max_upload_bytes,
        } => {
            let mut config = spotid_service::ServiceConfig::new(gallery);
            config.max_upload_bytes = max_upload_bytes;
            let addr = std::net::SocketAddr::new(host, port);
            eprintln!("serving on http://{addr}");
            tokio::runtime::Runtime::new()?.block_on(spotid_service::serve(config, addr))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
