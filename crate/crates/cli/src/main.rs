use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use stabhmm::io::{self, Dataset, ManifestEntry, Role, RunHeader};
use stabhmm::synth::{self, GeneratorSpec};
use stabhmm::{
    em_fit, empirical_shortcut_fit, random_init, stabilize, uniform_init, EmConfig, Error,
    ModelKind, ModelParams64, StabilizeMode, ZeroRowPolicy,
};

mod spec;

#[derive(Parser)]
#[command(
    name = "stabhmm",
    version,
    about = "Stabilize per-frame phase and tool predictions with a coupled HMM"
)]
struct Cli {
    /// Worker threads for per-video work (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Uniform,
    Random,
    /// Count labelled frames directly.
    Shortcut,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Coupled,
    ToolOnly,
    PhaseOnly,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Coupled => ModelKind::Coupled,
            Kind::ToolOnly => ModelKind::ToolOnly,
            Kind::PhaseOnly => ModelKind::PhaseOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Map,
    Marginal,
    /// Viterbi phases, thresholded tool posteriors.
    Hybrid,
}

impl From<Mode> for StabilizeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Map => StabilizeMode::Map,
            Mode::Marginal => StabilizeMode::Marginal,
            Mode::Hybrid => StabilizeMode::Hybrid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ZeroRows {
    KeepPrevious,
    Uniform,
}

fn probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if (0.0..=1.0).contains(&x) => Ok(x),
        _ => Err(format!("`{s}` is not a number in [0, 1]")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit parameters with semi-supervised EM on the manifest's train videos.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "coupled")]
        kind: Kind,
        #[arg(long, value_enum, default_value = "uniform")]
        init: Init,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        /// Relative log-likelihood improvement below which EM stops.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 0.0)]
        pseudocount: f64,
        #[arg(long, value_enum, default_value = "keep-previous")]
        zero_rows: ZeroRows,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration log-likelihood CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Write stabilized labels for every video. Truth labels of train videos
    /// are honoured; those of test videos are ignored.
    Stabilize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value = "hybrid")]
        mode: Mode,
        #[arg(long, default_value = "0.5", value_parser = probability)]
        cutoff: f64,
        #[arg(long)]
        out: PathBuf,
        /// Posterior marginals CSV.
        #[arg(long)]
        marginals: Option<PathBuf>,
    },
    /// Score raw and stabilized outputs on the manifest's test videos.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "0.5", value_parser = probability)]
        cutoff: f64,
        #[arg(long)]
        out: PathBuf,
        /// Stabilized precision-recall curves CSV.
        #[arg(long)]
        pr_curves: Option<PathBuf>,
    },
    /// Sample a synthetic dataset from the generative model.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let result = match pool.build() {
        Ok(pool) => pool.install(|| run(cli.command)),
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(1);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn check_space(params: &ModelParams64, data: &Dataset, params_path: &Path) -> stabhmm::Result<()> {
    if params.space != data.space {
        return Err(Error::Schema {
            path: params_path.into(),
            message: "label space differs from the manifest's".into(),
        });
    }
    Ok(())
}

fn run(command: Command) -> stabhmm::Result<()> {
    match command {
        Command::Fit {
            manifest,
            kind,
            init,
            seed,
            max_iters,
            tol,
            pseudocount,
            zero_rows,
            out,
            trace,
        } => {
            let data = io::load_videos(&manifest)?;
            let train = data.with_role(Role::Train);
            if train.is_empty() {
                return Err(Error::EmptyDataset);
            }
            let kind = ModelKind::from(kind);
            let (init_name, start) = match init {
                Init::Uniform => ("uniform", uniform_init(&data.space, kind)?),
                Init::Random => ("random", random_init(&data.space, kind, seed)?),
                Init::Shortcut => (
                    "shortcut",
                    empirical_shortcut_fit(&train, &data.space, kind)?.params,
                ),
            };
            let config = EmConfig {
                max_iters,
                loglik_rel_tol: tol,
                zero_row_policy: match zero_rows {
                    ZeroRows::KeepPrevious => ZeroRowPolicy::KeepPrevious,
                    ZeroRows::Uniform => ZeroRowPolicy::Uniform,
                },
                smoothing_pseudocount: pseudocount,
            };
            let (params, em_trace) = em_fit(&train, &start, &config)?;
            let header = RunHeader::new("fit", Some(seed))
                .with("manifest", path_str(&manifest))
                .with("kind", kind.as_str())
                .with("init", init_name)
                .with("max_iters", max_iters)
                .with("tol", tol)
                .with("pseudocount", pseudocount)
                .with("zero_rows", json!(config.zero_row_policy))
                .with("iterations", em_trace.iterations)
                .with("stop", json!(em_trace.stop));
            io::save_params(&out, &params, &header)?;
            if let Some(path) = trace {
                io::write_trace_csv(&path, &em_trace.log_likelihoods, &header)?;
            }
            eprintln!(
                "fit: {} train videos, {} iterations ({:?}), log-likelihood {}",
                train.len(),
                em_trace.iterations,
                em_trace.stop,
                em_trace.log_likelihoods.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Stabilize {
            manifest,
            params: params_path,
            mode,
            cutoff,
            out,
            marginals,
        } => {
            let data = io::load_videos(&manifest)?;
            let params = io::load_params(&params_path)?;
            check_space(&params, &data, &params_path)?;
            let mode = StabilizeMode::from(mode);
            let results = data
                .videos
                .par_iter()
                .map(|(role, v)| {
                    let input = if *role == Role::Test {
                        v.without_truth()
                    } else {
                        v.clone()
                    };
                    stabilize(&input, &params, mode, cutoff)
                })
                .collect::<stabhmm::Result<Vec<_>>>()?;
            let header = RunHeader::new("stabilize", None)
                .with("manifest", path_str(&manifest))
                .with("params", path_str(&params_path))
                .with("mode", json!(mode))
                .with("cutoff", cutoff);
            // Test videos were stabilized blind; their truth goes back in
            // the output for reference only.
            let videos: Vec<_> = results
                .iter()
                .zip(&data.videos)
                .map(|(s, (_, original))| restore_truth(&s.video, original))
                .collect::<stabhmm::Result<_>>()?;
            io::write_stabilized_csv(&out, &data.space, &videos, &header)?;
            if let Some(path) = marginals {
                let pairs: Vec<_> = videos
                    .iter()
                    .zip(&results)
                    .map(|(v, s)| (v, &s.marginals))
                    .collect();
                io::write_marginals_csv(
                    &path,
                    &data.space,
                    &pairs,
                    params.kind.uses_phases(),
                    &header,
                )?;
            }
            eprintln!("stabilize: {} videos", videos.len());
            Ok(())
        }
        Command::Evaluate {
            manifest,
            params: params_path,
            cutoff,
            out,
            pr_curves,
        } => {
            let data = io::load_videos(&manifest)?;
            let params = io::load_params(&params_path)?;
            check_space(&params, &data, &params_path)?;
            let test = data.with_role(Role::Test);
            if test.is_empty() {
                return Err(Error::Schema {
                    path: manifest,
                    message: "no test videos to evaluate".into(),
                });
            }
            let ev = stabhmm::evaluate(&test, &params, cutoff)?;
            let header = RunHeader::new("evaluate", None)
                .with("manifest", path_str(&manifest))
                .with("params", path_str(&params_path))
                .with("cutoff", cutoff)
                .with("test_videos", test.len());
            io::write_report_csv(&out, &ev.rows, &header)?;
            if let Some(path) = pr_curves {
                io::write_pr_curves_csv(&path, &ev.pr_curves, &header)?;
            }
            let show = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{v:.4}"));
            eprintln!(
                "evaluate: mAP {} -> {}, phase accuracy {} -> {}",
                show(ev.raw_map),
                show(ev.stabilized_map),
                show(ev.raw_phase_accuracy),
                show(ev.stabilized_phase_accuracy)
            );
            Ok(())
        }
        Command::Simulate {
            spec: spec_path,
            out_dir,
        } => simulate(&spec_path, &out_dir),
    }
}

fn restore_truth(
    stabilized: &stabhmm::VideoProfile64,
    original: &stabhmm::VideoProfile64,
) -> stabhmm::Result<stabhmm::VideoProfile64> {
    let frames = stabilized
        .frames()
        .iter()
        .zip(original.frames())
        .map(|(s, o)| {
            let mut f = s.clone();
            f.true_phase = o.true_phase;
            f.true_tools = o.true_tools.clone();
            f
        })
        .collect();
    stabhmm::VideoProfile64::new(stabilized.video_id.clone(), frames)
}

fn simulate(spec_path: &Path, out_dir: &Path) -> stabhmm::Result<()> {
    let sim = spec::SimulationSpec::load(spec_path)?;
    let (space, params) = sim.model(spec_path)?;
    let gen = GeneratorSpec {
        params: params.clone(),
        num_videos: sim.num_videos,
        frames_per_video: sim.frames_per_video,
        label_policy: sim.label_policy.clone(),
        seed: sim.seed,
    };
    if sim.test_videos > sim.num_videos {
        return Err(Error::InvalidSpec("test_videos exceeds num_videos".into()));
    }
    let data = synth::sample_profile(&gen)?;
    let header = RunHeader::new("simulate", Some(sim.seed))
        .with("spec", path_str(spec_path))
        .with("num_videos", sim.num_videos)
        .with("test_videos", sim.test_videos)
        .with("kind", params.kind.as_str())
        .with("label_policy", json!(sim.label_policy))
        .with("frames_per_video", json!(sim.frames_per_video));

    for sub in ["videos", "truth"] {
        std::fs::create_dir_all(out_dir.join(sub)).map_err(|e| Error::Io {
            path: out_dir.join(sub),
            source: e,
        })?;
    }
    let first_test = sim.num_videos - sim.test_videos;
    let mut entries = Vec::new();
    for (i, (video, truth)) in data.videos.iter().zip(&data.truth).enumerate() {
        let role = if i >= first_test {
            Role::Test
        } else {
            Role::Train
        };
        let video = if role == Role::Test {
            with_full_truth(video, truth, &params)?
        } else {
            video.clone()
        };
        let rel = PathBuf::from("videos").join(format!("{}.csv", video.video_id));
        io::write_video_csv(&out_dir.join(&rel), &space, &video, &header)?;
        io::write_truth_csv(
            &out_dir
                .join("truth")
                .join(format!("{}.csv", video.video_id)),
            &space,
            truth,
            &header,
        )?;
        entries.push(ManifestEntry {
            id: video.video_id.clone(),
            path: rel,
            role,
        });
    }
    io::write_manifest(&out_dir.join("manifest.toml"), &space, &entries, &header)?;
    io::save_params(&out_dir.join("theta_star.json"), &params, &header)?;
    eprintln!(
        "simulate: {} videos written to {}",
        entries.len(),
        out_dir.display()
    );
    Ok(())
}

fn with_full_truth(
    video: &stabhmm::VideoProfile64,
    truth: &synth::HiddenTruth,
    params: &ModelParams64,
) -> stabhmm::Result<stabhmm::VideoProfile64> {
    let frames = video
        .frames()
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut f = f.clone();
            f.true_phase = params.kind.uses_phases().then_some(truth.phases[t]);
            f.true_tools = truth.tools[t].iter().map(|&b| Some(b)).collect();
            f
        })
        .collect();
    stabhmm::VideoProfile64::new(video.video_id.clone(), frames)
}
