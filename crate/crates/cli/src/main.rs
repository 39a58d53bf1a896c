//! `dip1d`: run recovery experiments from flags or a config file.
//!
//! ```text
//! dip1d impute --chirp 750,250,16384,8192 --m 1000,2000 --methods dip,lasso,spline --out out/
//! dip1d denoise --csv air.csv --column co2 --sigma 0.1,0.15,0.2
//! dip1d run experiment.toml
//! ```
//!
//! Exit status is 0 when every cell succeeded, 1 when any cell failed and 2
//! when the experiment could not start.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dip1d::harness::{
    emit_outputs, run_experiment_with, ExperimentConfig, External, Gap, Input, Method, Task,
};
use dip1d::Error;

#[derive(Parser)]
#[command(
    name = "dip1d",
    version,
    about = "Untrained-generator recovery of 1D signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill in missing samples (random mask, or one gap with --gap).
    Impute(TaskArgs),
    /// Recover from Gaussian random projections.
    CsGaussian(TaskArgs),
    /// Recover from a random subset of DCT coefficients.
    CsDct(TaskArgs),
    /// Remove additive white Gaussian noise.
    Denoise(TaskArgs),
    /// Fit clean signal, pure noise and their sum; writes the three loss curves.
    NoiseImpedance(TaskArgs),
    /// Run an experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TaskArgs {
    /// WAV file to load.
    #[arg(long, group = "source")]
    input: Option<PathBuf>,
    /// Decimation factor applied to a WAV input.
    #[arg(long, requires = "input")]
    decimate: Option<usize>,
    /// CSV file to load; blank cells are treated as missing.
    #[arg(long, group = "source", requires = "column")]
    csv: Option<PathBuf>,
    /// CSV column, by header name or 0-based index.
    #[arg(long)]
    column: Option<String>,
    /// Synthetic chirp: f0,f1,n,fs.
    #[arg(long, group = "source", value_delimiter = ',')]
    chirp: Option<Vec<f64>>,

    /// Measurement counts to sweep.
    #[arg(long = "m", value_delimiter = ',')]
    m_list: Vec<usize>,
    /// Noise levels to sweep.
    #[arg(long = "sigma", value_delimiter = ',')]
    sigma_list: Vec<f64>,
    /// Contiguous missing block for impute: start,length.
    #[arg(long, value_delimiter = ',')]
    gap: Option<Vec<usize>>,
    /// Any of dip, lasso, spline.
    #[arg(long, value_delimiter = ',', default_value = "dip")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory [default: $DIP1D_OUT or dip1d-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Third-party results to merge, as name=path.csv with columns level,mse.
    #[arg(long, value_name = "NAME=PATH")]
    external: Vec<String>,

    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    tv_lambda: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Lasso penalty weight.
    #[arg(long)]
    alpha: Option<f64>,

    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

impl TaskArgs {
    fn into_config(self, task: Task) -> Result<(ExperimentConfig, bool), Error> {
        let input = if let Some(path) = self.input {
            Input::Wav {
                path,
                decimate: self.decimate,
            }
        } else if let Some(path) = self.csv {
            Input::Csv {
                path,
                column: self.column.unwrap_or_default(),
            }
        } else if let Some(c) = self.chirp {
            if c.len() != 4 || c[2] < 1.0 || c[2].fract() != 0.0 {
                return Err(Error::Config(
                    "--chirp takes f0,f1,n,fs with integer n".into(),
                ));
            }
            Input::Chirp {
                f0: c[0],
                f1: c[1],
                n: c[2] as usize,
                fs: c[3],
            }
        } else {
            return Err(Error::Config(
                "one of --input, --csv or --chirp is required".into(),
            ));
        };

        let mut config = ExperimentConfig::new(task, input);
        config.m_list = self.m_list;
        config.sigma_list = self.sigma_list;
        config.gap = match self.gap.as_deref() {
            None => None,
            Some(&[start, length]) => Some(Gap { start, length }),
            Some(_) => return Err(Error::Config("--gap takes start,length".into())),
        };
        config.methods = self
            .methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<_, _>>()?;
        config.seed = self.seed;
        if let Some(out) = self.out {
            config.output_dir = out;
        }
        config.external = self
            .external
            .iter()
            .map(|spec| {
                spec.split_once('=')
                    .map(|(name, path)| External {
                        name: name.to_string(),
                        path: path.into(),
                    })
                    .ok_or_else(|| Error::Config(format!("--external `{spec}` is not NAME=PATH")))
            })
            .collect::<Result<_, _>>()?;

        let r = &mut config.recovery;
        r.iterations = self.iterations.unwrap_or(r.iterations);
        r.restarts = self.restarts.unwrap_or(r.restarts);
        r.filters_per_layer = self.filters.unwrap_or(r.filters_per_layer);
        r.learning_rate = self.learning_rate.unwrap_or(r.learning_rate);
        r.tv_lambda = self.tv_lambda.unwrap_or(r.tv_lambda);
        r.weight_decay = self.weight_decay.unwrap_or(r.weight_decay);
        config.lasso.alpha = self.alpha.unwrap_or(config.lasso.alpha);
        config.validate()?;
        Ok((config, self.dry_run))
    }
}

fn run(config: &ExperimentConfig) -> Result<bool, Error> {
    let result = run_experiment_with(config, &mut |msg| eprintln!("{msg}"))?;
    emit_outputs(&result, &config.output_dir)?;
    for cell in &result.cells {
        let value = match (cell.mean_mse, &cell.error) {
            (Some(v), _) => format!("{v:.6e}"),
            (None, Some(e)) => format!("failed: {e}"),
            (None, None) => "-".into(),
        };
        println!("{:<8} {:>8}  {value}", cell.method, cell.level.to_string());
    }
    for cell in &result.cells {
        for r in cell.restarts.iter().filter(|r| r.error.is_some()) {
            eprintln!(
                "{} at {} restart {}: {}",
                cell.method,
                cell.level,
                r.restart,
                r.error.as_deref().unwrap_or_default()
            );
        }
    }
    eprintln!(
        "wrote {} in {:.1}s",
        config.output_dir.display(),
        result.wall_time.as_secs_f64()
    );
    Ok(!result.any_failed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Impute(a) => (Task::Impute, a),
        Command::CsGaussian(a) => (Task::CsGaussian, a),
        Command::CsDct(a) => (Task::CsDct, a),
        Command::Denoise(a) => (Task::Denoise, a),
        Command::NoiseImpedance(a) => (Task::NoiseImpedance, a),
        Command::Run { config, out } => {
            let loaded = ExperimentConfig::load(&config).map(|mut c| {
                if let Some(out) = out {
                    c.output_dir = out;
                }
                c
            });
            return finish(loaded.and_then(|c| run(&c)));
        }
    };
    match args.into_config(task) {
        Ok((config, true)) => {
            print!("{}", config.to_text());
            ExitCode::SUCCESS
        }
        Ok((config, false)) => finish(run(&config)),
        Err(e) => finish(Err(e)),
    }
}

fn finish(outcome: Result<bool, Error>) -> ExitCode {
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
