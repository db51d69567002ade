//! Command-line front end: encode, decode, dataset generation, training,
//! BER sweeps and the weight histogram report.
//!
//! Every option can also come from a TOML file given with `--config`; flags
//! win over the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use turbonet::channel::{ModScheme, Modulation};
use turbonet::formats::{
    check_compatible, format_bits, format_llrs, load_weights, parse_bits, parse_llrs, read_dataset, save_weights,
    write_dataset, DatasetHeader, Expected,
};
use turbonet::harness::{ber_csv, ber_sweep, to_csv, weight_histogram, Decoder, DecoderKind, SweepConfig};
use turbonet::harness::{DEFAULT_MAX_ERRORS, HISTOGRAM_HEADER};
use turbonet::interleaver::Interleaver;
use turbonet::net::{WeightSet, WeightVariant};
use turbonet::siso::hard_decision;
use turbonet::training::{generate_dataset, train_early_stopping, Sample, TrainConfig};
use turbonet::trellis::{CodeConfig, Rate, TurboCode};

#[derive(Parser, Debug)]
#[command(name = "turbonet", version, about = "Turbo code encoding, classical and trained decoding, BER sweeps")]
struct Cli {
    /// TOML file with default values for any option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Info-bit file to transmitted-bit file.
    Encode {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Channel-LLR file to hard bits (`--out`) and posteriors (`--llr-out`).
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        /// max_log_map, log_map, turbonet or turbonet_plus.
        #[arg(long)]
        decoder: Option<String>,
        #[arg(long)]
        llr_out: Option<PathBuf>,
    },
    /// Writes a dataset cache at one SNR.
    GenDataset {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Trains a network and writes its weight file plus a history CSV.
    Train {
        /// Dataset cache; generated on the fly when absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// BER of one or more decoders over a list of SNR points.
    BerSweep {
        /// Comma list of decoders; neural ones take their weights from `--weights`.
        #[arg(long, value_delimiter = ',')]
        decoders: Option<Vec<String>>,
        /// Iterations of the classical decoders.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Histogram of weight values per unit and family.
    WeightReport,
}

/// Options shared by all commands. Every field is optional so that the
/// config file can fill the gaps.
#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct Opts {
    #[arg(long, global = true)]
    k: Option<usize>,
    /// 1/3 or 1/2.
    #[arg(long, global = true)]
    rate: Option<String>,
    /// bpsk, qpsk or qam16.
    #[arg(long = "mod", global = true)]
    #[serde(rename = "mod")]
    modulation: Option<String>,
    #[arg(long, global = true)]
    units: Option<usize>,
    #[arg(long, global = true)]
    target_iters: Option<usize>,
    /// gw_only, elw_only, gw_elw or full.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Comma-separated Eb/N0 values in dB.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long, global = true)]
    frames: Option<u64>,
    /// Per-point bit-error cap; 0 disables it.
    #[arg(long, global = true)]
    max_errors: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_delimiter = ',')]
    weights: Option<Vec<PathBuf>>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

impl Opts {
    fn merge(self, file: Opts) -> Opts {
        Opts {
            k: self.k.or(file.k),
            rate: self.rate.or(file.rate),
            modulation: self.modulation.or(file.modulation),
            units: self.units.or(file.units),
            target_iters: self.target_iters.or(file.target_iters),
            variant: self.variant.or(file.variant),
            snr_db: self.snr_db.or(file.snr_db),
            frames: self.frames.or(file.frames),
            max_errors: self.max_errors.or(file.max_errors),
            seed: self.seed.or(file.seed),
            weights: self.weights.or(file.weights),
            out: self.out.or(file.out),
            workers: self.workers.or(file.workers),
        }
    }

    fn k(&self) -> usize {
        self.k.unwrap_or(40)
    }

    fn rate(&self) -> Result<Rate> {
        Ok(self.rate.as_deref().unwrap_or("1/3").parse()?)
    }

    fn modulation(&self) -> Result<Modulation> {
        Ok(self.modulation.as_deref().unwrap_or("bpsk").parse()?)
    }

    fn variant(&self) -> Result<WeightVariant> {
        Ok(self.variant.as_deref().unwrap_or("elw_only").parse()?)
    }

    fn units(&self) -> usize {
        self.units.unwrap_or(3)
    }

    fn target_iters(&self) -> usize {
        self.target_iters.unwrap_or(6)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    fn single_snr(&self, default: f64) -> Result<f64> {
        match self.snr_db.as_deref() {
            None => Ok(default),
            Some([x]) => Ok(*x),
            Some(v) => bail!("this command takes one --snr-db value, got {}", v.len()),
        }
    }

    fn code(&self) -> Result<TurboCode> {
        let config = CodeConfig::new(self.k(), self.rate()?)?;
        Ok(TurboCode::new(config, Interleaver::auto(self.k())?)?)
    }

    fn expected(&self, code: &TurboCode, units: Option<usize>) -> Result<Expected> {
        Ok(Expected {
            k: code.k(),
            units,
            rate: code.config.rate,
            modulation: self.modulation()?,
            interleaver: Some(code.interleaver.descriptor()),
        })
    }

    fn describe(&self, cmd: &str) -> Result<String> {
        Ok(format!(
            "turbonet {cmd}; k={} rate={} mod={} units={} target_iters={} variant={} seed={}",
            self.k(),
            self.rate()?,
            self.modulation()?,
            self.units(),
            self.target_iters(),
            self.variant()?,
            self.seed()
        ))
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Loads a weight file and checks it against the requested configuration.
fn load_checked(path: &Path, opts: &Opts, code: &TurboCode) -> Result<WeightSet> {
    let w = load_weights(path).with_context(|| format!("loading {}", path.display()))?;
    check_compatible(&w, &opts.expected(code, opts.units)?).with_context(|| format!("{}", path.display()))?;
    Ok(w)
}

fn cmd_encode(opts: &Opts, input: &Path) -> Result<()> {
    let code = opts.code()?;
    let blocks = parse_bits(&read(input)?).with_context(|| format!("{}", input.display()))?;
    let mut out = Vec::with_capacity(blocks.len());
    for (n, b) in blocks.iter().enumerate() {
        if b.len() != code.k() {
            bail!("{}: block {} has {} bits, expected k = {}", input.display(), n + 1, b.len(), code.k());
        }
        out.push(code.encode(b)?);
    }
    write_or_print(opts.out.as_deref(), &format_bits(&out))
}

fn cmd_decode(opts: &Opts, input: &Path, decoder: Option<&str>, llr_out: Option<&Path>) -> Result<()> {
    let code = opts.code()?;
    let kind: DecoderKind = decoder.unwrap_or("max_log_map").parse()?;
    let dec = match kind {
        DecoderKind::MaxLogMap => Decoder::max_log_map(opts.units()),
        DecoderKind::LogMap => Decoder::log_map(opts.target_iters()),
        DecoderKind::Turbonet | DecoderKind::TurbonetPlus => {
            let path = match opts.weights.as_deref() {
                Some([p]) => p,
                _ => bail!("decoder {kind} needs exactly one --weights file"),
            };
            Decoder::net(load_checked(path, opts, &code)?)
        }
    };
    let blocks = parse_llrs(&read(input)?).with_context(|| format!("{}", input.display()))?;
    let n_expected = code.config.codeword_len();
    let mut bits = Vec::with_capacity(blocks.len());
    let mut posts = Vec::with_capacity(blocks.len());
    for (n, b) in blocks.iter().enumerate() {
        if b.len() != n_expected {
            bail!(
                "{}: line {} has {} LLRs, expected {} for k = {} at rate {}",
                input.display(),
                n + 1,
                b.len(),
                n_expected,
                code.k(),
                code.config.rate
            );
        }
        let post = dec.decode(&code.frame(b)?, &code)?;
        bits.push(hard_decision(&post));
        posts.push(post);
    }
    if let Some(p) = llr_out {
        fs::write(p, format_llrs(&posts)).with_context(|| format!("writing {}", p.display()))?;
    }
    write_or_print(opts.out.as_deref(), &format_bits(&bits))
}

fn dataset_for(opts: &Opts, code: &TurboCode, samples: usize) -> Result<(DatasetHeader, Vec<Sample>)> {
    let modulation = opts.modulation()?;
    let snr = opts.single_snr(0.0)?;
    let samples = generate_dataset(samples, code, &ModScheme::new(modulation), snr, opts.target_iters(), opts.seed())?;
    let header = DatasetHeader {
        k: code.k(),
        rate: code.config.rate,
        modulation,
        snr_db: snr,
        target_iters: opts.target_iters(),
        seed: opts.seed(),
        n: samples.len(),
    };
    Ok((header, samples))
}

fn cmd_gen_dataset(opts: &Opts, samples: Option<usize>) -> Result<()> {
    let code = opts.code()?;
    let out = opts.out.as_deref().context("gen-dataset needs --out")?;
    let (header, samples) = dataset_for(opts, &code, samples.unwrap_or(80_000))?;
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_dataset(std::io::BufWriter::new(file), &header, &samples)?;
    eprintln!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    opts: &Opts,
    dataset: Option<&Path>,
    samples: Option<usize>,
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    history: Option<&Path>,
) -> Result<()> {
    let code = opts.code()?;
    let out = opts.out.as_deref().context("train needs --out for the weight file")?;
    let variant = opts.variant()?;
    let mut config = TrainConfig::defaults(variant);
    let (header, data) = match dataset {
        Some(p) => {
            let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let (h, d) = read_dataset(std::io::BufReader::new(file), &code.interleaver)?;
            if h.k != code.k() || h.rate != code.config.rate || h.modulation != opts.modulation()? {
                bail!(
                    "dataset {} is for k={} rate={} mod={}, requested k={} rate={} mod={}",
                    p.display(),
                    h.k,
                    h.rate,
                    h.modulation,
                    code.k(),
                    code.config.rate,
                    opts.modulation()?
                );
            }
            (h, d)
        }
        None => dataset_for(opts, &code, samples.unwrap_or(80_000))?,
    };
    config.train_snr_db = header.snr_db;
    config.target_iters = header.target_iters;
    config.units = opts.units();
    config.master_seed = opts.seed();
    if let Some(e) = epochs {
        config.epochs_max = e;
    }
    if let Some(b) = batch {
        config.batch_size = b;
    }
    if let Some(l) = lr {
        config.learning_rate = l;
    }
    let outcome = train_early_stopping(&data, &code, &config)?;
    let mut weights = outcome.weights;
    weights.meta.modulation = Some(header.modulation);
    save_weights(out, &weights)?;
    let rows = outcome.history.iter().map(|h| {
        format!(
            "{},{},{:e},{},{}",
            h.epoch,
            h.train_loss.map_or(String::new(), |l| l.to_string()),
            h.validation_ber,
            h.validation_loss,
            h.stored
        )
    });
    let csv = to_csv(
        &format!(
            "{} train_snr_db={} samples={} epochs_max={} batch={} lr={} optimizer={}",
            opts.describe("train")?,
            config.train_snr_db,
            data.len(),
            config.epochs_max,
            config.batch_size,
            config.learning_rate,
            config.optimizer.describe()
        ),
        "epoch,train_loss,validation_ber,validation_loss,stored",
        rows,
    );
    match history {
        Some(p) => fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => eprint!("{csv}"),
    }
    eprintln!("best epoch {}; weights written to {}", outcome.best_epoch, out.display());
    Ok(())
}

fn cmd_ber_sweep(opts: &Opts, decoders: Option<&[String]>, iters: Option<usize>) -> Result<()> {
    let code = opts.code()?;
    let modulation = opts.modulation()?;
    let names: Vec<String> = decoders.map_or_else(|| vec!["max_log_map".to_string()], <[String]>::to_vec);
    let mut weights = opts.weights.clone().unwrap_or_default().into_iter();
    let mut list = Vec::new();
    for name in &names {
        let kind: DecoderKind = name.parse()?;
        list.push(match kind {
            DecoderKind::MaxLogMap => Decoder::max_log_map(iters.unwrap_or(opts.units())),
            DecoderKind::LogMap => Decoder::log_map(iters.unwrap_or(opts.target_iters())),
            DecoderKind::Turbonet | DecoderKind::TurbonetPlus => {
                let path = weights
                    .next()
                    .with_context(|| format!("decoder {kind} needs a --weights file (one per neural decoder)"))?;
                let w = load_checked(&path, opts, &code)?;
                let dec = Decoder::net(w);
                if dec.kind() != kind {
                    bail!("{} holds a {} network, not {kind}", path.display(), dec.kind());
                }
                dec
            }
        });
    }
    let max_errors = match opts.max_errors {
        Some(0) => None,
        Some(m) => Some(m),
        None => Some(DEFAULT_MAX_ERRORS),
    };
    let cfg = SweepConfig {
        snr_db: opts.snr_db.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0]),
        frames: opts.frames.unwrap_or(10_000),
        max_errors,
        seed: opts.seed(),
        workers: opts.workers,
    };
    let records = ber_sweep(&code, &ModScheme::new(modulation), &list, &cfg)?;
    let comment = format!(
        "{} decoders={} snr_db={:?} frames={} max_errors={} workers={}",
        opts.describe("ber-sweep")?,
        names.join("|"),
        cfg.snr_db,
        cfg.frames,
        max_errors.map_or("none".into(), |m| m.to_string()),
        opts.workers.map_or("default".into(), |w| w.to_string())
    );
    let body = if cfg.frames == 0 { Vec::new() } else { records };
    write_or_print(opts.out.as_deref(), &ber_csv(&comment, &body))
}

fn cmd_weight_report(opts: &Opts) -> Result<()> {
    let path = match opts.weights.as_deref() {
        Some([p]) => p,
        _ => bail!("weight-report needs exactly one --weights file"),
    };
    let w = load_weights(path).with_context(|| format!("loading {}", path.display()))?;
    let comment = format!(
        "turbonet weight-report; file={} k={} M={} variant={} bin_width=0.01",
        path.display(),
        w.k,
        w.num_units(),
        w.variant
    );
    let csv = to_csv(&comment, HISTOGRAM_HEADER, weight_histogram(&w).iter().map(|b| b.csv_row()));
    write_or_print(opts.out.as_deref(), &csv)
}

fn run(cli: Cli) -> Result<()> {
    let file_opts = match &cli.config {
        Some(p) => toml::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => Opts::default(),
    };
    let opts = cli.opts.merge(file_opts);
    match &cli.cmd {
        Cmd::Encode { input } => cmd_encode(&opts, input),
        Cmd::Decode {
            input,
            decoder,
            llr_out,
        } => cmd_decode(&opts, input, decoder.as_deref(), llr_out.as_deref()),
        Cmd::GenDataset { samples } => cmd_gen_dataset(&opts, *samples),
        Cmd::Train {
            dataset,
            samples,
            epochs,
            batch,
            lr,
            history,
        } => cmd_train(&opts, dataset.as_deref(), *samples, *epochs, *batch, *lr, history.as_deref()),
        Cmd::BerSweep { decoders, iters } => cmd_ber_sweep(&opts, decoders.as_deref(), *iters),
        Cmd::WeightReport => cmd_weight_report(&opts),
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
