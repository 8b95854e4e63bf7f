//! `ekd`: encode, decode and evaluate inpainting-compressed images.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ekd_core::container::{bits_per_pixel, CompressedImage};
use ekd_core::encoder::{corner_mask, encode_with_mask, select_mask, EncoderParams, Method};
use ekd_core::krylov::{decode, DecodeParams, MAX_DIMENSION, MIN_DIMENSION};
use ekd_core::metrics::{format_psnr, mse, psnr_from_mse};
use ekd_core::multigrid::MultigridConfig;
use ekd_core::reference::{bench_csv, bound_csv, run_bound_check, run_frame_bench, BenchPlan};
use ekd_core::{pnm, Error};

const EXIT_IO: u8 = 1;
const EXIT_DEGENERATE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "ekd", version, about = "Inpainting-based image compression with a Krylov diffusion decoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select stored pixels and write an EKD1 container.
    Encode(EncodeArgs),
    /// Reconstruct an image from an EKD1 container.
    Decode(DecodeArgs),
    /// Compare Krylov, implicit Euler and Crank-Nicolson on the frame problem (CSV).
    Bench(BenchArgs),
    /// Check measured Krylov errors against the a-priori bound (CSV).
    BoundCheck(BoundArgs),
    /// MSE and PSNR between two images.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Edge,
    Dither,
    Threshold,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Edge => Method::Edge,
            MethodArg::Dither => Method::Dither,
            MethodArg::Threshold => Method::Threshold,
        }
    }
}

#[derive(Args)]
struct EncodeArgs {
    /// Input PPM (P6) or PGM (P5) image.
    input: PathBuf,
    /// Output container.
    output: PathBuf,
    #[arg(long, value_enum, default_value = "dither")]
    method: MethodArg,
    /// Fraction of stored pixels (dither and threshold).
    #[arg(long, default_value_t = 0.10)]
    density: f64,
    /// Gaussian presmoothing for edge detection.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Minimal gradient of a retained edge.
    #[arg(long, default_value_t = 8.0)]
    grad_threshold: f64,
    /// Quantisation bits per stored value.
    #[arg(long = "quant", default_value_t = 8, value_parser = clap::value_parser!(u8).range(1..=8))]
    quant_bits: u8,
    /// Keep every d-th stored value along the scan order.
    #[arg(long = "d", default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    subsample_d: u16,
    /// Store the four corner pixels when the image carries no usable signal.
    #[arg(long)]
    fallback_corners: bool,
}

#[derive(Args, Clone)]
struct MultigridArgs {
    /// Cycle index (1 = V-cycle, 2 = W-cycle).
    #[arg(long, default_value_t = 2)]
    mu: usize,
    /// Cycles per level during nested iteration.
    #[arg(long, default_value_t = 1)]
    nu0: usize,
    /// Pre-relaxation sweeps.
    #[arg(long, default_value_t = 4)]
    nu1: usize,
    /// Post-relaxation sweeps.
    #[arg(long, default_value_t = 4)]
    nu2: usize,
    #[arg(long, default_value_t = 7)]
    levels: usize,
    /// Cycles after nested iteration.
    #[arg(long, default_value_t = 10)]
    cycles: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps_mask: f64,
    /// Relative residual for early exit.
    #[arg(long, default_value_t = 1e-9)]
    mg_tolerance: f64,
}

impl MultigridArgs {
    fn config(&self) -> MultigridConfig {
        MultigridConfig {
            mu: self.mu,
            nu0: self.nu0,
            nu1: self.nu1,
            nu2: self.nu2,
            levels: self.levels,
            cycles: self.cycles,
            eps_mask: self.eps_mask,
            tolerance: self.mg_tolerance,
            budget_tolerance: MultigridConfig::default().budget_tolerance.max(self.mg_tolerance),
            ..MultigridConfig::default()
        }
    }
}

fn dimension(s: &str) -> Result<usize, String> {
    let m: usize = s.parse().map_err(|e| format!("{e}"))?;
    if (MIN_DIMENSION..=MAX_DIMENSION).contains(&m) {
        Ok(m)
    } else {
        Err(format!("m must lie in {MIN_DIMENSION}..={MAX_DIMENSION}"))
    }
}

#[derive(Args)]
struct DecodeArgs {
    input: PathBuf,
    output: PathBuf,
    /// Diffusion time.
    #[arg(long, default_value_t = 1e7)]
    t: f64,
    /// Krylov subspace dimension.
    #[arg(long, default_value_t = 3, value_parser = dimension)]
    m: usize,
    #[command(flatten)]
    multigrid: MultigridArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Side length of the frame problem.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
    times: Vec<f64>,
    /// Krylov dimensions.
    #[arg(long = "m", value_delimiter = ',', default_value = "3,4,5,6,7,8,9,10", value_parser = dimension)]
    ms: Vec<usize>,
    /// Step counts for the time-stepping baselines.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
    steps: Vec<usize>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    multigrid: MultigridArgs,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, value_delimiter = ',', default_value = "25,1000,100000")]
    times: Vec<f64>,
    #[arg(long = "m", value_delimiter = ',', default_value = "3,4,5,6,7,8,9,10", value_parser = dimension)]
    ms: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    multigrid: MultigridArgs,
}

#[derive(Args)]
struct MetricsArgs {
    reference: PathBuf,
    candidate: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

#[derive(Clone, Copy)]
enum Stage {
    Encode,
    Decode,
    Numerics,
}

fn classify(e: Error, stage: Stage) -> Failure {
    let code = match (&e, stage) {
        (Error::Io(_), _)
        | (Error::MalformedImage(_), _)
        | (Error::UnsupportedMaxval(_), _)
        | (Error::BadMagic, _)
        | (Error::TruncatedStream(_), _)
        | (Error::InflateError(_), _)
        | (Error::MalformedContainer(_), _)
        | (Error::EmptyMask, Stage::Decode) => EXIT_IO,
        (Error::DegenerateSignal(_), _) | (Error::EmptyMask, Stage::Encode) => EXIT_DEGENERATE,
        (Error::InvalidParameter(_), _) | (Error::DimensionMismatch(_), _) => EXIT_VALIDATION,
        _ => EXIT_SOLVER,
    };
    Failure { code, message: e.to_string() }
}

fn at(path: &std::path::Path) -> impl Fn(Failure) -> Failure + '_ {
    move |f| Failure { code: f.code, message: format!("{}: {}", path.display(), f.message) }
}

fn validation(message: String) -> Failure {
    Failure { code: EXIT_VALIDATION, message }
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| classify(e.into(), Stage::Numerics)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn encode_cmd(args: EncodeArgs) -> Result<(), Failure> {
    let params = EncoderParams {
        method: args.method.into(),
        density: args.density,
        sigma: args.sigma,
        grad_threshold: args.grad_threshold,
        quant_bits: args.quant_bits,
        subsample_d: args.subsample_d,
    };
    params.validate().map_err(|e| classify(e, Stage::Encode))?;
    let image = pnm::read(&args.input).map_err(|e| classify(e, Stage::Encode)).map_err(at(&args.input))?;
    let mut fallback = false;
    let mask = match select_mask(&image, &params) {
        Ok(mask) if mask.has_stored() => mask,
        Ok(_) if args.fallback_corners => {
            fallback = true;
            corner_mask(image.width(), image.height())
        }
        Err(Error::DegenerateSignal(_)) | Err(Error::EmptyMask) if args.fallback_corners => {
            fallback = true;
            corner_mask(image.width(), image.height())
        }
        Ok(_) => return Err(degenerate("the encoder selected no pixels".into())),
        Err(Error::DegenerateSignal(msg)) => return Err(degenerate(msg)),
        Err(e) => return Err(classify(e, Stage::Encode)),
    };
    let (compressed, stats) = encode_with_mask(&image, mask, &params).map_err(|e| classify(e, Stage::Encode))?;
    let bytes = compressed.to_bytes().map_err(|e| classify(e, Stage::Encode))?;
    std::fs::write(&args.output, &bytes).map_err(|e| classify(e.into(), Stage::Encode)).map_err(at(&args.output))?;
    println!("method={}", params.method.name());
    println!("width={}", image.width());
    println!("height={}", image.height());
    println!("channels={}", image.channels());
    println!("stored={}", stats.stored);
    println!("density={:.6}", stats.density);
    println!("clamped={}", stats.clamped);
    println!("fallback={}", if fallback { "corners" } else { "none" });
    println!("bytes={}", bytes.len());
    println!("bpp={:.6}", bits_per_pixel(bytes.len(), image.width(), image.height()));
    Ok(())
}

fn degenerate(msg: String) -> Failure {
    Failure {
        code: EXIT_DEGENERATE,
        message: format!("degenerate signal: {msg} (hint: --fallback-corners stores the four corners instead)"),
    }
}

fn decode_cmd(args: DecodeArgs) -> Result<(), Failure> {
    if !(args.t > 0.0 && args.t.is_finite()) {
        return Err(validation(format!("--t must be a finite value > 0, got {}", args.t)));
    }
    let params = DecodeParams { t: args.t, m: args.m, multigrid: args.multigrid.config() };
    params.validate().map_err(|e| classify(e, Stage::Numerics))?;
    let bytes = std::fs::read(&args.input).map_err(|e| classify(e.into(), Stage::Decode)).map_err(at(&args.input))?;
    let compressed =
        CompressedImage::from_bytes(&bytes).map_err(|e| classify(e, Stage::Decode)).map_err(at(&args.input))?;
    let b = compressed.compressed_field().map_err(|e| classify(e, Stage::Decode))?;
    let start = Instant::now();
    let (image, report) = decode(&b, &compressed.mask, &params).map_err(|e| classify(e, Stage::Numerics))?;
    let wall = start.elapsed().as_secs_f64();
    pnm::write(&args.output, &image).map_err(|e| classify(e, Stage::Decode)).map_err(at(&args.output))?;
    let per_channel: Vec<String> = report.solves.iter().map(usize::to_string).collect();
    println!("m={}", report.m);
    println!("t={:e}", report.t);
    println!("gamma={:e}", report.gamma_scaled);
    println!("solves={}", report.total_solves());
    println!("solves_per_channel={}", per_channel.join(","));
    println!("levels={}", report.levels);
    println!("wall_time_s={wall:.6}");
    Ok(())
}

fn check_times(times: &[f64]) -> Result<(), Failure> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(validation("--times must be a non-empty list of values > 0".into()));
    }
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> Result<(), Failure> {
    check_times(&args.times)?;
    if args.steps.contains(&0) {
        return Err(validation("--steps must be >= 1".into()));
    }
    let plan = BenchPlan {
        size: args.size,
        times: args.times,
        krylov_m: args.ms,
        steps: args.steps,
        multigrid: args.multigrid.config(),
    };
    plan.multigrid.validate().map_err(|e| classify(e, Stage::Numerics))?;
    let rows = run_frame_bench(&plan).map_err(|e| classify(e, Stage::Numerics))?;
    write_output(&args.out, &bench_csv(&rows))
}

fn bound_check_cmd(args: BoundArgs) -> Result<(), Failure> {
    check_times(&args.times)?;
    let config = args.multigrid.config();
    config.validate().map_err(|e| classify(e, Stage::Numerics))?;
    let rows = run_bound_check(args.size, &args.times, &args.ms, &config).map_err(|e| classify(e, Stage::Numerics))?;
    write_output(&args.out, &bound_csv(&rows))?;
    let violations = rows.iter().filter(|r| !r.holds()).count();
    if violations > 0 {
        return Err(Failure {
            code: EXIT_SOLVER,
            message: format!("{violations} of {} errors exceed the bound", rows.len()),
        });
    }
    eprintln!("bound-check: all {} errors within the bound", rows.len());
    Ok(())
}

fn metrics_cmd(args: MetricsArgs) -> Result<(), Failure> {
    let a = pnm::read(&args.reference).map_err(|e| classify(e, Stage::Decode)).map_err(at(&args.reference))?;
    let b = pnm::read(&args.candidate).map_err(|e| classify(e, Stage::Decode)).map_err(at(&args.candidate))?;
    let value = mse(&a, &b).map_err(|e| classify(e, Stage::Numerics))?;
    println!("mse={value:.6}");
    println!("psnr={}", format_psnr(psnr_from_mse(value)));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };
    let result = match cli.command {
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::BoundCheck(a) => bound_check_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ekd: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
