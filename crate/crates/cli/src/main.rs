use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use lpr_core::{
    decode_file_with, encode_file_with, load_image, save_image, stats, BaseCodecConfig,
    ContextModelSpec, EncodeConfig, Header, ImagePlane, ParamTensor, Tau,
};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(
    name = "lpr",
    version,
    about = "Lossless and near-lossless image codec"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a PPM/PGM image into a container.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Decompress a container into a PPM/PGM image.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// Parameter tensor the container was coded with.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Decode (re-encoding first when no container is given) and compare
    /// against the original image.
    Verify {
        original: PathBuf,
        container: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Print the rate of a container in bits per subpixel.
    Stats { input: PathBuf },
    /// Code every PPM/PGM file of a directory and print a CSV report.
    Bench {
        dir: PathBuf,
        /// Comma-separated error bounds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4")]
        tau: Vec<u32>,
        #[command(flatten)]
        layout: LayoutArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BaseKind {
    Null,
    Downsample,
}

#[derive(Args, Debug, Clone)]
struct LayoutArgs {
    /// Base layer; defaults to null for tau=0 and downsample otherwise.
    #[arg(long, value_enum)]
    base: Option<BaseKind>,
    /// Downsampling factor of the base layer (2, 4 or 8).
    #[arg(long, default_value_t = 4)]
    factor: u8,
    /// Patch size P.
    #[arg(long, default_value_t = 64)]
    patch: u16,
    /// Context kernel size.
    #[arg(short, default_value_t = 7)]
    k: u32,
    /// Parallelism index of the context mask.
    #[arg(short, default_value_t = 3)]
    j: u32,
}

#[derive(Args, Debug, Clone)]
struct CodecArgs {
    /// Maximum absolute error per sample; 0 is lossless.
    #[arg(long, default_value_t = 0)]
    tau: u32,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Mixture components K. The built-in estimator uses K=1; with
    /// --params it must match the tensor.
    #[arg(long)]
    mixtures: Option<usize>,
    /// Per-pixel mixture parameter tensor.
    #[arg(long)]
    params: Option<PathBuf>,
}

impl LayoutArgs {
    fn config(&self, tau: u32) -> Result<EncodeConfig> {
        let tau = Tau::new(tau)?;
        let base = match self.base {
            None => EncodeConfig::for_tau(tau).base,
            Some(BaseKind::Null) => BaseCodecConfig::Null,
            Some(BaseKind::Downsample) => BaseCodecConfig::downsample(self.factor)?,
        };
        Ok(EncodeConfig {
            base,
            patch_size: self.patch,
            context: ContextModelSpec::new(self.k, self.j)?,
            ..EncodeConfig::for_tau(tau)
        })
    }
}

impl CodecArgs {
    fn tensor(&self) -> Result<Option<ParamTensor>> {
        let tensor = self.params.as_deref().map(load_tensor).transpose()?;
        match (&tensor, self.mixtures) {
            (None, Some(k)) if k != 1 => {
                bail!("the built-in estimator uses K=1; pass --params for K={k}")
            }
            (Some(t), Some(k)) if t.mixtures() != k => {
                bail!(
                    "--mixtures {k} does not match the tensor's K={}",
                    t.mixtures()
                )
            }
            _ => Ok(tensor),
        }
    }
}

fn read_image(path: &Path) -> Result<ImagePlane> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_image(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn load_tensor(path: &Path) -> Result<ParamTensor> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ParamTensor::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn max_error(a: &ImagePlane, b: &ImagePlane) -> Result<u8> {
    ensure!(
        a.shape() == b.shape(),
        "decoded shape {:?} differs from original {:?}",
        b.shape(),
        a.shape()
    );
    Ok(a.samples()
        .iter()
        .zip(b.samples())
        .map(|(x, y)| x.abs_diff(*y))
        .max()
        .unwrap_or(0))
}

fn encode(input: &Path, output: &Path, codec: &CodecArgs) -> Result<()> {
    let image = read_image(input)?;
    let cfg = codec.layout.config(codec.tau)?;
    let bytes = encode_file_with(&image, &cfg, codec.tensor()?.as_ref())?;
    write(output, &bytes)?;
    let report = stats(&bytes)?;
    eprintln!(
        "{} -> {}: {} bytes, {:.4} bpsp",
        input.display(),
        output.display(),
        bytes.len(),
        report.bpsp_total
    );
    Ok(())
}

fn decode(input: &Path, output: &Path, params: Option<&Path>) -> Result<()> {
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let tensor = params.map(load_tensor).transpose()?;
    let image = decode_file_with(&bytes, tensor.as_ref())?;
    write(output, &save_image(&image))
}

fn verify(original: &Path, container: Option<&Path>, codec: &CodecArgs) -> Result<()> {
    let image = read_image(original)?;
    let tensor = codec.tensor()?;
    let bytes = match container {
        Some(path) => std::fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        None => encode_file_with(&image, &codec.layout.config(codec.tau)?, tensor.as_ref())?,
    };
    let tau = Header::parse(&bytes)?.tau.get();
    let decoded = decode_file_with(&bytes, tensor.as_ref())?;
    let err = max_error(&image, &decoded)?;
    println!("max_error={err}");
    ensure!(err <= tau, "max error {err} exceeds the bound tau={tau}");
    Ok(())
}

fn print_stats(input: &Path) -> Result<()> {
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let r = stats(&bytes)?;
    println!("shape={}x{}x{}", r.height, r.width, r.channels);
    println!("tau={}", r.tau);
    println!(
        "bytes={} base_bytes={} residual_bytes={}",
        r.total_bytes, r.base_bytes, r.residual_bytes
    );
    println!("bpsp_total={:.4}", r.bpsp_total);
    println!("bpsp_base={:.4}", r.bpsp_base);
    println!("bpsp_residual={:.4}", r.bpsp_residual);
    Ok(())
}

struct BenchRow {
    path: String,
    height: usize,
    width: usize,
    tau: u32,
    bpsp_total: f64,
    bpsp_base: f64,
    bpsp_residual: f64,
    max_error: u8,
    encode_ms: f64,
    decode_ms: f64,
}

fn bench_one(path: &Path, tau: u32, layout: &LayoutArgs) -> Result<BenchRow> {
    let image = read_image(path)?;
    let cfg = layout.config(tau)?;
    let t = Instant::now();
    let bytes = encode_file_with(&image, &cfg, None)?;
    let encode_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let decoded = decode_file_with(&bytes, None)?;
    let decode_ms = t.elapsed().as_secs_f64() * 1e3;
    let r = stats(&bytes)?;
    Ok(BenchRow {
        path: path.display().to_string(),
        height: r.height,
        width: r.width,
        tau,
        bpsp_total: r.bpsp_total,
        bpsp_base: r.bpsp_base,
        bpsp_residual: r.bpsp_residual,
        max_error: max_error(&image, &decoded)?,
        encode_ms,
        decode_ms,
    })
}

fn bench(dir: &Path, taus: &[u32], layout: &LayoutArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")));
    paths.sort();
    ensure!(
        !paths.is_empty(),
        "no .ppm or .pgm files in {}",
        dir.display()
    );
    for &tau in taus {
        layout.config(tau)?;
    }

    let rows: Vec<BenchRow> = paths
        .par_iter()
        .flat_map_iter(|p| taus.iter().map(move |&tau| (p, tau)))
        .map(|(p, tau)| bench_one(p, tau, layout))
        .collect::<Result<_>>()?;

    let mut out = csv::Writer::from_writer(std::io::stdout().lock());
    out.write_record([
        "path",
        "H",
        "W",
        "tau",
        "bpsp_total",
        "bpsp_base",
        "bpsp_residual",
        "max_error",
        "encode_ms",
        "decode_ms",
    ])?;
    for r in rows {
        out.write_record([
            r.path,
            r.height.to_string(),
            r.width.to_string(),
            r.tau.to_string(),
            format!("{:.4}", r.bpsp_total),
            format!("{:.4}", r.bpsp_base),
            format!("{:.4}", r.bpsp_residual),
            r.max_error.to_string(),
            format!("{:.1}", r.encode_ms),
            format!("{:.1}", r.decode_ms),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode {
            input,
            output,
            codec,
        } => encode(&input, &output, &codec),
        Command::Decode {
            input,
            output,
            params,
        } => decode(&input, &output, params.as_deref()),
        Command::Verify {
            original,
            container,
            codec,
        } => verify(&original, container.as_deref(), &codec),
        Command::Stats { input } => print_stats(&input),
        Command::Bench { dir, tau, layout } => bench(&dir, &tau, &layout),
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
