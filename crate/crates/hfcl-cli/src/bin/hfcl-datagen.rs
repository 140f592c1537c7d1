//! Writes a synthetic digit-style IDX dataset so the simulator can run
//! without the real MNIST files. Same binary format, same shapes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "hfcl-datagen", version, about = "Generate a synthetic IDX image/label pair")]
struct Cli {
    /// Output image file.
    #[arg(long, default_value = "data/train-images.idx")]
    images: PathBuf,

    /// Output label file.
    #[arg(long, default_value = "data/train-labels.idx")]
    labels: PathBuf,

    /// Sample count.
    #[arg(long, default_value_t = 2000)]
    count: usize,

    /// Image height and width.
    #[arg(long, default_value_t = 28)]
    side: u32,

    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(dir) = cli.images.parent() {
        if !dir.as_os_str().is_empty() {
            if let Err(e) = std::fs::create_dir_all(dir) {
                eprintln!("error: cannot create {}: {e}", dir.display());
                return ExitCode::FAILURE;
            }
        }
    }
    match hfcl::fixtures::write_synthetic_idx(&cli.images, &cli.labels, cli.count, cli.side, cli.side, cli.seed) {
        Ok(()) => {
            println!(
                "wrote {} samples of {}x{} to {} / {}",
                cli.count,
                cli.side,
                cli.side,
                cli.images.display(),
                cli.labels.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
