//! Library side of the `imser` command-line tool.

pub mod args;
pub mod commands;
pub mod records;

use std::fs::File;
use std::io::{self, BufWriter, Write};

use args::{Cli, Command};
use commands::DetectOptions;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

fn usage(msg: &str) -> u8 {
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn failure(e: anyhow::Error) -> u8 {
    eprintln!("error: {e:#}");
    EXIT_FAILURE
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Detect(a) => {
            let config = match a.pipeline.resolve() {
                Ok(c) => c,
                Err(e) => return usage(&e),
            };
            let opts = DetectOptions {
                out_dir: a.out,
                render: a.render,
                jobs: a.jobs,
            };
            match commands::cmd_detect(&a.images, &config, &opts) {
                Ok(report) => {
                    for (path, err) in &report.failures {
                        eprintln!("error: {}: {err}", path.display());
                    }
                    if report.failures.is_empty() {
                        EXIT_OK
                    } else {
                        EXIT_FAILURE
                    }
                }
                Err(e) => failure(e),
            }
        }
        Command::ExtractRegions(a) => {
            let config = match a.pipeline.resolve() {
                Ok(c) => c,
                Err(e) => return usage(&e),
            };
            let result = match &a.out {
                Some(path) => File::create(path).map_err(anyhow::Error::from).and_then(|f| {
                    let mut w = BufWriter::new(f);
                    let n = commands::cmd_extract_regions(&a.image, &config, &mut w)?;
                    w.flush()?;
                    Ok(n)
                }),
                None => commands::cmd_extract_regions(&a.image, &config, &mut io::stdout().lock()),
            };
            result.map_or_else(failure, |_| EXIT_OK)
        }
        Command::OptimizeGamma(a) => {
            let config = match a.pipeline.resolve() {
                Ok(c) => c,
                Err(e) => return usage(&e),
            };
            let samples = match (&a.samples, &a.dir) {
                (Some(path), _) => std::fs::read_to_string(path)
                    .map_err(anyhow::Error::from)
                    .and_then(|t| commands::parse_samples(&t)),
                (None, Some(dir)) => {
                    let gt = a.gt.clone().unwrap_or_else(|| dir.join("gt.txt"));
                    commands::collect_corpus_samples(dir, &gt, &config)
                }
                (None, None) => return usage("give an image directory or --samples"),
            };
            let samples = match samples {
                Ok(s) => s,
                Err(e) => return failure(e),
            };
            if let Some(path) = &a.dump_samples {
                if let Err(e) = std::fs::write(path, commands::format_samples(&samples)) {
                    return failure(e.into());
                }
            }
            match commands::cmd_optimize_gamma(&samples, a.grid_step) {
                Ok(g) => {
                    println!("{g:.4}");
                    EXIT_OK
                }
                Err(e) => failure(e),
            }
        }
        Command::Evaluate(a) => match commands::cmd_evaluate(&a.detections, &a.gt, a.iou) {
            Ok(m) => {
                println!("{m}");
                EXIT_OK
            }
            Err(e) => failure(e),
        },
    }
}
