use std::process::ExitCode;

use mitotrace::config::{load_settings, parse_cli};
use mitotrace::{pipeline, Error};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let outcome = parse_cli(std::env::args_os().skip(1)).and_then(|cfg| {
        let settings = load_settings(cfg.settings_file.as_deref())?;
        pipeline::run(&cfg, &settings)
    });
    match outcome {
        Ok(summary) => {
            let regions: usize = summary.regions.iter().map(|s| s.regions.len()).sum();
            log::info!("{} blocks, {regions} final regions", summary.blocks.len());
            ExitCode::SUCCESS
        }
        Err(Error::Help(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mitotrace: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
