use clap::Parser;

use spincav_cli::commands::{run, Cli};
use spincav_cli::{exit_code, EXIT_CONFIG};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            std::process::exit(if usage { EXIT_CONFIG } else { 0 });
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
