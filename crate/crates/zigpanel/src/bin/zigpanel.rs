use clap::Parser;
use zigpanel::cli::{exit_code_for, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        // single-line machine-parsable failure report
        eprintln!("error: {err}");
        std::process::exit(exit_code_for(&err));
    }
}
