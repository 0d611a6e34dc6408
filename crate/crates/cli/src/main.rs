use std::process::ExitCode;

use clap::Parser;
use panelcf_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match panelcf_cli::run(cli.command) {
        Ok(report) => {
            print!("{}", report.text);
            if report.not_converged {
                eprintln!("warning: a solver did not converge; results were written but should not be trusted");
            }
            ExitCode::from(report.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
