use std::process::ExitCode;

fn main() -> ExitCode {
    wasserstat_cli::main_with(std::env::args_os())
}
