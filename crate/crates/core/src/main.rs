use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(paf_core::cli::run_from(std::env::args_os()))
}
