use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(bincap::cli::run(std::env::args_os()))
}
