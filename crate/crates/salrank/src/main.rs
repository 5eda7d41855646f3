use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(salrank::cli::run() as u8)
}
