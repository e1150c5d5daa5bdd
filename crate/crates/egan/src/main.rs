use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(egan::run(std::env::args_os()))
}
