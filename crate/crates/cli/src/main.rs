use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(miafex_cli::run(std::env::args_os()))
}
