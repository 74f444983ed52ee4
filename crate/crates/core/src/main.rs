use std::process::ExitCode;

fn main() -> ExitCode {
    let code = chemokin::cli::main_with_args(std::env::args_os(), &mut std::io::stdout().lock());
    ExitCode::from(code)
}
