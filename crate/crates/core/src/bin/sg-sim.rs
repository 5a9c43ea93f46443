use std::process::ExitCode;

fn main() -> ExitCode {
    sg_sim::cli::main_with_args(std::env::args_os())
}
