use std::process::ExitCode;

fn main() -> ExitCode {
    vpsim::main_with_args(std::env::args_os())
}
