use std::process::ExitCode;

fn main() -> ExitCode {
    rapu_sim::cli::main()
}
