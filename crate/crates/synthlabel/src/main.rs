fn main() -> std::process::ExitCode {
    synthlabel::cli::main_with_args(std::env::args_os())
}
