fn main() -> std::process::ExitCode {
    aimc::cli::main_with(std::env::args_os())
}
