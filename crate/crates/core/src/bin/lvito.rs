fn main() {
    std::process::exit(levy_volterra::cli::run_args(std::env::args_os()).exit);
}
