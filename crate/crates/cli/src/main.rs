fn main() {
    std::process::exit(z2sim_cli::run_with_args(std::env::args_os()));
}
