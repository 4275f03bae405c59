fn main() {
    std::process::exit(bandit_oco::cli::main_with_args(std::env::args_os()));
}
