fn main() {
    std::process::exit(lamperti_lab::cli::main_with_args(std::env::args_os()));
}
