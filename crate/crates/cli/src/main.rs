fn main() {
    std::process::exit(viscolab_cli::main_with(std::env::args_os()));
}
