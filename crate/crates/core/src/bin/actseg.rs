fn main() {
    std::process::exit(actseg::cli::run(std::env::args_os()));
}
