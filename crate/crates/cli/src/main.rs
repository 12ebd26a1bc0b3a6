fn main() {
    std::process::exit(chemodose_cli::run(std::env::args_os()));
}
