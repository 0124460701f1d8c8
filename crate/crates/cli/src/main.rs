fn main() {
    std::process::exit(hom_cli::run(std::env::args_os()));
}
