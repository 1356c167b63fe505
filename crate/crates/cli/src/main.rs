fn main() {
    std::process::exit(mcre_lab::run_from(std::env::args_os()));
}
