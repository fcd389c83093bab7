fn main() {
    std::process::exit(nmv_lab::cli::run(std::env::args_os()));
}
