fn main() {
    std::process::exit(biphoton_corr::cli::run(std::env::args_os()));
}
