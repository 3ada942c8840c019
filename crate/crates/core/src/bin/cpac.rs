fn main() {
    std::process::exit(contrastive_pac::cli::run(std::env::args_os()));
}
