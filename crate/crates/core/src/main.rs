fn main() {
    std::process::exit(sdde_lan::cli::run(std::env::args_os()));
}
