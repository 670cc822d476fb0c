fn main() {
    std::process::exit(timemap_service::cli::run(std::env::args_os()));
}
