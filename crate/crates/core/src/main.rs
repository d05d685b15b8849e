fn main() {
    std::process::exit(pc3::cli::run(std::env::args_os()));
}
