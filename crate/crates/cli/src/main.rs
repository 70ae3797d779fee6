fn main() {
    std::process::exit(spikefuse_cli::run(std::env::args_os()));
}
