fn main() {
    std::process::exit(silu_td::harness::cli::run(std::env::args_os()));
}
