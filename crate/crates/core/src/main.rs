fn main() {
    std::process::exit(lqg_hardness::cli::run(std::env::args_os()));
}
