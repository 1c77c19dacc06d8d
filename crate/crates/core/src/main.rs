fn main() {
    std::process::exit(fairprice::cli::run(std::env::args_os()));
}
