fn main() {
    std::process::exit(nft::cli::run(std::env::args_os()));
}
