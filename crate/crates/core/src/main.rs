fn main() {
    netflow::cli::init_logging();
    std::process::exit(netflow::cli::main(std::env::args_os()));
}
