fn main() { std::process::exit(flagpca::cli::run()) }
