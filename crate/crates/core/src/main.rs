fn main() { std::process::exit(lidarcycle::cli::dispatch(std::env::args().collect())); }
