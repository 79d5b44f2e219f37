fn main() { std::process::exit(predcomb::cli::run(std::env::args().skip(1).collect())); }
