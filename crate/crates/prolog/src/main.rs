fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let code = match verdict_prolog::cli::parse_args(&args) {
        Ok(options) => verdict_prolog::cli::run(options),
        Err(message) => {
            eprintln!("verdict-prolog: {}", message);
            2
        }
    };
    std::process::exit(code);
}
