use clap::Parser;

fn main() {
    let cli = segaug::cli::Cli::parse();
    let code = match segaug::cli::run(cli) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            1
        }
    };
    std::process::exit(code);
}
