use clap::Parser;
use dipole_lab::cli::{self, Cli};

fn main() {
    let args = Cli::parse();
    let result = cli::init_threads().and_then(|()| cli::run(&args));
    match &result {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    std::process::exit(cli::exit_code(&result));
}
