use clap::Parser;
use xdata::cli::{execute, Args};

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = if args.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Err(e) = execute(&args) {
        eprintln!("xdata-complete: {e}");
        std::process::exit(e.exit_code());
    }
}
