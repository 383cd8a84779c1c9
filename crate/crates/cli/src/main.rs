use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    match bnavail_cli::run(std::env::args_os(), &mut io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.downcast_ref::<clap::Error>() {
                Some(usage) => {
                    let _ = usage.print();
                }
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(bnavail_cli::exit_code(&e))
        }
    }
}
