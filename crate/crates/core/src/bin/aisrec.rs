use std::process::ExitCode;

fn main() -> ExitCode {
    match aisrec::cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aisrec: {e}");
            ExitCode::FAILURE
        }
    }
}
