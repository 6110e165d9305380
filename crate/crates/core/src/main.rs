use std::io::Write;
use std::panic;
use std::process::ExitCode;

use mrprio::cli::{self, EXIT_INTERNAL};

fn main() -> ExitCode {
    let result = panic::catch_unwind(|| {
        let stdout = std::io::stdout();
        let stderr = std::io::stderr();
        let mut out = stdout.lock();
        let mut err = stderr.lock();
        let code = cli::run(std::env::args_os(), &mut out, &mut err);
        let _ = out.flush();
        code
    });
    let code = result.unwrap_or(EXIT_INTERNAL);
    ExitCode::from(code as u8)
}
