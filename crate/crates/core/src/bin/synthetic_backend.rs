//! Reference protocol v1 backend wrapping the synthetic blob detector.
//!
//! ```text
//! odexai-synthetic-backend [--capture-dir DIR] [--fault MODE]
//! ```
//!
//! Fault modes exercise client error handling:
//! `bad-handshake`, `malformed` (garbage instead of responses), `hang`
//! (handshake, then never answer), `exit` (handshake, then exit on the first
//! request), `wrong-id` (answers with an id nobody asked for).

use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use odexai::detectors::protocol::{decode_frame, encode_frame, serve, DetectFrame, Handshake, Request, Response};
use odexai::detectors::{Detector, SyntheticDetector};

#[derive(PartialEq)]
enum Fault {
    None,
    BadHandshake,
    Malformed,
    Hang,
    Exit,
    WrongId,
}

fn parse_args() -> Result<(PathBuf, Fault), String> {
    let mut dir = std::env::temp_dir();
    let mut fault = Fault::None;
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--capture-dir" => dir = args.next().ok_or("--capture-dir needs a value")?.into(),
            "--fault" => {
                fault = match args.next().as_deref() {
                    Some("bad-handshake") => Fault::BadHandshake,
                    Some("malformed") => Fault::Malformed,
                    Some("hang") => Fault::Hang,
                    Some("exit") => Fault::Exit,
                    Some("wrong-id") => Fault::WrongId,
                    other => return Err(format!("unknown fault mode {other:?}")),
                }
            }
            "-h" | "--help" => {
                return Err("usage: odexai-synthetic-backend [--capture-dir DIR] [--fault MODE]".into());
            }
            other => return Err(format!("unexpected argument {other:?}")),
        }
    }
    Ok((dir, fault))
}

fn main() -> ExitCode {
    let (dir, fault) = match parse_args() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let detector = SyntheticDetector::new();
    let stdin = io::stdin().lock();
    let mut stdout = io::stdout().lock();
    let result = if fault == Fault::None {
        serve(&detector, stdin, &mut stdout, &dir)
    } else {
        faulty(&detector, fault, stdin, &mut stdout)
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("odexai-synthetic-backend: {e}");
            ExitCode::FAILURE
        }
    }
}

fn faulty(detector: &dyn Detector, fault: Fault, stdin: impl BufRead, out: &mut impl Write) -> io::Result<()> {
    if fault == Fault::BadHandshake {
        out.write_all(b"{\"hello\":\"world\"}\n")?;
        return out.flush();
    }
    out.write_all(encode_frame(&Handshake::from_descriptor(detector.descriptor())).as_bytes())?;
    out.flush()?;
    for line in stdin.lines() {
        let line = line?;
        let id = decode_frame::<Request>(&line).map(|r| r.id()).unwrap_or(0);
        match fault {
            Fault::Malformed => out.write_all(b"{\"id\": oops\n")?,
            Fault::Hang => std::thread::sleep(Duration::from_secs(3600)),
            Fault::Exit => std::process::exit(3),
            Fault::WrongId => out.write_all(
                encode_frame(&Response::Detect(DetectFrame {
                    id: id.wrapping_add(1_000_000),
                    detections: vec![],
                    timing_ms: 0.0,
                }))
                .as_bytes(),
            )?,
            Fault::None | Fault::BadHandshake => unreachable!(),
        }
        out.flush()?;
    }
    Ok(())
}
