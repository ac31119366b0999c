//! Protocol v1 client over a child process's stdin/stdout.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{self, decode_frame, encode_frame, Handshake, Request, Response};
use super::{Detector, DetectorBackendDescriptor, DetectorError, WhiteBoxCapture};
use crate::types::{Detection, ImageBuffer};

/// One running child. Reader and writer threads own the pipes so a stalled
/// child can never block the caller past its deadline.
struct Session {
    child: Child,
    to_child: Sender<String>,
    from_child: Receiver<std::io::Result<String>>,
}

impl Session {
    fn start(cmd: &str, timeout: Duration) -> Result<(Self, Handshake), DetectorError> {
        let mut child = shell(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| DetectorError::BackendUnavailable(format!("cannot start {cmd:?}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");

        let (line_tx, from_child) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if line_tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let (to_child, req_rx) = mpsc::channel::<String>();
        thread::spawn(move || {
            let mut stdin = stdin;
            for frame in req_rx {
                if stdin.write_all(frame.as_bytes()).and_then(|_| stdin.flush()).is_err() {
                    break;
                }
            }
        });

        let mut session = Self {
            child,
            to_child,
            from_child,
        };
        let handshake = match session.recv(Instant::now() + timeout, timeout) {
            Ok(line) => decode_frame::<Handshake>(&line)
                .map_err(|e| DetectorError::BackendUnavailable(format!("bad handshake from {cmd:?}: {e}"))),
            Err(DetectorError::Timeout(t)) => Err(DetectorError::BackendUnavailable(format!(
                "no handshake from {cmd:?} within {t:?}"
            ))),
            Err(e) => Err(DetectorError::BackendUnavailable(format!("handshake with {cmd:?} failed: {e}"))),
        };
        match handshake {
            Ok(h) => Ok((session, h)),
            Err(e) => {
                session.kill();
                Err(e)
            }
        }
    }

    fn send(&self, request: &Request) -> Result<(), DetectorError> {
        self.to_child
            .send(encode_frame(request))
            .map_err(|_| DetectorError::BackendUnavailable("backend stdin is closed".into()))
    }

    fn recv(&mut self, deadline: Instant, timeout: Duration) -> Result<String, DetectorError> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.from_child.recv_timeout(left) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => return Err(DetectorError::BackendUnavailable(format!("reading backend output: {e}"))),
                Err(RecvTimeoutError::Timeout) => return Err(DetectorError::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => {
                    let status = self.child.try_wait().ok().flatten();
                    return Err(DetectorError::BackendUnavailable(match status {
                        Some(s) => format!("backend exited ({s})"),
                        None => "backend closed its output".into(),
                    }));
                }
            }
        }
    }

    /// Kills the whole process group so grandchildren started by the shell
    /// die with it.
    fn kill(&mut self) {
        #[cfg(unix)]
        if let Ok(pid) = libc::pid_t::try_from(self.child.id()) {
            // SAFETY: plain syscall; the group id is the child's pid.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.kill();
    }
}

#[cfg(unix)]
fn shell(cmd: &str) -> Command {
    use std::os::unix::process::CommandExt;
    let mut c = Command::new("sh");
    c.arg("-c").arg(cmd).process_group(0);
    c
}

#[cfg(not(unix))]
fn shell(cmd: &str) -> Command {
    let mut c = Command::new("cmd");
    c.arg("/C").arg(cmd);
    c
}

/// A detector running as a child process.
///
/// Requests within one call are pipelined and matched by id. Any failure
/// kills the child; the next call starts a fresh one.
pub struct SubprocessBackend {
    cmd: String,
    timeout: Duration,
    descriptor: DetectorBackendDescriptor,
    session: Mutex<Option<Session>>,
    next_id: AtomicU64,
}

impl SubprocessBackend {
    pub fn spawn(cmd: &str, timeout: Duration) -> Result<Self, DetectorError> {
        let (session, handshake) = Session::start(cmd, timeout)?;
        let descriptor = handshake.into_descriptor()?;
        log::info!("subprocess backend {:?} ready ({} classes)", descriptor.name, descriptor.class_names.len());
        Ok(Self {
            cmd: cmd.to_string(),
            timeout,
            descriptor,
            session: Mutex::new(Some(session)),
            next_id: AtomicU64::new(1),
        })
    }

    /// Sends `requests` and returns the responses in request order.
    fn exchange(&self, requests: Vec<Request>) -> Result<Vec<Response>, DetectorError> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            let (session, handshake) = Session::start(&self.cmd, self.timeout)?;
            let d = handshake.into_descriptor()?;
            if d.class_names != self.descriptor.class_names {
                return Err(DetectorError::BackendUnavailable(
                    "restarted backend reports different classes".into(),
                ));
            }
            log::warn!("restarted subprocess backend {:?}", self.descriptor.name);
            *guard = Some(session);
        }
        let session = guard.as_mut().expect("session present");
        let result = Self::exchange_on(session, requests, self.timeout);
        if result.is_err() {
            *guard = None;
        }
        result
    }

    fn exchange_on(session: &mut Session, requests: Vec<Request>, timeout: Duration) -> Result<Vec<Response>, DetectorError> {
        let deadline = Instant::now() + timeout;
        let slot: HashMap<u64, usize> = requests.iter().enumerate().map(|(i, r)| (r.id(), i)).collect();
        for r in &requests {
            session.send(r)?;
        }
        let mut out: Vec<Option<Response>> = vec![None; requests.len()];
        for _ in 0..requests.len() {
            let line = session.recv(deadline, timeout)?;
            let response: Response = decode_frame(&line)?;
            let i = *slot.get(&response.id()).ok_or_else(|| {
                DetectorError::ProtocolViolation(format!("response for unknown request id {}", response.id()))
            })?;
            if out[i].replace(response).is_some() {
                return Err(DetectorError::ProtocolViolation(format!("duplicate response for id {}", requests[i].id())));
            }
        }
        Ok(out.into_iter().map(|r| r.expect("every slot filled")).collect())
    }

    fn fresh_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }
}

impl Detector for SubprocessBackend {
    fn descriptor(&self) -> &DetectorBackendDescriptor {
        &self.descriptor
    }

    fn detect_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<Detection>>, DetectorError> {
        let requests = images.iter().map(|img| Request::detect(self.fresh_id(), img)).collect();
        let n = self.descriptor.class_names.len();
        self.exchange(requests)?
            .into_iter()
            .map(|r| protocol::expect_detections(r, n))
            .collect()
    }

    fn capture(&self, image: &ImageBuffer, layer: &str, target_index: usize) -> Result<WhiteBoxCapture, DetectorError> {
        if !self.descriptor.supports_whitebox {
            return Err(DetectorError::Unsupported(format!(
                "backend {:?} does not export white-box captures",
                self.descriptor.name
            )));
        }
        let request = Request::Capture {
            id: self.fresh_id(),
            image_png_b64: protocol::encode_image(image),
            layer: layer.to_string(),
            target_index: u32::try_from(target_index)
                .map_err(|_| DetectorError::Unsupported(format!("target_index {target_index} too large")))?,
        };
        let response = self.exchange(vec![request])?.pop().expect("one response");
        protocol::expect_capture(response, layer)
    }
}
