//! Blocking JSON-over-HTTP helper shared by the remote providers.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub(crate) struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    pub(crate) fn new(permits: usize) -> Self {
        Gate {
            free: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("gate poisoned");
            while *free == 0 {
                free = self.cv.wait(free).expect("gate poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("gate poisoned") += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Debug)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
    gate: Gate,
}

impl JsonClient {
    pub(crate) fn new(base: &str, token: Option<String>, max_in_flight: usize) -> Self {
        JsonClient {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
            base: base.trim_end_matches('/').to_string(),
            token,
            gate: Gate::new(max_in_flight),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn auth(&self, req: ureq::Request) -> ureq::Request {
        match &self.token {
            Some(t) => req.set("Authorization", &format!("Bearer {t}")),
            None => req,
        }
    }

    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        self.gate.run(|| {
            let req = self.auth(self.agent.post(&self.url(path)));
            let resp = req.send_json(body).map_err(transport_error)?;
            resp.into_json().map_err(|e| Error::Transport {
                status: None,
                message: format!("bad response body from {path}: {e}"),
            })
        })
    }

    pub(crate) fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R> {
        self.gate.run(|| {
            let req = self.auth(self.agent.get(&self.url(path)));
            let resp = req.call().map_err(transport_error)?;
            resp.into_json().map_err(|e| Error::Transport {
                status: None,
                message: format!("bad response body from {path}: {e}"),
            })
        })
    }
}

pub(crate) fn transport_error(e: ureq::Error) -> Error {
    match e {
        ureq::Error::Status(code, resp) => Error::Transport {
            status: Some(code),
            message: resp.into_string().unwrap_or_default(),
        },
        ureq::Error::Transport(t) => Error::Transport {
            status: None,
            message: t.to_string(),
        },
    }
}
