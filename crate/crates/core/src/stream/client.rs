//! Client side of the round protocol.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Deserialize;

use super::{Ack, DecisionLog, DecisionMsg, LogEntry, StreamServer, Writing};
use crate::error::{Error, Result};
use crate::http::JsonClient;

pub trait RoundTransport {
    fn next_round(&mut self) -> Result<Vec<Writing>>;

    fn submit(&mut self, decisions: &[DecisionMsg]) -> Result<Ack>;
}

/// Talks to a server object in the same process.
#[derive(Debug, Clone)]
pub struct InProcess {
    pub server: Arc<StreamServer>,
    pub token: String,
}

impl RoundTransport for InProcess {
    fn next_round(&mut self) -> Result<Vec<Writing>> {
        self.server.next_round(&self.token)
    }

    fn submit(&mut self, decisions: &[DecisionMsg]) -> Result<Ack> {
        self.server.submit(&self.token, decisions)
    }
}

#[derive(Debug)]
pub struct HttpTransport {
    client: JsonClient,
    token: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

impl HttpTransport {
    pub fn new(base_url: &str, token: &str) -> Self {
        HttpTransport {
            client: JsonClient::new(base_url, None, 1),
            token: token.to_string(),
        }
    }

    fn map_error(e: Error) -> Error {
        match e {
            Error::Transport {
                status: Some(code),
                message,
            } if code == 409 || code == 401 => {
                let msg = serde_json::from_str::<ErrorBody>(&message)
                    .map(|b| b.error)
                    .unwrap_or(message);
                if code == 409 {
                    Error::Protocol(msg)
                } else {
                    Error::Auth(msg)
                }
            }
            other => other,
        }
    }
}

impl RoundTransport for HttpTransport {
    fn next_round(&mut self) -> Result<Vec<Writing>> {
        self.client
            .get(&format!("/teams/{}/writings", self.token))
            .map_err(Self::map_error)
    }

    fn submit(&mut self, decisions: &[DecisionMsg]) -> Result<Ack> {
        self.client
            .post(&format!("/teams/{}/decisions", self.token), &decisions)
            .map_err(Self::map_error)
    }
}

/// Produces one decision per released writing.
pub trait Strategy {
    fn decide(&mut self, writings: &[Writing]) -> Result<Vec<DecisionMsg>>;
}

impl<F> Strategy for F
where
    F: FnMut(&[Writing]) -> Result<Vec<DecisionMsg>>,
{
    fn decide(&mut self, writings: &[Writing]) -> Result<Vec<DecisionMsg>> {
        self(writings)
    }
}

/// Resumable protocol driver. After an error the client keeps its log and
/// any unsubmitted round, so calling [`Client::run`] again picks up where
/// it stopped (possibly with a new transport).
#[derive(Debug)]
pub struct Client<T> {
    pub transport: T,
    log: DecisionLog,
    unsent: Option<(Vec<Writing>, Vec<DecisionMsg>)>,
    completed: Option<usize>,
}

impl<T: RoundTransport> Client<T> {
    pub fn new(transport: T) -> Self {
        Client {
            transport,
            log: DecisionLog::default(),
            unsent: None,
            completed: None,
        }
    }

    pub fn log(&self) -> &DecisionLog {
        &self.log
    }

    pub fn into_log(self) -> DecisionLog {
        self.log
    }

    pub fn last_completed_round(&self) -> Option<usize> {
        self.completed
    }

    pub fn run(&mut self, strategy: &mut dyn Strategy) -> Result<()> {
        loop {
            let (writings, decisions) = match self.unsent.take() {
                Some(pair) => pair,
                None => {
                    let writings = self.transport.next_round()?;
                    if writings.is_empty() {
                        return Ok(());
                    }
                    let decisions = strategy.decide(&writings)?;
                    (writings, decisions)
                }
            };
            let ack = match self.transport.submit(&decisions) {
                Ok(ack) => ack,
                Err(e) => {
                    self.unsent = Some((writings, decisions));
                    return Err(e);
                }
            };
            let rounds: HashMap<&str, usize> = writings
                .iter()
                .map(|w| (w.subject_id.as_str(), w.round))
                .collect();
            for d in &decisions {
                let round = rounds.get(d.subject_id.as_str()).copied().unwrap_or(ack.round);
                self.log.push(
                    &d.subject_id,
                    LogEntry {
                        round,
                        decision: d.decision,
                        score: d.score,
                    },
                )?;
            }
            self.completed = Some(ack.round);
        }
    }
}

/// Drive the protocol to the end of the stream.
pub fn run_client<T: RoundTransport>(transport: T, strategy: &mut dyn Strategy) -> Result<DecisionLog> {
    let mut client = Client::new(transport);
    match client.run(strategy) {
        Ok(()) => Ok(client.into_log()),
        Err(e) => {
            let last = client
                .last_completed_round()
                .map_or("none".to_string(), |r| r.to_string());
            Err(match e {
                Error::Transport { status, message } => Error::Transport {
                    status,
                    message: format!("{message} (last completed round: {last})"),
                },
                other => other,
            })
        }
    }
}
