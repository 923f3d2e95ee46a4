//! The two ways of carrying out a command: on the store directly, or
//! through a server's HTTP API.

use std::path::Path;

use emag_core::ingest::FeedSource;
use emag_core::interest::ProfileDocument;
use emag_core::store::Dump;
use emag_core::{Engine, EngineConfig, EngineError, Store};
use reqwest::blocking::{Client, RequestBuilder};
use reqwest::Method;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Cli, Failure};

pub enum Backend {
    Embedded { engine: Box<Engine>, runtime: tokio::runtime::Runtime },
    Remote { client: Client, base: String, token: Option<String> },
}

fn engine_failure(e: EngineError) -> Failure {
    match e {
        EngineError::BadRequest(m) => Failure::Usage(m),
        other => Failure::Operational(other.to_string()),
    }
}

fn to_value<T: Serialize>(v: T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Operational(e.to_string()))
}

fn read_json<T: serde::de::DeserializeOwned>(file: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| Failure::Operational(format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Operational(format!("{}: {e}", file.display())))
}

fn write_json(file: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Operational(e.to_string()))?;
    std::fs::write(file, text + "\n").map_err(|e| Failure::Operational(format!("{}: {e}", file.display())))
}

impl Backend {
    pub fn connect(cli: &Cli) -> Result<Self, Failure> {
        if let Some(server) = &cli.server {
            let client = Client::builder()
                .timeout(std::time::Duration::from_secs(120))
                .build()
                .map_err(|e| Failure::Operational(e.to_string()))?;
            return Ok(Backend::Remote {
                client,
                base: server.trim_end_matches('/').to_string(),
                token: cli.token.clone(),
            });
        }
        let config = match &cli.config {
            Some(path) => EngineConfig::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
            None => EngineConfig::default(),
        };
        let store = Store::open(&cli.data_dir)
            .map_err(|e| Failure::Operational(format!("opening {}: {e}", cli.data_dir.display())))?;
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(|e| Failure::Operational(e.to_string()))?;
        Ok(Backend::Embedded {
            engine: Box::new(Engine::new(store, config)),
            runtime,
        })
    }

    /// Sends a request and returns the JSON body (null for 204). Error
    /// bodies become failures: 400 is a usage error, the rest operational.
    fn call(&self, method: Method, path: &str, body: Option<&Value>) -> Result<Value, Failure> {
        let Backend::Remote { client, base, token } = self else {
            unreachable!("call is only used in remote mode")
        };
        let mut req: RequestBuilder = client.request(method, format!("{base}{path}"));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().map_err(|e| Failure::Operational(format!("{base}: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Operational(e.to_string()))?;
        let value: Value = if text.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).map_err(|e| Failure::Operational(format!("bad response from server: {e}")))?
        };
        if status.is_success() {
            return Ok(value);
        }
        let message = value["message"].as_str().map_or_else(|| format!("server answered {status}"), String::from);
        Err(if status.as_u16() == 400 {
            Failure::Usage(message)
        } else {
            Failure::Operational(message)
        })
    }

    pub fn add_source(&self, id: &str, url: &str, category: &str) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, .. } => {
                let source = FeedSource::new(id, url, category, &engine.config().taxonomy)
                    .map_err(|e| Failure::Usage(e.to_string()))?;
                to_value(engine.add_source(source).map_err(engine_failure)?)
            }
            Backend::Remote { .. } => self.call(
                Method::POST,
                "/admin/sources",
                Some(&json!({ "id": id, "url": url, "category": category })),
            ),
        }
    }

    pub fn sources(&self) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, .. } => to_value(engine.sources().map_err(engine_failure)?),
            Backend::Remote { .. } => self.call(Method::GET, "/admin/sources", None),
        }
    }

    pub fn disable_source(&self, id: &str) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, .. } => to_value(engine.disable_source(id).map_err(engine_failure)?),
            Backend::Remote { .. } => self.call(Method::POST, &format!("/admin/sources/{id}/disable"), None),
        }
    }

    /// One report per source; all enabled sources when `source` is `None`.
    pub fn ingest(&self, source: Option<&str>) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, runtime } => {
                let reports = match source {
                    Some(id) => vec![runtime.block_on(engine.ingest_source(id)).map_err(engine_failure)?],
                    None => runtime.block_on(engine.ingest_all()).map_err(engine_failure)?,
                };
                to_value(reports)
            }
            Backend::Remote { .. } => self.call(Method::POST, "/admin/ingest", Some(&json!({ "source": source }))),
        }
    }

    pub fn decay_flush(&self) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, .. } => to_value(engine.decay_and_flush_all().map_err(engine_failure)?),
            Backend::Remote { .. } => self.call(Method::POST, "/admin/decay-flush", None),
        }
    }

    pub fn rebuild(&self) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, .. } => Ok(json!({ "version": engine.rebuild().map_err(engine_failure)? })),
            Backend::Remote { .. } => self.call(Method::POST, "/admin/rebuild", None),
        }
    }

    /// Never rebuilds: without a model that knows the user this fails with
    /// "rebuild required".
    pub fn recommendations(&self, user: &str) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, .. } => to_value(engine.recommendations(user, false).map_err(engine_failure)?),
            Backend::Remote { .. } => self.call(Method::GET, &format!("/users/{user}/recommendations?rebuild=false"), None),
        }
    }

    pub fn import_profile(&self, file: &Path) -> Result<Value, Failure> {
        let doc: ProfileDocument = read_json(file)?;
        match self {
            Backend::Embedded { engine, .. } => to_value(engine.import_profile(&doc.user_id, &doc).map_err(engine_failure)?),
            Backend::Remote { .. } => {
                let body = to_value(&doc)?;
                self.call(Method::POST, &format!("/users/{}/profile-import", doc.user_id), Some(&body))
            }
        }
    }

    pub fn user_show(&self, user: &str) -> Result<Value, Failure> {
        match self {
            Backend::Embedded { engine, .. } => to_value(engine.user_show(user).map_err(engine_failure)?),
            Backend::Remote { .. } => self.call(Method::GET, &format!("/users/{user}"), None),
        }
    }

    pub fn dump(&self, file: &Path) -> Result<Value, Failure> {
        let dump = match self {
            Backend::Embedded { engine, .. } => to_value(engine.dump())?,
            Backend::Remote { .. } => self.call(Method::GET, "/admin/dump", None)?,
        };
        write_json(file, &dump)?;
        Ok(json!({ "written": file.display().to_string() }))
    }

    pub fn load(&self, file: &Path) -> Result<Value, Failure> {
        let dump: Dump = read_json(file)?;
        match self {
            Backend::Embedded { engine, .. } => engine.load(dump).map_err(engine_failure)?,
            Backend::Remote { .. } => {
                self.call(Method::POST, "/admin/load", Some(&to_value(&dump)?))?;
            }
        }
        Ok(json!({ "loaded": file.display().to_string() }))
    }
}
