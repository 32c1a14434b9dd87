//! Wires the long-running services together: store, SMS dispatcher,
//! pipeline worker, FTP ingest and the HTTP API.

use std::net::SocketAddr;
use std::sync::Arc;

use thiserror::Error;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::config::{Config, ConfigError};
use crate::ingest_ftp::{FtpServer, UploadEvent};
use crate::pipeline::{AlertJob, Origin, Pipeline, PipelineHandle};
use crate::sms::serial::SerialChannel;
use crate::sms::{SimulatedModem, SmsHandle};
use crate::store::{Store, StoreError};
use crate::web_api::{self, ApiState};

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot open modem {device}: {source}")]
    Modem {
        device: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{what}: {source}")]
    Io {
        what: &'static str,
        #[source]
        source: std::io::Error,
    },
}

fn io(what: &'static str) -> impl FnOnce(std::io::Error) -> DaemonError {
    move |source| DaemonError::Io { what, source }
}

pub struct Daemon {
    pub store: Arc<Store>,
    pub sms: SmsHandle,
    pub pipeline: PipelineHandle,
    /// Present when the configuration selects the simulated modem.
    pub modem: Option<SimulatedModem>,
    pub api: Arc<ApiState>,
    ftp: FtpServer,
    http_addr: SocketAddr,
    tasks: Vec<JoinHandle<()>>,
}

impl Daemon {
    /// Starts every service. Must be called inside a tokio runtime.
    pub async fn start(config: &Config) -> Result<Daemon, DaemonError> {
        config.validate()?;
        std::fs::create_dir_all(&config.pipeline.archive_dir).map_err(io("creating archive directory"))?;
        if let Some(parent) = config.store.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io("creating store directory"))?;
        }

        let store = Arc::new(Store::open(&config.store.path, &config.pipeline.archive_dir)?);
        if store.bootstrap_admin(&config.admin.username, &config.admin.password)? {
            info!(user = %config.admin.username, "seeded admin account");
        }

        let timeout = config.reply_timeout()?;
        let (sms, modem) = if config.sms.device == "sim" {
            let modem = SimulatedModem::default();
            (SmsHandle::spawn(modem.connect(), timeout), Some(modem))
        } else {
            let port =
                SerialChannel::open(&config.sms.device, config.sms.baud).map_err(|source| DaemonError::Modem {
                    device: config.sms.device.clone(),
                    source,
                })?;
            (SmsHandle::spawn(port, timeout), None)
        };

        let pipeline = PipelineHandle::spawn(Pipeline::new(
            store.clone(),
            Arc::new(sms.clone()),
            config.pipeline_config()?,
        ));

        let (tx, mut uploads) = mpsc::unbounded_channel::<UploadEvent>();
        let forward_to = pipeline.clone();
        let forwarder = tokio::spawn(async move {
            while let Some(ev) = uploads.recv().await {
                let job = AlertJob {
                    source_path: ev.stored_path,
                    event_time: ev.received_at,
                    origin: Origin::FtpUpload,
                };
                if !forward_to.submit(job) {
                    warn!("pipeline stopped; upload dropped");
                }
            }
        });
        let ftp = FtpServer::start(config.ftp_config()?, tx)
            .await
            .map_err(io("starting FTP server"))?;

        let api = ApiState::new(store.clone());
        let listener = tokio::net::TcpListener::bind((config.http.bind, config.http.port))
            .await
            .map_err(io("binding HTTP port"))?;
        let http_addr = listener.local_addr().map_err(io("binding HTTP port"))?;
        let router = web_api::router(api.clone(), config.http.static_dir.as_deref());
        let http = tokio::spawn(async move {
            if let Err(e) = web_api::serve(listener, router).await {
                warn!(error = %e, "HTTP server stopped");
            }
        });
        info!(ftp = %ftp.local_addr(), http = %http_addr, "daemon running");

        Ok(Daemon {
            store,
            sms,
            pipeline,
            modem,
            api,
            ftp,
            http_addr,
            tasks: vec![forwarder, http],
        })
    }

    pub fn ftp_addr(&self) -> SocketAddr {
        self.ftp.local_addr()
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn shutdown(self) {
        for t in &self.tasks {
            t.abort();
        }
        self.ftp.shutdown();
    }
}
