//! HTTP service under `/api/v1`.
//!
//! Each user has one slot holding their store behind a mutex (the single
//! writer) and an immutable published copy of their state that readers
//! clone without waiting on writers. Writes run on the blocking pool since
//! they touch disk and may call providers.

mod api;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use dashmap::DashMap;
use parking_lot::{Mutex, RwLock};

use crate::config::Config;
use crate::domain::UserId;
use crate::metrics::MetricsOptions;
use crate::service::{Engine, ServiceError};
use crate::store::{self, StoreError, UserState, UserStore};

pub use api::{router, ApiError};

/// Source of "now" for timestamps and the regeneration sweep.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock() = at;
    }

    pub fn advance(&self, by: chrono::Duration) {
        *self.0.lock() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock()
    }
}

pub(crate) struct Slot {
    writer: Mutex<UserStore>,
    published: RwLock<Arc<UserState>>,
}

impl Slot {
    fn new(store: UserStore) -> Self {
        let published = RwLock::new(Arc::new(store.state().clone()));
        Slot {
            writer: Mutex::new(store),
            published,
        }
    }

    pub(crate) fn view(&self) -> Arc<UserState> {
        self.published.read().clone()
    }

    /// Runs `f` as the only writer for this user, then publishes the new
    /// state.
    pub(crate) fn write<T>(&self, f: impl FnOnce(&mut UserStore) -> T) -> T {
        let mut store = self.writer.lock();
        let out = f(&mut store);
        *self.published.write() = Arc::new(store.state().clone());
        out
    }
}

pub struct AppState {
    pub engine: Engine,
    pub store_dir: PathBuf,
    pub clock: Arc<dyn Clock>,
    pub metrics: MetricsOptions,
    pub snapshot_every: usize,
    /// Bearer token required on every request when set.
    pub token: Option<String>,
    slots: DashMap<UserId, Arc<Slot>>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SweepReport {
    pub checked: usize,
    pub generated: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl AppState {
    /// Replays every user already in the store.
    pub fn open(
        engine: Engine,
        store_dir: PathBuf,
        clock: Arc<dyn Clock>,
        metrics: MetricsOptions,
        snapshot_every: usize,
        token: Option<String>,
    ) -> Result<Self, StoreError> {
        let slots = DashMap::new();
        for user in store::list_users(&store_dir)? {
            let s = UserStore::open(&store_dir, &user, snapshot_every)?;
            slots.insert(user, Arc::new(Slot::new(s)));
        }
        Ok(AppState {
            engine,
            store_dir,
            clock,
            metrics,
            snapshot_every,
            token,
            slots,
        })
    }

    pub fn from_config(config: &Config, engine: Engine, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let token = config
            .server
            .token_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|t| !t.is_empty());
        Self::open(
            engine,
            config.store_dir.clone(),
            clock,
            MetricsOptions {
                session_gap: chrono::Duration::minutes(config.session_gap_minutes),
                unique_views: false,
            },
            config.server.snapshot_every as usize,
            token,
        )
    }

    pub fn knows(&self, user: &UserId) -> bool {
        self.slots.contains_key(user) || self.engine.knows(user)
    }

    /// Published state, if the user has any stored history.
    pub fn view(&self, user: &UserId) -> Option<Arc<UserState>> {
        self.slots.get(user).map(|s| s.view())
    }

    /// The user's slot, opening their store on first use.
    pub(crate) fn slot(&self, user: &UserId) -> Result<Arc<Slot>, StoreError> {
        if let Some(s) = self.slots.get(user) {
            return Ok(s.clone());
        }
        let entry = self.slots.entry(user.clone());
        match entry {
            dashmap::Entry::Occupied(o) => Ok(o.get().clone()),
            dashmap::Entry::Vacant(v) => {
                let s = UserStore::open(&self.store_dir, user, self.snapshot_every)?;
                Ok(v.insert(Arc::new(Slot::new(s))).clone())
            }
        }
    }

    /// Dataset users plus anyone with stored history, sorted.
    pub fn users(&self) -> Vec<UserId> {
        let mut all: BTreeSet<UserId> = self.engine.dataset_users().cloned().collect();
        all.extend(self.slots.iter().map(|e| e.key().clone()));
        all.into_iter().collect()
    }

    /// The daily pass: every user gets a first portrait or a threshold
    /// check. Per-user failures are logged and counted, never fatal.
    pub fn sweep(&self) -> SweepReport {
        let now = self.clock.now();
        let mut report = SweepReport::default();
        for user in self.users() {
            report.checked += 1;
            let result = self
                .slot(&user)
                .map_err(ServiceError::from)
                .and_then(|slot| slot.write(|s| self.engine.check(s, now, now, false)));
            match result {
                Ok(Some(_)) => report.generated += 1,
                Ok(None) => {}
                Err(ServiceError::Pipeline(e)) if e.is_skip() => report.skipped += 1,
                Err(e) => {
                    tracing::warn!(user = %user, error = %e, "regeneration check failed");
                    report.failed += 1;
                }
            }
        }
        report
    }
}

/// Serves until ctrl-c, sweeping on the configured interval.
pub async fn serve(state: Arc<AppState>, bind: &str, sweep_every: std::time::Duration) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval_at(tokio::time::Instant::now() + sweep_every, sweep_every);
        loop {
            tick.tick().await;
            let s = sweeper.clone();
            match tokio::task::spawn_blocking(move || s.sweep()).await {
                Ok(r) => tracing::info!(?r, "sweep finished"),
                Err(e) => tracing::error!(error = %e, "sweep panicked"),
            }
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
