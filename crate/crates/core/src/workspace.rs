//! A data directory with every component wired together.
//!
//! ```text
//! <root>/assets/      content-addressed blobs
//! <root>/catalog/     one JSON document per site
//! <root>/templates/   prompt templates (<id>.prompt)
//! <root>/jobs/        journals and snapshots
//! <root>/published/   published models
//! <root>/backends.toml  optional extra backend profiles
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::assets::{AssetError, AssetStore};
use crate::catalog::{Catalog, CatalogError};
use crate::clock::SharedClock;
use crate::gateway::{load_profiles, BackendProfile, Gateway, GatewayError, Transport};
use crate::pipeline::{JobStore, Orchestrator, StoreError};
use crate::prompt::{TemplateStore, TemplateStoreError};

pub const BACKENDS_FILE: &str = "backends.toml";

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Template(#[from] TemplateStoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Jobs(#[from] StoreError),
}

pub struct Workspace {
    root: PathBuf,
    pub assets: Arc<AssetStore>,
    pub catalog: Arc<Catalog>,
    pub orchestrator: Arc<Orchestrator>,
}

/// Options for [`Workspace::open_with`].
#[derive(Default)]
pub struct WorkspaceOptions {
    /// Applied after `backends.toml`, replacing profiles of the same name.
    pub profiles: Vec<BackendProfile>,
    pub transport: Option<Arc<dyn Transport>>,
}

impl Workspace {
    pub fn open(root: impl Into<PathBuf>, clock: SharedClock) -> Result<Self, WorkspaceError> {
        Self::open_with(root, clock, WorkspaceOptions::default())
    }

    pub fn open_with(
        root: impl Into<PathBuf>,
        clock: SharedClock,
        options: WorkspaceOptions,
    ) -> Result<Self, WorkspaceError> {
        let root = root.into();
        let assets = Arc::new(AssetStore::open(root.join("assets"))?);
        let catalog = Arc::new(Catalog::open(root.join("catalog"), assets.clone())?);
        let templates = TemplateStore::open(root.join("templates"))?;
        let mut gateway = Gateway::new(assets.clone(), clock.clone());
        if let Some(t) = options.transport {
            gateway = gateway.with_transport(t);
        }
        let backends = root.join(BACKENDS_FILE);
        if backends.is_file() {
            gateway = gateway.with_profiles(load_profiles(&backends)?)?;
        }
        let gateway = Arc::new(gateway.with_profiles(options.profiles)?);
        let jobs = JobStore::open(root.join("jobs"))?;
        let orchestrator = Arc::new(Orchestrator::new(
            catalog.clone(),
            templates,
            gateway,
            jobs,
            root.join("published"),
            clock,
        ));
        Ok(Self {
            root,
            assets,
            catalog,
            orchestrator,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}
