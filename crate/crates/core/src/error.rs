//! The error shape shared by the HTTP service and the CLI.

use serde::{Deserialize, Serialize};

use crate::assets::AssetError;
use crate::catalog::CatalogError;
use crate::gateway::GatewayError;
use crate::metrics::MetricsError;
use crate::pipeline::PipelineError;
use crate::prompt::{CompileError, TemplateStoreError};
use crate::workspace::WorkspaceError;

/// `status` is an HTTP status: 4xx for caller faults, 5xx for backend or
/// internal faults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(400, code, message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(404, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "internal_error", message)
    }

    pub fn is_caller_fault(&self) -> bool {
        (400..500).contains(&self.status)
    }
}

fn status_for(code: &str) -> u16 {
    match code {
        "site_not_found" | "job_not_found" | "asset_not_found" | "template_not_found" | "model_not_found" => 404,
        "job_terminal" | "job_not_failed" | "site_conflict" => 409,
        "site_has_no_images" | "missing_required_attribute" => 422,
        "backend_unreachable" | "backend_rejected" | "invalid_output" => 502,
        "missing_credential" | "invalid_config" | "asset_error" | "job_store_error" | "io_error"
        | "catalog_error" | "internal_error" | "missing_artifact" | "invalid_mesh" => 500,
        _ => 400,
    }
}

fn coded(code: &str, message: String) -> ApiError {
    ApiError::new(status_for(code), code, message)
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Catalog(c) => c.into(),
            PipelineError::Asset(a) => a.into(),
            other => coded(other.code(), other.to_string()),
        }
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let code = match &e {
            CatalogError::EmptyName | CatalogError::InvalidSiteId(_) => "invalid_site",
            CatalogError::DuplicateSite(_) => "site_conflict",
            CatalogError::UnknownSite(_) => "site_not_found",
            CatalogError::InvalidAzimuth(_) => "invalid_azimuth",
            CatalogError::UndecodableImage(_) => "undecodable_image",
            CatalogError::Asset(_) => "asset_error",
            CatalogError::Document { .. } | CatalogError::Io(_) => "catalog_error",
        };
        coded(code, e.to_string())
    }
}

impl From<AssetError> for ApiError {
    fn from(e: AssetError) -> Self {
        let code = match &e {
            AssetError::NotFound(_) => "asset_not_found",
            AssetError::BadId(_) => "invalid_asset_id",
            _ => "asset_error",
        };
        coded(code, e.to_string())
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        coded(e.code(), e.to_string())
    }
}

impl From<TemplateStoreError> for ApiError {
    fn from(e: TemplateStoreError) -> Self {
        let code = match &e {
            TemplateStoreError::NotFound(_) => "template_not_found",
            TemplateStoreError::Io(_) => "io_error",
            _ => "invalid_template",
        };
        coded(code, e.to_string())
    }
}

impl From<CompileError> for ApiError {
    fn from(e: CompileError) -> Self {
        coded("missing_required_attribute", e.to_string())
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        let code = match &e {
            MetricsError::Io(_) => "io_error",
            _ => "invalid_metrics",
        };
        coded(code, e.to_string())
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::Asset(a) => a.into(),
            WorkspaceError::Catalog(c) => c.into(),
            WorkspaceError::Template(t) => t.into(),
            WorkspaceError::Gateway(g) => g.into(),
            WorkspaceError::Jobs(j) => coded("job_store_error", j.to_string()),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        coded("io_error", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statuses() {
        let e: ApiError = PipelineError::UnknownJob("x".into()).into();
        assert_eq!((e.status, e.code.as_str()), (404, "job_not_found"));
        let e: ApiError = GatewayError::Unreachable {
            attempts: 3,
            last: "timeout".into(),
        }
        .into();
        assert_eq!(e.status, 502);
        assert!(!e.is_caller_fault());
        let e: ApiError = CatalogError::InvalidAzimuth(400.0).into();
        assert_eq!((e.status, e.code.as_str()), (400, "invalid_azimuth"));
    }
}
