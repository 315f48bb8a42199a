//! Turns a [`ScenarioConfig`] into channel statistics and design requests.

use rand::Rng;

use skg_core::channel::{compact_eig, make_clustered_covariance};
use skg_core::designer::{Criterion, DesignRequest};
use skg_core::linalg::HermitianMatrix;
use skg_core::matrix_io::load_matrix;
use skg_core::rng::substream;
use skg_core::{ArrayGeometry, Cluster, UserStatistics};

use crate::config::{db_to_linear, ScenarioConfig, UserSpec};
use crate::error::{BenchError, Result};

fn invalid(field: String, msg: impl Into<String>) -> BenchError {
    BenchError::Invalid {
        field,
        msg: msg.into(),
    }
}

/// The planar array described by the `[array]` table.
pub fn array_geometry(cfg: &ScenarioConfig) -> Result<ArrayGeometry> {
    let a = &cfg.array;
    let geom = if a.vertical == 1 {
        ArrayGeometry::ula(a.horizontal, a.spacing)?
    } else {
        ArrayGeometry::upa(a.horizontal, a.vertical, a.spacing)?
    };
    Ok(geom)
}

/// Clusters for `random_clusters = n`: a user direction drawn uniformly in
/// azimuth [-60, 60] degrees, with clusters scattered +-15 degrees around it.
/// Each user draws from its own substream of the run seed.
pub fn random_clusters(seed: u64, user: usize, n: usize) -> Vec<Cluster> {
    let mut rng = substream(seed, user as u64);
    let center: f64 = rng.random_range(-60.0..60.0);
    (0..n)
        .map(|_| {
            let az = center + rng.random_range(-15.0..15.0);
            let el = rng.random_range(-5.0..10.0);
            let spread = rng.random_range(2.0..8.0);
            let power = 10f64.powf(rng.random_range(-1.0..0.0));
            Cluster::from_degrees(az, el, spread, power)
        })
        .collect()
}

fn user_clusters(cfg: &ScenarioConfig, k: usize, spec: &UserSpec) -> Option<Vec<Cluster>> {
    if let Some(cs) = &spec.clusters {
        Some(
            cs.iter()
                .map(|c| Cluster::from_degrees(c.azimuth_deg, c.elevation_deg, c.spread_deg, c.power))
                .collect(),
        )
    } else {
        spec.random_clusters.map(|n| random_clusters(cfg.seed, k, n))
    }
}

fn user_covariance(
    cfg: &ScenarioConfig,
    k: usize,
    spec: &UserSpec,
    geom: &ArrayGeometry,
) -> Result<HermitianMatrix> {
    if let Some(clusters) = user_clusters(cfg, k, spec) {
        return Ok(make_clustered_covariance(geom, &clusters)?);
    }
    let rel = spec.covariance_file.as_ref().expect("validated user source");
    let field = format!("users[{k}].covariance_file");
    let path = cfg.resolve(rel);
    let text = std::fs::read_to_string(&path).map_err(|source| BenchError::Io {
        path: path.clone(),
        source,
    })?;
    let m = load_matrix(&text).map_err(|e| invalid(field.clone(), format!("{}: {e}", path.display())))?;
    if m.nrows() != geom.num_antennas() || m.ncols() != geom.num_antennas() {
        return Err(invalid(
            field,
            format!(
                "{}x{} matrix for a {}-element array",
                m.nrows(),
                m.ncols(),
                geom.num_antennas()
            ),
        ));
    }
    HermitianMatrix::new(m).map_err(|e| invalid(field, e.to_string()))
}

/// Compact eigenbases and uplink SNRs of every configured user on `geom`.
pub fn build_users(cfg: &ScenarioConfig, geom: &ArrayGeometry) -> Result<Vec<UserStatistics>> {
    cfg.users
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let r = user_covariance(cfg, k, spec, geom)?;
            let modes =
                compact_eig(&r, cfg.rank_tol).map_err(|e| invalid(format!("users[{k}]"), e.to_string()))?;
            let ul = db_to_linear(spec.ul_snr_db.unwrap_or(cfg.ul_snr_db));
            Ok(UserStatistics::new(modes, ul)?)
        })
        .collect()
}

/// Design request at one downlink SNR. `sigma_DL^2` stays fixed and the
/// budget scales as `p_DL = sigma_DL^2 * 10^(snr/10)`.
pub fn request(cfg: &ScenarioConfig, users: Vec<UserStatistics>, dl_snr_db: f64) -> Result<DesignRequest> {
    let single = users.len() == 1;
    let mut criterion: Criterion = cfg.criterion.into();
    let mut weights = cfg.weights.clone();
    if single {
        // One user: every criterion reduces to its own capacity.
        criterion = Criterion::Sum;
        weights = None;
    }
    Ok(DesignRequest::new(
        users,
        cfg.dl_noise_var * db_to_linear(dl_snr_db),
        cfg.dl_noise_var,
        cfg.t_max,
        criterion,
        weights,
    )?)
}
