//! The numerical studies: path-separation sweeps, average path-overlap,
//! ranging-ability outage, ULA reference sweeps, and the moving-anchor
//! clock-offset sweep. Each study emits a [`ResultTable`] whose first
//! column is the sweep variable.

use nalgebra::vector;
use rayon::prelude::*;

use crate::array::{ArrayGeometry, ArrayRanging};
use crate::channel::{sample_bias_sequence, AnchorPaths};
use crate::clock::efim_with_offset_from_riis;
use crate::error::{Error, Result};
use crate::experiments::rng::substream;
use crate::experiments::table::{Cell, ResultTable};
use crate::fim::{
    efim_from_ranging, path_overlap_coefficient, position_efim_result, rii_partial_model,
};
use crate::geometry::{NetworkTopology, Sight};
use crate::priors::{AnchorPrior, Fisher, PositionPrior};
use crate::scalar::SPEED_OF_LIGHT;
use crate::waveform::Waveform;

const N0: f64 = 1.0;

/// Label for a Fisher value in column headers: `0`, `20`, `inf`.
pub fn fisher_label(f: &Fisher<f64>) -> String {
    match f {
        Fisher::Finite(v) => format!("{v}"),
        Fisher::Infinite => "inf".into(),
    }
}

/// Nanosecond label for column headers, snapped to 1e-6 ns so that values
/// like `2e-9 s` render as `2` rather than `2.0000000000000004`.
fn ns_label(seconds: f64) -> String {
    let ns = (seconds * 1e9 * 1e6).round() / 1e6;
    format!("{ns}")
}

fn cell_of(result: Result<f64>) -> Cell {
    match result {
        Ok(v) => Cell::Num(v),
        Err(e) => Cell::Err(e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Path separation (Fig. 4 / Fig. 5 setups)
// ---------------------------------------------------------------------------

/// A prior assignment for the two-path channel: Fisher information on
/// `(α⁽¹⁾, b⁽²⁾, α⁽²⁾)` of every anchor.
#[derive(Clone, Debug)]
pub struct TwoPathPriorVariant {
    pub label: String,
    pub xi_alpha1: Fisher<f64>,
    pub xi_b2: Fisher<f64>,
    pub xi_alpha2: Fisher<f64>,
}

/// SPEB versus two-path separation on a symmetric all-LOS ring.
///
/// Without variants the columns are the full-parameter, partial-parameter
/// and non-overlap models; with variants one SPEB column per prior
/// assignment plus the non-overlap reference.
#[derive(Clone, Debug)]
pub struct PathSeparationStudy {
    pub waveform: Waveform<f64>,
    pub topology: NetworkTopology<f64>,
    pub separations_s: Vec<f64>,
    pub snr1_db: f64,
    pub snr2_db: f64,
    pub prior_variants: Vec<TwoPathPriorVariant>,
}

impl PathSeparationStudy {
    pub fn run(&self) -> Result<ResultTable> {
        if self.separations_s.is_empty() {
            return Err(Error::Config("empty separation grid".into()));
        }
        if self
            .topology
            .anchors()
            .iter()
            .any(|a| !a.sight.is_los())
        {
            return Err(Error::InconsistentScenario(
                "the path-separation study needs all-LOS anchors".into(),
            ));
        }
        let energy = self.waveform.energy();
        let a1 = (10f64.powf(self.snr1_db / 10.0) * N0 / energy).sqrt();
        let a2 = (10f64.powf(self.snr2_db / 10.0) * N0 / energy).sqrt();
        let n_anchors = self.topology.anchor_count();
        let angles = self.topology.angles()?;

        let mut columns = vec!["separation_ns".to_string()];
        if self.prior_variants.is_empty() {
            columns.extend(
                ["speb_full", "speb_partial", "speb_nonoverlap"]
                    .map(String::from),
            );
        } else {
            for v in &self.prior_variants {
                columns.push(format!("speb_{}", v.label));
            }
            columns.push("speb_nonoverlap".into());
        }
        let mut table = ResultTable::new(columns);

        let beta = self.waveform.effective_bandwidth();
        let lambda_nonoverlap = 8.0 * std::f64::consts::PI.powi(2) * beta * beta
            / (SPEED_OF_LIGHT * SPEED_OF_LIGHT)
            * (a1 * a1 * energy / N0);
        let speb_of = |lambda: f64| -> Result<f64> {
            position_efim_result(efim_from_ranging(&angles, &vec![lambda; n_anchors]))
                .map(|r| r.speb)
        };

        for &sep in &self.separations_s {
            let mut row = vec![Cell::Num(sep * 1e9)];
            let paths = AnchorPaths::two_path(sep, a1, a2)?;
            if self.prior_variants.is_empty() {
                let full = crate::fim::rii_no_prior(Sight::Los, &paths, &self.waveform, N0)
                    .and_then(&speb_of);
                let partial = rii_partial_model(Sight::Los, &paths, &self.waveform, N0)
                    .and_then(&speb_of);
                row.push(cell_of(full));
                row.push(cell_of(partial));
            } else {
                for v in &self.prior_variants {
                    let prior =
                        AnchorPrior::diagonal(0.0, &[v.xi_alpha1, v.xi_b2, v.xi_alpha2])?;
                    let lam = crate::priors::rii_with_prior(
                        Sight::Los,
                        &paths,
                        &self.waveform,
                        N0,
                        &prior,
                    )
                    .and_then(&speb_of);
                    row.push(cell_of(lam));
                }
            }
            row.push(cell_of(speb_of(lambda_nonoverlap)));
            table.push_row(row);
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// Average path-overlap coefficient (Fig. 6 setup)
// ---------------------------------------------------------------------------

/// Mean POC versus path inter-arrival time, one curve per path count.
#[derive(Clone, Debug)]
pub struct AveragePocStudy {
    pub waveform: Waveform<f64>,
    pub inter_arrival_s: Vec<f64>,
    pub path_counts: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
}

/// Draw a Poisson multipath realization and compute its POC. Amplitudes
/// do not affect the POC, so they are fixed at one.
fn sampled_poc(
    waveform: &Waveform<f64>,
    arrival_rate: f64,
    path_count: usize,
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    let biases = sample_bias_sequence::<f64, _>(arrival_rate, path_count, Sight::Los, rng)?;
    let amps = vec![1.0; path_count];
    let paths = AnchorPaths::new(biases, amps)?;
    path_overlap_coefficient(&paths, waveform)
}

/// Mean and standard error of the mean.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl AveragePocStudy {
    pub fn run(&self) -> Result<ResultTable> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.inter_arrival_s.is_empty() || self.path_counts.is_empty() {
            return Err(Error::Config("empty POC study grid".into()));
        }
        let mut columns = vec!["inter_arrival_ns".to_string()];
        for &l in &self.path_counts {
            columns.push(format!("mean_chi_L{l}"));
            columns.push(format!("se_chi_L{l}"));
        }
        columns.push("replications".into());
        let mut table = ResultTable::new(columns);

        let cells: Vec<(usize, usize)> = (0..self.inter_arrival_s.len())
            .flat_map(|i| (0..self.path_counts.len()).map(move |j| (i, j)))
            .collect();
        let stats: Vec<std::result::Result<(f64, f64), String>> = cells
            .par_iter()
            .map(|&(i, j)| {
                let rate = 1.0 / self.inter_arrival_s[i];
                let l = self.path_counts[j];
                let cell_id = (i * self.path_counts.len() + j) as u64;
                let mut chis = Vec::with_capacity(self.replications);
                for rep in 0..self.replications {
                    let mut rng = substream(self.seed, cell_id, rep as u64);
                    match sampled_poc(&self.waveform, rate, l, &mut rng) {
                        Ok(chi) => chis.push(chi),
                        Err(e) => return Err(e.to_string()),
                    }
                }
                Ok(mean_and_se(&chis))
            })
            .collect();

        for (i, &ia) in self.inter_arrival_s.iter().enumerate() {
            let mut row = vec![Cell::Num(ia * 1e9)];
            for j in 0..self.path_counts.len() {
                match &stats[i * self.path_counts.len() + j] {
                    Ok((mean, se)) => {
                        row.push(Cell::Num(*mean));
                        row.push(Cell::Num(*se));
                    }
                    Err(msg) => {
                        row.push(Cell::Err(msg.clone()));
                        row.push(Cell::Err(msg.clone()));
                    }
                }
            }
            row.push(Cell::Num(self.replications as f64));
            table.push_row(row);
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// Ranging-ability outage (RAO)
// ---------------------------------------------------------------------------

/// Empirical `P{χ > χ_th}` versus threshold, one curve per arrival rate.
#[derive(Clone, Debug)]
pub struct RaoStudy {
    pub waveform: Waveform<f64>,
    pub thresholds: Vec<f64>,
    pub inter_arrival_s: Vec<f64>,
    pub path_count: usize,
    pub replications: usize,
    pub seed: u64,
}

impl RaoStudy {
    pub fn run(&self) -> Result<ResultTable> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.thresholds.is_empty() || self.inter_arrival_s.is_empty() {
            return Err(Error::Config("empty RAO grid".into()));
        }
        let mut columns = vec!["chi_threshold".to_string()];
        for &ia in &self.inter_arrival_s {
            let tag = ns_label(ia);
            columns.push(format!("pout_ia{tag}ns"));
            columns.push(format!("se_ia{tag}ns"));
        }
        columns.push("replications".into());
        let mut table = ResultTable::new(columns);

        // One batch of POC draws per arrival rate, shared by all rows.
        let batches: Vec<std::result::Result<Vec<f64>, String>> = self
            .inter_arrival_s
            .par_iter()
            .enumerate()
            .map(|(cell, &ia)| {
                let rate = 1.0 / ia;
                let mut chis = Vec::with_capacity(self.replications);
                for rep in 0..self.replications {
                    let mut rng = substream(self.seed, cell as u64, rep as u64);
                    match sampled_poc(&self.waveform, rate, self.path_count, &mut rng) {
                        Ok(chi) => chis.push(chi),
                        Err(e) => return Err(e.to_string()),
                    }
                }
                Ok(chis)
            })
            .collect();

        let n = self.replications as f64;
        for &th in &self.thresholds {
            let mut row = vec![Cell::Num(th)];
            for batch in &batches {
                match batch {
                    Ok(chis) => {
                        let count = chis.iter().filter(|&&c| c > th).count();
                        let p = count as f64 / n;
                        row.push(Cell::Num(p));
                        row.push(Cell::Num((p * (1.0 - p) / n).sqrt()));
                    }
                    Err(msg) => {
                        row.push(Cell::Err(msg.clone()));
                        row.push(Cell::Err(msg.clone()));
                    }
                }
            }
            row.push(Cell::Num(self.replications as f64));
            table.push_row(row);
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// ULA reference sweep (Figs. 7-8 setup)
// ---------------------------------------------------------------------------

/// SPEB and SOEB versus reference-point distance along a far-field ULA.
#[derive(Clone, Debug)]
pub struct UlaReferenceStudy {
    pub topology: NetworkTopology<f64>,
    /// Per-anchor far-field ranging intensities.
    pub lambdas: Vec<f64>,
    pub antenna_locals: Vec<nalgebra::Vector2<f64>>,
    pub orientation_rad: f64,
    pub distances_m: Vec<f64>,
    /// Orientation priors for the SPEB columns.
    pub xi_phi: Vec<Fisher<f64>>,
    /// Isotropic position priors for the SOEB columns (`inf` = known).
    pub xi_p: Vec<Fisher<f64>>,
}

impl UlaReferenceStudy {
    pub fn run(&self) -> Result<ResultTable> {
        if self.distances_m.is_empty() {
            return Err(Error::Config("empty distance grid".into()));
        }
        let mut columns = vec!["distance_m".to_string()];
        for xi in &self.xi_phi {
            columns.push(format!("speb_xiphi{}", fisher_label(xi)));
        }
        for xi in &self.xi_p {
            columns.push(format!("soeb_xip{}", fisher_label(xi)));
        }
        let mut table = ResultTable::new(columns);
        let ranging = ArrayRanging::far_field(self.lambdas.clone());
        for &d in &self.distances_m {
            let mut row = vec![Cell::Num(d)];
            let geometry = ArrayGeometry::new(
                self.antenna_locals.clone(),
                self.orientation_rad,
                crate::array::ReferencePoint::Local(vector![d, 0.0]),
            )?;
            for xi in &self.xi_phi {
                let res = crate::array::array_efim(
                    &self.topology,
                    &geometry,
                    &ranging,
                    *xi,
                    &PositionPrior::none(),
                );
                row.push(cell_of(res.map(|r| r.speb)));
            }
            for xi in &self.xi_p {
                let prior = match xi {
                    Fisher::Finite(g) => PositionPrior::isotropic(*g),
                    Fisher::Infinite => PositionPrior::Known,
                };
                let res = crate::array::array_efim(
                    &self.topology,
                    &geometry,
                    &ranging,
                    Fisher::Finite(0.0),
                    &prior,
                );
                row.push(cell_of(res.map(|r| {
                    r.soeb.expect("orientation-unaware result carries SOEB")
                })));
            }
            table.push_row(row);
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// Clock-offset anchor sweep (Figs. 9-10 setup)
// ---------------------------------------------------------------------------

/// Units for the STEB columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StebUnits {
    MetersSquared,
    SecondsSquared,
}

/// SPEB and STEB as anchor 1 moves along the circle, one curve per offset
/// prior, plus the offset-free baseline.
#[derive(Clone, Debug)]
pub struct OffsetAnchorStudy {
    /// Intensities of the four anchors (anchor 1 is the moving one).
    pub lambdas: Vec<f64>,
    pub phi1_grid: Vec<f64>,
    pub xi_b: Vec<Fisher<f64>>,
    pub steb_units: StebUnits,
}

impl OffsetAnchorStudy {
    pub fn run(&self) -> Result<ResultTable> {
        if self.lambdas.len() != 4 {
            return Err(Error::Config(
                "the offset-anchor study uses exactly four anchors".into(),
            ));
        }
        if self.phi1_grid.is_empty() {
            return Err(Error::Config("empty phi1 grid".into()));
        }
        let mut columns = vec!["phi1_rad".to_string()];
        for xi in &self.xi_b {
            columns.push(format!("speb_xiB{}", fisher_label(xi)));
        }
        columns.push("speb_nooffset".into());
        for xi in &self.xi_b {
            columns.push(format!("steb_xiB{}", fisher_label(xi)));
        }
        let mut table = ResultTable::new(columns);
        let unit_scale = match self.steb_units {
            StebUnits::MetersSquared => 1.0,
            StebUnits::SecondsSquared => 1.0 / (SPEED_OF_LIGHT * SPEED_OF_LIGHT),
        };
        for &phi1 in &self.phi1_grid {
            let angles = [
                phi1,
                std::f64::consts::FRAC_PI_2,
                std::f64::consts::PI,
                1.5 * std::f64::consts::PI,
            ];
            let mut row = vec![Cell::Num(phi1)];
            let mut stebs = Vec::with_capacity(self.xi_b.len());
            for xi in &self.xi_b {
                match efim_with_offset_from_riis(
                    &angles,
                    &self.lambdas,
                    *xi,
                    &PositionPrior::none(),
                ) {
                    Ok(res) => {
                        row.push(Cell::Num(res.speb));
                        stebs.push(Cell::Num(
                            res.steb.expect("offset result carries STEB") * unit_scale,
                        ));
                    }
                    Err(e) => {
                        row.push(Cell::Err(e.to_string()));
                        stebs.push(Cell::Err(e.to_string()));
                    }
                }
            }
            let baseline =
                position_efim_result(efim_from_ranging(&angles, &self.lambdas)).map(|r| r.speb);
            row.push(cell_of(baseline));
            row.extend(stebs);
            table.push_row(row);
        }
        Ok(table)
    }
}
