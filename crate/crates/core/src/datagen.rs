//! Zero-inflated lognormal trajectories: trivariate normal on the log scale
//! with AR(1) correlation over (baseline, Month 6, Month 12), mean shifts
//! `ln(1 − r)`, and an independent total-responder flag.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DoseId, ScenarioSpec, SubjectRecord};
use crate::scalar::Real;

/// `(mu, sigma)` of the normal distribution whose exponential has the given
/// arithmetic mean and SD.
pub fn lognormal_params<T: Real>(mean_raw: T, sd_raw: T) -> Result<(T, T)> {
    if !(mean_raw > T::zero()) || !mean_raw.is_finite() {
        return Err(Error::Domain(format!("lognormal mean must be positive, got {mean_raw}")));
    }
    if !(sd_raw >= T::zero()) || !sd_raw.is_finite() {
        return Err(Error::Domain(format!("lognormal SD must be nonnegative, got {sd_raw}")));
    }
    let cv2 = (sd_raw / mean_raw).powi(2);
    // ln(m² / sqrt(m² + s²)) = ln m − ½ ln(1 + s²/m²)
    let sigma2 = cv2.ln_1p();
    let mu = mean_raw.ln() - sigma2 / T::lit(2.0);
    Ok((mu, sigma2.sqrt()))
}

/// Log-scale means per dose (rows, placebo first) and visit (columns: baseline,
/// Month 6, Month 12) with a common SD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScaleParams<T = f64> {
    pub mu0: T,
    pub sigma: T,
    pub mu: [[T; 3]; 4],
}

pub fn build_log_params<T: Real>(scn: &ScenarioSpec) -> Result<LogScaleParams<T>> {
    let (mu0, sigma) = lognormal_params(T::lit(scn.baseline_mean), T::lit(scn.baseline_sd))?;
    let mut mu = [[mu0; 3]; 4];
    for (j, row) in scn.r.iter().enumerate() {
        for (t, &r) in row.iter().enumerate() {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Domain(format!(
                    "reduction rate must lie in [0, 1), got {r} for dose {j}"
                )));
            }
            mu[j][t + 1] = mu0 + (-T::lit(r)).ln_1p();
        }
    }
    Ok(LogScaleParams { mu0, sigma, mu })
}

/// AR(1) covariance of the three log-scale measurements with its Cholesky factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Covariance<T = f64> {
    pub sigma2: T,
    pub rho: T,
    pub matrix: [[T; 3]; 3],
    /// Lower-triangular factor `L` with `L Lᵀ = matrix`.
    pub cholesky: [[T; 3]; 3],
}

pub fn build_covariance<T: Real>(sigma: T, rho: T) -> Result<Ar1Covariance<T>> {
    if !(rho >= T::zero() && rho < T::one()) {
        return Err(Error::Domain(format!("AR(1) correlation must lie in [0, 1), got {rho}")));
    }
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::Domain(format!("log-scale SD must be nonnegative, got {sigma}")));
    }
    let s2 = sigma * sigma;
    let mut matrix = [[T::zero(); 3]; 3];
    for (a, row) in matrix.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = s2 * rho.powi((a as i32 - b as i32).abs());
        }
    }
    // closed form for AR(1): row t is sigma·(rho^t, rho^{t-1}·c, ..., c) with c = sqrt(1 − rho²)
    let c = (T::one() - rho * rho).sqrt();
    let z = T::zero();
    let cholesky = [
        [sigma, z, z],
        [sigma * rho, sigma * c, z],
        [sigma * rho * rho, sigma * rho * c, sigma * c],
    ];
    Ok(Ar1Covariance {
        sigma2: s2,
        rho,
        matrix,
        cholesky,
    })
}

/// Draws cohorts for one scenario; parameters are computed once.
#[derive(Debug, Clone)]
pub struct CohortSampler {
    params: LogScaleParams<f64>,
    chol: [[f64; 3]; 3],
    pi: [f64; 4],
}

impl CohortSampler {
    pub fn new(scn: &ScenarioSpec) -> Result<Self> {
        scn.validate()?;
        let params = build_log_params::<f64>(scn)?;
        let cov = build_covariance(params.sigma, scn.rho)?;
        Ok(CohortSampler {
            params,
            chol: cov.cholesky,
            pi: scn.pi,
        })
    }

    pub fn params(&self) -> &LogScaleParams<f64> {
        &self.params
    }

    /// One subject of arm `dose`. Consumes three normals then one uniform.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, dose: DoseId, rng: &mut R) -> (f64, f64, f64, bool) {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let l = &self.chol;
        let mu = &self.params.mu[dose.index()];
        let y0 = mu[0] + l[0][0] * z0;
        let y1 = mu[1] + l[1][0] * z0 + l[1][1] * z1;
        let y2 = mu[2] + l[2][0] * z0 + l[2][1] * z1 + l[2][2] * z2;
        let responder = rng.random::<f64>() < self.pi[dose.index()];
        if responder {
            (y0.exp(), 0.0, 0.0, true)
        } else {
            (y0.exp(), y1.exp(), y2.exp(), false)
        }
    }

    /// Appends `n_per_arm[d]` subjects for every dose to `out`, arms in
    /// ascending dose order, ids counting up from `first_id`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        n_per_arm: &[usize; 4],
        stage: u8,
        first_id: u64,
        rng: &mut R,
        out: &mut Vec<SubjectRecord>,
    ) {
        let mut id = first_id;
        for dose in DoseId::ALL {
            for _ in 0..n_per_arm[dose.index()] {
                let (x0, x1, x2, responder) = self.draw(dose, rng);
                out.push(SubjectRecord {
                    subject_id: id,
                    stage,
                    dose,
                    x0,
                    x1,
                    x2,
                    responder,
                });
                id += 1;
            }
        }
    }
}

/// Simulates one stage's cohort.
pub fn sample_cohort<R: Rng + ?Sized>(
    n_per_arm: &[usize; 4],
    scn: &ScenarioSpec,
    stage: u8,
    rng: &mut R,
) -> Result<Vec<SubjectRecord>> {
    let sampler = CohortSampler::new(scn)?;
    let mut out = Vec::with_capacity(n_per_arm.iter().sum());
    sampler.sample_into(n_per_arm, stage, 1, rng, &mut out);
    Ok(out)
}

/// Column order of the cohort dump.
pub const COHORT_HEADER: [&str; 7] = ["subject_id", "stage", "dose", "x0", "x1", "x2", "responder"];

pub fn write_cohort_csv<W: Write>(w: W, records: &[SubjectRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(COHORT_HEADER)?;
    for r in records {
        wr.write_record([
            r.subject_id.to_string(),
            r.stage.to_string(),
            r.dose.index().to_string(),
            r.x0.to_string(),
            r.x1.to_string(),
            r.x2.to_string(),
            u8::from(r.responder).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a cohort dump. Missing or unknown columns are reported together.
pub fn read_cohort_csv<R: Read>(r: R) -> Result<Vec<SubjectRecord>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rd.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let missing: Vec<&str> = COHORT_HEADER.iter().copied().filter(|c| !cols.contains(c)).collect();
    let unknown: Vec<&str> = cols.iter().copied().filter(|c| !COHORT_HEADER.contains(c)).collect();
    if !missing.is_empty() || !unknown.is_empty() {
        let mut msg = String::from("cohort schema mismatch:");
        if !missing.is_empty() {
            msg.push_str(&format!(" missing columns [{}]", missing.join(", ")));
        }
        if !unknown.is_empty() {
            msg.push_str(&format!(" unexpected columns [{}]", unknown.join(", ")));
        }
        return Err(Error::Input(msg));
    }
    let pos = |name: &str| cols.iter().position(|c| *c == name).expect("checked above");
    let idx: Vec<usize> = COHORT_HEADER.iter().map(|c| pos(c)).collect();

    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("");
        let ctx = |what: &str| Error::Input(format!("row {}: bad {what}", line + 2));
        let num = |k: usize, what: &str| field(k).parse::<f64>().map_err(|_| ctx(what));
        let responder = match field(6).to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            _ => return Err(ctx("responder")),
        };
        let rec = SubjectRecord {
            subject_id: field(0).parse().map_err(|_| ctx("subject_id"))?,
            stage: field(1).parse().map_err(|_| ctx("stage"))?,
            dose: field(2).parse().map_err(|_| ctx("dose"))?,
            x0: num(3, "x0")?,
            x1: num(4, "x1")?,
            x2: num(5, "x2")?,
            responder,
        };
        rec.validate()?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Input("cohort file has no subjects".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_scenarios, Disease, Variant};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mansonellosis_params() {
        let (mu, s) = lognormal_params(1838.0_f64, 2565.0).unwrap();
        assert!((mu - 6.975_949_865_430_336).abs() < 1e-12);
        assert!((s - 1.039_695_568_409_615).abs() < 1e-12);
        assert!(((mu + s * s / 2.0).exp() / 1838.0 - 1.0).abs() < 1e-12);
        let (mu, s) = lognormal_params(50.0_f64, 0.0).unwrap();
        assert_eq!((mu, s), (50.0_f64.ln(), 0.0));
        assert!(lognormal_params(0.0_f64, 1.0).is_err());
    }

    #[test]
    fn mean_shifts() {
        let mut scn = builtin_scenarios(Disease::Mansonellosis, Variant::Standard)[2].clone();
        let p = build_log_params::<f64>(&scn).unwrap();
        assert_eq!(p.mu[1][2], p.mu0);
        assert!((p.mu[3][1] - p.mu0 - 0.5_f64.ln()).abs() < 1e-14);
        assert!((p.mu[3][2] - p.mu[3][1] - (0.4_f64 / 0.5).ln()).abs() < 1e-14);
        assert!(p.mu.iter().all(|row| row[0] == p.mu0));
        scn.r[3][1] = 1.0;
        assert!(matches!(build_log_params::<f64>(&scn), Err(Error::Domain(_))));
    }

    #[test]
    fn covariance_structure() {
        let c = build_covariance(1.0_f64, 0.5).unwrap();
        assert_eq!(c.matrix[0][2], 0.25);
        assert_eq!(c.matrix[1][0], 0.5);
        for a in 0..3 {
            for b in 0..3 {
                let llt: f64 = (0..3).map(|k| c.cholesky[a][k] * c.cholesky[b][k]).sum();
                assert!((llt - c.matrix[a][b]).abs() < 1e-15);
            }
        }
        let d = build_covariance(2.0_f64, 0.0).unwrap();
        assert_eq!(d.matrix[0][1], 0.0);
        assert!(build_covariance(1.0_f64, 1.0).is_err());
    }

    #[test]
    fn all_responders_are_zeroed() {
        let mut scn = builtin_scenarios(Disease::Onchocerciasis, Variant::Standard)[0].clone();
        scn.pi[2] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = sample_cohort(&[5, 0, 50, 0], &scn, 1, &mut rng).unwrap();
        assert_eq!(c.len(), 55);
        for r in c.iter().filter(|r| r.dose == DoseId::Medium) {
            assert!(r.responder && r.x1 == 0.0 && r.x2 == 0.0 && r.x0 > 0.0);
        }
    }

    #[test]
    fn csv_round_trip_and_schema_errors() {
        let scn = &builtin_scenarios(Disease::Loiasis, Variant::Standard)[4];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = sample_cohort(&[3, 3, 3, 0], scn, 2, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_cohort_csv(&mut buf, &c).unwrap();
        let back = read_cohort_csv(buf.as_slice()).unwrap();
        assert_eq!(back, c);

        let err = read_cohort_csv("subject_id,stage,arm,x0,x1,x2\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dose") && msg.contains("responder") && msg.contains("arm"), "{msg}");
        let empty = read_cohort_csv(COHORT_HEADER.join(",").as_bytes()).unwrap_err();
        assert!(matches!(empty, Error::Input(_)));
    }
}
