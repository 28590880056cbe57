//! Identification accuracy: FIT over stacked channels and per-output R².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::{predict, SequenceModel};
use crate::sim::{Dataset, SplitKind};

fn check_shapes(y_meas: &[Vec<f64>], y_pred: &[Vec<f64>]) -> Result<usize> {
    if y_meas.len() != y_pred.len() {
        return Err(Error::Dimension(format!("{} measured vs {} predicted samples", y_meas.len(), y_pred.len())));
    }
    if y_meas.len() < 2 {
        return Err(Error::Dimension("metrics need at least two samples".into()));
    }
    let ny = y_meas[0].len();
    if y_meas.iter().chain(y_pred).any(|r| r.len() != ny) {
        return Err(Error::Dimension("ragged output rows".into()));
    }
    Ok(ny)
}

fn channel_means(y: &[Vec<f64>], ny: usize) -> Vec<f64> {
    let mut m = vec![0.0; ny];
    for r in y {
        for j in 0..ny {
            m[j] += r[j];
        }
    }
    m.iter_mut().for_each(|v| *v /= y.len() as f64);
    m
}

/// `100·(1 − ‖y − ŷ‖ / ‖y − ȳ‖)` over the flattened sequence, with `ȳ` the
/// per-channel time average.
pub fn fit_index(y_meas: &[Vec<f64>], y_pred: &[Vec<f64>]) -> Result<f64> {
    let ny = check_shapes(y_meas, y_pred)?;
    let mean = channel_means(y_meas, ny);
    let (mut num, mut den) = (0.0, 0.0);
    for (m, p) in y_meas.iter().zip(y_pred) {
        for j in 0..ny {
            num += (m[j] - p[j]).powi(2);
            den += (m[j] - mean[j]).powi(2);
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedFit);
    }
    Ok(100.0 * (1.0 - num.sqrt() / den.sqrt()))
}

/// Coefficient of determination of channel `j`, in percent.
pub fn r2_per_output(y_meas: &[Vec<f64>], y_pred: &[Vec<f64>], j: usize) -> Result<f64> {
    let ny = check_shapes(y_meas, y_pred)?;
    if j >= ny {
        return Err(Error::Dimension(format!("output {j} out of {ny}")));
    }
    let mean = y_meas.iter().map(|r| r[j]).sum::<f64>() / y_meas.len() as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (m, p) in y_meas.iter().zip(y_pred) {
        num += (m[j] - p[j]).powi(2);
        den += (m[j] - mean).powi(2);
    }
    if den == 0.0 {
        return Err(Error::UndefinedR2(j));
    }
    Ok(100.0 * (1.0 - num / den))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fit: f64,
    /// Per output, percent; `None` for channels with zero variance.
    pub r2: Vec<Option<f64>>,
    pub r2_min: f64,
    pub r2_max: f64,
    pub rmse: Vec<f64>,
    pub channels: Vec<String>,
    pub n_samples: usize,
    /// Channel scale the metrics were computed on.
    pub scale: String,
}

impl EvalReport {
    pub fn from_predictions(y_meas: &[Vec<f64>], y_pred: &[Vec<f64>], channels: Vec<String>) -> Result<Self> {
        let ny = check_shapes(y_meas, y_pred)?;
        let fit = fit_index(y_meas, y_pred)?;
        let r2: Vec<Option<f64>> = (0..ny)
            .map(|j| match r2_per_output(y_meas, y_pred, j) {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedR2(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        let defined: Vec<f64> = r2.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Err(Error::UndefinedFit);
        }
        let rmse = (0..ny)
            .map(|j| {
                (y_meas.iter().zip(y_pred).map(|(m, p)| (m[j] - p[j]).powi(2)).sum::<f64>() / y_meas.len() as f64)
                    .sqrt()
            })
            .collect();
        Ok(EvalReport {
            fit,
            r2_min: defined.iter().copied().fold(f64::INFINITY, f64::min),
            r2_max: defined.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            r2,
            rmse,
            channels,
            n_samples: y_meas.len(),
            scale: "physical".into(),
        })
    }

    /// Name of the channel with the lowest R².
    pub fn worst_channel(&self) -> Option<&str> {
        self.r2
            .iter()
            .enumerate()
            .filter_map(|(j, r)| r.map(|v| (j, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .and_then(|(j, _)| self.channels.get(j).map(String::as_str))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "fit,r2_min,r2_max,n_samples";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.fit, self.r2_min, self.r2_max, self.n_samples)
    }
}

/// Free-run evaluation on one split: the model starts from the zero state,
/// runs over the whole split, and only samples after `washout` are scored.
pub fn evaluate<M: SequenceModel + ?Sized>(
    model: &M,
    ds: &Dataset,
    split: SplitKind,
    washout: usize,
) -> Result<EvalReport> {
    let rows = ds.range(split);
    if model.n_u() != ds.input_names.len() + ds.disturbance_names.len() || model.n_y() != ds.output_names.len() {
        return Err(Error::Dimension("model channels do not match the dataset".into()));
    }
    if rows.len() < washout + 2 {
        return Err(Error::Dimension(format!("split of {} rows is too short for washout {washout}", rows.len())));
    }
    let u = ds.model_inputs(rows.clone());
    let y = ds.model_outputs(rows);
    let pred = predict(model, &u)?;
    EvalReport::from_predictions(&y[washout..], &pred[washout..], ds.output_names.clone())
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Mean ± std of FIT, R̲² and R̄² over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub fit: (f64, f64),
    pub r2_min: (f64, f64),
    pub r2_max: (f64, f64),
}

impl AggregateReport {
    pub fn from_reports(reports: &[EvalReport]) -> Self {
        let col = |f: fn(&EvalReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        AggregateReport {
            runs: reports.len(),
            fit: col(|r| r.fit),
            r2_min: col(|r| r.r2_min),
            r2_max: col(|r| r.r2_max),
        }
    }
}
