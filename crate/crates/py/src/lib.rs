//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use chrono::TimeDelta;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use saetbl::backtest::{simulate, ExecutionConfig, SignalSeries};
use saetbl::config::RunConfig;
use saetbl::fracdiff::{self, AdfLags, FfdConfig};
use saetbl::labeling::{self, Label, TblConfig};
use saetbl::market_data::{parse_ts, ts_from_millis, Bar};
use saetbl::metrics;
use saetbl::pipeline;
use saetbl::sae::{load_checkpoint, TrainedSae};
use saetbl::walkforward;
use saetbl::{Error, ErrorKind};

create_exception!(saetbl_py, SaetblError, PyException);
create_exception!(saetbl_py, ConfigError, SaetblError);
create_exception!(saetbl_py, DataError, SaetblError);
create_exception!(saetbl_py, NumericError, SaetblError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Config => ConfigError::new_err(msg),
        ErrorKind::Data => DataError::new_err(msg),
        ErrorKind::Numeric => NumericError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for saetbl::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Round-trips a serializable value through JSON into native Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SaetblError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn labels_from(values: &[i8]) -> PyResult<Vec<Label>> {
    values.iter().map(|&v| Label::try_from(v).py()).collect()
}

fn label_values(labels: &[Label]) -> Vec<i8> {
    labels.iter().map(|l| l.value()).collect()
}

/// Truncated FFD weights, most recent observation first.
#[pyfunction]
#[pyo3(signature = (d, tau = 1e-4, max_width = 10_000))]
fn ffd_weights(d: f64, tau: f64, max_width: usize) -> PyResult<Vec<f64>> {
    Ok(fracdiff::ffd_weights(d, tau, max_width).py()?.weights)
}

/// Fractionally differenced series; the first `len(weights) - 1` values are dropped.
#[pyfunction]
#[pyo3(signature = (series, d, tau = 1e-4, max_width = 10_000))]
fn frac_diff(series: Vec<f64>, d: f64, tau: f64, max_width: usize) -> PyResult<Vec<f64>> {
    let w = fracdiff::ffd_weights(d, tau, max_width).py()?;
    fracdiff::apply_ffd(&series, &w).py()
}

/// Augmented Dickey-Fuller test with a constant. `lags=None` picks the lag by AIC.
#[pyfunction]
#[pyo3(signature = (series, lags = None))]
fn adf<'py>(py: Python<'py>, series: Vec<f64>, lags: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let lags = lags.map_or(AdfLags::Auto, AdfLags::Fixed);
    to_py(py, &fracdiff::adf_test(&series, lags).py()?)
}

/// Smallest grid order whose differenced series rejects a unit root; `(d, p_value)`.
#[pyfunction]
#[pyo3(signature = (series, significance = 0.01, tau = 1e-4, step = 0.05))]
fn find_optimal_d(series: Vec<f64>, significance: f64, tau: f64, step: f64) -> PyResult<(f64, f64)> {
    let cfg = FfdConfig {
        grid: fracdiff::default_grid(step),
        significance,
        tau,
        ..FfdConfig::default()
    };
    let (d, res) = fracdiff::find_optimal_d(&series, &cfg).py()?;
    Ok((d, res.p_value))
}

/// Labels in {-1, 0, 1} for each close.
#[pyfunction]
#[pyo3(signature = (closes, lam = 0.02, horizon = 20))]
fn triple_barrier_labels(closes: Vec<f64>, lam: f64, horizon: usize) -> PyResult<Vec<i8>> {
    let cfg = TblConfig {
        lambda: lam,
        horizon,
        ..TblConfig::default()
    };
    Ok(label_values(&labeling::triple_barrier_labels(&closes, &cfg).py()?))
}

/// Selection metric of predictions against realised labels.
#[pyfunction]
#[pyo3(signature = (pred, truth, lam = 0.02, delta = 20.0))]
fn phi(pred: Vec<i8>, truth: Vec<i8>, lam: f64, delta: f64) -> PyResult<f64> {
    let cfg = TblConfig {
        lambda: lam,
        delta,
        ..TblConfig::default()
    };
    Ok(labeling::phi_of(&labels_from(&pred)?, &labels_from(&truth)?, &cfg).py()?.value)
}

/// Walk-forward splits as dicts; timestamps are RFC 3339 strings.
#[pyfunction]
#[pyo3(signature = (in_sample_start, oos_start, oos_end, period_days, max_train_periods = 3, use_validation = false))]
fn plan_splits<'py>(
    py: Python<'py>,
    in_sample_start: &str,
    oos_start: &str,
    oos_end: &str,
    period_days: i64,
    max_train_periods: usize,
    use_validation: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let ts = |s: &str| parse_ts(s).map_err(ConfigError::new_err);
    let plan = walkforward::plan_splits(
        ts(in_sample_start)?,
        ts(oos_start)?,
        ts(oos_end)?,
        TimeDelta::days(period_days),
        max_train_periods,
        use_validation,
    )
    .py()?;
    to_py(py, &plan.splits)
}

/// Simulates signals over a price path; returns `(equity, trades)`.
/// Without `high`/`low` every bar is flat at its close.
#[pyfunction]
#[pyo3(signature = (
    signals, close, high = None, low = None, *, capital = 1000.0, fee_rate = 0.0005,
    lam = 0.02, horizon = 20, reversal = true, flat_closes = false, intrabar = false
))]
#[allow(clippy::too_many_arguments)]
fn backtest<'py>(
    py: Python<'py>,
    signals: Vec<i8>,
    close: Vec<f64>,
    high: Option<Vec<f64>>,
    low: Option<Vec<f64>>,
    capital: f64,
    fee_rate: f64,
    lam: f64,
    horizon: usize,
    reversal: bool,
    flat_closes: bool,
    intrabar: bool,
) -> PyResult<(Vec<f64>, Bound<'py, PyAny>)> {
    let n = close.len();
    let high = high.unwrap_or_else(|| close.clone());
    let low = low.unwrap_or_else(|| close.clone());
    if high.len() != n || low.len() != n {
        return Err(DataError::new_err("high, low and close must have equal length"));
    }
    let bars = (0..n)
        .map(|i| {
            let timestamp = ts_from_millis(i as i64 * 60_000).expect("small offsets are valid");
            Bar {
                timestamp,
                open: close[i],
                high: high[i],
                low: low[i],
                close: close[i],
                volume: 0.0,
            }
        })
        .collect::<Vec<_>>();
    let series = SignalSeries::new(bars.iter().map(|b| b.timestamp).collect(), labels_from(&signals)?).py()?;
    let cfg = ExecutionConfig {
        initial_capital: capital,
        fee_rate,
        lambda: lam,
        horizon,
        reversal,
        flat_closes,
        intrabar,
    };
    let (curve, trades) = simulate(&series, &bars, &cfg).py()?;
    Ok((curve.equity, to_py(py, &trades)?))
}

/// Total return, ARC, ASD, MDD, IR and IR* of an equity curve.
#[pyfunction]
fn perf_report<'py>(py: Python<'py>, equity: Vec<f64>, bars_per_year: f64) -> PyResult<Bound<'py, PyAny>> {
    let ts = (0..equity.len())
        .map(|i| ts_from_millis(i as i64 * 60_000).expect("small offsets are valid"))
        .collect();
    let curve = saetbl::backtest::EquityCurve::new(ts, equity).py()?;
    to_py(py, &metrics::perf_report(&curve, bars_per_year).py()?)
}

/// A validated run configuration loaded from TOML.
#[pyclass(name = "RunConfig", frozen)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(&path).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, base_dir = PathBuf::from(".")))]
    fn from_toml(text: &str, base_dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::from_toml(text, base_dir).py()?,
        })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn symbols(&self) -> Vec<String> {
        self.inner.symbols.clone()
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().py()
    }

    fn synth(&self) -> PyResult<Vec<PathBuf>> {
        pipeline::synth(&self.inner).py()
    }

    fn resample(&self) -> PyResult<Vec<PathBuf>> {
        pipeline::resample_all(&self.inner).py()
    }

    fn label(&self) -> PyResult<Vec<PathBuf>> {
        pipeline::label_all(&self.inner).py()
    }

    /// Runs the walk-forward stage; returns the path of each symbol's manifest.
    #[pyo3(signature = (jobs = 1))]
    fn run(&self, py: Python<'_>, jobs: usize) -> PyResult<Vec<PathBuf>> {
        let cfg = self.inner.clone();
        let out = py.detach(move || pipeline::run_all(&cfg, jobs)).py()?;
        Ok(out.into_iter().map(|s| s.manifest).collect())
    }

    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &pipeline::report_all(&self.inner).py()?)
    }

    fn portfolio<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &pipeline::portfolio(&self.inner).py()?)
    }
}

/// A trained model restored from a checkpoint.
#[pyclass(name = "SaeModel", frozen)]
struct PySaeModel {
    inner: TrainedSae,
}

#[pymethods]
impl PySaeModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(&path).py()?,
        })
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn bottleneck(&self) -> usize {
        self.inner.architecture.bottleneck()
    }

    #[getter]
    fn selected_epoch(&self) -> usize {
        self.inner.selected_epoch
    }

    #[getter]
    fn val_phi(&self) -> f64 {
        self.inner.val_phi
    }

    /// Signals for rows of already-differenced features, in `feature_names` order.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<i8>> {
        let flat: Vec<f64> = rows.concat();
        Ok(label_values(&self.inner.predict_raw(&flat).py()?))
    }
}

#[pymodule]
pub fn saetbl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("SaetblError", py.get_type::<SaetblError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("NumericError", py.get_type::<NumericError>())?;
    m.add_function(wrap_pyfunction!(ffd_weights, m)?)?;
    m.add_function(wrap_pyfunction!(frac_diff, m)?)?;
    m.add_function(wrap_pyfunction!(adf, m)?)?;
    m.add_function(wrap_pyfunction!(find_optimal_d, m)?)?;
    m.add_function(wrap_pyfunction!(triple_barrier_labels, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(plan_splits, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    m.add_function(wrap_pyfunction!(perf_report, m)?)?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PySaeModel>()?;
    Ok(())
}
