//! Python bindings: simulate sessions, train and evaluate classifiers, run
//! the policy in closed loop and the comparison statistics.

use handover::classifier::{self, ClassifierKind, FoldMode, TrainedClassifier};
use handover::features::{MirrorMap, WINDOW_CELLS};
use handover::nn::{self, TrainConfig};
use handover::policy::{ApDurations, ClassifierSet, HandoverPolicy, TriggerConfig};
use handover::session::{self, SessionRecord};
use handover::sim::{self, GestureModel, ModelSource, ScriptGenerator};
use handover::stats::{self, PoissonPrior};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Hands a serialisable report to Python as plain dicts and lists.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn train_config(max_epochs: usize, patience: usize, seed: u64) -> PyResult<TrainConfig> {
    let c = TrainConfig { max_epochs, patience, seed, ..Default::default() };
    c.validate().map_err(err)?;
    Ok(c)
}

fn records(sessions: &[PyRef<'_, Session>]) -> Vec<SessionRecord> {
    sessions.iter().map(|s| s.inner.clone()).collect()
}

/// A validated session log split into episodes.
#[pyclass(module = "handover_py", frozen)]
struct Session {
    inner: SessionRecord,
}

#[pymethods]
impl Session {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let s = session::load_session_canonical(path).map_err(err)?;
        Ok(Self { inner: session::segment_episodes(&s).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        session::save_session(path, &self.inner).map_err(err)
    }

    #[getter]
    fn participant_id(&self) -> String {
        self.inner.participant_id.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn n_episodes(&self) -> usize {
        self.inner.episodes.len()
    }

    /// Transfer position of each episode, `None` where the arm never reached.
    fn episode_otps(&self) -> Vec<Option<String>> {
        self.inner.episodes.iter().map(|e| e.otp().map(|o| o.to_string())).collect()
    }

    /// Per-frame keypoint features, `len(self)` rows of 100 values.
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.frames().iter().map(|f| f.features().to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Session({}, {} frames, {} episodes)", self.inner.participant_id, self.inner.len(), self.inner.episodes.len())
    }
}

/// A trained timing or location classifier.
#[pyclass(module = "handover_py", frozen)]
struct Classifier {
    inner: TrainedClassifier,
}

#[pymethods]
impl Classifier {
    #[staticmethod]
    #[pyo3(signature = (kind, sessions, max_epochs = 100, patience = 20, seed = 0))]
    fn train(kind: &str, sessions: Vec<PyRef<'_, Session>>, max_epochs: usize, patience: usize, seed: u64) -> PyResult<Self> {
        let config = train_config(max_epochs, patience, seed)?;
        let inner = classifier::train_on_sessions(parse(kind)?, &records(&sessions), &config, &MirrorMap::default()).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str, kind: &str) -> PyResult<Self> {
        Ok(Self { inner: TrainedClassifier::load(path, parse(kind)?).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    /// Class probabilities for one flattened window of 500 values.
    fn predict_proba(&self, window: Vec<f64>) -> PyResult<Vec<f64>> {
        if window.len() != WINDOW_CELLS {
            return Err(PyValueError::new_err(format!("expected {WINDOW_CELLS} values, got {}", window.len())));
        }
        Ok(self.inner.probabilities_of(&window))
    }

    /// Accuracy over every labelled window of the given sessions.
    fn accuracy(&self, sessions: Vec<PyRef<'_, Session>>) -> PyResult<f64> {
        let mut samples = Vec::new();
        for (i, s) in sessions.iter().enumerate() {
            samples.extend(classifier::session_samples(self.inner.kind, &s.inner, i).map_err(err)?);
        }
        Ok(self.inner.accuracy(&samples))
    }

    fn __repr__(&self) -> String {
        format!("Classifier({})", self.inner.kind)
    }
}

#[pyfunction]
#[pyo3(signature = (sessions = 5, participants = None, episodes = 4, seed = 0, drift = None, adversarial = false))]
fn simulate_study(
    sessions: usize,
    participants: Option<usize>,
    episodes: usize,
    seed: u64,
    drift: Option<f64>,
    adversarial: bool,
) -> PyResult<Vec<Session>> {
    let generator = ScriptGenerator { episodes, drift_after: drift, adversarial, ..Default::default() };
    let runs = sim::simulate_study(&generator, &GestureModel::default(), sessions, participants.unwrap_or(sessions), seed)
        .map_err(err)?;
    Ok(runs.into_iter().map(|(_, inner, _)| Session { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (kind, sessions, mode = "by_participant", max_epochs = 100, patience = 20, seed = 0))]
fn cross_validate<'py>(
    py: Python<'py>,
    kind: &str,
    sessions: Vec<PyRef<'_, Session>>,
    mode: &str,
    max_epochs: usize,
    patience: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: FoldMode = parse(mode)?;
    let kind: ClassifierKind = parse(kind)?;
    let run = classifier::cross_validate(kind, &records(&sessions), mode, &train_config(max_epochs, patience, seed)?)
        .map_err(err)?;
    to_py(py, &run.report)
}

/// Runs the policy against freshly simulated participants and scores each
/// run. Without classifiers the policy reads the true signals.
#[pyfunction]
#[pyo3(signature = (classifiers = None, sessions = 5, episodes = 4, seed = 0))]
fn closed_loop<'py>(
    py: Python<'py>,
    classifiers: Option<Vec<PyRef<'_, Classifier>>>,
    sessions: usize,
    episodes: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let mut set = match classifiers {
        Some(c) => Some(ClassifierSet::new(c.iter().map(|c| c.inner.clone()).collect()).map_err(err)?),
        None => None,
    };
    let generator = ScriptGenerator { episodes, ..Default::default() };
    let gestures = GestureModel::default();
    let mut scores = Vec::with_capacity(sessions);
    for i in 0..sessions {
        let script = generator.generate(&format!("p{:02}", i + 1), seed.wrapping_add(i as u64));
        let policy = HandoverPolicy::new(TriggerConfig::default(), ApDurations::default()).map_err(err)?;
        let models = match set.as_mut() {
            Some(s) => ModelSource::Learned(s),
            None => ModelSource::Oracle,
        };
        let run = sim::run_closed_loop(policy, models, &script, &gestures, seed ^ (i as u64 + 1)).map_err(err)?;
        scores.push(to_py(py, &sim::score_policy(&run.events, &run.truth).map_err(err)?)?);
    }
    Ok(scores)
}

#[pyfunction]
#[pyo3(signature = (seed = 0, nets = 20))]
fn gradient_check<'py>(py: Python<'py>, seed: u64, nets: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &nn::gradient_check(seed, nets).map_err(err)?)
}

#[pyfunction]
fn ap_coverage<'py>(py: Python<'py>, sessions: Vec<PyRef<'_, Session>>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &session::validate_ap_model(&records(&sessions)))
}

#[pyfunction]
#[pyo3(signature = (counts_a, counts_b, alpha = 1.0, beta = 1.0, ci_mass = 0.9, draws = stats::DEFAULT_DRAWS, seed = 0))]
fn bayes_ab_poisson<'py>(
    py: Python<'py>,
    counts_a: Vec<u64>,
    counts_b: Vec<u64>,
    alpha: f64,
    beta: f64,
    ci_mass: f64,
    draws: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = stats::bayes_ab_poisson(&counts_a, &counts_b, PoissonPrior { alpha, beta }, ci_mass, draws, seed).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn one_way_anova<'py>(py: Python<'py>, groups: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &stats::one_way_anova(&groups).map_err(err)?)
}

#[pyfunction]
fn wilcoxon_signed_rank<'py>(py: Python<'py>, pairs: Vec<(f64, f64)>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &stats::wilcoxon_signed_rank(&pairs).map_err(err)?)
}

#[pymodule]
fn handover_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Session>()?;
    m.add_class::<Classifier>()?;
    m.add_function(wrap_pyfunction!(simulate_study, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(closed_loop, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(ap_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_ab_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(one_way_anova, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_signed_rank, m)?)?;
    m.add("CLASSIFIER_KINDS", ClassifierKind::ALL.iter().map(|k| k.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
