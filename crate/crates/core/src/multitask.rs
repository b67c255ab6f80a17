//! Task construction, per-task solver generations, stagnation tracking and
//! task-specific knowledge transfer.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{correlation_cluster, select_prime, wo_expand, wo_reduce, ClusterMap, NoElites, WEIGHT_MAX};
use crate::dataset::Dataset;
use crate::evaluation::{Evaluator, Individual};
use crate::experiment::RunConfig;
use crate::filtering::{chi_square_scores, knee_point_mask, relieff_scores, TaskMask};
use crate::relevance::SuScores;
use crate::rng;
use crate::search::{
    cso_step, dedup_by_selection, environmental_selection, nd_sort, polynomial_mutation, Bounds, CompareMode,
    EliteArchive,
};

/// Auxiliary formulation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Filtering,
    Clustering,
}

/// How knowledge moves between tasks at a stagnation event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    /// Masks, cluster weights and reference solutions, by source form.
    #[default]
    Specific,
    /// Simulated binary crossover with the source encoded in the target space.
    SbxStyle,
    Off,
}

/// Which comparison each task's solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// Original task: error and feature rate; auxiliary tasks: accuracy only.
    #[default]
    TaskSpecific,
    /// Error and feature rate on every task.
    Fit1,
    /// Error rate alone on every task.
    Fit2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferTrigger {
    /// Any stagnant task makes every task receive knowledge.
    #[default]
    Global,
    /// Only stagnant tasks receive knowledge.
    PerTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSampling {
    /// Uniform over the concatenated elites of the other tasks.
    #[default]
    Concatenated,
    /// Uniform over source tasks, then uniform within the chosen archive.
    PerTask,
}

macro_rules! text_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!("unknown value {other:?}; expected one of {}", [$($name),+].join(", "))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

text_enum!(Formulation { "filtering" => Formulation::Filtering, "clustering" => Formulation::Clustering });
text_enum!(TransferMode {
    "specific" => TransferMode::Specific,
    "sbx-style" => TransferMode::SbxStyle,
    "off" => TransferMode::Off,
});
text_enum!(FitnessMode { "task-specific" => FitnessMode::TaskSpecific, "fit1" => FitnessMode::Fit1, "fit2" => FitnessMode::Fit2 });

/// Search space of a task and how it maps onto the kept features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskForm {
    Original,
    Filtering { mask: TaskMask },
    Clustering { cluster_map: ClusterMap, prime: Vec<f64>, n_bins: usize },
}

impl TaskForm {
    pub fn name(&self) -> &'static str {
        match self {
            TaskForm::Original => "original",
            TaskForm::Filtering { .. } => "filtering",
            TaskForm::Clustering { .. } => "clustering",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub form: TaskForm,
    pub dim: usize,
    pub pop: Vec<Individual>,
    pub elite: EliteArchive,
    pub pop_size: usize,
    pub mode: CompareMode,
    pub bounds: Bounds,
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task {task}: dimension mismatch, expected {expected} got {found}")]
    Dimension { task: usize, expected: usize, found: usize },
    #[error("filtering mask selects no feature")]
    EmptyMask,
    #[error("no features to search")]
    NoFeatures,
    #[error(transparent)]
    Prime(#[from] NoElites),
}

impl Task {
    /// Full-dimensional solution for a task-space vector.
    pub fn reconstruct(&self, task_repr: &[f64]) -> Result<Vec<f64>, TaskError> {
        if task_repr.len() != self.dim {
            return Err(TaskError::Dimension { task: self.id, expected: self.dim, found: task_repr.len() });
        }
        Ok(match &self.form {
            TaskForm::Original => task_repr.to_vec(),
            TaskForm::Filtering { mask } => {
                let mut full = vec![0.0; mask.selected.len()];
                let mut values = task_repr.iter();
                for (slot, &on) in full.iter_mut().zip(&mask.selected) {
                    if on {
                        *slot = *values.next().expect("mask dim equals task dim");
                    }
                }
                full
            }
            TaskForm::Clustering { cluster_map, prime, .. } => wo_expand(task_repr, prime, cluster_map)
                .map_err(|e| TaskError::Dimension { task: self.id, expected: e.expected, found: e.found })?,
        })
    }

    /// Task-space vector for a full-dimensional solution.
    pub fn encode(&self, full: &[f64]) -> Vec<f64> {
        match &self.form {
            TaskForm::Original => full.to_vec(),
            TaskForm::Filtering { mask } => {
                full.iter().zip(&mask.selected).filter(|(_, &on)| on).map(|(&v, _)| v).collect()
            }
            TaskForm::Clustering { cluster_map, prime, .. } => {
                wo_reduce(full, prime, cluster_map).expect("full solution spans the kept features")
            }
        }
    }

    fn spawn(&self, task_repr: Vec<f64>) -> Individual {
        let full = self.reconstruct(&task_repr).expect("task-space vector has task dimension");
        Individual::new(task_repr, full, self.id)
    }

    fn mutation_rate(&self) -> f64 {
        1.0 / self.dim.max(1) as f64
    }

    /// Replaces the reference solution and rebuilds every member's full
    /// representation from its weights.
    fn refresh_prime(&mut self, new_prime: Vec<f64>, evaluator: &Evaluator) {
        let TaskForm::Clustering { prime, .. } = &mut self.form else { return };
        if *prime == new_prime {
            return;
        }
        *prime = new_prime;
        let rebuilt = |ind: &Individual, task: &Task| {
            let mut ind = ind.clone();
            ind.full_repr = task.reconstruct(&ind.task_repr).expect("weights have task dimension");
            ind.objectives = None;
            evaluator.evaluate_individual(&mut ind);
            ind
        };
        let pop: Vec<Individual> = self.pop.iter().map(|i| rebuilt(i, self)).collect();
        let elite: Vec<Individual> = self.elite.members.iter().map(|i| rebuilt(i, self)).collect();
        self.pop = pop;
        self.elite.members = dedup_by_selection(elite, evaluator.theta());
    }
}

/// Full-dimensional solution of an individual under its task's mapping.
pub fn reconstruct_full(ind: &Individual, task: &Task) -> Result<Vec<f64>, TaskError> {
    task.reconstruct(&ind.task_repr)
}

/// `min(200, max(20, round(D / 30)))` for `D` raw features.
pub fn population_size(raw_features: usize) -> usize {
    ((raw_features as f64 / 30.0).round() as usize).clamp(20, 200)
}

/// One auxiliary task recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AuxVariant {
    Relieff,
    ChiSquare,
    Clustering { n_bins: usize },
}

fn aux_variants(config: &RunConfig) -> Vec<AuxVariant> {
    let mut all = Vec::new();
    if config.formulations.contains(&Formulation::Filtering) {
        all.extend([AuxVariant::Relieff, AuxVariant::ChiSquare]);
    }
    if config.formulations.contains(&Formulation::Clustering) {
        all.push(AuxVariant::Clustering { n_bins: config.n_bins });
        all.push(AuxVariant::Clustering { n_bins: config.coarse_bins });
    }
    all.truncate(config.n_tasks.saturating_sub(1));
    all
}

fn mode_for(form_is_original: bool, fitness: FitnessMode) -> CompareMode {
    match fitness {
        FitnessMode::TaskSpecific if form_is_original => CompareMode::Original,
        FitnessMode::TaskSpecific => CompareMode::Auxiliary,
        FitnessMode::Fit1 => CompareMode::Original,
        FitnessMode::Fit2 => CompareMode::ErrorOnly,
    }
}

const PHASE_INIT: u64 = 1;
const PHASE_CSO: u64 = 2;
const PHASE_ELITE: u64 = 3;
const PHASE_TRANSFER: u64 = 4;

fn init_task(task: &mut Task, evaluator: &Evaluator, config: &RunConfig, seed: u64) {
    let mut r = rng::stream(seed, &[PHASE_INIT, task.id as u64]);
    let (lo, hi) = (task.bounds.lower, task.bounds.upper);
    task.pop = (0..task.pop_size)
        .map(|_| {
            let repr: Vec<f64> = (0..task.dim).map(|_| r.gen_range(lo..=hi)).collect();
            let mut ind = task.spawn(repr);
            evaluator.evaluate_individual(&mut ind);
            ind
        })
        .collect();
    task.elite.update(&task.pop, config.theta, config.norm_dir, &mut r);
}

/// Builds the original task and `t - 1` auxiliary tasks, with initial
/// populations evaluated and elite archives filled.
///
/// `train` holds only the kept features; `su` scores those features.
/// Clustering tasks take their reference solution from the elites of the
/// tasks built before them.
pub fn build_tasks(
    train: &Dataset,
    su: &SuScores,
    raw_features: usize,
    config: &RunConfig,
    evaluator: &Evaluator,
    seed: u64,
) -> Result<Vec<Task>, TaskError> {
    let dim = train.n_features();
    if dim == 0 {
        return Err(TaskError::NoFeatures);
    }
    let pop_size = config.pop_size.unwrap_or_else(|| population_size(raw_features));
    let new_task = |id: usize, form: TaskForm, dim: usize, original: bool, bounds: Bounds| Task {
        id,
        form,
        dim,
        pop: Vec::new(),
        elite: EliteArchive::new(pop_size),
        pop_size,
        mode: mode_for(original, config.fitness),
        bounds,
    };

    let mut tasks = vec![new_task(0, TaskForm::Original, dim, true, Bounds::UNIT)];
    let mut pending_clusters = Vec::new();
    for variant in aux_variants(config) {
        let id = tasks.len() + pending_clusters.len();
        match variant {
            AuxVariant::Relieff | AuxVariant::ChiSquare => {
                let scores = if variant == AuxVariant::Relieff {
                    relieff_scores(train, config.relieff_neighbors)
                } else {
                    chi_square_scores(train, config.n_bins)
                };
                let mask = knee_point_mask(&scores);
                if mask.dim == 0 {
                    return Err(TaskError::EmptyMask);
                }
                let d = mask.dim;
                tasks.push(new_task(id, TaskForm::Filtering { mask }, d, false, Bounds::UNIT));
            }
            AuxVariant::Clustering { n_bins } => {
                let cluster_map = correlation_cluster(train, su, n_bins);
                pending_clusters.push((id, cluster_map, n_bins));
            }
        }
    }
    tasks.par_iter_mut().for_each(|t| init_task(t, evaluator, config, seed));

    if !pending_clusters.is_empty() {
        let prime = select_prime(tasks.iter().flat_map(|t| &t.elite.members))?;
        let weight_bounds = Bounds { lower: 0.0, upper: WEIGHT_MAX };
        let mut clustered: Vec<Task> = pending_clusters
            .into_iter()
            .map(|(id, cluster_map, n_bins)| {
                let d = cluster_map.n_clusters;
                new_task(
                    id,
                    TaskForm::Clustering { cluster_map, prime: prime.clone(), n_bins },
                    d,
                    false,
                    weight_bounds,
                )
            })
            .collect();
        clustered.par_iter_mut().for_each(|t| init_task(t, evaluator, config, seed));
        tasks.extend(clustered);
        tasks.sort_by_key(|t| t.id);
    }
    Ok(tasks)
}

/// Record of one knowledge-transfer event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub generation: usize,
    pub receivers: Vec<usize>,
    /// Slots that received a transferred solution.
    pub transfers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub generation: usize,
    pub stagnation: Vec<usize>,
    pub seed: u64,
    pub transfer_events: Vec<TransferEvent>,
}

/// Per-generation snapshot of a task's archive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveTrace {
    pub best_error: f64,
    pub mean_feature_rate: f64,
    pub size: usize,
}

/// Final product of a multitask search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Mutually non-dominated (error, feature rate) solutions from the union
    /// of all task archives.
    pub front: Vec<Individual>,
    pub tasks: Vec<Task>,
    pub state: RunState,
    /// `trace[generation][task]`, generation 0 being the initial archives.
    pub trace: Vec<Vec<ArchiveTrace>>,
}

fn trace(tasks: &[Task]) -> Vec<ArchiveTrace> {
    tasks
        .iter()
        .map(|t| {
            let m = &t.elite.members;
            ArchiveTrace {
                best_error: t.elite.best_error().unwrap_or(1.0),
                mean_feature_rate: m.iter().map(|i| i.obj().feature_rate).sum::<f64>() / m.len().max(1) as f64,
                size: m.len(),
            }
        })
        .collect()
}

/// One solver generation of one task. Returns whether the archive changed
/// (better best error or different membership).
fn task_generation(task: &mut Task, evaluator: &Evaluator, config: &RunConfig, seed: u64, generation: usize) -> bool {
    for ind in task.pop.iter_mut() {
        evaluator.evaluate_individual(ind);
    }
    let parents = task.pop.clone();
    let cso_seed = rng::derive(seed, &[PHASE_CSO, task.id as u64, generation as u64]);
    let losers = cso_step(&mut task.pop, task.mode, config.phi, task.bounds, cso_seed);
    let mut offspring = Vec::with_capacity(losers.len());
    for l in losers {
        let mut ind = task.pop[l].clone();
        ind.full_repr = task.reconstruct(&ind.task_repr).expect("task dimension");
        evaluator.evaluate_individual(&mut ind);
        offspring.push(ind);
    }
    let mut candidates = parents;
    candidates.extend(offspring);
    task.pop = environmental_selection(candidates, task.mode, task.pop_size);

    let before = (task.elite.best_error(), task.elite.signature(config.theta));
    let mut r = rng::stream(seed, &[PHASE_ELITE, task.id as u64, generation as u64]);
    task.elite.update(&task.pop, config.theta, config.norm_dir, &mut r);
    let improved = match (before.0, task.elite.best_error()) {
        (Some(old), Some(new)) => new < old,
        (None, Some(_)) => true,
        _ => false,
    };
    improved || before.1 != task.elite.signature(config.theta)
}

/// Simulated binary crossover; returns the first child.
fn sbx<R: Rng + ?Sized>(a: &[f64], b: &[f64], eta: f64, bounds: Bounds, rng: &mut R) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if rng.gen::<f64>() > 0.5 || (x - y).abs() < 1e-14 {
                return x;
            }
            let u: f64 = rng.gen();
            let beta = if u <= 0.5 {
                (2.0 * u).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
            };
            bounds.clamp(0.5 * ((1.0 + beta) * x + (1.0 - beta) * y))
        })
        .collect()
}

struct SourceView<'a> {
    form: &'a TaskForm,
    elites: &'a [Individual],
}

/// Builds the transferred task-space vector for slot `p1` of `target` from
/// source individual `p2` (owned by a task with form `source`).
pub fn transfer_specific(target: &Task, p1: &Individual, p2: &Individual, source: &TaskForm, theta: f64) -> Vec<f64> {
    match source {
        TaskForm::Filtering { .. } => {
            let masked: Vec<f64> =
                p1.full_repr.iter().zip(&p2.full_repr).map(|(&v, &m)| if m > theta { v } else { 0.0 }).collect();
            target.encode(&masked)
        }
        TaskForm::Clustering { cluster_map, .. } => {
            let full = wo_expand(&p2.task_repr, &p1.full_repr, cluster_map).expect("source weights match its clusters");
            target.encode(&full)
        }
        TaskForm::Original => target.encode(&p2.full_repr),
    }
}

/// Knowledge transfer into one task from a snapshot of all archives.
/// Returns the number of slots that received a transfer.
fn transfer_into(
    task: &mut Task,
    sources: &[SourceView<'_>],
    evaluator: &Evaluator,
    config: &RunConfig,
    seed: u64,
    event: usize,
) -> usize {
    let mut r = rng::stream(seed, &[PHASE_TRANSFER, event as u64, task.id as u64]);
    if matches!(task.form, TaskForm::Clustering { .. }) {
        if let Ok(prime) = select_prime(sources.iter().flat_map(|s| s.elites)) {
            task.refresh_prime(prime, evaluator);
        }
    }
    let others: Vec<usize> = (0..sources.len()).filter(|&i| i != task.id && !sources[i].elites.is_empty()).collect();
    let pool: Vec<(usize, usize)> =
        others.iter().flat_map(|&t| (0..sources[t].elites.len()).map(move |k| (t, k))).collect();

    let mut transfers = 0;
    let mut offspring = Vec::with_capacity(task.pop.len());
    for p1 in &task.pop {
        let mut base = p1.task_repr.clone();
        if !pool.is_empty() && r.gen::<f64>() < config.rtp {
            let (src, k) = match config.pool_sampling {
                PoolSampling::Concatenated => pool[r.gen_range(0..pool.len())],
                PoolSampling::PerTask => {
                    let t = others[r.gen_range(0..others.len())];
                    (t, r.gen_range(0..sources[t].elites.len()))
                }
            };
            let p2 = &sources[src].elites[k];
            let transferred = match config.transfer {
                TransferMode::SbxStyle => {
                    let encoded = task.encode(&p2.full_repr);
                    sbx(&p1.task_repr, &encoded, config.eta, task.bounds, &mut r)
                }
                _ => transfer_specific(task, p1, p2, sources[src].form, config.theta),
            };
            transfers += 1;
            if config.mutate_transferred {
                base = transferred;
            }
        }
        let mutated = polynomial_mutation(&base, config.eta, task.mutation_rate(), task.bounds, &mut r);
        let mut child = task.spawn(mutated);
        evaluator.evaluate_individual(&mut child);
        offspring.push(child);
    }
    let mut candidates = std::mem::take(&mut task.pop);
    candidates.extend(offspring);
    task.pop = environmental_selection(candidates, task.mode, task.pop_size);
    task.elite.update(&task.pop, config.theta, config.norm_dir, &mut r);
    transfers
}

/// Runs one knowledge-transfer event into the tasks flagged in `receivers`.
pub fn knowledge_transfer(
    tasks: &mut [Task],
    receivers: &[bool],
    evaluator: &Evaluator,
    config: &RunConfig,
    seed: u64,
    event: usize,
) -> usize {
    let snapshot: Vec<(TaskForm, Vec<Individual>)> =
        tasks.iter().map(|t| (t.form.clone(), t.elite.members.clone())).collect();
    let sources: Vec<SourceView<'_>> = snapshot.iter().map(|(form, elites)| SourceView { form, elites }).collect();
    tasks
        .par_iter_mut()
        .zip(receivers.par_iter())
        .map(|(task, &receive)| if receive { transfer_into(task, &sources, evaluator, config, seed, event) } else { 0 })
        .sum()
}

/// Deduplicated union of the archives reduced to its (error, feature rate)
/// non-dominated front.
pub fn final_front(tasks: &[Task], theta: f64) -> Vec<Individual> {
    let union = dedup_by_selection(tasks.iter().flat_map(|t| t.elite.members.iter().cloned()).collect(), theta);
    let pairs: Vec<(f64, f64)> = union.iter().map(|i| CompareMode::Original.pair(i.obj())).collect();
    let fronts = nd_sort(&pairs);
    union.into_iter().zip(fronts).filter(|(_, f)| *f == 0).map(|(i, _)| i).collect()
}

impl RunState {
    pub fn new(n_tasks: usize, seed: u64) -> Self {
        Self { generation: 0, stagnation: vec![0; n_tasks], seed, transfer_events: Vec::new() }
    }
}

/// Advances every task by one generation, then runs knowledge transfer if
/// any task has stagnated for `config.stagnation` generations.
pub fn step(tasks: &mut [Task], state: &mut RunState, evaluator: &Evaluator, config: &RunConfig) {
    state.generation += 1;
    let (generation, seed) = (state.generation, state.seed);
    let changed: Vec<bool> =
        tasks.par_iter_mut().map(|t| task_generation(t, evaluator, config, seed, generation)).collect();
    for (count, changed) in state.stagnation.iter_mut().zip(&changed) {
        *count = if *changed { 0 } else { *count + 1 };
    }
    let stagnant: Vec<bool> = state.stagnation.iter().map(|&c| c >= config.stagnation).collect();
    if config.transfer == TransferMode::Off || !stagnant.iter().any(|&s| s) {
        return;
    }
    let receivers = match config.trigger {
        TransferTrigger::Global => vec![true; tasks.len()],
        TransferTrigger::PerTask => stagnant,
    };
    let event = state.transfer_events.len();
    let transfers = knowledge_transfer(tasks, &receivers, evaluator, config, seed, event);
    for (count, &r) in state.stagnation.iter_mut().zip(&receivers) {
        if r {
            *count = 0;
        }
    }
    state.transfer_events.push(TransferEvent {
        generation,
        receivers: (0..tasks.len()).filter(|&i| receivers[i]).collect(),
        transfers,
    });
}

/// The generational loop over already-built tasks.
pub fn evolve(mut tasks: Vec<Task>, evaluator: &Evaluator, config: &RunConfig, seed: u64) -> SearchOutcome {
    let mut state = RunState::new(tasks.len(), seed);
    let mut history = vec![trace(&tasks)];
    for _ in 0..config.max_iter {
        step(&mut tasks, &mut state, evaluator, config);
        history.push(trace(&tasks));
    }
    SearchOutcome { front: final_front(&tasks, config.theta), tasks, state, trace: history }
}

/// Builds the tasks and evolves them.
pub fn run(
    train: &Dataset,
    su: &SuScores,
    raw_features: usize,
    config: &RunConfig,
    evaluator: &Evaluator,
    seed: u64,
) -> Result<SearchOutcome, TaskError> {
    let tasks = build_tasks(train, su, raw_features, config, evaluator, seed)?;
    Ok(evolve(tasks, evaluator, config, seed))
}
