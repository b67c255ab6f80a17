//! Multi-objective search kernel shared by every task: non-dominated
//! sorting, pairwise comparison, the competitive swarm update, polynomial
//! mutation, environmental selection and the elite archive.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::{Individual, ObjectiveVector, Selection};
use crate::rng;

/// How two solutions of a task are ranked against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    /// Error rate and feature rate.
    Original,
    /// Error rate, then the precision-based error.
    Auxiliary,
    /// Error rate alone.
    ErrorOnly,
}

impl CompareMode {
    /// The objective pair used for sorting in this mode.
    pub fn pair(self, o: &ObjectiveVector) -> (f64, f64) {
        match self {
            CompareMode::Original => (o.error_rate, o.feature_rate),
            CompareMode::Auxiliary => (o.error_rate, o.assistant_error),
            CompareMode::ErrorOnly => (o.error_rate, o.error_rate),
        }
    }
}

/// `a` weakly dominates-and-differs from `b` under minimisation.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Pareto front index per point (0 = non-dominated). Equal points share a
/// front.
pub fn nd_sort(objs: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&a, &b| objs[a].0.total_cmp(&objs[b].0).then(objs[a].1.total_cmp(&objs[b].1)));
    // In lexicographic order only earlier points can dominate later ones, and
    // within a front the last added point has the smallest second objective,
    // so it alone decides whether a newcomer is dominated by that front.
    let mut front_last: Vec<usize> = Vec::new();
    let mut front_of = vec![0; objs.len()];
    for i in order {
        let f = front_last.partition_point(|&last| dominates(objs[last], objs[i]));
        if f == front_last.len() {
            front_last.push(i);
        } else {
            front_last[f] = i;
        }
        front_of[i] = f;
    }
    front_of
}

/// Which of two compared solutions wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    First,
    Second,
}

fn preference(a: &ObjectiveVector, b: &ObjectiveVector, mode: CompareMode) -> Ordering {
    match mode {
        CompareMode::Original => {
            let (pa, pb) = (mode.pair(a), mode.pair(b));
            if dominates(pa, pb) {
                Ordering::Less
            } else if dominates(pb, pa) {
                Ordering::Greater
            } else {
                a.error_rate.total_cmp(&b.error_rate).then(a.feature_rate.total_cmp(&b.feature_rate))
            }
        }
        CompareMode::Auxiliary => a
            .error_rate
            .total_cmp(&b.error_rate)
            .then(a.assistant_error.total_cmp(&b.assistant_error))
            .then(a.feature_rate.total_cmp(&b.feature_rate)),
        CompareMode::ErrorOnly => a.error_rate.total_cmp(&b.error_rate),
    }
}

/// Pairwise competition; full ties go to `a`.
pub fn compare(a: &ObjectiveVector, b: &ObjectiveVector, mode: CompareMode) -> Winner {
    if preference(a, b, mode) == Ordering::Greater {
        Winner::Second
    } else {
        Winner::First
    }
}

/// Box constraints shared by every coordinate of a task space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const UNIT: Bounds = Bounds { lower: 0.0, upper: 1.0 };

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

/// Moves a competition loser towards the winner and the swarm mean.
///
/// `draw` yields `(r1, r2, r3)` for each coordinate in turn.
pub fn learn_from_winner(
    loser: &mut Individual,
    winner: &[f64],
    mean: &[f64],
    phi: f64,
    bounds: Bounds,
    mut draw: impl FnMut() -> (f64, f64, f64),
) {
    for i in 0..loser.task_repr.len() {
        let (r1, r2, r3) = draw();
        let x = loser.task_repr[i];
        let v = r1 * loser.velocity[i] + r2 * (winner[i] - x) + phi * r3 * (mean[i] - x);
        loser.velocity[i] = v;
        loser.task_repr[i] = bounds.clamp(x + v);
    }
    loser.objectives = None;
}

/// One competitive swarm generation in place.
///
/// The population is shuffled into pairs (an odd leftover passes through);
/// each pair's loser learns from its winner. Winners are untouched. Returns
/// the positions of the updated losers. Each pair draws from its own
/// stream, so the result does not depend on evaluation order.
pub fn cso_step(pop: &mut [Individual], mode: CompareMode, phi: f64, bounds: Bounds, seed: u64) -> Vec<usize> {
    let n = pop.len();
    if n < 2 {
        return Vec::new();
    }
    let dim = pop[0].task_repr.len();
    let mut mean = vec![0.0; dim];
    for ind in pop.iter() {
        for (m, &x) in mean.iter_mut().zip(&ind.task_repr) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[0]));
    let mut losers = Vec::with_capacity(n / 2);
    for (pair, chunk) in order.chunks_exact(2).enumerate() {
        let (a, b) = (chunk[0], chunk[1]);
        let (w, l) = match compare(pop[a].obj(), pop[b].obj(), mode) {
            Winner::First => (a, b),
            Winner::Second => (b, a),
        };
        let winner = pop[w].task_repr.clone();
        let mut r = rng::stream(seed, &[1, pair as u64]);
        learn_from_winner(&mut pop[l], &winner, &mean, phi, bounds, || (r.gen(), r.gen(), r.gen()));
        losers.push(l);
    }
    losers.sort_unstable();
    losers
}

/// Bounded polynomial mutation; each coordinate mutates with probability
/// `p_m` using distribution index `eta`.
pub fn polynomial_mutation<R: Rng + ?Sized>(x: &[f64], eta: f64, p_m: f64, bounds: Bounds, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = (bounds.lower, bounds.upper);
    let span = hi - lo;
    let mut_pow = 1.0 / (eta + 1.0);
    x.iter()
        .map(|&y| {
            if span <= 0.0 || rng.gen::<f64>() >= p_m {
                return y;
            }
            let r: f64 = rng.gen();
            let deltaq = if r < 0.5 {
                let xy = 1.0 - (y - lo) / span;
                let val = 2.0 * r + (1.0 - 2.0 * r) * xy.powf(eta + 1.0);
                val.powf(mut_pow) - 1.0
            } else {
                let xy = 1.0 - (hi - y) / span;
                let val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * xy.powf(eta + 1.0);
                1.0 - val.powf(mut_pow)
            };
            (y + deltaq * span).clamp(lo, hi)
        })
        .collect()
}

/// Standard two-objective crowding distance; boundary points are infinite.
pub fn crowding_distance(points: &[(f64, f64)]) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    type Key = fn(&(f64, f64)) -> f64;
    let keys: [Key; 2] = [|p| p.0, |p| p.1];
    for key in keys {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(&points[a]).total_cmp(&key(&points[b])).then(a.cmp(&b)));
        let (min, max) = (key(&points[order[0]]), key(&points[order[n - 1]]));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        if max > min {
            for w in 1..n - 1 {
                let gap = key(&points[order[w + 1]]) - key(&points[order[w - 1]]);
                dist[order[w]] += gap / (max - min);
            }
        }
    }
    dist
}

/// Indices of the `n` survivors of `objs`: fill by fronts, splitting the
/// last front by descending crowding distance (ties by lower error, then
/// position). Survivors are returned in their original order.
pub fn select_indices(objs: &[ObjectiveVector], mode: CompareMode, n: usize) -> Vec<usize> {
    if objs.len() <= n {
        return (0..objs.len()).collect();
    }
    if mode == CompareMode::ErrorOnly {
        let mut order: Vec<usize> = (0..objs.len()).collect();
        order.sort_by(|&a, &b| objs[a].error_rate.total_cmp(&objs[b].error_rate).then(a.cmp(&b)));
        order.truncate(n);
        order.sort_unstable();
        return order;
    }
    let pairs: Vec<(f64, f64)> = objs.iter().map(|o| mode.pair(o)).collect();
    let fronts = nd_sort(&pairs);
    let n_fronts = fronts.iter().max().map_or(0, |m| m + 1);
    let mut chosen = Vec::with_capacity(n);
    for f in 0..n_fronts {
        let members: Vec<usize> = (0..objs.len()).filter(|&i| fronts[i] == f).collect();
        if chosen.len() + members.len() <= n {
            chosen.extend(members);
            if chosen.len() == n {
                break;
            }
            continue;
        }
        let pts: Vec<(f64, f64)> = members.iter().map(|&i| pairs[i]).collect();
        let cd = crowding_distance(&pts);
        let mut rank: Vec<usize> = (0..members.len()).collect();
        rank.sort_by(|&a, &b| {
            cd[b].total_cmp(&cd[a]).then(pts[a].0.total_cmp(&pts[b].0)).then(members[a].cmp(&members[b]))
        });
        let room = n - chosen.len();
        chosen.extend(rank[..room].iter().map(|&r| members[r]));
        break;
    }
    chosen.sort_unstable();
    chosen
}

/// Reduces `candidates` to `n` individuals by Pareto rank and crowding.
pub fn environmental_selection(candidates: Vec<Individual>, mode: CompareMode, n: usize) -> Vec<Individual> {
    let objs: Vec<ObjectiveVector> = candidates.iter().map(|c| *c.obj()).collect();
    let keep = select_indices(&objs, mode, n);
    let mut keep_iter = keep.into_iter().peekable();
    candidates
        .into_iter()
        .enumerate()
        .filter_map(|(i, c)| {
            if keep_iter.peek() == Some(&i) {
                keep_iter.next();
                Some(c)
            } else {
                None
            }
        })
        .collect()
}

/// Direction of the admission probability for the (error, feature-rate)
/// front in the elite update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormDirection {
    /// `p = 1 - normalised error`: accurate solutions are favoured.
    #[default]
    Inverted,
    /// `p = normalised error`.
    Literal,
}

/// Capacity-bounded, accuracy-biased archive of distinct feature subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteArchive {
    pub members: Vec<Individual>,
    pub capacity: usize,
}

impl EliteArchive {
    pub fn new(capacity: usize) -> Self {
        Self { members: Vec::new(), capacity }
    }

    pub fn best_error(&self) -> Option<f64> {
        self.members.iter().map(|m| m.obj().error_rate).min_by(f64::total_cmp)
    }

    /// Sorted selection patterns of the members.
    pub fn signature(&self, theta: f64) -> Vec<Selection> {
        let mut sig: Vec<Selection> = self.members.iter().map(|m| m.selection(theta)).collect();
        sig.sort();
        sig
    }

    pub fn update<R: Rng + ?Sized>(&mut self, pop: &[Individual], theta: f64, norm: NormDirection, rng: &mut R) {
        self.members = update_elite(&self.members, pop, self.capacity, theta, norm, rng);
    }
}

/// Drops later individuals whose decoded subset repeats an earlier one.
pub fn dedup_by_selection(inds: Vec<Individual>, theta: f64) -> Vec<Individual> {
    let mut seen = HashSet::new();
    inds.into_iter().filter(|ind| seen.insert(ind.selection(theta))).collect()
}

/// Two-round elite selection over `archive ∪ pop` (deduplicated by subset).
///
/// Members of the non-dominated front on (error, feature rate) are admitted
/// with a probability derived from their min-max normalised error; members
/// of the non-dominated front on (error, assistant error) are admitted
/// unconditionally, and so is the single best-error candidate. Overflow keeps
/// the `capacity` lowest errors (ties: lower feature rate, then pool order).
pub fn update_elite<R: Rng + ?Sized>(
    archive: &[Individual],
    pop: &[Individual],
    capacity: usize,
    theta: f64,
    norm: NormDirection,
    rng: &mut R,
) -> Vec<Individual> {
    let pool = dedup_by_selection(archive.iter().chain(pop).cloned().collect(), theta);
    if pool.is_empty() || capacity == 0 {
        return Vec::new();
    }
    let objs: Vec<ObjectiveVector> = pool.iter().map(|p| *p.obj()).collect();
    let front1 = nd_sort(&objs.iter().map(|o| CompareMode::Original.pair(o)).collect::<Vec<_>>());
    let front2 = nd_sort(&objs.iter().map(|o| CompareMode::Auxiliary.pair(o)).collect::<Vec<_>>());

    let (min_err, max_err) = objs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.error_rate), hi.max(o.error_rate)));
    let admit_probability = |e: f64| {
        if max_err <= min_err {
            return 1.0;
        }
        let normalised = (e - min_err) / (max_err - min_err);
        match norm {
            NormDirection::Inverted => 1.0 - normalised,
            NormDirection::Literal => normalised,
        }
    };

    let mut by_accuracy: Vec<usize> = (0..pool.len()).collect();
    by_accuracy.sort_by(|&a, &b| {
        objs[a]
            .error_rate
            .total_cmp(&objs[b].error_rate)
            .then(objs[a].feature_rate.total_cmp(&objs[b].feature_rate))
            .then(a.cmp(&b))
    });

    let mut next = vec![false; pool.len()];
    for i in 0..pool.len() {
        if front1[i] == 0 && rng.gen::<f64>() < admit_probability(objs[i].error_rate) {
            next[i] = true;
        }
        if front2[i] == 0 {
            next[i] = true;
        }
    }
    next[by_accuracy[0]] = true;

    let kept: HashSet<usize> = by_accuracy.iter().copied().filter(|&i| next[i]).take(capacity).collect();
    pool.into_iter().enumerate().filter(|(i, _)| kept.contains(i)).map(|(_, p)| p).collect()
}
