//! Generational genetic algorithm: tournament selection, uniform crossover,
//! per-gene Gaussian mutation and an elite of one. All random draws happen
//! on the calling thread, so results depend only on the seed even when the
//! fitness evaluations of a generation run in parallel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::util::par_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    /// Budget of objective evaluations.
    pub max_trials: usize,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of each parameter range.
    pub mutation_sigma: f64,
    pub tournament_size: usize,
    pub seed: u64,
    /// `[lo, hi]` per parameter.
    pub bounds: Vec<[f64; 2]>,
    /// Stop as soon as a cost at or below this is seen.
    pub target_cost: Option<f64>,
    pub jobs: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 40,
            max_trials: 1000,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma: 0.05,
            tournament_size: 3,
            seed: 1,
            bounds: vec![],
            target_cost: None,
            jobs: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.population < 4 {
            e.push("population must be at least 4".into());
        }
        if self.max_trials < self.population {
            e.push("max_trials must be at least the population size".into());
        }
        for (name, r) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                e.push(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.tournament_size == 0 {
            e.push("tournament_size must be positive".into());
        }
        if self.bounds.is_empty() {
            e.push("bounds must not be empty".into());
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                e.push(format!("bounds[{i}] must be finite with lo <= hi"));
            }
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaGeneration {
    pub generation: usize,
    /// Evaluations consumed so far.
    pub trial: usize,
    pub best_cost: f64,
    pub mean_cost: f64,
    /// Mean pairwise distance of range-normalised individuals.
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    pub history: Vec<GaGeneration>,
    pub evaluations: usize,
    pub reached_target: bool,
}

struct Tracker<'a> {
    cfg: &'a GaConfig,
    trials: usize,
    best: Option<(Vec<f64>, f64)>,
    hit: bool,
}

impl Tracker<'_> {
    /// Evaluates a batch in order, honouring the budget and the target.
    fn eval(
        &mut self,
        batch: Vec<Vec<f64>>,
        f: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Vec<(Vec<f64>, f64)> {
        let room = self.cfg.max_trials.saturating_sub(self.trials);
        let batch: Vec<Vec<f64>> = batch.into_iter().take(room).collect();
        let costs = par_map(&batch, self.cfg.jobs, |x| {
            let c = f(x);
            if c.is_finite() {
                c
            } else {
                f64::INFINITY
            }
        });
        let mut out = Vec::with_capacity(batch.len());
        for (x, c) in batch.into_iter().zip(costs) {
            self.trials += 1;
            if self.best.as_ref().map_or(true, |(_, b)| c < *b) {
                self.best = Some((x.clone(), c));
            }
            out.push((x, c));
            if self.cfg.target_cost.is_some_and(|t| c <= t) {
                self.hit = true;
                break;
            }
        }
        out
    }

    fn done(&self) -> bool {
        self.hit || self.trials >= self.cfg.max_trials
    }
}

fn diversity(pop: &[(Vec<f64>, f64)], bounds: &[[f64; 2]]) -> f64 {
    let n = pop.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = pop[i]
                .0
                .iter()
                .zip(&pop[j].0)
                .zip(bounds)
                .map(|((a, b), [lo, hi])| {
                    let r = (hi - lo).max(f64::MIN_POSITIVE);
                    ((a - b) / r).powi(2)
                })
                .sum();
            sum += d.sqrt();
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

fn record(
    history: &mut Vec<GaGeneration>,
    pop: &[(Vec<f64>, f64)],
    t: &Tracker,
    bounds: &[[f64; 2]],
) {
    let finite: Vec<f64> = pop.iter().map(|p| p.1).filter(|c| c.is_finite()).collect();
    let mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    history.push(GaGeneration {
        generation: history.len(),
        trial: t.trials,
        best_cost: t.best.as_ref().map_or(f64::INFINITY, |b| b.1),
        mean_cost: mean,
        diversity: diversity(pop, bounds),
    });
}

/// Minimises `objective` within `cfg.bounds`. `seeds` (clamped into the
/// bounds) replace the first random individuals of the initial population.
pub fn ga_optimize(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    cfg: &GaConfig,
    seeds: &[Vec<f64>],
) -> GaResult {
    let bounds = &cfg.bounds;
    let dim = bounds.len();
    let clamp = |x: &mut Vec<f64>| {
        for (v, [lo, hi]) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tracker = Tracker {
        cfg,
        trials: 0,
        best: None,
        hit: false,
    };
    let mut history = Vec::new();

    let mut init: Vec<Vec<f64>> = seeds
        .iter()
        .take(cfg.population)
        .map(|s| {
            let mut s = s.clone();
            s.resize(dim, 0.0);
            clamp(&mut s);
            s
        })
        .collect();
    while init.len() < cfg.population {
        init.push(
            bounds
                .iter()
                .map(|[lo, hi]| {
                    if hi > lo {
                        rng.gen_range(*lo..*hi)
                    } else {
                        *lo
                    }
                })
                .collect(),
        );
    }
    let mut pop = tracker.eval(init, objective);
    record(&mut history, &pop, &tracker, bounds);

    let normals: Vec<Normal<f64>> = bounds
        .iter()
        .map(|[lo, hi]| {
            Normal::new(0.0, (cfg.mutation_sigma * (hi - lo)).max(0.0)).expect("finite sigma")
        })
        .collect();
    while !tracker.done() && !pop.is_empty() {
        let elite = pop
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("non-empty population");
        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            let mut best = rng.gen_range(0..pop.len());
            for _ in 1..cfg.tournament_size {
                let c = rng.gen_range(0..pop.len());
                if pop[c].1 < pop[best].1 {
                    best = c;
                }
            }
            best
        };
        let mut children = Vec::with_capacity(cfg.population - 1);
        for _ in 1..cfg.population {
            let p1 = tournament(&mut rng);
            let p2 = tournament(&mut rng);
            let mut child = pop[p1].0.clone();
            if rng.gen_bool(cfg.crossover_rate) {
                for (g, v) in child.iter_mut().zip(&pop[p2].0) {
                    if rng.gen_bool(0.5) {
                        *g = *v;
                    }
                }
            }
            for (g, n) in child.iter_mut().zip(&normals) {
                if rng.gen_bool(cfg.mutation_rate) {
                    *g += n.sample(&mut rng);
                }
            }
            clamp(&mut child);
            children.push(child);
        }
        let evaluated = tracker.eval(children, objective);
        pop = std::iter::once(elite).chain(evaluated).collect();
        record(&mut history, &pop, &tracker, bounds);
    }

    let (best_params, best_cost) = tracker.best.clone().unwrap_or((vec![], f64::INFINITY));
    GaResult {
        best_params,
        best_cost,
        history,
        evaluations: tracker.trials,
        reached_target: tracker.hit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn cfg() -> GaConfig {
        GaConfig {
            bounds: vec![[-5.0, 5.0]; 4],
            seed: 7,
            ..GaConfig::default()
        }
    }

    #[test]
    fn sphere_reaches_small_cost() {
        let r = ga_optimize(&sphere, &cfg(), &[]);
        assert!(r.evaluations <= 1000);
        assert!(r.best_cost < 1e-2, "{}", r.best_cost);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = ga_optimize(&sphere, &cfg(), &[]);
        let b = ga_optimize(&sphere, &GaConfig { jobs: 3, ..cfg() }, &[]);
        assert_eq!(a, b);
    }

    #[test]
    fn stops_early_on_target() {
        let c = GaConfig {
            target_cost: Some(0.5),
            ..cfg()
        };
        let r = ga_optimize(&sphere, &c, &[vec![0.1, 0.1, 0.1, 0.1]]);
        assert!(r.reached_target);
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.best_params, vec![0.1; 4]);
    }

    #[test]
    fn stays_inside_bounds() {
        let seen = std::sync::Mutex::new(Vec::new());
        let f = |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            -x[0]
        };
        let r = ga_optimize(
            &f,
            &GaConfig {
                max_trials: 200,
                ..cfg()
            },
            &[vec![100.0; 4]],
        );
        for x in seen.lock().unwrap().iter() {
            assert!(x.iter().all(|v| (-5.0..=5.0).contains(v)));
        }
        assert_eq!(r.best_params[0], 5.0);
        assert!(r.history.iter().all(|g| g.diversity.is_finite()));
    }

    #[test]
    fn validation() {
        let bad = GaConfig {
            population: 2,
            max_trials: 1,
            crossover_rate: 1.5,
            bounds: vec![[1.0, 0.0]],
            ..GaConfig::default()
        };
        assert_eq!(bad.validate().len(), 4);
    }
}
