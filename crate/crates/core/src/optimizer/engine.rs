use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::state::{RunState, ScoredPrompt, StopReason};
use super::{Enforcement, Momentum, OptimizerConfig, Refinement};
use crate::error::{Error, Result};
use crate::evaluation::{
    collect_errors, evaluate_many, evaluate_prompt, DatasetSplit, Evaluation, Score, TaskExample,
    TaskModel, TaskSpec,
};
use crate::gateway::{ChatRequest, Gateway, TAG_CANDIDATE, TAG_REFLECTION};
use crate::metaprompt::{
    budget_sentence, format_task_examples, format_trajectory_block, RenderedMetaPrompt, TemplateId,
    TemplateRegistry, UpdateInputs, BUDGET, PREVIOUS_PROMPTS,
};
use crate::schedule::{word_edit_distance, EditBudgetSchedule};
use crate::trajectory::{
    summarize_momentum, MomentumModel, Similarity, StepMeta, TrajectoryEntry, TrajectoryStore,
};

/// Seed offsets derived from the run seed. The split uses the seed itself.
const MINIBATCH_SEED_OFFSET: u64 = 1;
const EXEMPLAR_SEED_OFFSET: u64 = 2;

/// Everything a run reads but never mutates.
#[derive(Clone, Copy)]
pub struct RunContext<'a> {
    pub config: &'a OptimizerConfig,
    pub task: &'a TaskSpec,
    pub split: &'a DatasetSplit,
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateRegistry,
    pub similarity: &'a dyn Similarity,
    pub task_model: &'a str,
    pub optimizer_model: &'a str,
    pub task_max_output_tokens: u32,
}

/// Receives state at every persistence point.
pub trait RunObserver {
    /// Called after the initial evaluation and after every completed step
    /// with the entry that was just appended.
    fn on_step(&mut self, state: &RunState, entry: &TrajectoryEntry) -> Result<()>;

    /// Called when the run stops, or pauses on the session step limit.
    fn on_stop(&mut self, state: &RunState) -> Result<()>;
}

pub struct NoopObserver;

impl RunObserver for NoopObserver {
    fn on_step(&mut self, _: &RunState, _: &TrajectoryEntry) -> Result<()> {
        Ok(())
    }

    fn on_stop(&mut self, _: &RunState) -> Result<()> {
        Ok(())
    }
}

/// Index of the highest score; the lowest index wins ties.
pub fn select_best(candidates: &[String], scores: &[Score]) -> Result<usize> {
    if candidates.len() != scores.len() || candidates.is_empty() {
        return Err(Error::LengthMismatch { candidates: candidates.len(), scores: scores.len() });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.value > scores[best].value {
            best = i;
        }
    }
    Ok(best)
}

/// Problems found for the current prompt, and what produced them.
struct StepProblems {
    text: Option<String>,
    summary: Option<crate::trajectory::MomentumSummary>,
    skipped: bool,
    fallbacks: u32,
}

pub struct Optimizer<'a> {
    ctx: RunContext<'a>,
    steps_per_epoch: u64,
    horizon: u64,
    patience: u32,
}

impl<'a> Optimizer<'a> {
    pub fn new(ctx: RunContext<'a>) -> Result<Self> {
        ctx.config.validate()?;
        if ctx.split.train.is_empty() || ctx.split.valid.is_empty() {
            return Err(Error::EmptyExamples);
        }
        let steps_per_epoch = ctx.split.train.len().div_ceil(ctx.config.batch_size) as u64;
        let horizon = steps_per_epoch * u64::from(ctx.config.epochs);
        let patience = ctx.config.plateau_patience.unwrap_or(steps_per_epoch as u32);
        Ok(Self { ctx, steps_per_epoch, horizon, patience })
    }

    /// Maximum number of optimization steps.
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.steps_per_epoch
    }

    pub fn patience(&self) -> u32 {
        self.patience
    }

    fn task_model(&self) -> TaskModel<'a> {
        TaskModel {
            gateway: self.ctx.gateway,
            model_id: self.ctx.task_model,
            max_output_tokens: self.ctx.task_max_output_tokens,
        }
    }

    /// The edit-budget schedule. `c_max` defaults to the word count of the
    /// step-0 prompt.
    pub fn schedule(&self, initial_prompt: &str) -> Result<EditBudgetSchedule> {
        let s = &self.ctx.config.schedule;
        let c_max = s.c_max.unwrap_or_else(|| initial_prompt.split_whitespace().count().max(1) as u32);
        let horizon = u32::try_from(self.horizon)
            .map_err(|_| Error::InvalidSchedule("horizon exceeds u32".into()))?;
        let mut sched = EditBudgetSchedule::new(s.kind, c_max, horizon)?
            .with_warmup(s.warmup)
            .with_floor_fraction(s.floor_fraction);
        sched.warmup_fraction = s.warmup_fraction;
        sched.validate()?;
        Ok(sched)
    }

    /// Evaluates the initial prompt on the validation split and records it
    /// as step 0.
    pub fn start(&self, initial_prompt: &str, seed: u64, observer: &mut dyn RunObserver) -> Result<RunState> {
        if initial_prompt.trim().is_empty() && !self.ctx.task.allow_empty_prompt {
            return Err(Error::Config(format!("task {} requires a nonempty initial prompt", self.ctx.task.name)));
        }
        self.schedule(initial_prompt)?;
        let eval = evaluate_prompt(initial_prompt, &self.ctx.split.valid, self.ctx.task, self.task_model())?;
        let scored = ScoredPrompt { text: initial_prompt.to_string(), score: eval.score };
        let ledger = self.ctx.gateway.ledger_snapshot();
        let mut entry = TrajectoryEntry::new(0, initial_prompt, eval.score);
        entry.meta = StepMeta {
            cumulative_calls: ledger.total_calls(),
            cumulative_tokens: ledger.total_tokens(),
            cumulative_dollars: ledger.total_dollars(),
            ..StepMeta::default()
        };
        let mut trajectory = TrajectoryStore::new();
        trajectory.append(entry.clone())?;
        let state = RunState {
            step: 0,
            current: scored.clone(),
            best: scored,
            best_step: 0,
            steps_since_improvement: 0,
            momentum: None,
            current_records: eval.records,
            ledger,
            seed,
            stop_reason: None,
            test_score: None,
            trajectory,
        };
        observer.on_step(&state, &entry)?;
        Ok(state)
    }

    /// The train minibatch used at step `t` (1-based).
    pub fn minibatch(&self, seed: u64, t: u64) -> Vec<TaskExample> {
        let epoch = (t - 1) / self.steps_per_epoch;
        let chunk = ((t - 1) % self.steps_per_epoch) as usize;
        let mut train = self.ctx.split.train.clone();
        let rng_seed = seed.wrapping_add(MINIBATCH_SEED_OFFSET).wrapping_add(epoch);
        train.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
        let b = self.ctx.config.batch_size;
        train.into_iter().skip(chunk * b).take(b).collect()
    }

    /// Task exemplars shown in the meta-prompt at step `t`.
    fn exemplars(&self, seed: u64, t: u64) -> Vec<TaskExample> {
        let rng_seed = seed.wrapping_add(EXEMPLAR_SEED_OFFSET).wrapping_add(t);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        self.ctx
            .split
            .train
            .choose_multiple(&mut rng, self.ctx.config.task_examples_in_meta)
            .cloned()
            .collect()
    }

    fn problems(&self, state: &RunState, t: u64) -> Result<StepProblems> {
        let cfg = self.ctx.config;
        let summarize = cfg.momentum == Momentum::Summarization;
        let none = StepProblems { text: None, summary: state.momentum.clone(), skipped: false, fallbacks: 0 };
        if !cfg.direction.uses_reflection() && !summarize {
            return Ok(none);
        }
        let demos = collect_errors(&state.current_records, self.ctx.task);
        if demos.is_empty() {
            tracing::info!(step = t, "no wrong examples, reflection skipped");
            return Ok(StepProblems { skipped: true, ..none });
        }
        let gradient_id = match (cfg.refinement, summarize) {
            (Refinement::Editing, true) => TemplateId::SgdmGradient,
            (Refinement::Editing, false) => TemplateId::ApoGradient,
            (Refinement::Generation, _) => TemplateId::Pe2Gradient,
        };
        let meta = self.ctx.templates.render_gradient(gradient_id, &state.current.text, &demos)?;
        let request = ChatRequest::optimizer(
            self.ctx.optimizer_model,
            meta.text,
            TAG_REFLECTION,
            cfg.optimizer_temperature,
            cfg.max_output_tokens,
        );
        let (reflection, fb) = self.ctx.gateway.complete_marked(&request, cfg.marker_retries)?;
        let mut fallbacks = u32::from(fb);
        if !summarize {
            return Ok(StepProblems { text: Some(reflection), summary: state.momentum.clone(), skipped: false, fallbacks });
        }
        let model = MomentumModel {
            gateway: self.ctx.gateway,
            model_id: self.ctx.optimizer_model,
            temperature: cfg.optimizer_temperature,
            max_output_tokens: cfg.max_output_tokens,
            marker_retries: cfg.marker_retries,
        };
        let (summary, fb) = summarize_momentum(state.momentum.as_ref(), &reflection, t, self.ctx.templates, model)?;
        fallbacks += u32::from(fb);
        Ok(StepProblems { text: Some(summary.text.clone()), summary: Some(summary), skipped: false, fallbacks })
    }

    fn retrieved(&self, state: &RunState) -> Result<Option<Vec<TrajectoryEntry>>> {
        let k = self.ctx.config.trajectory_k;
        let store = &state.trajectory;
        Ok(match self.ctx.config.momentum {
            Momentum::Recency => Some(store.retrieve_recency(k)),
            Momentum::Relevance => Some(store.retrieve_relevance(k, &state.current.text, self.ctx.similarity)?),
            Momentum::Importance => Some(store.retrieve_importance(k)),
            Momentum::None | Momentum::Summarization => None,
        })
    }

    /// Renders the update meta-prompt for step `t`.
    fn update_meta_prompt(
        &self,
        state: &RunState,
        t: u64,
        problems: Option<String>,
        budget: Option<u32>,
    ) -> Result<RenderedMetaPrompt> {
        let cfg = self.ctx.config;
        let retrieved = self.retrieved(state)?;
        let examples = self.exemplars(state.seed, t);
        let examples_block =
            format_task_examples(&examples, self.ctx.task.prompt_position, cfg.task_examples_in_meta.min(self.ctx.split.train.len()))?;
        let has_problems = problems.is_some();
        let mut inputs = UpdateInputs {
            current_prompt: state.current.text.clone(),
            current_score: state.current.score,
            trajectory_block: None,
            examples_block,
            problems,
            budget,
            position_desc: self.ctx.task.prompt_position.description().to_string(),
        };

        let mut retrieval_block = None;
        let id = match cfg.refinement {
            Refinement::Editing => {
                if let Some(entries) = &retrieved {
                    let mut b = std::collections::BTreeMap::new();
                    b.insert(PREVIOUS_PROMPTS.to_string(), format_trajectory_block(entries));
                    retrieval_block = Some(self.ctx.templates.render(TemplateId::RetrievalBlock, &b)?.text);
                }
                match (has_problems, cfg.momentum) {
                    (true, Momentum::Summarization) => TemplateId::SgdmUpdate,
                    (true, _) => TemplateId::ApoUpdate,
                    (false, _) => TemplateId::EditingUpdate,
                }
            }
            Refinement::Generation => {
                if has_problems {
                    let current = state.trajectory.last().cloned().into_iter().collect::<Vec<_>>();
                    let entries = retrieved.unwrap_or(current);
                    inputs.trajectory_block = Some(format_trajectory_block(&entries));
                    TemplateId::Pe2Update
                } else if let Some(entries) = retrieved {
                    inputs.trajectory_block = Some(format_trajectory_block(&entries));
                    if budget.is_some() {
                        TemplateId::GpoUpdate
                    } else {
                        TemplateId::OproUpdate
                    }
                } else {
                    TemplateId::ApeUpdate
                }
            }
        };
        let mut rendered = self.ctx.templates.render_update(id, &inputs)?;
        if let Some(block) = retrieval_block {
            rendered = rendered.with_block_after_first_paragraph(&block);
        }
        if let Some(n) = budget {
            if !self.ctx.templates.get(id).placeholders().iter().any(|p| p == BUDGET) {
                rendered = rendered.with_line_before_last(&budget_sentence(n));
            }
        }
        Ok(rendered)
    }

    /// Issues `candidates_per_step` independent optimizer calls and returns
    /// the parsed prompts in sample order, with a marker-fallback count.
    pub fn generate_candidates(
        &self,
        meta_prompt: &str,
        current: &str,
        budget: Option<u32>,
    ) -> Result<(Vec<String>, u32)> {
        let cfg = self.ctx.config;
        let hard = cfg.schedule.enforcement == Enforcement::Hard;
        let requests: Vec<ChatRequest> = (0..cfg.candidates_per_step as u32)
            .map(|k| {
                ChatRequest::optimizer(
                    self.ctx.optimizer_model,
                    meta_prompt.to_string(),
                    TAG_CANDIDATE,
                    cfg.optimizer_temperature,
                    cfg.max_output_tokens,
                )
                .with_sample_index(k)
            })
            .collect();
        let gateway = self.ctx.gateway;
        let results = gateway.map_concurrent(requests, |request| -> Result<(String, u32)> {
            let (mut best, fb) = gateway.complete_marked(&request, cfg.marker_retries)?;
            let mut fallbacks = u32::from(fb);
            let Some(limit) = budget.filter(|_| hard) else {
                return Ok((best, fallbacks));
            };
            let mut best_dist = word_edit_distance(current, &best);
            for r in 1..=cfg.schedule.hard_resamples {
                if best_dist <= limit as usize {
                    break;
                }
                let mut retry = request.clone();
                retry.attempt = r * (cfg.marker_retries + 1);
                let (text, fb) = gateway.complete_marked(&retry, cfg.marker_retries)?;
                fallbacks += u32::from(fb);
                let d = word_edit_distance(current, &text);
                if d < best_dist {
                    best = text;
                    best_dist = d;
                }
            }
            Ok((best, fallbacks))
        });
        let mut candidates = Vec::with_capacity(results.len());
        let mut fallbacks = 0;
        for r in results {
            let (text, fb) = r?;
            candidates.push(text);
            fallbacks += fb;
        }
        Ok((candidates, fallbacks))
    }

    /// Scores every candidate on the same batch, preserving order.
    pub fn score_candidates(&self, candidates: &[String], batch: &[TaskExample]) -> Result<Vec<Evaluation>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        evaluate_many(candidates, batch, self.ctx.task, self.task_model())
    }

    /// One optimization step. `state` is only modified when the step
    /// completes; on error it is left as it was.
    pub fn step(&self, state: &mut RunState) -> Result<TrajectoryEntry> {
        let t = state.step + 1;
        if t > self.horizon {
            return Err(Error::StepOutOfRange { step: t as u32, horizon: self.horizon as u32 });
        }
        let initial = state.trajectory.entries().first().map_or(state.current.text.as_str(), |e| e.prompt.as_str());
        let budget = self.schedule(initial)?.constraint_at((t - 1) as u32)?;
        let batch = self.minibatch(state.seed, t);

        let problems = self.problems(state, t)?;
        let meta = self.update_meta_prompt(state, t, problems.text.clone(), budget)?;
        let (candidates, cand_fallbacks) = self.generate_candidates(&meta.text, &state.current.text, budget)?;

        let batch_evals = self.score_candidates(&candidates, &batch)?;
        let scores: Vec<Score> = batch_evals.iter().map(|e| e.score).collect();
        let chosen = select_best(&candidates, &scores)?;
        let winner = candidates[chosen].clone();
        let valid = evaluate_prompt(&winner, &self.ctx.split.valid, self.ctx.task, self.task_model())?;

        let ledger = self.ctx.gateway.ledger_snapshot();
        let mut entry = TrajectoryEntry::new(t, winner.clone(), valid.score);
        entry.problems_summary = problems.text;
        entry.meta = StepMeta {
            epoch: Some((t - 1) / self.steps_per_epoch),
            batch_score: Some(scores[chosen].value),
            edit_budget: budget,
            edit_distance: Some(word_edit_distance(&state.current.text, &winner)),
            selected_candidate: Some(chosen),
            marker_fallbacks: problems.fallbacks + cand_fallbacks,
            reflection_skipped: problems.skipped,
            cumulative_calls: ledger.total_calls(),
            cumulative_tokens: ledger.total_tokens(),
            cumulative_dollars: ledger.total_dollars(),
        };
        state.trajectory.append(entry.clone())?;

        let scored = ScoredPrompt { text: winner, score: valid.score };
        if scored.score.value > state.best.score.value {
            state.best = scored.clone();
            state.best_step = t;
            state.steps_since_improvement = 0;
        } else {
            state.steps_since_improvement += 1;
        }
        state.current = scored;
        state.current_records = valid.records;
        state.momentum = problems.summary;
        state.ledger = ledger;
        state.step = t;
        Ok(entry)
    }

    fn stop_condition(&self, state: &RunState) -> Option<StopReason> {
        if state.steps_since_improvement >= self.patience {
            Some(StopReason::Plateau)
        } else if state.step >= self.horizon {
            Some(StopReason::MaxSteps)
        } else {
            None
        }
    }

    /// Steps until a stop condition, or until `session_limit` steps have
    /// been taken in this call (the run is then left resumable). The test
    /// split is evaluated once, when the run stops.
    pub fn run(
        &self,
        state: &mut RunState,
        session_limit: Option<u64>,
        observer: &mut dyn RunObserver,
    ) -> Result<()> {
        if state.is_finished() {
            return Ok(());
        }
        state.stop_reason = None;
        let mut taken = 0u64;
        let reason = loop {
            if let Some(reason) = self.stop_condition(state) {
                break reason;
            }
            if session_limit.is_some_and(|n| taken >= n) {
                return observer.on_stop(state);
            }
            match self.step(state) {
                Ok(entry) => observer.on_step(state, &entry)?,
                Err(Error::BudgetExceeded { spent, cap }) => {
                    tracing::warn!(spent, cap, step = state.step + 1, "budget cap reached, stopping");
                    return self.stop_on_budget(state, observer);
                }
                Err(e) => return Err(e),
            }
            taken += 1;
        };
        if !self.ctx.split.test.is_empty() {
            match evaluate_prompt(&state.best.text, &self.ctx.split.test, self.ctx.task, self.task_model()) {
                Ok(eval) => state.test_score = Some(eval.score),
                Err(Error::BudgetExceeded { .. }) => return self.stop_on_budget(state, observer),
                Err(e) => return Err(e),
            }
        }
        state.ledger = self.ctx.gateway.ledger_snapshot();
        state.stop_reason = Some(reason);
        observer.on_stop(state)
    }

    fn stop_on_budget(&self, state: &mut RunState, observer: &mut dyn RunObserver) -> Result<()> {
        state.ledger = self.ctx.gateway.ledger_snapshot();
        state.stop_reason = Some(StopReason::Budget);
        observer.on_stop(state)
    }
}
