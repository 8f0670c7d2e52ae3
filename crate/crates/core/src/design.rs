//! Fisher information of the logistic model on an equally weighted design,
//! and relative D-efficiency scoring of candidate subjects.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, logdet_rank_one, CholFactor, LinalgError, Matrix, SymMatrix};
use crate::logistic::{bernoulli_variance, check_columns, LogisticModel, ModelError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("information matrix of the base design is singular")]
    SingularBaseDesign,
    #[error("design needs at least one labeled subject")]
    EmptyDesign,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Candidate pools at least this large are scored on the rayon pool.
const PARALLEL_SCORING_MIN: usize = 512;

/// Design weight `F(x)(1 - F(x))` of a subject under `model`.
pub fn subject_weight<T: Scalar>(model: &LogisticModel<T>, x: &[T]) -> Result<T, ModelError> {
    model.eta(x).map(bernoulli_variance)
}

/// `M = Xᵀ W X / n` over the listed rows, restricted to the model's active variables.
pub fn information_matrix<T: Scalar>(
    x: &Matrix<T>,
    rows: &[usize],
    model: &LogisticModel<T>,
) -> Result<SymMatrix<T>, DesignError> {
    if rows.is_empty() {
        return Err(DesignError::EmptyDesign);
    }
    model.check_columns(x)?;
    let k = model.dim();
    if k == 0 {
        return Err(ModelError::EmptyProblem.into());
    }
    let mut lower = vec![T::zero(); k * k];
    let mut buf = Vec::with_capacity(k);
    for &i in rows {
        x.gather_row(i, model.active_vars(), &mut buf);
        let w = bernoulli_variance(model.eta(&buf)?);
        for a in 0..k {
            let wa = w * buf[a];
            for (h, &xb) in lower[a * k..a * k + a + 1].iter_mut().zip(&buf[..=a]) {
                *h += wa * xb;
            }
        }
    }
    let n = T::from_count(rows.len());
    Ok(SymMatrix::from_lower_fn(k, |i, j| lower[i * k + j] / n)?)
}

/// Labeled design with its current model and information matrix.
#[derive(Debug, Clone)]
pub struct DesignState<T> {
    labeled: Vec<usize>,
    labels: Vec<u8>,
    model: LogisticModel<T>,
    info: SymMatrix<T>,
    chol: Option<CholFactor<T>>,
}

impl<T: Scalar> DesignState<T> {
    /// `labels` is aligned with `labeled`.
    pub fn new(
        x: &Matrix<T>,
        labeled: Vec<usize>,
        labels: Vec<u8>,
        model: LogisticModel<T>,
    ) -> Result<Self, DesignError> {
        crate::logistic::check_labels(labeled.len(), &labels)?;
        let info = information_matrix(x, &labeled, &model)?;
        let chol = cholesky(&info).ok();
        Ok(Self {
            labeled,
            labels,
            model,
            info,
            chol,
        })
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn model(&self) -> &LogisticModel<T> {
        &self.model
    }

    pub fn info(&self) -> &SymMatrix<T> {
        &self.info
    }

    pub fn chol(&self) -> Option<&CholFactor<T>> {
        self.chol.as_ref()
    }

    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    pub fn is_singular(&self) -> bool {
        self.chol.is_none()
    }

    /// `ln |M|`, or `None` when `M` is singular.
    pub fn log_det(&self) -> Option<T> {
        self.chol.as_ref().map(CholFactor::log_det)
    }

    /// `|M|^{1/k}`, or `None` when `M` is singular.
    pub fn normalized_det(&self) -> Option<T> {
        let k = T::from_count(self.model.dim());
        self.log_det().map(|ld| (ld / k).exp())
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<u8>, LogisticModel<T>) {
        (self.labeled, self.labels, self.model)
    }

    /// Replaces the model and recomputes the information matrix.
    pub fn with_model(self, x: &Matrix<T>, model: LogisticModel<T>) -> Result<Self, DesignError> {
        Self::new(x, self.labeled, self.labels, model)
    }

    /// Adds a labeled subject and refreshes the information matrix under `model`.
    pub fn push(
        self,
        x: &Matrix<T>,
        index: usize,
        label: u8,
        model: LogisticModel<T>,
    ) -> Result<Self, DesignError> {
        let mut labeled = self.labeled;
        let mut labels = self.labels;
        labeled.push(index);
        labels.push(label);
        Self::new(x, labeled, labels, model)
    }
}

/// Relative D-efficiency of adding `x_cand` (restricted to the active variables)
/// to the design: `(|M(ξ_{n+1})|^{1/k} − |M(ξ_n)|^{1/k}) / |M(ξ_n)|^{1/k}`,
/// with `M(ξ_{n+1}) = n/(n+1)·M + w/(n+1)·x xᵀ`.
pub fn re_d_efficiency<T: Scalar>(state: &DesignState<T>, x_cand: &[T]) -> Result<T, DesignError> {
    let chol = state.chol.as_ref().ok_or(DesignError::SingularBaseDesign)?;
    let w = subject_weight(&state.model, x_cand)?;
    Ok(lemma_score(chol, state.n(), w, x_cand)?)
}

fn lemma_score<T: Scalar>(chol: &CholFactor<T>, n: usize, w: T, x: &[T]) -> Result<T, LinalgError> {
    let n1 = T::from_count(n + 1);
    let c = T::from_count(n) / n1;
    let updated = logdet_rank_one(chol, c, w / n1, x)?;
    Ok(((updated - chol.log_det()) / T::from_count(chol.dim())).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreRoute {
    /// Rank-one determinant-lemma update of a nonsingular base design.
    Lemma,
    /// Singular base: `ln |n/(n+1)·M + w/(n+1)·x xᵀ|` by direct factorization.
    Refactor,
    /// Every updated matrix stayed singular: largest `w · xᵀx`.
    WeightNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateChoice<T> {
    pub index: usize,
    pub value: T,
    pub route: ScoreRoute,
}

/// Picks the candidate pool index with the largest relative D-efficiency.
/// Ties go to the lowest pool index.
pub fn score_candidates<T: Scalar>(
    state: &DesignState<T>,
    candidates: &[usize],
    x_pool: &Matrix<T>,
) -> Result<CandidateChoice<T>, DesignError> {
    if candidates.is_empty() {
        return Err(DesignError::EmptyCandidateSet);
    }
    check_columns(x_pool, state.model.active_vars())?;
    let active = state.model.active_vars();
    let n = state.n();

    let eval = |f: &(dyn Fn(&[T]) -> Option<T> + Sync)| -> Vec<Option<T>> {
        let one = |&i: &usize| {
            let mut buf = Vec::with_capacity(active.len());
            x_pool.gather_row(i, active, &mut buf);
            f(&buf)
        };
        if candidates.len() >= PARALLEL_SCORING_MIN {
            candidates.par_iter().map(one).collect()
        } else {
            candidates.iter().map(one).collect()
        }
    };

    if let Some(chol) = state.chol.as_ref() {
        let scores = eval(&|x: &[T]| {
            let w = bernoulli_variance(state.model.eta(x).ok()?);
            lemma_score(chol, n, w, x).ok()
        });
        return argmax(candidates, &scores, ScoreRoute::Lemma)
            .ok_or(DesignError::EmptyCandidateSet);
    }

    let n1 = T::from_count(n + 1);
    let c = T::from_count(n) / n1;
    let scores = eval(&|x: &[T]| {
        let w = bernoulli_variance(state.model.eta(x).ok()?);
        let updated = state.info.scaled_plus_outer(c, w / n1, x).ok()?;
        cholesky(&updated).ok().map(|f| f.log_det())
    });
    if let Some(choice) = argmax(candidates, &scores, ScoreRoute::Refactor) {
        return Ok(choice);
    }
    let scores = eval(&|x: &[T]| {
        let w = bernoulli_variance(state.model.eta(x).ok()?);
        Some(w * x.iter().fold(T::zero(), |a, &v| a + v * v))
    });
    argmax(candidates, &scores, ScoreRoute::WeightNorm).ok_or(DesignError::EmptyCandidateSet)
}

/// Deterministic argmax over finite scores; ties resolve to the lowest index.
fn argmax<T: Scalar>(
    candidates: &[usize],
    scores: &[Option<T>],
    route: ScoreRoute,
) -> Option<CandidateChoice<T>> {
    let mut best: Option<CandidateChoice<T>> = None;
    for (&index, score) in candidates.iter().zip(scores) {
        let Some(value) = score.filter(|v| !v.is_nan()) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some(b) => value > b.value || (value == b.value && index < b.index),
        };
        if better {
            best = Some(CandidateChoice {
                index,
                value,
                route,
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        k: usize,
    ) -> (Matrix<f64>, LogisticModel<f64>) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..k).map(|_| rng.random_range(-2.0..2.0)));
                r
            })
            .collect();
        let beta: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        (
            Matrix::from_rows(&rows).unwrap(),
            LogisticModel::new((0..k).collect(), beta, 0.5).unwrap(),
        )
    }

    fn assembled_reference(
        x: &Matrix<f64>,
        rows: &[usize],
        model: &LogisticModel<f64>,
        cand: usize,
    ) -> f64 {
        // M(ξ_{n+1}) built from scratch on the n+1 equally weighted points.
        let mut all = rows.to_vec();
        all.push(cand);
        let k = model.dim() as f64;
        let m0 = cholesky(&information_matrix(x, rows, model).unwrap())
            .unwrap()
            .log_det();
        let m1 = cholesky(&information_matrix(x, &all, model).unwrap())
            .unwrap()
            .log_det();
        ((m1 / k).exp() - (m0 / k).exp()) / (m0 / k).exp()
    }

    #[test]
    fn subject_weight_cases() {
        let m = LogisticModel::null(vec![0], 0.5).unwrap();
        assert_eq!(subject_weight(&m, &[2.0f64]).unwrap(), 0.25);
        let m = LogisticModel::new(vec![0], vec![1.0f64], 0.5).unwrap();
        assert!(subject_weight(&m, &[50.0]).unwrap() < 1e-20);
        assert!((subject_weight(&m, &[3f64.ln()]).unwrap() - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn information_matrix_closed_forms() {
        let x = Matrix::from_rows(&[vec![1.0f64]]).unwrap();
        let m = LogisticModel::null(vec![0], 0.5).unwrap();
        assert_eq!(information_matrix(&x, &[0], &m).unwrap().entries(), &[0.25]);

        let x = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![1.0, -1.0]]).unwrap();
        let m = LogisticModel::null(vec![0, 1], 0.5).unwrap();
        assert_eq!(
            information_matrix(&x, &[0, 1], &m).unwrap().entries(),
            &[0.25, 0.0, 0.0, 0.25]
        );
        assert_eq!(
            information_matrix(&x, &[], &m),
            Err(DesignError::EmptyDesign)
        );
    }

    #[test]
    fn information_matrix_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (x, model) = random_instance(&mut rng, 10, 3);
        let rows: Vec<usize> = (0..10).collect();
        let m = information_matrix(&x, &rows, &model).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let direct: f64 = rows
                    .iter()
                    .map(|&i| {
                        let r = x.row(i);
                        let eta: f64 = (0..3).map(|j| r[j] * model.beta()[j]).sum();
                        let p = 1.0 / (1.0 + (-eta).exp());
                        p * (1.0 - p) * r[a] * r[b]
                    })
                    .sum::<f64>()
                    / 10.0;
                assert!((m.get(a, b) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weight_candidate_rescales() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (x, model) = random_instance(&mut rng, 4, 2);
        let labels = vec![0, 1, 0, 1];
        let state = DesignState::new(&x, (0..4).collect(), labels, model).unwrap();
        // A saturated candidate has w = 0 in floating point only at extreme η;
        // use the lemma directly with w = 0.
        let v = lemma_score(state.chol().unwrap(), 4, 0.0, &[1.0, 0.3]).unwrap();
        assert!((v - (-0.2)).abs() < 1e-12);
        // n/(n+1) rescale also shows up through the public path with a huge η.
        let far = LogisticModel::new(vec![0, 1], vec![0.0, 1.0], 0.5).unwrap();
        let x2 = Matrix::from_rows(&[
            vec![1.0, 0.5],
            vec![1.0, -0.7],
            vec![1.0, 0.1],
            vec![1.0, 1.3],
        ])
        .unwrap();
        let st = DesignState::new(&x2, (0..4).collect(), vec![0, 1, 1, 0], far).unwrap();
        let v: f64 = re_d_efficiency(&st, &[1.0, 2000.0]).unwrap();
        assert!((v + 0.2).abs() < 1e-12);
    }

    #[test]
    fn candidate_reproducing_design_scores_zero() {
        // One-dimensional design: adding a point with the same w·x² keeps M fixed.
        let x = Matrix::from_rows(&[vec![1.0f64], vec![1.0]]).unwrap();
        let model = LogisticModel::null(vec![0], 0.5).unwrap();
        let st = DesignState::new(&x, vec![0], vec![1], model).unwrap();
        assert!(re_d_efficiency(&st, &[1.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn lemma_matches_reassembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (x, model) = random_instance(&mut rng, 60, 3);
        let labeled: Vec<usize> = (0..20).collect();
        let st = DesignState::new(&x, labeled.clone(), vec![0; 20], model.clone()).unwrap();
        for cand in 20..60 {
            let v = re_d_efficiency(&st, x.row(cand)).unwrap();
            let oracle = assembled_reference(&x, &labeled, &model, cand);
            assert!(
                (v - oracle).abs() <= 1e-8 * oracle.abs().max(1e-3),
                "{v} vs {oracle}"
            );
        }
    }

    #[test]
    fn singular_base_design_is_signalled() {
        let x = Matrix::from_rows(&[vec![1.0f64, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let model = LogisticModel::null(vec![0, 1], 0.5).unwrap();
        let st = DesignState::new(&x, vec![0, 1], vec![0, 1], model).unwrap();
        assert!(st.is_singular());
        assert_eq!(
            re_d_efficiency(&st, &[1.0, 0.0]),
            Err(DesignError::SingularBaseDesign)
        );
        // Refactor path: candidate 2 restores full rank, candidate 0 does not.
        let choice = score_candidates(&st, &[0, 2], &x).unwrap();
        assert_eq!(choice.index, 2);
        assert_eq!(choice.route, ScoreRoute::Refactor);
    }

    #[test]
    fn weight_norm_fallback_when_updates_stay_singular() {
        let x = Matrix::from_rows(&[
            vec![1.0f64, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 3.0, 0.0],
        ])
        .unwrap();
        let model = LogisticModel::null(vec![0, 1, 2], 0.5).unwrap();
        let st = DesignState::new(&x, vec![0, 1], vec![0, 1], model).unwrap();
        let choice = score_candidates(&st, &[2, 3, 4], &x).unwrap();
        assert_eq!(choice.route, ScoreRoute::WeightNorm);
        assert_eq!(choice.index, 4);
    }

    #[test]
    fn singleton_and_empty_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (x, model) = random_instance(&mut rng, 30, 2);
        let st = DesignState::new(&x, (0..20).collect(), vec![1; 20], model).unwrap();
        assert_eq!(score_candidates(&st, &[27], &x).unwrap().index, 27);
        assert_eq!(
            score_candidates(&st, &[], &x),
            Err(DesignError::EmptyCandidateSet)
        );
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let x = Matrix::from_rows(&vec![vec![1.0f64]; 6]).unwrap();
        let model = LogisticModel::null(vec![0], 0.5).unwrap();
        let st = DesignState::new(&x, vec![0, 1], vec![0, 1], model).unwrap();
        assert_eq!(score_candidates(&st, &[5, 3, 4], &x).unwrap().index, 3);
    }

    #[test]
    fn permutation_of_labeled_rows_leaves_scores_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (x, model) = random_instance(&mut rng, 40, 3);
        let a: Vec<usize> = (0..25).collect();
        let mut b = a.clone();
        b.reverse();
        b.swap(3, 17);
        let sa = DesignState::new(&x, a, vec![0; 25], model.clone()).unwrap();
        let sb = DesignState::new(&x, b, vec![0; 25], model).unwrap();
        for c in 25..40 {
            let r = x.row(c).to_vec();
            let (u, v) = (
                re_d_efficiency(&sa, &r).unwrap(),
                re_d_efficiency(&sb, &r).unwrap(),
            );
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn state_push_and_normalized_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let (x, model) = random_instance(&mut rng, 12, 2);
        let st = DesignState::new(&x, (0..10).collect(), vec![0; 10], model.clone()).unwrap();
        let nd = st.normalized_det().unwrap();
        assert!((nd - (st.log_det().unwrap() / 2.0).exp()).abs() < 1e-15);
        let st = st.push(&x, 11, 1, model).unwrap();
        assert_eq!(st.n(), 11);
        assert_eq!(st.labels().last(), Some(&1));
    }
}
