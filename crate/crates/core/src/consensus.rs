//! Right-hand sides of the conventional and state-decomposed dynamic average
//! consensus protocols.
//!
//! Every per-agent quantity is an `n × m` row-major block: agent `i` owns
//! `[i*m, (i+1)*m)`. The functions here are pure; the integrator owns time.

use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::signals::{Reference, SplitPair};

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub m: usize,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedState {
    pub m: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ConsensusState {
    pub fn n(&self) -> usize {
        self.x.len() / self.m
    }
}

impl DecomposedState {
    pub fn n(&self) -> usize {
        self.alpha.len() / self.m
    }
}

fn check_block(what: &str, len: usize, n: usize, m: usize) -> Result<()> {
    if len != n * m {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {len} entries, expected {n}×{m}"
        )));
    }
    Ok(())
}

/// Consensus coupling of agent `i`: `κ Σ_j a_ij (x_j - x_i)`, written to `out`.
#[inline]
pub fn coupling_into(
    x: &[f64],
    graph: &NetworkGraph,
    kappa: f64,
    m: usize,
    i: usize,
    out: &mut [f64],
) {
    out.fill(0.0);
    for j in graph.neighbors(i) {
        for d in 0..m {
            out[d] += x[j * m + d] - x[i * m + d];
        }
    }
    for o in out.iter_mut() {
        *o *= kappa;
    }
}

/// `ẋ_i = f_i + κ Σ_j a_ij (x_j - x_i)` for every agent, into `out`.
pub fn conventional_rhs_into(
    x: &[f64],
    f: &[f64],
    graph: &NetworkGraph,
    kappa: f64,
    m: usize,
    out: &mut [f64],
) {
    let mut c = vec![0.0; m];
    for i in 0..graph.n() {
        coupling_into(x, graph, kappa, m, i, &mut c);
        for d in 0..m {
            out[i * m + d] = f[i * m + d] + c[d];
        }
    }
}

pub fn conventional_rhs(
    state: &ConsensusState,
    f: &[f64],
    graph: &NetworkGraph,
    kappa: f64,
) -> Result<Vec<f64>> {
    let (n, m) = (graph.n(), state.m);
    check_block("state", state.x.len(), n, m)?;
    check_block("reference rates", f.len(), n, m)?;
    let mut out = vec![0.0; n * m];
    conventional_rhs_into(&state.x, f, graph, kappa, m, &mut out);
    Ok(out)
}

/// Decomposed dynamics:
///
/// ```text
/// ẋ^α_i = f^α_i + κ Σ_j a_ij (x^α_j - x^α_i) + κ (x^β_i - x^α_i)
/// ẋ^β_i = f^β_i + κ (x^α_i - x^β_i)
/// ```
#[allow(clippy::too_many_arguments)]
pub fn decomposed_rhs_into(
    alpha: &[f64],
    beta: &[f64],
    f_alpha: &[f64],
    f_beta: &[f64],
    graph: &NetworkGraph,
    kappa: f64,
    m: usize,
    out_alpha: &mut [f64],
    out_beta: &mut [f64],
) {
    let mut c = vec![0.0; m];
    for i in 0..graph.n() {
        coupling_into(alpha, graph, kappa, m, i, &mut c);
        for (d, cd) in c.iter().enumerate() {
            let k = i * m + d;
            out_alpha[k] = f_alpha[k] + cd + kappa * (beta[k] - alpha[k]);
            out_beta[k] = f_beta[k] + kappa * (alpha[k] - beta[k]);
        }
    }
}

/// Returns `(ẋ^α, ẋ^β)`.
pub fn decomposed_rhs(
    state: &DecomposedState,
    f_alpha: &[f64],
    f_beta: &[f64],
    graph: &NetworkGraph,
    kappa: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (graph.n(), state.m);
    check_block("alpha state", state.alpha.len(), n, m)?;
    check_block("beta state", state.beta.len(), n, m)?;
    check_block("alpha rates", f_alpha.len(), n, m)?;
    check_block("beta rates", f_beta.len(), n, m)?;
    let mut da = vec![0.0; n * m];
    let mut db = vec![0.0; n * m];
    decomposed_rhs_into(
        &state.alpha,
        &state.beta,
        f_alpha,
        f_beta,
        graph,
        kappa,
        m,
        &mut da,
        &mut db,
    );
    Ok((da, db))
}

/// `x_i(0) = r_i(0)`.
pub fn init_conventional(references: &[Reference]) -> Result<ConsensusState> {
    let m = common_dim(references.iter().map(Reference::dim))?;
    let x = references
        .iter()
        .flat_map(|r| r.initial.iter().copied())
        .collect();
    Ok(ConsensusState { m, x })
}

/// `x^α_i(0) = r^α_i(0)`, `x^β_i(0) = r^β_i(0)`.
pub fn init_decomposed(splits: &[SplitPair]) -> Result<DecomposedState> {
    let m = common_dim(splits.iter().map(|s| s.alpha0.len()))?;
    if splits.iter().any(|s| s.beta0.len() != m) {
        return Err(Error::DimensionMismatch(
            "split initial values differ in length".into(),
        ));
    }
    Ok(DecomposedState {
        m,
        alpha: splits
            .iter()
            .flat_map(|s| s.alpha0.iter().copied())
            .collect(),
        beta: splits
            .iter()
            .flat_map(|s| s.beta0.iter().copied())
            .collect(),
    })
}

fn common_dim(mut dims: impl Iterator<Item = usize>) -> Result<usize> {
    let first = dims
        .next()
        .ok_or_else(|| Error::Config("scenario has no agents".into()))?;
    if dims.any(|d| d != first) {
        return Err(Error::DimensionMismatch(
            "agents have references of different dimension".into(),
        ));
    }
    if first == 0 {
        return Err(Error::DimensionMismatch(
            "reference dimension must be positive".into(),
        ));
    }
    Ok(first)
}

/// Component-wise mean over agents of an `n × m` block.
pub fn agent_mean(block: &[f64], m: usize) -> Vec<f64> {
    let n = block.len() / m;
    let mut mean = vec![0.0; m];
    for row in block.chunks(m) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    mean
}

/// `‖x_i - (1/n) Σ_j r_j‖` for every agent.
pub fn tracking_errors(states: &[f64], r: &[f64], m: usize) -> Vec<f64> {
    let avg = agent_mean(r, m);
    states
        .chunks(m)
        .map(|x| {
            x.iter()
                .zip(&avg)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Norm of the deviation of an `n × m` block from its own agent mean.
pub fn disagreement_norm(block: &[f64], m: usize) -> f64 {
    let avg = agent_mean(block, m);
    block
        .chunks(m)
        .flat_map(|x| x.iter().zip(&avg).map(|(a, b)| (a - b).powi(2)))
        .sum::<f64>()
        .sqrt()
}

/// Least-squares slope of `-ln(values)` against `times`: the exponential
/// decay rate of a sequence. Non-positive samples are skipped.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::decomposed_laplacian;
    use crate::rng::SplitMix64;
    use crate::signals::{moving_targets, split, SplitOptions};
    use approx::assert_abs_diff_eq;

    #[test]
    fn fixed_point_when_agreed() {
        let g = NetworkGraph::cycle(4).unwrap();
        let s = ConsensusState {
            m: 2,
            x: [0.3, -1.0].repeat(4),
        };
        let d = conventional_rhs(&s, &[0.0; 8], &g, 2.0).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_agent_step() {
        let g = NetworkGraph::path(2).unwrap();
        let s = ConsensusState {
            m: 1,
            x: vec![1.0, 0.0],
        };
        assert_eq!(
            conventional_rhs(&s, &[0.0, 0.0], &g, 1.0).unwrap(),
            vec![-1.0, 1.0]
        );
    }

    #[test]
    fn conventional_column_sums_follow_rates() {
        let g = NetworkGraph::cycle(5).unwrap();
        let mut rng = SplitMix64::new(3);
        let x: Vec<f64> = (0..15).map(|_| rng.uniform(-5.0, 5.0)).collect();
        let f: Vec<f64> = (0..15).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let d = conventional_rhs(&ConsensusState { m: 3, x }, &f, &g, 1.7).unwrap();
        for c in 0..3 {
            let sd: f64 = (0..5).map(|i| d[i * 3 + c]).sum();
            let sf: f64 = (0..5).map(|i| f[i * 3 + c]).sum();
            assert_abs_diff_eq!(sd, sf, epsilon = 1e-12);
        }
    }

    #[test]
    fn conventional_matches_stacked_form() {
        let g = NetworkGraph::path(4).unwrap();
        let l = g.laplacian();
        let mut rng = SplitMix64::new(11);
        let x: Vec<f64> = (0..8).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let f: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let kappa = 2.5;
        let d = conventional_rhs(&ConsensusState { m: 2, x: x.clone() }, &f, &g, kappa).unwrap();
        let lx = l.kron_apply(&x, 2);
        for k in 0..8 {
            assert_abs_diff_eq!(d[k], f[k] - kappa * lx[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn decomposed_fixed_point() {
        let g = NetworkGraph::cycle(4).unwrap();
        let s = DecomposedState {
            m: 2,
            alpha: [1.0, 2.0].repeat(4),
            beta: [1.0, 2.0].repeat(4),
        };
        let (da, db) = decomposed_rhs(&s, &[0.0; 8], &[0.0; 8], &g, 3.0).unwrap();
        assert!(da.iter().chain(&db).all(|v| *v == 0.0));
    }

    #[test]
    fn decomposed_matches_block_laplacian() {
        let mut rng = SplitMix64::new(5);
        for n in 2..7 {
            let g = NetworkGraph::random_connected(n, 0.3, &mut rng).unwrap();
            let lab = decomposed_laplacian(&g.laplacian());
            let m = 2;
            let gen = |rng: &mut SplitMix64| -> Vec<f64> {
                (0..n * m).map(|_| rng.uniform(-4.0, 4.0)).collect()
            };
            let (alpha, beta, fa, fb) =
                (gen(&mut rng), gen(&mut rng), gen(&mut rng), gen(&mut rng));
            let kappa = rng.uniform(0.5, 5.0);
            let state = DecomposedState {
                m,
                alpha: alpha.clone(),
                beta: beta.clone(),
            };
            let (da, db) = decomposed_rhs(&state, &fa, &fb, &g, kappa).unwrap();

            let stacked: Vec<f64> = alpha.iter().chain(&beta).copied().collect();
            let lx = lab.kron_apply(&stacked, m);
            for k in 0..n * m {
                assert_abs_diff_eq!(da[k], fa[k] - kappa * lx[k], epsilon = 1e-12);
                assert_abs_diff_eq!(db[k], fb[k] - kappa * lx[n * m + k], epsilon = 1e-12);
            }
            for c in 0..m {
                let s: f64 = (0..n).map(|i| da[i * m + c] + db[i * m + c]).sum();
                let sf: f64 = (0..n).map(|i| fa[i * m + c] + fb[i * m + c]).sum();
                assert_abs_diff_eq!(s, sf, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn dimension_mismatch_reported() {
        let g = NetworkGraph::cycle(4).unwrap();
        let s = ConsensusState {
            m: 2,
            x: vec![0.0; 6],
        };
        assert!(matches!(
            conventional_rhs(&s, &[0.0; 8], &g, 1.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn initialisation() {
        let targets = moving_targets();
        let x0 = init_conventional(&targets).unwrap();
        assert_eq!(x0.x, vec![1.8, 1.2, -1.2, 1.8, -1.8, -1.2, 1.2, -1.8]);
        let zero = init_conventional(&[Reference::constant(&[0.0, 0.0])]).unwrap();
        assert_eq!(zero.x, vec![0.0, 0.0]);

        let splits: Vec<_> = targets
            .iter()
            .enumerate()
            .map(|(i, r)| split(r, i as u64, &SplitOptions::default()).unwrap())
            .collect();
        let d = init_decomposed(&splits).unwrap();
        for (i, r) in targets.iter().enumerate() {
            for c in 0..2 {
                assert_abs_diff_eq!(
                    d.alpha[i * 2 + c] + d.beta[i * 2 + c],
                    2.0 * r.initial[c],
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn tracking_error_cases() {
        let r = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            tracking_errors(&[2.0, 3.0, 2.0, 3.0], &r, 2),
            vec![0.0, 0.0]
        );
        let single = tracking_errors(&[0.0, 0.0], &[3.0, 4.0], 2);
        assert_abs_diff_eq!(single[0], 5.0, epsilon = 1e-15);

        let p0: Vec<f64> = moving_targets()
            .iter()
            .flat_map(|r| r.initial.clone())
            .collect();
        let e = tracking_errors(&p0, &p0, 2);
        let expected = (1.8f64 * 1.8 + 1.2 * 1.2).sqrt();
        for v in e {
            assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-1.3 * t).exp()).collect();
        assert_abs_diff_eq!(fit_decay_rate(&t, &v).unwrap(), 1.3, epsilon = 1e-12);
    }
}
