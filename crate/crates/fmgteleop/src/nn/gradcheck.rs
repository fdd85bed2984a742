//! Central finite-difference verification of reverse-mode gradients.

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use super::NnError;

/// Finite-difference step, always applied at `f64`.
pub const FD_STEP: f64 = 1e-5;

/// Floor for the relative-error denominator: central differences of an O(1)
/// loss carry ~1e-10 of roundoff noise, so near-zero gradients would
/// otherwise dominate the report.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub elements_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: max rel error {:.3e} at {}[{}] over {} elements (tolerance {:.1e})",
            if self.passed() { "pass" } else { "FAIL" },
            self.max_rel_error,
            self.worst_param,
            self.worst_index,
            self.elements_checked,
            self.tolerance
        )
    }
}

/// Compares reverse-mode gradients of a scalar-valued computation against
/// central finite differences for every element of every named parameter.
///
/// `build` receives one leaf node per parameter, in order, and must return
/// the scalar loss node. It is re-invoked for each perturbed evaluation, so
/// it must be a pure function of the parameter values.
pub fn grad_check<F>(
    params: &[(String, Tensor<f64>)],
    tolerance: f64,
    build: F,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId, NnError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<(Graph<f64>, NodeId), NnError> {
        let mut g = Graph::new();
        // Leaves are inserted first, so parameter i is node i.
        let ids: Vec<NodeId> = values.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &ids)?;
        if g.value(loss).numel() != 1 {
            return Err(NnError::Shape("grad_check loss must be scalar".into()));
        }
        Ok((g, loss))
    };

    let base: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let (graph, loss) = eval(&base)?;
    let grads = graph.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        elements_checked: 0,
        tolerance,
    };

    for (pi, (name, tensor)) in params.iter().enumerate() {
        let ad = grads[pi]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(tensor.shape()));
        for ei in 0..tensor.numel() {
            let mut plus = base.clone();
            plus[pi].data_mut()[ei] += FD_STEP;
            let (gp, lp) = eval(&plus)?;
            let f_plus = gp.value(lp).item();

            let mut minus = base.clone();
            minus[pi].data_mut()[ei] -= FD_STEP;
            let (gm, lm) = eval(&minus)?;
            let f_minus = gm.value(lm).item();

            let fd = (f_plus - f_minus) / (2.0 * FD_STEP);
            let a = ad.data()[ei];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(REL_FLOOR);
            report.elements_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = ei;
            }
        }
    }
    Ok(report)
}
