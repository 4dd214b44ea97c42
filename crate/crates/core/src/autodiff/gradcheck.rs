use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub tol: f64,
    /// Input index and flat entry where the worst error occurred.
    pub worst: (usize, usize),
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if !value.is_scalar() {
        return Err(Error::Contract(format!(
            "grad_check needs a scalar function, got shape {:?}",
            value.shape()
        )));
    }
    Ok(value.item())
}

/// Max over every input entry of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`, where the
/// numeric derivative is the central difference with the given step.
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64, tol: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Contract("finite-difference step must be positive".into()));
    }
    let base = eval(&f, inputs)?;
    if eval(&f, inputs)?.to_bits() != base.to_bits() {
        return Err(Error::Contract("function is not deterministic".into()));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;

    let mut report = GradCheck {
        max_rel_error: 0.0,
        tol,
        worst: (0, 0),
    };
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*var)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for e in 0..inputs[k].numel() {
            let orig = inputs[k].data()[e];
            probe[k].data_mut()[e] = orig + step;
            let plus = eval(&f, &probe)?;
            probe[k].data_mut()[e] = orig - step;
            let minus = eval(&f, &probe)?;
            probe[k].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[e];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (k, e);
            }
        }
    }
    Ok(report)
}
