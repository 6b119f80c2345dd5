use super::dense_lp::{solve_dense_lp, DenseLpOutcome};
use super::{MilpBackend, MilpError, MilpModel, MilpSolution, Sense, SolveOptions, SolveStatus, VarKind};

pub const DEFAULT_MAX_BINARIES: usize = 25;

/// Enumerates every binary assignment; the continuous remainder of each
/// assignment is solved as a dense LP. Exact, and only usable for tiny models.
#[derive(Debug, Clone)]
pub struct ExhaustiveBackend {
    pub max_binaries: usize,
}

impl Default for ExhaustiveBackend {
    fn default() -> Self {
        Self { max_binaries: DEFAULT_MAX_BINARIES }
    }
}

impl MilpBackend for ExhaustiveBackend {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn solve(&self, model: &MilpModel, _opts: &SolveOptions) -> Result<MilpSolution, MilpError> {
        enumerate(model, self.max_binaries)
    }
}

pub fn solve_exhaustive(model: &MilpModel) -> Result<MilpSolution, MilpError> {
    enumerate(model, DEFAULT_MAX_BINARIES)
}

fn enumerate(model: &MilpModel, max_binaries: usize) -> Result<MilpSolution, MilpError> {
    model.validate()?;
    let vars = model.variables();
    let bins: Vec<usize> =
        (0..vars.len()).filter(|&i| vars[i].kind == VarKind::Binary).collect();
    let conts: Vec<usize> =
        (0..vars.len()).filter(|&i| vars[i].kind == VarKind::Continuous).collect();
    if bins.len() > max_binaries {
        return Err(MilpError::TooManyBinaries { n: bins.len(), max: max_binaries });
    }
    let mut bin_pos = vec![usize::MAX; vars.len()];
    let mut cont_pos = vec![usize::MAX; vars.len()];
    for (k, &i) in bins.iter().enumerate() {
        bin_pos[i] = k;
    }
    for (k, &i) in conts.iter().enumerate() {
        cont_pos[i] = k;
    }

    struct Row {
        bin: Vec<(usize, f64)>,
        cont: Vec<f64>,
        has_cont: bool,
        sense: Sense,
        rhs: f64,
    }
    let rows: Vec<Row> = model
        .constraints()
        .iter()
        .map(|c| {
            let mut bin = Vec::new();
            let mut cont = vec![0.0; conts.len()];
            let mut has_cont = false;
            for &(v, a) in &c.terms {
                let i = v.index();
                if vars[i].kind == VarKind::Binary {
                    bin.push((bin_pos[i], a));
                } else {
                    cont[cont_pos[i]] += a;
                    has_cont = true;
                }
            }
            Row { bin, cont, has_cont, sense: c.sense, rhs: c.rhs }
        })
        .collect();
    let mut cost_bin = vec![0.0; bins.len()];
    let mut cost_cont = vec![0.0; conts.len()];
    for &(v, a) in model.objective() {
        let i = v.index();
        if vars[i].kind == VarKind::Binary {
            cost_bin[bin_pos[i]] += a;
        } else {
            cost_cont[cont_pos[i]] += a;
        }
    }
    let lower: Vec<f64> = conts.iter().map(|&i| vars[i].lower).collect();
    let upper: Vec<f64> = conts.iter().map(|&i| vars[i].upper).collect();
    let tol = 1e-9;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut fixed = vec![0.0; bins.len()];
    for mask in 0u64..(1u64 << bins.len()) {
        let mut ok = true;
        for (k, &i) in bins.iter().enumerate() {
            let b = (mask >> k & 1) as f64;
            if b < vars[i].lower - tol || b > vars[i].upper + tol {
                ok = false;
                break;
            }
            fixed[k] = b;
        }
        if !ok {
            continue;
        }
        let mut lp_rows = Vec::new();
        for r in &rows {
            let act: f64 = r.bin.iter().map(|&(k, a)| a * fixed[k]).sum();
            let rhs = r.rhs - act;
            if r.has_cont {
                lp_rows.push((r.cont.clone(), r.sense, rhs));
            } else {
                let feasible = match r.sense {
                    Sense::Le => rhs >= -tol,
                    Sense::Ge => rhs <= tol,
                    Sense::Eq => rhs.abs() <= tol,
                };
                if !feasible {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let bin_obj: f64 = cost_bin.iter().zip(&fixed).map(|(c, b)| c * b).sum();
        let (cont_x, cont_obj) = if conts.is_empty() {
            (Vec::new(), 0.0)
        } else {
            match solve_dense_lp(&cost_cont, &lp_rows, &lower, &upper) {
                DenseLpOutcome::Optimal { x, objective } => (x, objective),
                DenseLpOutcome::Infeasible => continue,
                DenseLpOutcome::Unbounded => return Err(MilpError::Unbounded),
            }
        };
        let total = model.objective_constant() + bin_obj + cont_obj;
        if best.as_ref().is_none_or(|(b, _)| total < *b - 1e-12) {
            let mut x = vec![0.0; vars.len()];
            for (k, &i) in bins.iter().enumerate() {
                x[i] = fixed[k];
            }
            for (k, &i) in conts.iter().enumerate() {
                x[i] = cont_x[k];
            }
            best = Some((total, x));
        }
    }
    Ok(match best {
        Some((objective_value, values)) => {
            MilpSolution { status: SolveStatus::Optimal, values, objective_value, gap: 0.0 }
        }
        None => MilpSolution::infeasible(),
    })
}
