use std::ffi::CString;

use highs::{HighsModelStatus, RowProblem, Sense as HSense};
use log::debug;

use super::{MilpBackend, MilpError, MilpModel, MilpSolution, Sense, SolveOptions, SolveStatus, VarKind};

/// HiGHS through the `highs` bindings.
#[derive(Debug, Clone)]
pub struct HighsBackend {
    /// Value passed to the HiGHS `threads` option; 0 leaves the default.
    pub threads: i32,
}

impl Default for HighsBackend {
    fn default() -> Self {
        Self { threads: 0 }
    }
}

fn build(model: &MilpModel) -> (RowProblem, bool) {
    let mut pb = RowProblem::default();
    let mut cost = vec![0.0; model.num_vars()];
    for &(v, c) in model.objective() {
        cost[v.index()] += c;
    }
    let mut integral = false;
    let cols: Vec<highs::Col> = model
        .variables()
        .iter()
        .zip(&cost)
        .map(|(v, &c)| {
            let is_int = v.kind == VarKind::Binary;
            integral |= is_int;
            pb.add_column_with_integrality(c, v.lower..=v.upper, is_int)
        })
        .collect();
    for c in model.constraints() {
        let terms = c.terms.iter().map(|&(v, a)| (cols[v.index()], a));
        match c.sense {
            Sense::Le => pb.add_row(..=c.rhs, terms),
            Sense::Ge => pb.add_row(c.rhs.., terms),
            Sense::Eq => pb.add_row(c.rhs..=c.rhs, terms),
        }
    }
    (pb, integral)
}

fn int_info(ptr: *const std::ffi::c_void, name: &str) -> Option<i32> {
    let key = CString::new(name).ok()?;
    let mut value: highs_sys::HighsInt = 0;
    // SAFETY: `ptr` comes from a live SolvedModel and `key` is NUL-terminated.
    let status = unsafe { highs_sys::Highs_getIntInfoValue(ptr as *mut _, key.as_ptr(), &mut value) };
    (status == highs_sys::STATUS_OK).then_some(value as i32)
}

impl HighsBackend {
    fn run(
        &self,
        model: &MilpModel,
        opts: &SolveOptions,
        presolve: bool,
    ) -> Result<MilpSolution, MilpError> {
        let (pb, integral) = build(model);
        let mut m = pb.try_optimise(HSense::Minimise).map_err(|e| MilpError::Backend(format!("{e:?}")))?;
        m.make_quiet();
        if opts.time_limit_s.is_finite() {
            m.set_option("time_limit", opts.time_limit_s.max(0.01));
        }
        if integral {
            m.set_option("mip_rel_gap", opts.rel_gap.max(0.0));
            m.set_option("mip_abs_gap", opts.abs_gap.max(0.0));
        }
        if !presolve {
            m.set_option("presolve", "off");
        }
        if self.threads > 0 {
            m.set_option("threads", self.threads);
        }
        if let Some(start) = &opts.warm_start {
            if start.len() == model.num_vars() {
                if let Err(e) = m.try_set_solution(Some(start), None, None, None) {
                    debug!("warm start rejected by HiGHS: {e:?}");
                }
            }
        }
        let solved = m.try_solve().map_err(|e| MilpError::Backend(format!("{e:?}")))?;
        let status = solved.status();
        let has_primal = int_info(solved.as_ptr(), "primal_solution_status") == Some(2);
        let values = || solved.get_solution().columns().to_vec();
        let finish = |status: SolveStatus, values: Vec<f64>| {
            let objective_value = model.objective_value(&values);
            let gap = if integral { solved.mip_gap().max(0.0) } else { 0.0 };
            MilpSolution { status, values, objective_value, gap }
        };
        match status {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => {
                Ok(finish(SolveStatus::Optimal, values()))
            }
            HighsModelStatus::Infeasible => Ok(MilpSolution::infeasible()),
            HighsModelStatus::Unbounded => Err(MilpError::Unbounded),
            HighsModelStatus::UnboundedOrInfeasible if presolve => self.run(model, opts, false),
            HighsModelStatus::UnboundedOrInfeasible => Ok(MilpSolution::infeasible()),
            HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
                if has_primal {
                    Ok(finish(SolveStatus::TimeLimit, values()))
                } else {
                    Err(MilpError::NoSolution)
                }
            }
            HighsModelStatus::ObjectiveBound | HighsModelStatus::ObjectiveTarget if has_primal => {
                Ok(finish(SolveStatus::Feasible, values()))
            }
            other => Err(MilpError::Backend(format!("HiGHS returned {other:?}"))),
        }
    }
}

impl MilpBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &MilpModel, opts: &SolveOptions) -> Result<MilpSolution, MilpError> {
        model.validate()?;
        if model.num_vars() == 0 {
            let ok = model.constraints().iter().all(|c| c.violation(&[]) <= super::FEAS_TOL);
            return Ok(if ok {
                MilpSolution {
                    status: SolveStatus::Optimal,
                    values: Vec::new(),
                    objective_value: model.objective_constant(),
                    gap: 0.0,
                }
            } else {
                MilpSolution::infeasible()
            });
        }
        self.run(model, opts, true)
    }
}
