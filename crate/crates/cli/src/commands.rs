use shardcalc::failure::{
    delta_exact_binomial, delta_exact_hypergeometric, theorem1_bounds, union_bound_fixed_sizes,
    union_bound_hypergeometric, union_bound_random_sizes, TiltRule,
};
use shardcalc::partitions::round_count;
use shardcalc::saddle::{delta_asymptotic, solve_saddle};
use shardcalc::simulate::{estimate_delta, DeltaEstimate, SimulationPlan};
use shardcalc::sizing::{max_committees, max_committees_scan, min_committee_size, SizingModel};
use shardcalc::{AdversaryModel, CommitteeLayout, DeltaResult, FailureQuery, Method, Rate};

use crate::args::{
    AsymptoticArgs, BoundsArgs, Command, DeltaArgs, Model, OutputArgs, QueryArgs, SimulateArgs,
    SizeArgs,
};
use crate::table::{Cell, Table};
use crate::{sweep, CliError, Rendered};

pub fn dispatch(command: Command) -> Result<Rendered, CliError> {
    match command {
        Command::Delta(a) => render(cmd_delta(&a)?, &a.out),
        Command::Bounds(a) => render(cmd_bounds(&a)?, &a.out),
        Command::Asymptotic(a) => render(cmd_asymptotic(&a)?, &a.out),
        Command::Size(a) => render(cmd_size(&a)?, &a.out),
        Command::Simulate(a) => render(cmd_simulate(&a)?, &a.out),
        Command::Sweep(a) => sweep::cmd_sweep(&a),
    }
}

fn render(table: Table, out: &OutputArgs) -> Result<Rendered, CliError> {
    Ok(Rendered {
        text: table.render(out.format)?,
        path: out.output.clone(),
    })
}

/// Resolved point-query inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub layout: CommitteeLayout,
    pub frac: Option<Rate>,
    pub count: Option<u64>,
    pub threshold: Rate,
}

impl Inputs {
    pub fn from_args(q: &QueryArgs) -> Result<Self, CliError> {
        let layout = match (&q.layout, q.nodes, q.committees) {
            (Some(sizes), None, None) => CommitteeLayout::new(sizes.clone())?,
            (None, Some(n), Some(k)) => CommitteeLayout::from_split(n, k)?,
            _ => {
                return Err(CliError::Usage(
                    "give either --layout or --nodes with --committees".into(),
                ))
            }
        };
        if q.adversary_frac.is_none() && q.adversary_count.is_none() {
            return Err(CliError::Usage(
                "give --adversary-frac or --adversary-count".into(),
            ));
        }
        Ok(Inputs {
            layout,
            frac: q.adversary_frac,
            count: q.adversary_count,
            threshold: q.threshold,
        })
    }

    pub fn average_rate(&self) -> Result<Rate, CliError> {
        match (self.frac, self.count) {
            (Some(p), _) => Ok(p),
            (None, Some(m)) => Ok(Rate::ratio(m, self.layout.total())?),
            (None, None) => unreachable!("checked on construction"),
        }
    }

    /// `M`, given directly or as `round(N P)`.
    pub fn exact_count(&self) -> u64 {
        match (self.count, self.frac) {
            (Some(m), _) => m,
            (None, Some(p)) => round_count(self.layout.total(), p),
            (None, None) => unreachable!("checked on construction"),
        }
    }

    pub fn average_query(&self) -> Result<FailureQuery, CliError> {
        Ok(FailureQuery::new(
            self.layout.clone(),
            AdversaryModel::uniform(self.average_rate()?),
            self.threshold,
        )?)
    }

    pub fn exact_query(&self) -> Result<FailureQuery, CliError> {
        Ok(FailureQuery::new(
            self.layout.clone(),
            AdversaryModel::Exact {
                count: self.exact_count(),
            },
            self.threshold,
        )?)
    }

    pub fn query(&self, model: Model) -> Result<FailureQuery, CliError> {
        match model {
            Model::Average => self.average_query(),
            Model::Exact => self.exact_query(),
        }
    }

    /// The model implied by the flags when none is named.
    pub fn default_model(&self) -> Model {
        if self.frac.is_some() {
            Model::Average
        } else {
            Model::Exact
        }
    }
}

/// Every analytic method on one set of inputs.
pub fn evaluate(inputs: &Inputs, method: Method) -> Result<DeltaResult, CliError> {
    let result = match method {
        Method::ExactBinomial => delta_exact_binomial(&inputs.average_query()?)?,
        Method::ExactHypergeometric => delta_exact_hypergeometric(&inputs.exact_query()?)?,
        Method::Theorem1Lower => theorem1_bounds(&inputs.average_query()?)?.lower,
        Method::Theorem1UpperAsh => theorem1_bounds(&inputs.average_query()?)?.upper_ash,
        Method::Theorem1UpperFerrante => theorem1_bounds(&inputs.average_query()?)?.upper_ferrante,
        Method::UnionFixed => union_bound_fixed_sizes(&inputs.average_query()?)?,
        Method::UnionRandom | Method::UnionRandomSimple => {
            // Committee probabilities proportional to the given sizes.
            let layout = &inputs.layout;
            let probs = layout
                .sizes()
                .iter()
                .map(|&s| Rate::ratio(s, layout.total()))
                .collect::<Result<Vec<_>, _>>()?;
            let rates = vec![inputs.average_rate()?; probs.len()];
            let (phi, simple) = union_bound_random_sizes(
                layout.total(),
                &probs,
                &rates,
                inputs.threshold,
                &TiltRule::Sizes(layout.sizes().to_vec()),
            )?;
            if method == Method::UnionRandom {
                phi
            } else {
                simple
            }
        }
        Method::UnionHyperExact => union_bound_hypergeometric(&inputs.exact_query()?)?.exact_tail_sum,
        Method::UnionHyperHoeffding => union_bound_hypergeometric(&inputs.exact_query()?)?.hoeffding,
        Method::Asymptotic => {
            delta_asymptotic(&inputs.layout, inputs.exact_count(), inputs.threshold)?
        }
        Method::MonteCarlo => {
            return Err(CliError::Usage(
                "monte-carlo runs through `simulate` or `sweep`".into(),
            ))
        }
    };
    Ok(result)
}

/// Diagnostic flags of a result, `;`-separated.
pub fn flags(result: &DeltaResult) -> String {
    let mut out = Vec::new();
    if result.diagnostics.clamped {
        out.push("clamped".to_string());
    }
    if !result.diagnostics.precondition_satisfied {
        out.push("precondition-violated".to_string());
    }
    out.join(";")
}

const DELTA_COLUMNS: [&str; 6] = [
    "method",
    "delta",
    "log_survival",
    "clamped",
    "precondition_satisfied",
    "notes",
];

fn delta_row(r: &DeltaResult) -> Vec<Cell> {
    vec![
        r.method.tag().into(),
        r.delta().into(),
        r.log_survival.into(),
        r.diagnostics.clamped.into(),
        r.diagnostics.precondition_satisfied.into(),
        r.diagnostics.notes.join("; ").into(),
    ]
}

pub fn cmd_delta(args: &DeltaArgs) -> Result<Table, CliError> {
    let inputs = Inputs::from_args(&args.query)?;
    let methods = if args.method.is_empty() {
        vec![match inputs.default_model() {
            Model::Average => Method::ExactBinomial,
            Model::Exact => Method::ExactHypergeometric,
        }]
    } else {
        args.method.clone()
    };
    let mut table = Table::new(DELTA_COLUMNS);
    for m in methods {
        table.push(delta_row(&evaluate(&inputs, m)?));
    }
    Ok(table)
}

pub const BOUND_METHODS: [Method; 8] = [
    Method::Theorem1Lower,
    Method::Theorem1UpperAsh,
    Method::Theorem1UpperFerrante,
    Method::UnionRandom,
    Method::UnionRandomSimple,
    Method::UnionFixed,
    Method::UnionHyperExact,
    Method::UnionHyperHoeffding,
];

/// All bounds; a method that cannot be evaluated gets an empty row with the
/// error in its notes.
pub fn cmd_bounds(args: &BoundsArgs) -> Result<Table, CliError> {
    let inputs = Inputs::from_args(&args.query)?;
    let mut table = Table::new(DELTA_COLUMNS);
    for m in BOUND_METHODS {
        match evaluate(&inputs, m) {
            Ok(r) => table.push(delta_row(&r)),
            Err(CliError::Core(e)) => table.push(vec![
                m.tag().into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                format!("error: {e}").into(),
            ]),
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

pub fn cmd_asymptotic(args: &AsymptoticArgs) -> Result<Table, CliError> {
    let inputs = Inputs::from_args(&args.query)?;
    let layout = &inputs.layout;
    let m = inputs.exact_count();
    let result = delta_asymptotic(layout, m, inputs.threshold)?;
    let p = Rate::ratio(m, layout.total())?;
    let saddle = solve_saddle(layout, p, inputs.threshold)?;
    let mut table = Table::new([
        "method",
        "delta",
        "log_survival",
        "adversaries",
        "saddle_q",
        "psi",
        "variance_sum",
        "ln_prefactor",
        "iterations",
        "converged",
        "clamped",
        "notes",
    ]);
    table.push(vec![
        result.method.tag().into(),
        result.delta().into(),
        result.log_survival.into(),
        m.into(),
        saddle.q.into(),
        saddle.psi.into(),
        saddle.variance_sum.into(),
        saddle.ln_prefactor(layout.total(), p.value()).into(),
        (saddle.iterations as u64).into(),
        saddle.converged.into(),
        result.diagnostics.clamped.into(),
        result.diagnostics.notes.join("; ").into(),
    ]);
    Ok(table)
}

pub fn cmd_size(args: &SizeArgs) -> Result<Table, CliError> {
    if let Some(k) = args.min_n_for_k {
        let model = match args.model {
            Model::Average => SizingModel::Average,
            Model::Exact => SizingModel::Exact,
        };
        let r = min_committee_size(k, args.delta, args.threshold, args.adversary_frac, model)?;
        let mut table = Table::new(["K", "n", "first_feasible", "delta", "method"]);
        table.push(vec![
            k.into(),
            r.n.into(),
            r.first_feasible.into(),
            r.delta.into(),
            r.method.tag().into(),
        ]);
        return Ok(table);
    }
    let nodes = args
        .nodes
        .ok_or_else(|| CliError::Usage("give --nodes or --min-n-for-K".into()))?;
    let search = if args.exhaustive {
        max_committees_scan
    } else {
        max_committees
    };
    let r = search(nodes, args.delta, args.threshold, args.adversary_frac)?;
    let mut table = Table::new(["K", "n", "r", "prob", "iterations"]);
    table.push(vec![
        r.k.into(),
        r.n.into(),
        r.r.into(),
        r.prob.into(),
        r.iterations.into(),
    ]);
    Ok(table)
}

pub const ESTIMATE_COLUMNS: [&str; 7] = [
    "model",
    "delta_hat",
    "std_error",
    "ci_low",
    "ci_high",
    "failures",
    "samples",
];

pub fn estimate_row(model: Model, e: &DeltaEstimate) -> Vec<Cell> {
    let name = match model {
        Model::Average => "average",
        Model::Exact => "exact",
    };
    vec![
        name.into(),
        e.delta_hat.into(),
        e.std_error.into(),
        e.ci95.0.into(),
        e.ci95.1.into(),
        e.failures.into(),
        e.samples.into(),
    ]
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Table, CliError> {
    let inputs = Inputs::from_args(&args.query)?;
    if args.samples == 0 || args.workers == 0 {
        return Err(CliError::Usage("--samples and --workers must be positive".into()));
    }
    let model = args.model.unwrap_or_else(|| inputs.default_model());
    let plan = SimulationPlan {
        query: inputs.query(model)?,
        samples: args.samples,
        seed: args.seed,
        workers: args.workers,
    };
    let estimate = estimate_delta(&plan)?;
    let mut table = Table::new(ESTIMATE_COLUMNS);
    table.push(estimate_row(model, &estimate));
    Ok(table)
}
