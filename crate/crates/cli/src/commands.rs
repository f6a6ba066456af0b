use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rp_plrm::asymptotics::sandwich_v;
use rp_plrm::distributions::chi_square_quantile;
use rp_plrm::inference::{
    normal_power_approximation, power_components, sample_size_from_components, wald_statistic,
    DesignCovariance, LinearHypothesis, DEFAULT_LEVELS,
};
use rp_plrm::io::{
    csv_header, diabetes_fixture, diabetes_spec, format_number, load_csv, read_config,
    ConfigReader, DatasetSpec, LoadedDataset, ResponseSpec, RunReport, Table,
};
use rp_plrm::robustness::{if_all, if_single, wald_if_from_estimator_if};
use rp_plrm::simulation::{
    misclassification_path, relabel, run_are_study, run_estimator_study, run_relabel_study,
    run_test_study, stream_rng, write_are_csv, write_estimator_csv, write_test_csv, Purpose,
    RelabelScheme, SimConfig, TestDesign, DEFAULT_BETA0,
};
use rp_plrm::tuning::{select_alpha_wj, TuningGrid};
use rp_plrm::{classify, Coefficients, Error, FitOptions, FitResult, Initializer, TuningAlpha};

use crate::{
    DataArgs, DiabetesArgs, FitArgs, FitControl, HypothesisArgs, InfluenceArgs, Init, Scheme,
    SimulateArgs, TestArgs, TuneArgs,
};

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Separation { .. } | Error::Singular { .. } | Error::NotConverged(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    NotConverged,
}

type Outcome = Result<(RunReport, Status), Failure>;

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

fn load(args: &DataArgs) -> Result<LoadedDataset, Failure> {
    if !args.csv.is_file() {
        return Err(input(format!("cannot read {}", args.csv.display())));
    }
    let response = match &args.one_hot {
        Some(columns) => ResponseSpec::OneHot {
            columns: columns.clone(),
        },
        None => ResponseSpec::Label {
            column: args.response.clone(),
            categories: args.categories.clone(),
        },
    };
    let predictors = match &args.predictors {
        Some(p) => p.clone(),
        None => {
            let taken: Vec<&String> = match &response {
                ResponseSpec::OneHot { columns } => columns.iter().collect(),
                ResponseSpec::Label { column, .. } => vec![column],
            };
            csv_header(&args.csv)?
                .into_iter()
                .filter(|h| !taken.contains(&h))
                .collect()
        }
    };
    Ok(load_csv(&DatasetSpec {
        path: args.csv.clone(),
        response,
        predictors,
    })?)
}

fn fit_options(control: &FitControl) -> FitOptions {
    FitOptions {
        max_iterations: control.max_iterations,
        initializer: match control.init {
            Init::Zeros => Initializer::Zeros,
            Init::Mle => Initializer::MleWarmStart,
        },
        ..FitOptions::default()
    }
}

fn coefficient_names(data: &LoadedDataset) -> Vec<String> {
    let d = data.categories.len() - 1;
    let terms: Vec<&str> = std::iter::once("(intercept)")
        .chain(data.predictors.iter().map(String::as_str))
        .collect();
    (0..d)
        .flat_map(|j| {
            terms
                .iter()
                .map(move |t| format!("{}:{t}", data.categories[j]))
        })
        .collect()
}

fn coefficients(data: &LoadedDataset, values: &[f64]) -> Result<Coefficients, Failure> {
    let d = data.categories.len() - 1;
    let k1 = data.design.n_cols();
    if values.len() != d * k1 {
        return Err(input(format!(
            "expected {} coefficients, got {}",
            d * k1,
            values.len()
        )));
    }
    Ok(Coefficients::new(d, k1, values.to_vec())?)
}

fn describe_data(report: &mut RunReport, data: &LoadedDataset) {
    report.input_digest = Some(data.digest.clone());
    report.notes.push(format!(
        "n = {}; predictors: {}; categories: {} (reference: {})",
        data.design.n_rows(),
        data.predictors.join(", "),
        data.categories.join(", "),
        data.categories.last().expect("at least two categories"),
    ));
}

fn fit_data(
    data: &LoadedDataset,
    control: &FitControl,
) -> Result<(TuningAlpha, FitResult), Failure> {
    let alpha = TuningAlpha::new(control.alpha)?;
    let r = rp_plrm::fit(&data.design, &data.response, alpha, &fit_options(control))?;
    Ok((alpha, r))
}

fn fit_notes(report: &mut RunReport, r: &FitResult, raw: bool) {
    report.notes.push(format!(
        "alpha = {}; objective H = {}; iterations = {}; converged = {}",
        format_number(r.alpha.value(), raw),
        format_number(r.objective, raw),
        r.iterations,
        r.converged
    ));
    report.warnings.extend(r.warnings.iter().cloned());
}

fn status(r: &FitResult) -> Status {
    if r.converged {
        Status::Done
    } else {
        Status::NotConverged
    }
}

fn parse_hypothesis(args: &HypothesisArgs, p: usize) -> Result<Option<LinearHypothesis>, Failure> {
    if args.l_rows.is_empty() {
        return match args.rhs {
            Some(_) => Err(input("--l given without --L")),
            None => Ok(None),
        };
    }
    let mut flat = Vec::new();
    for row in &args.l_rows {
        let values: Vec<f64> = row
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| input(format!("--L: cannot parse `{}`", s.trim())))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != p {
            return Err(input(format!(
                "--L rows need {p} entries, got {}",
                values.len()
            )));
        }
        flat.extend(values);
    }
    let r = args.l_rows.len();
    let rhs = args.rhs.clone().unwrap_or_else(|| vec![0.0; r]);
    if rhs.len() != r {
        return Err(input(format!("--l needs {r} entries, got {}", rhs.len())));
    }
    Ok(Some(LinearHypothesis::new(
        DMatrix::from_row_slice(r, p, &flat),
        DVector::from_vec(rhs),
    )?))
}

pub fn fit(echo: &str, a: &FitArgs) -> Outcome {
    let raw = a.control.raw;
    let data = load(&a.data)?;
    let (_, r) = fit_data(&data, &a.control)?;
    let mut report = RunReport::new(echo);
    describe_data(&mut report, &data);
    fit_notes(&mut report, &r, raw);

    let mut coefs = Table::new("coefficients", &["coefficient", "estimate", "std_error"]);
    let se = r.standard_errors();
    for (i, (name, b)) in coefficient_names(&data)
        .into_iter()
        .zip(r.beta_hat.as_slice())
        .enumerate()
    {
        let s = se
            .as_ref()
            .map_or("NA".to_string(), |s| format_number(s[i], raw));
        coefs.push(vec![name, format_number(*b, raw), s]);
    }
    report.tables.push(coefs);

    let predicted = classify(&data.design, &r.beta_hat)?;
    let k = data.categories.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&obs, &pred) in data.response.categories().iter().zip(&predicted) {
        counts[obs][pred] += 1;
    }
    let mut header = vec!["observed \\ predicted"];
    header.extend(data.categories.iter().map(String::as_str));
    let mut confusion = Table::new("classification", &header);
    for (c, row) in counts.iter().enumerate() {
        let mut cells = vec![data.categories[c].clone()];
        cells.extend(row.iter().map(usize::to_string));
        confusion.push(cells);
    }
    report.tables.push(confusion);
    let wrong = (0..k)
        .map(|c| counts[c].iter().sum::<usize>() - counts[c][c])
        .sum::<usize>();
    report.notes.push(format!(
        "misclassified: {wrong} of {}",
        data.design.n_rows()
    ));
    Ok((report, status(&r)))
}

pub fn test(echo: &str, a: &TestArgs) -> Outcome {
    let raw = a.control.raw;
    let data = load(&a.data)?;
    let (alpha, r) = fit_data(&data, &a.control)?;
    let p = r.beta_hat.len();
    let hyp =
        parse_hypothesis(&a.hypothesis, p)?.ok_or_else(|| input("give at least one --L row"))?;
    let mut report = RunReport::new(echo);
    describe_data(&mut report, &data);
    fit_notes(&mut report, &r, raw);

    let w = wald_statistic(&r, &hyp)?;
    let mut wald = Table::new("wald-type test", &["statistic", "df", "p_value"]);
    wald.push(vec![
        format_number(w.statistic, raw),
        w.df.to_string(),
        format_number(w.p_value, raw),
    ]);
    report.tables.push(wald);

    let mut levels: Vec<f64> = DEFAULT_LEVELS.to_vec();
    if !levels.contains(&a.tau) {
        levels.push(a.tau);
        levels.sort_by(f64::total_cmp);
    }
    let mut decisions = Table::new("decisions", &["tau", "critical_value", "reject"]);
    for tau in levels {
        let crit = chi_square_quantile(w.df, tau)?;
        decisions.push(vec![
            format_number(tau, raw),
            format_number(crit, raw),
            (w.statistic > crit).to_string(),
        ]);
    }
    report.tables.push(decisions);

    if let Some(values) = &a.power_at {
        let beta1 = coefficients(&data, values)?;
        let provider = DesignCovariance {
            design: &data.design,
        };
        let c = power_components(&beta1, &hyp, alpha, a.tau, &provider)?;
        let n = a.n.unwrap_or(data.design.n_rows());
        let mut power = Table::new("power approximation", &["quantity", "value"]);
        power.push(vec![
            "distance l(beta1)".into(),
            format_number(c.distance, raw),
        ]);
        power.push(vec!["sigma(beta1)".into(), format_number(c.sigma, raw)]);
        power.push(vec![
            "critical value".into(),
            format_number(c.critical, raw),
        ]);
        power.push(vec!["n".into(), n.to_string()]);
        match normal_power_approximation(c.distance, c.sigma, c.critical, n) {
            Ok(pw) => power.push(vec!["power".into(), format_number(pw, raw)]),
            Err(e) => report.warnings.push(format!("power unavailable: {e}")),
        }
        if let Some(pi0) = a.sample_size {
            let needed = sample_size_from_components(&c, pi0)?;
            power.push(vec!["target power".into(), format_number(pi0, raw)]);
            power.push(vec!["required n".into(), needed.to_string()]);
        }
        report.tables.push(power);
    }
    Ok((report, status(&r)))
}

pub fn tune(echo: &str, a: &TuneArgs) -> Outcome {
    let raw = a.raw;
    let data = load(&a.data)?;
    let mut grid = TuningGrid::regular(a.max, a.step, a.pilot)?;
    grid.iterate = a.iterate;
    let r = select_alpha_wj(&data.design, &data.response, &grid, &FitOptions::default())?;
    let mut report = RunReport::new(echo);
    describe_data(&mut report, &data);
    report.notes.push(format!(
        "selected alpha = {}; pilot alpha = {}; rounds = {}",
        format_number(r.alpha_star, raw),
        format_number(r.pilot_alpha, raw),
        r.rounds
    ));
    let mut table = Table::new(
        "estimated mean squared error",
        &["alpha", "bias_sq", "variance", "mse"],
    );
    for row in &r.table {
        table.push(vec![
            format_number(row.alpha, raw),
            format_number(row.bias_sq, raw),
            format_number(row.variance, raw),
            format_number(row.mse, raw),
        ]);
    }
    report.tables.push(table);
    for (alpha, reason) in &r.skipped {
        report.warnings.push(format!(
            "alpha = {} skipped: {reason}",
            format_number(*alpha, raw)
        ));
    }
    Ok((report, Status::Done))
}

pub fn influence(echo: &str, a: &InfluenceArgs) -> Outcome {
    let raw = a.control.raw;
    let data = load(&a.data)?;
    let alpha = TuningAlpha::new(a.control.alpha)?;
    let mut report = RunReport::new(echo);
    describe_data(&mut report, &data);
    let (beta, state) = match &a.beta {
        Some(values) => {
            report.notes.push(format!(
                "evaluated at the supplied coefficients, alpha = {}",
                format_number(alpha.value(), raw)
            ));
            (coefficients(&data, values)?, Status::Done)
        }
        None => {
            let (_, r) = fit_data(&data, &a.control)?;
            fit_notes(&mut report, &r, raw);
            let s = status(&r);
            (r.beta_hat, s)
        }
    };
    let hyp = parse_hypothesis(&a.hypothesis, beta.len())?;
    let v = match &hyp {
        Some(_) => Some(sandwich_v(&data.design, &beta, alpha)?.v),
        None => None,
    };

    let k = data.categories.len();
    let mut cases: Vec<(String, DVector<f64>)> = Vec::new();
    if a.all {
        let ts: Vec<Vec<f64>> = (0..data.design.n_rows())
            .map(|i| data.response.one_hot(i))
            .collect();
        cases.push((
            "all rows at observed labels".into(),
            if_all(&ts, &beta, &data.design, alpha)?,
        ));
    } else {
        let row = a.row.ok_or_else(|| input("give --row or --all"))?;
        if row == 0 || row > data.design.n_rows() {
            return Err(input(format!(
                "--row must lie in 1..={}",
                data.design.n_rows()
            )));
        }
        let points: Vec<(String, Vec<f64>)> = match &a.t {
            Some(t) => vec![(
                format!(
                    "row {row}, t = ({})",
                    t.iter()
                        .map(|v| format_number(*v, raw))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                t.clone(),
            )],
            None => (0..k)
                .map(|c| {
                    let mut t = vec![0.0; k];
                    t[c] = 1.0;
                    (format!("row {row}, t = {}", data.categories[c]), t)
                })
                .collect(),
        };
        for (label, t) in points {
            cases.push((label, if_single(row - 1, &t, &beta, &data.design, alpha)?));
        }
    }

    let names = coefficient_names(&data);
    let mut header: Vec<&str> = vec!["contamination"];
    header.extend(names.iter().map(String::as_str));
    header.push("norm");
    if hyp.is_some() {
        header.push("wald_if");
    }
    let mut table = Table::new("influence function", &header);
    for (label, inf) in &cases {
        let mut cells = vec![label.clone()];
        cells.extend(inf.iter().map(|v| format_number(*v, raw)));
        cells.push(format_number(inf.norm(), raw));
        if let (Some(h), Some(v)) = (&hyp, &v) {
            cells.push(format_number(wald_if_from_estimator_if(inf, v, h)?, raw));
        }
        table.push(cells);
    }
    report.tables.push(table);
    Ok((report, state))
}

/// Parsed `simulate` configuration.
struct SimulationPlan {
    base: SimConfig,
    ns: Vec<usize>,
    qs: Vec<f64>,
    alphas: Vec<f64>,
    studies: Vec<String>,
    test: TestDesign,
}

fn simulation_plan(path: Option<&Path>, seed: Option<u64>) -> Result<SimulationPlan, Failure> {
    let map = match path {
        Some(p) => read_config(p)?,
        None => Default::default(),
    };
    let mut cfg = ConfigReader::new(map);
    let defaults = SimConfig::default();
    let k: usize = cfg.get("k", defaults.k)?;
    let d: usize = cfg.get("d", defaults.d)?;
    let beta0: Vec<f64> = cfg.list("beta0", DEFAULT_BETA0.to_vec())?;
    if beta0.len() != d * (k + 1) {
        return Err(input(format!(
            "beta0 needs d·(k+1) = {} values, got {}",
            d * (k + 1),
            beta0.len()
        )));
    }
    let test_defaults = TestDesign::default();
    let test = TestDesign {
        index: cfg.get("test_index", test_defaults.index)?,
        null_value: cfg.get("null", test_defaults.null_value)?,
        alt_value: cfg.get("alternative", test_defaults.alt_value)?,
        tau: cfg.get("tau", test_defaults.tau)?,
    };
    let base = SimConfig {
        n: defaults.n,
        k,
        d,
        beta0: Coefficients::new(d, k + 1, beta0)?,
        q: 0.0,
        replications: cfg.get("replications", defaults.replications)?,
        seed: cfg.get("seed", defaults.seed)?,
    };
    let plan = SimulationPlan {
        ns: cfg.list("n", vec![defaults.n])?,
        qs: cfg.list("q", vec![0.0, 0.1])?,
        alphas: cfg.list("alphas", vec![0.0, 0.2, 0.4, 0.6, 0.8])?,
        studies: cfg.list("studies", vec!["estimator".to_string(), "test".to_string()])?,
        test,
        base: SimConfig {
            seed: seed.unwrap_or(base.seed),
            ..base
        },
    };
    cfg.finish()?;
    for s in &plan.studies {
        if !["estimator", "test", "are"].contains(&s.as_str()) {
            return Err(input(format!(
                "unknown study `{s}` (expected estimator, test or are)"
            )));
        }
    }
    plan.base.validate()?;
    Ok(plan)
}

fn csv_file(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

pub fn simulate(echo: &str, a: &SimulateArgs) -> Outcome {
    let raw = a.raw;
    let plan = simulation_plan(a.config.as_deref(), a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    let mut report = RunReport::new(echo);
    report.seed = Some(plan.base.seed);
    report.notes.push(format!(
        "replications = {}; n = {:?}; q = {:?}; alphas = {:?}",
        plan.base.replications, plan.ns, plan.qs, plan.alphas
    ));
    let has = |s: &str| plan.studies.iter().any(|x| x == s);

    if has("estimator") {
        let mut rows = Vec::new();
        for &n in &plan.ns {
            for &q in &plan.qs {
                rows.extend(run_estimator_study(
                    &plan.base.with_n(n).with_q(q),
                    &plan.alphas,
                )?);
            }
        }
        write_estimator_csv(csv_file(&a.out, "estimator.csv")?, &rows)?;
        let mut t = Table::new(
            "estimator study",
            &["alpha", "q", "n", "rmse", "mae", "failures"],
        );
        for r in &rows {
            t.push(vec![
                format_number(r.alpha, raw),
                format_number(r.q, raw),
                r.n.to_string(),
                format_number(r.rmse, raw),
                format_number(r.mae, raw),
                r.failures.to_string(),
            ]);
        }
        report.tables.push(t);
    }
    if has("test") {
        let mut rows = Vec::new();
        for &n in &plan.ns {
            for &q in &plan.qs {
                rows.extend(run_test_study(
                    &plan.base.with_n(n).with_q(q),
                    &plan.alphas,
                    &plan.test,
                )?);
            }
        }
        write_test_csv(csv_file(&a.out, "test.csv")?, &rows)?;
        let mut t = Table::new(
            "wald-type test study",
            &["alpha", "q", "n", "level", "power", "failures"],
        );
        for r in &rows {
            t.push(vec![
                format_number(r.alpha, raw),
                format_number(r.q, raw),
                r.n.to_string(),
                format_number(r.level, raw),
                format_number(r.power, raw),
                (r.level_failures + r.power_failures).to_string(),
            ]);
        }
        report.tables.push(t);
    }
    if has("are") {
        let alphas: Vec<f64> = plan.alphas.iter().copied().filter(|&x| x > 0.0).collect();
        let mut rows = Vec::new();
        for &n in &plan.ns {
            rows.extend(run_are_study(&plan.base.with_n(n), &alphas)?);
        }
        write_are_csv(csv_file(&a.out, "are.csv")?, &rows)?;
        let p = plan.base.beta0.len();
        let mut header = vec!["alpha".to_string(), "n".to_string()];
        header.extend((0..p).map(|j| format!("are_{j}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut t = Table::new("asymptotic relative efficiency", &header);
        for r in &rows {
            let mut cells = vec![format_number(r.alpha, raw), r.n.to_string()];
            cells.extend(r.are.iter().map(|v| format_number(*v, raw)));
            t.push(cells);
        }
        report.tables.push(t);
    }
    report
        .notes
        .push(format!("output directory: {}", a.out.display()));
    Ok((report, Status::Done))
}

pub fn diabetes(echo: &str, a: &DiabetesArgs) -> Outcome {
    let raw = a.raw;
    let data = match &a.csv {
        Some(path) => load_csv(&diabetes_spec(path))?,
        None => diabetes_fixture()?,
    };
    let mut report = RunReport::new(echo);
    describe_data(&mut report, &data);
    report
        .notes
        .push("misclassifications compare predicted categories with the unaltered labels".into());
    let (design, original) = (&data.design, &data.response);
    match a.scheme {
        Scheme::Original | Scheme::Example => {
            let (fitted_to, label) = if a.scheme == Scheme::Original {
                (original.clone(), "original labels")
            } else {
                let scheme = RelabelScheme::force_last(14, 0);
                (
                    relabel(
                        original,
                        &scheme,
                        &mut stream_rng(a.seed, Purpose::Relabel, 0),
                    )?
                    .0,
                    "last 14 rows relabeled normal",
                )
            };
            let path = misclassification_path(design, &fitted_to, original, &a.alphas)?;
            let mut t = Table::new(
                format!("misclassifications, fitted to {label}"),
                &["alpha", "misclassified"],
            );
            for (alpha, count) in path {
                t.push(vec![format_number(alpha, raw), count.to_string()]);
            }
            report.tables.push(t);
        }
        Scheme::One | Scheme::Two => {
            report.seed = Some(a.seed);
            let scheme = if a.scheme == Scheme::One {
                RelabelScheme::cycle_forward(14)
            } else {
                RelabelScheme::cycle_backward(14)
            };
            let rows = run_relabel_study(design, original, &scheme, &a.alphas, a.datasets, a.seed)?;
            let mut t = Table::new(
                format!(
                    "mean misclassifications over {} relabeled datasets",
                    a.datasets
                ),
                &["alpha", "mean_misclassified", "failures"],
            );
            for r in &rows {
                t.push(vec![
                    format_number(r.alpha, raw),
                    format_number(r.mean_misclassified, raw),
                    r.failures.to_string(),
                ]);
                if r.failures > 0 {
                    report.warnings.push(format!(
                        "alpha = {}: {} datasets without a converged fit",
                        format_number(r.alpha, raw),
                        r.failures
                    ));
                }
            }
            report.tables.push(t);
        }
    }
    Ok((report, Status::Done))
}
