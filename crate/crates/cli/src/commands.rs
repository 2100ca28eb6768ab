use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use treeauto::automata::AutomatonSpec;
use treeauto::distmap::{DistMap, StateDistribution};
use treeauto::fixedpoints::{
    find_fixed_points_2state, find_fixed_points_kstate, FixedPointRecord, KStateOptions, RootOptions,
};
use treeauto::offspring::{ChildDistribution, DistributionConfig};
use treeauto::pivot::{classify as classify_point, format_mask, mean_matrix, Classification, PivotOptions, TargetSets};
use treeauto::simulate::{
    compare_with_exact, estimate, oracle_exact, root_colour_chi_square, sample_rst_indexed, Tree,
    DEFAULT_NODE_BUDGET,
};

use crate::config::{FixedPointChoice, Loaded};
use crate::{Cli, Completion, Failure};

/// One CSV row: a fixed point at one parameter value, or an error there.
#[derive(Clone, Debug)]
struct Row {
    lambda: f64,
    root_index: Option<usize>,
    nu: Vec<f64>,
    rho: Option<f64>,
    class: String,
    verdict: String,
    residual: Option<f64>,
    deficit: Option<f64>,
    errors: String,
}

fn fmt_param(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0');
    s.strip_suffix('.').unwrap_or(s).to_string()
}

fn fmt_value(x: f64) -> String {
    format!("{x:.12}")
}

fn fmt_small(x: f64) -> String {
    format!("{x:.3e}")
}

/// Scalar parameter of a family: the Poisson rate, the success
/// probability of binomial and geometric laws, the mean of a table.
fn parameter(cfg: &DistributionConfig, chi: &ChildDistribution) -> f64 {
    match cfg {
        DistributionConfig::Poisson { lambda } => *lambda,
        DistributionConfig::Binomial { p, .. } | DistributionConfig::Geometric { p } => *p,
        DistributionConfig::Finite { .. } => chi.mean(),
    }
}

fn header(spec: &AutomatonSpec) -> Vec<String> {
    let mut h = vec!["lambda".to_string(), "root_index".to_string()];
    h.extend(spec.colours().labels().iter().map(|l| format!("nu_{l}")));
    h.extend(["rho", "class", "verdict", "residual", "deficit", "errors"].map(String::from));
    h
}

fn record(row: &Row, k: usize) -> Vec<String> {
    let opt = |x: Option<f64>, f: fn(f64) -> String| x.map(f).unwrap_or_default();
    let mut r = vec![fmt_param(row.lambda), row.root_index.map(|i| i.to_string()).unwrap_or_default()];
    if row.nu.is_empty() {
        r.extend(std::iter::repeat_n(String::new(), k));
    } else {
        r.extend(row.nu.iter().map(|&x| fmt_value(x)));
    }
    r.push(opt(row.rho, fmt_value));
    r.push(row.class.clone());
    r.push(row.verdict.clone());
    r.push(opt(row.residual, fmt_small));
    r.push(opt(row.deficit, fmt_small));
    r.push(row.errors.clone());
    r
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, Failure> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(
            fs::File::create(p).map_err(|e| Failure::Compute(format!("cannot write {}: {e}", p.display())))?,
        ),
        None => Box::new(io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn write_csv(out: Option<&Path>, head: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv_writer(out)?;
    w.write_record(head).map_err(Failure::compute)?;
    for r in rows {
        w.write_record(r).map_err(Failure::compute)?;
    }
    w.flush().map_err(Failure::compute)
}

fn dist_map(cli: &Cli, spec: &AutomatonSpec, chi: &ChildDistribution) -> Result<DistMap, Failure> {
    DistMap::new(spec, chi, cli.eps).map_err(Failure::compute)
}

fn solve(cli: &Cli, dm: &DistMap) -> Result<Vec<FixedPointRecord>, Failure> {
    if dm.k() == 2 {
        let opts = RootOptions { grid_size: cli.grid, tol: cli.tol, ..Default::default() };
        find_fixed_points_2state(dm, &opts).map_err(Failure::compute)
    } else {
        let res = find_fixed_points_kstate(dm, &KStateOptions { tol: cli.tol, ..Default::default() })
            .map_err(Failure::compute)?;
        Ok(res.records)
    }
}

fn pivot_options(cli: &Cli) -> PivotOptions {
    PivotOptions { fixed_point_tol: 10.0 * cli.tol, ..Default::default() }
}

fn class_of(c: &Classification) -> String {
    c.analysis.as_ref().map_or("subcritical".into(), |a| a.criticality.to_string())
}

/// All fixed points at one parameter value, each classified; errors in
/// classification land in the row, errors in the search are returned.
fn rows_at(cli: &Cli, spec: &AutomatonSpec, cfg: &DistributionConfig) -> Result<Vec<Row>, Failure> {
    let chi = cfg.build().map_err(Failure::compute)?;
    let lambda = parameter(cfg, &chi);
    let dm = dist_map(cli, spec, &chi)?;
    let roots = solve(cli, &dm)?;
    Ok(roots
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = Row {
                lambda,
                root_index: Some(i),
                nu: r.nu.weights().to_vec(),
                rho: None,
                class: String::new(),
                verdict: String::new(),
                residual: Some(r.residual),
                deficit: Some(dm.deficit()),
                errors: String::new(),
            };
            match classify_point(&dm, &r.nu, &pivot_options(cli)) {
                Ok(c) => {
                    row.rho = Some(c.verdict.spectral_radius);
                    row.class = class_of(&c);
                    row.verdict = c.verdict.status.to_string();
                }
                Err(e) => row.errors = e.to_string(),
            }
            row
        })
        .collect())
}

fn print_rows(spec: &AutomatonSpec, rows: &[Row]) {
    let labels = spec.colours().labels();
    let nu_head: Vec<String> = labels.iter().map(|l| format!("{:>16}", format!("nu_{l}"))).collect();
    println!("{:>5} {} {:>14} {:>13} {:>24} {:>10}", "index", nu_head.join(" "), "rho", "class", "verdict", "residual");
    for r in rows {
        let nu: Vec<String> = r.nu.iter().map(|x| format!("{x:>16.12}")).collect();
        println!(
            "{:>5} {} {:>14} {:>13} {:>24} {:>10}",
            r.root_index.map(|i| i.to_string()).unwrap_or_default(),
            nu.join(" "),
            r.rho.map(|x| format!("{x:.10}")).unwrap_or_default(),
            r.class,
            r.verdict,
            r.residual.map(fmt_small).unwrap_or_default(),
        );
        if !r.errors.is_empty() {
            println!("      error: {}", r.errors);
        }
    }
}

pub fn fixed_points(cli: &Cli, loaded: &Loaded) -> Result<Completion, Failure> {
    let cfg = loaded.distribution()?;
    let rows = rows_at(cli, &loaded.spec, cfg)?;
    if loaded.spec.k() > 2 {
        eprintln!("note: multistart search with {} colours; the list may be incomplete", loaded.spec.k());
    }
    print_rows(&loaded.spec, &rows);
    if let Some(out) = &cli.out {
        let k = loaded.spec.k();
        let recs: Vec<Vec<String>> = rows.iter().map(|r| record(r, k)).collect();
        write_csv(Some(out), &header(&loaded.spec), &recs)?;
    }
    Ok(Completion::Full)
}

/// The fixed point named by the config, with the map it was solved on.
fn chosen(cli: &Cli, loaded: &Loaded) -> Result<(StateDistribution, Option<usize>), Failure> {
    if let Some(nu) = loaded.explicit_nu()? {
        return Ok((nu, None));
    }
    let Some(FixedPointChoice::Index(i)) = loaded.config.fixed_point else {
        return Err(Failure::Config("config needs \"fixed_point\": an index or {\"nu\": [...]}".into()));
    };
    let chi = loaded.distribution()?.build().map_err(Failure::config)?;
    let roots = solve(cli, &dist_map(cli, &loaded.spec, &chi)?)?;
    let r = roots.get(i).ok_or_else(|| {
        Failure::Config(format!("fixed point index {i} out of range ({} found)", roots.len()))
    })?;
    Ok((r.nu.clone(), Some(i)))
}

pub fn classify(cli: &Cli, loaded: &Loaded) -> Result<Completion, Failure> {
    let spec = &loaded.spec;
    let cfg = loaded.distribution()?;
    let chi = cfg.build().map_err(Failure::config)?;
    let (nu, index) = chosen(cli, loaded)?;
    let dm = dist_map(cli, spec, &chi)?;
    let c = classify_point(&dm, &nu, &pivot_options(cli)).map_err(Failure::compute)?;
    let labels = spec.colours().labels();
    let nu_text: Vec<String> = nu.weights().iter().map(|x| format!("{x:.12}")).collect();
    match index {
        Some(i) => println!("fixed point {i}: nu = ({})", nu_text.join(", ")),
        None => println!("fixed point: nu = ({})", nu_text.join(", ")),
    }
    let residual = dm.psi(&nu).map_err(Failure::compute)?.residual(nu.weights());
    println!("residual {residual:.3e}, truncation deficit {:.3e}", dm.deficit());
    if c.support.len() < spec.k() {
        let names: Vec<&str> = c.support.iter().map(|&s| labels[s].as_str()).collect();
        println!("support {{{}}}", names.join(","));
    }
    if let Some(a) = &c.analysis {
        let sub_labels: Vec<String> = c.support.iter().map(|&s| labels[s].clone()).collect();
        let names: Vec<String> = a
            .types
            .iter()
            .map(|t| format!("({},{})", sub_labels[t.colour], format_mask(t.b_set, &sub_labels)))
            .collect();
        println!("pivot mean matrix:");
        let width = names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max(14);
        print!("{:width$}", "");
        for n in &names {
            print!(" {n:>width$}");
        }
        println!();
        for (i, n) in names.iter().enumerate() {
            print!("{n:>width$}");
            for j in 0..names.len() {
                print!(" {:>width$.10}", a.mean_matrix[(i, j)]);
            }
            println!();
        }
        println!("spectral radius {:.10} ({})", a.spectral_radius, a.criticality);
    }
    println!("verdict: {}", c.verdict);
    for note in &c.verdict.notes {
        println!("note: {note}");
    }
    if let Some(out) = &cli.out {
        let row = Row {
            lambda: parameter(cfg, &chi),
            root_index: index,
            nu: nu.weights().to_vec(),
            rho: Some(c.verdict.spectral_radius),
            class: class_of(&c),
            verdict: c.verdict.status.to_string(),
            residual: Some(residual),
            deficit: Some(dm.deficit()),
            errors: String::new(),
        };
        write_csv(Some(out), &header(spec), &[record(&row, spec.k())])?;
    }
    Ok(Completion::Full)
}

/// Splits rows into plot segments: maximal runs of consecutive grid
/// points with the same root count, root index and verdict.
/// Root index, verdict and `(lambda, p)` points of one plot segment.
type Segment = (usize, String, Vec<(f64, f64)>);

fn segments(rows: &[Row], grid: &[f64]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    // open[j]: segment index of root j at the previous grid point
    let mut open: Vec<Option<usize>> = Vec::new();
    let mut prev_count = usize::MAX;
    for &lambda in grid {
        let here: Vec<&Row> = rows.iter().filter(|r| r.lambda == lambda && r.root_index.is_some()).collect();
        if here.len() != prev_count {
            open = vec![None; here.len()];
        }
        for (j, r) in here.iter().enumerate() {
            let p = *r.nu.last().expect("non-empty nu");
            let verdict = if r.verdict.is_empty() { "error".to_string() } else { r.verdict.clone() };
            match open[j] {
                Some(s) if out[s].1 == verdict => out[s].2.push((lambda, p)),
                _ => {
                    open[j] = Some(out.len());
                    out.push((j, verdict, vec![(lambda, p)]));
                }
            }
        }
        prev_count = here.len();
    }
    out
}

pub fn sweep(cli: &Cli, loaded: &Loaded, plots: Option<&Path>) -> Result<Completion, Failure> {
    let spec = &loaded.spec;
    let cfg = loaded.distribution()?;
    let sweep = loaded
        .config
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::Config("config has no \"sweep\"".into()))?;
    let grid = sweep.grid();
    cfg.with_parameter(grid[0]).map_err(Failure::config)?;
    let per_point: Vec<Vec<Row>> = grid
        .par_iter()
        .map(|&lambda| {
            let result = cfg
                .with_parameter(lambda)
                .map_err(Failure::compute)
                .and_then(|c| rows_at(cli, spec, &c));
            result.unwrap_or_else(|e| {
                let msg = match e {
                    Failure::Config(m) | Failure::Compute(m) => m,
                };
                vec![Row {
                    lambda,
                    root_index: None,
                    nu: Vec::new(),
                    rho: None,
                    class: String::new(),
                    verdict: String::new(),
                    residual: None,
                    deficit: None,
                    errors: msg,
                }]
            })
        })
        .collect();
    let rows: Vec<Row> = per_point.into_iter().flatten().collect();
    let k = spec.k();
    let recs: Vec<Vec<String>> = rows.iter().map(|r| record(r, k)).collect();
    write_csv(cli.out.as_deref(), &header(spec), &recs)?;

    let plot_dir: Option<PathBuf> = plots.map(Path::to_path_buf).or_else(|| {
        cli.out.as_ref().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".plots");
            PathBuf::from(s)
        })
    });
    if let Some(dir) = plot_dir {
        fs::create_dir_all(&dir).map_err(|e| Failure::Compute(format!("{}: {e}", dir.display())))?;
        for (n, (branch, verdict, points)) in segments(&rows, &grid).iter().enumerate() {
            let path = dir.join(format!("branch{branch}_seg{n:03}_{verdict}.dat"));
            let mut text = String::new();
            for (l, p) in points {
                text.push_str(&format!("{} {}\n", fmt_param(*l), fmt_value(*p)));
            }
            fs::write(&path, text).map_err(|e| Failure::Compute(format!("{}: {e}", path.display())))?;
        }
    }
    let failed = rows.iter().filter(|r| !r.errors.is_empty()).count();
    if failed > 0 {
        eprintln!("{failed} rows carry errors");
        return Ok(Completion::Partial);
    }
    Ok(Completion::Full)
}

pub fn simulate(cli: &Cli, loaded: &Loaded, dump: Option<&Path>, dump_count: u64) -> Result<Completion, Failure> {
    let spec = &loaded.spec;
    let sim = loaded
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| Failure::Config("config has no \"simulate\"".into()))?;
    if sim.samples < 2 {
        return Err(Failure::Config("simulate needs at least two samples".into()));
    }
    let chi = loaded.distribution()?.build().map_err(Failure::config)?;
    let (nu, _) = chosen(cli, loaded)?;
    let dm = dist_map(cli, spec, &chi)?;
    let analysis = mean_matrix(&dm, &nu, &TargetSets::maximal(spec.k()), &pivot_options(cli));
    if let Err(e) = &analysis {
        println!("no exact pivot values: {e}");
    }
    let summary = estimate(spec, &chi, &nu, sim.depth, sim.samples, cli.seed).map_err(Failure::compute)?;
    let cmp = compare_with_exact(&summary, &nu, analysis.as_ref().ok());
    println!(
        "samples {}/{} depth {} seed {}",
        summary.completed, summary.requested, summary.depth, summary.seed
    );
    println!("{:<30} {:>16} {:>16} {:>12} {:>8}", "statistic", "exact", "estimate", "std_error", "z");
    let mut recs = Vec::new();
    let mut rejected = false;
    for (c, s) in cmp.iter().zip(&summary.statistics) {
        let exact = c.exact.map(|x| format!("{x:.10}")).unwrap_or_default();
        let z = c.z.map(|z| format!("{z:.3}")).unwrap_or_default();
        let flag = match c.z {
            Some(z) if z.abs() > 4.0 => {
                rejected = true;
                "  <-- |z| > 4"
            }
            _ => "",
        };
        println!(
            "{:<30} {:>16} {:>16.10} {:>12.3e} {:>8}{flag}",
            c.name, exact, c.estimate, c.std_error, z
        );
        recs.push(vec![
            c.name.clone(),
            exact,
            format!("{:.10}", c.estimate),
            format!("{:.6e}", c.std_error),
            z,
            s.count.to_string(),
        ]);
    }
    if let Ok(t) = root_colour_chi_square(&summary, &nu) {
        println!("root colour chi-square {:.4} on {} dof, p = {:.4}", t.statistic, t.dof, t.p_value);
    }
    println!("survival_proxy rows estimate P[pivotal vertex at level n], a proxy for pivot-tree survival");
    if let Some(out) = &cli.out {
        let head: Vec<String> =
            ["statistic", "exact", "estimate", "std_error", "z", "count"].map(String::from).to_vec();
        write_csv(Some(out), &head, &recs)?;
    }
    if let Some(path) = dump {
        let mut text = String::new();
        for i in 0..dump_count.min(sim.samples) {
            match sample_rst_indexed(spec, &chi, &nu, sim.depth, cli.seed, i, DEFAULT_NODE_BUDGET) {
                Ok(s) => text.push_str(&s.to_newick(spec.colours().labels())),
                Err(e) => text.push_str(&format!("# sample {i}: {e}")),
            }
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Failure::Compute(format!("{}: {e}", path.display())))?;
    }
    if summary.is_partial() {
        eprintln!("{} of {} samples exceeded the node budget", summary.requested - summary.completed, summary.requested);
        return Ok(Completion::Partial);
    }
    Ok(if rejected { Completion::Rejected } else { Completion::Full })
}

pub fn oracle(cli: &Cli, loaded: &Loaded) -> Result<Completion, Failure> {
    let spec = &loaded.spec;
    let oc = loaded
        .config
        .oracle
        .as_ref()
        .ok_or_else(|| Failure::Config("config has no \"oracle\"".into()))?;
    let tree = Tree::parse(&oc.tree).map_err(Failure::config)?;
    let depth = oc.depth.unwrap_or(tree.height());
    let (nu, _) = chosen(cli, loaded)?;
    let r = oracle_exact(spec, &tree, depth, &nu).map_err(Failure::compute)?;
    let labels = spec.colours().labels();
    println!("tree {} with frontier at level {depth}", tree.to_newick());
    for (c, p) in r.root_distribution.iter().enumerate() {
        println!("P[root = {}] = {p:.15}", labels[c]);
    }
    for (n, e) in r.expected_pivotal_by_level.iter().enumerate() {
        println!("E[pivotal at level {n}] = {e:.15}");
    }
    println!("{:>6} {:>6} {:>5} {:>18}", "vertex", "parent", "level", "P[pivotal]");
    let mut recs = Vec::new();
    for v in 0..tree.len() {
        let parent = tree.parent(v).map(|p| p.to_string()).unwrap_or_default();
        println!("{v:>6} {parent:>6} {:>5} {:>18.15}", tree.level(v), r.pivotal_probability[v]);
        recs.push(vec![
            v.to_string(),
            parent,
            tree.level(v).to_string(),
            format!("{:.15}", r.pivotal_probability[v]),
        ]);
    }
    if r.b_set_mismatches > 0 {
        return Err(Failure::Compute(format!(
            "{} switch sets disagree between replay and recursion",
            r.b_set_mismatches
        )));
    }
    if let Some(out) = &cli.out {
        let head: Vec<String> = ["vertex", "parent", "level", "pivotal_probability"].map(String::from).to_vec();
        write_csv(Some(out), &head, &recs)?;
    }
    Ok(Completion::Full)
}
