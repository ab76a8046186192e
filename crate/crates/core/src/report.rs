//! Plot-ready CSV renderings of the descriptive and bias reports.
//!
//! Tables keep the published row/column layout so they can be compared cell
//! by cell; numbers are rounded to two decimals here and nowhere else.

use crate::bias::HaloRescueTable;
use crate::decision::{score, EvalSource, CriterionMask, RationalityReport};
use crate::domain::{Criterion, CriterionTable, Mode, ModeTable, Population};
use crate::policy::TransferMatrix;
use crate::stats::{
    accessibility_stats, deviation_users_vs_nonusers, mean_evaluations, mean_priorities, mode_counts,
    modal_split, pairwise_mode_deviation, score_stats, GroupFilter, ScoreStats, StatsError, StdevConvention,
};

pub fn fmt2(v: f64) -> String {
    // Avoid "-0.00" for tiny negatives.
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

fn opt2(v: Option<f64>) -> String {
    v.map(fmt2).unwrap_or_default()
}

fn render<I, R>(header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

fn header(first: &str, rest: impl IntoIterator<Item = String>) -> Vec<String> {
    std::iter::once(first.to_string()).chain(rest).collect()
}

/// Mean priorities: one row per criterion, columns all and each usual-mode group.
pub fn table1_priorities(pop: &Population) -> Result<String, StatsError> {
    let counts = mode_counts(pop);
    let mut cols = vec![mean_priorities(pop, &GroupFilter::ALL)?];
    for m in Mode::ALL {
        cols.push(mean_priorities(pop, &GroupFilter::usual_mode(m))?);
    }
    let head = header(
        "criterion",
        std::iter::once(format!("all ({})", pop.len())).chain(Mode::ALL.map(|m| format!("{m} ({})", counts[m]))),
    );
    Ok(render(
        &head,
        Criterion::ALL.map(|c| std::iter::once(c.to_string()).chain(cols.iter().map(move |t| fmt2(t[c])))),
    ))
}

/// Mean evaluations of one mode over all, users and non-users.
pub fn table2_mode(pop: &Population, m: Mode) -> Result<String, StatsError> {
    let all = mean_evaluations(pop, m, &GroupFilter::ALL)?;
    let users = mean_evaluations(pop, m, &GroupFilter::users(m))?;
    let others = mean_evaluations(pop, m, &GroupFilter::non_users(m))?;
    let head = header(m.name(), ["all", "users", "non_users"].map(String::from));
    Ok(render(
        &head,
        Criterion::ALL.map(|c| [c.to_string(), fmt2(all[c]), fmt2(users[c]), fmt2(others[c])]),
    ))
}

/// Score statistics with the respondents' own evaluations.
pub fn self_score_stats(pop: &Population, convention: StdevConvention) -> Result<ScoreStats, StatsError> {
    score_stats(pop, convention, |r, m| score(r, m, &EvalSource::SelfEvals, CriterionMask::NONE))
}

pub fn table3_scores(stats: &ScoreStats) -> String {
    let head = ["mode", "mean", "stdev", "median", "users", "non_users"].map(String::from);
    render(
        &head,
        stats.by_mode.iter().map(|(m, s)| {
            [m.to_string(), fmt2(s.mean), fmt2(s.stdev), fmt2(s.median), opt2(s.users_mean), opt2(s.nonusers_mean)]
        }),
    )
}

pub fn fig1_split(pop: &Population) -> Result<String, StatsError> {
    let split = modal_split(pop)?;
    let counts = mode_counts(pop);
    let head = ["mode", "count", "share"].map(String::from);
    Ok(render(&head, Mode::ALL.map(|m| [m.to_string(), counts[m].to_string(), format!("{:.3}", split[m])])))
}

/// Per-mode inaccessible counts followed by the histogram of inaccessible modes per respondent.
pub fn fig3_accessibility(pop: &Population) -> String {
    let acc = accessibility_stats(pop);
    let head = ["key", "count"].map(String::from);
    let modes = Mode::ALL.map(|m| [format!("no_access_{}", m.slug()), acc.inaccessible[m].to_string()]);
    let bins = (0..4).map(|k| [format!("respondents_lacking_{k}"), acc.histogram[k].to_string()]);
    render(&head, modes.into_iter().chain(bins))
}

fn grid_csv(first: &str, grid: &ModeTable<CriterionTable<f64>>) -> String {
    let head = header(first, Criterion::ALL.map(|c| c.to_string()));
    render(&head, grid.iter().map(|(m, row)| std::iter::once(m.to_string()).chain(row.values().map(|&v| fmt2(v)))))
}

/// Users minus non-users mean evaluation, mode × criterion.
pub fn fig7_deviations(pop: &Population) -> Result<String, StatsError> {
    Ok(grid_csv("mode", &deviation_users_vs_nonusers(pop)?))
}

/// Observer-group deviation from the grand mean, observer × target mode.
pub fn fig11_deviations(pop: &Population, criterion: Option<Criterion>) -> Result<String, StatsError> {
    let dev = pairwise_mode_deviation(pop, criterion)?;
    let head = header("observer", Mode::ALL.map(|m| m.to_string()));
    Ok(render(&head, dev.iter().map(|(obs, row)| std::iter::once(obs.to_string()).chain(row.values().map(|&v| fmt2(v))))))
}

pub fn rationality_csv(rep: &RationalityReport) -> String {
    let head = ["mode", "n", "rational", "irrational", "constrained", "rational_pct", "irrational_pct", "constrained_pct"]
        .map(String::from);
    render(
        &head,
        rep.by_mode.iter().map(|(m, g)| {
            [
                m.to_string(),
                g.n.to_string(),
                g.rational.to_string(),
                g.irrational.to_string(),
                g.constrained.to_string(),
                opt2(g.rational_pct),
                opt2(g.irrational_pct),
                opt2(g.constrained_pct),
            ]
        }),
    )
}

pub fn halo_rescue_csv(t: &HaloRescueTable) -> String {
    let head = header("mode", Criterion::ALL.map(|c| c.to_string()));
    render(&head, t.0.iter().map(|(m, row)| std::iter::once(m.to_string()).chain(row.values().map(|v| v.to_string()))))
}

/// Transfer counts, rows are the starting mode.
pub fn transfer_csv(t: &TransferMatrix) -> String {
    let head = header("from", Mode::ALL.map(|m| m.to_string()));
    render(&head, t.0.iter().map(|(m, row)| std::iter::once(m.to_string()).chain(row.values().map(|v| v.to_string()))))
}

/// Every descriptive table as `(file name, CSV)`, in a fixed order.
pub fn stats_tables(pop: &Population, convention: StdevConvention) -> Result<Vec<(String, String)>, StatsError> {
    let mut out = vec![("table1_priorities.csv".to_string(), table1_priorities(pop)?)];
    for m in Mode::ALL {
        out.push((format!("table2_{}.csv", m.slug()), table2_mode(pop, m)?));
    }
    out.push(("table3_scores.csv".into(), table3_scores(&self_score_stats(pop, convention)?)));
    out.push(("fig1_split.csv".into(), fig1_split(pop)?));
    out.push(("fig3_accessibility.csv".into(), fig3_accessibility(pop)));
    out.push(("fig7_deviations.csv".into(), fig7_deviations(pop)?));
    out.push(("fig11_deviations.csv".into(), fig11_deviations(pop, None)?));
    for c in Criterion::ALL {
        out.push((format!("fig12_deviations_{}.csv", c.slug()), fig11_deviations(pop, Some(c))?));
    }
    Ok(out)
}
