//! Analysis requests and result bundles shared by the HTTP service and the
//! command-line tool.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sensolab_core::conjoint::{analyze_many, build_terms, ConjointOptions, EffectPlot, Structure};
use sensolab_core::dataset::{validate_for_method, Dataset, MethodNeeds};
use sensolab_core::inddiff::{
    apriori_color_payload, pls_individual, segment_discriminant, ColoredPoints, IndDiffSpec, LikingMode, SegmentSet,
};
use sensolab_core::latent::{fit_pca, fit_pcr, fit_plsr, fit_validated, Block, LatentModel, ModelKind, PlotPayload, PreprocessSpec};
use sensolab_core::prefmap::{build_prefmap, Direction, Engine, PrefmapSpec, SectorPayload};
use sensolab_core::summary::{box_stats, box_table, stacked_histogram, Axis, BoxSummary, HistogramOptions, HistogramTable};
use sensolab_core::svg;
use sensolab_core::table::{Cell, LabeledMatrix, Table};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("unknown dataset '{0}'")]
    UnknownDataset(String),

    #[error("{}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error(transparent)]
    Analysis(#[from] sensolab_core::Error),
}

impl RunError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, RunError::Analysis(e) if e.is_numerical())
    }

    /// Individual problems, for error bodies that list violations.
    pub fn violations(&self) -> Vec<String> {
        match self {
            RunError::Invalid(v) => v.clone(),
            RunError::Analysis(sensolab_core::Error::Validation(v)) => v.iter().map(ToString::to_string).collect(),
            other => vec![other.to_string()],
        }
    }
}

fn two() -> usize {
    2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub dataset: String,
    #[serde(default)]
    pub axis: Axis,
    #[serde(default)]
    pub as_percent: bool,
    #[serde(default)]
    pub scale: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaRequest {
    pub dataset: String,
    #[serde(default)]
    pub standardise: bool,
    #[serde(default = "two")]
    pub components: usize,
    #[serde(default)]
    pub validate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionRequest {
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub standardise_x: bool,
    #[serde(default)]
    pub standardise_y: bool,
    #[serde(default = "two")]
    pub components: usize,
    #[serde(default)]
    pub validate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefmapRequest {
    pub liking: String,
    pub descriptive: String,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub standardise_x: bool,
    #[serde(default)]
    pub standardise_y: bool,
    #[serde(default = "two")]
    pub components: usize,
    #[serde(default)]
    pub validate: bool,
    /// Number of consumer sectors to draw, if any.
    #[serde(default)]
    pub sectors: Option<usize>,
    /// 1-based components spanning the sector plane.
    #[serde(default = "first_plane")]
    pub sector_components: (usize, usize),
}

fn first_plane() -> (usize, usize) {
    (1, 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjointRequest {
    pub likings: Vec<String>,
    pub design: String,
    #[serde(default)]
    pub characteristics: Option<String>,
    pub factors: Vec<String>,
    #[serde(default)]
    pub structure: Structure,
    #[serde(default)]
    pub options: ConjointOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndDiffRequest {
    pub liking: String,
    pub characteristics: String,
    #[serde(default = "raw_liking")]
    pub mode: LikingMode,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default = "yes")]
    pub standardise_x: bool,
    #[serde(default)]
    pub standardise_y: bool,
    #[serde(default = "two")]
    pub components: usize,
    #[serde(default)]
    pub validate: bool,
    /// Colour the consumer scores by this characteristics column.
    #[serde(default)]
    pub color_by: Option<String>,
    /// Discriminate segments stored as a column of this dataset instead of
    /// predicting liking.
    #[serde(default)]
    pub segments: Option<SegmentRef>,
}

fn raw_liking() -> LikingMode {
    LikingMode::RawLiking
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub dataset: String,
    pub column: String,
}

/// One analysis to run, tagged by `method`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FitRequest {
    Summary(SummaryRequest),
    Pca(PcaRequest),
    Plsr(RegressionRequest),
    Pcr(RegressionRequest),
    Prefmap(PrefmapRequest),
    Conjoint(ConjointRequest),
    Inddiff(IndDiffRequest),
}

/// Plot data plus the renderer that draws it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "renderer", content = "payload", rename_all = "snake_case")]
pub enum Plot {
    Latent(PlotPayload),
    Effect(EffectPlot),
    Sectors { points: LabeledMatrix, sectors: SectorPayload },
    Colored(ColoredPoints),
    Box(Vec<BoxSummary>),
    Histogram { table: HistogramTable, stacked: bool },
}

impl Plot {
    pub fn to_svg(&self) -> String {
        match self {
            Plot::Latent(p) => svg::render_latent(p),
            Plot::Effect(p) => svg::render_effect(p),
            Plot::Sectors { points, sectors } => {
                svg::render_sectors(points, &sectors.sector_boundaries, &sectors.sector_counts)
            }
            Plot::Colored(p) => svg::render_colored(p),
            Plot::Box(b) => svg::render_box(b),
            Plot::Histogram { table, stacked } => svg::render_histogram(table, *stacked),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPlot {
    pub name: String,
    pub plot: Plot,
}

/// Everything one fitted model produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubResult {
    pub name: String,
    pub tables: Vec<Table>,
    pub plots: Vec<NamedPlot>,
    pub model: serde_json::Value,
    pub warnings: Vec<String>,
}

impl SubResult {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn plot(&self, name: &str) -> Option<&Plot> {
        self.plots.iter().find(|p| p.name == name).map(|p| &p.plot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub method: String,
    pub results: Vec<SubResult>,
}

impl FitRequest {
    pub fn method(&self) -> &'static str {
        match self {
            FitRequest::Summary(_) => "summary",
            FitRequest::Pca(_) => "pca",
            FitRequest::Plsr(_) => "plsr",
            FitRequest::Pcr(_) => "pcr",
            FitRequest::Prefmap(_) => "prefmap",
            FitRequest::Conjoint(_) => "conjoint",
            FitRequest::Inddiff(_) => "inddiff",
        }
    }

    /// Dataset ids referenced by the request.
    pub fn dataset_ids(&self) -> Vec<&str> {
        match self {
            FitRequest::Summary(r) => vec![&r.dataset],
            FitRequest::Pca(r) => vec![&r.dataset],
            FitRequest::Plsr(r) | FitRequest::Pcr(r) => vec![&r.x, &r.y],
            FitRequest::Prefmap(r) => vec![&r.liking, &r.descriptive],
            FitRequest::Conjoint(r) => {
                let mut v: Vec<&str> = r.likings.iter().map(String::as_str).collect();
                v.push(&r.design);
                v.extend(r.characteristics.as_deref());
                v
            }
            FitRequest::Inddiff(r) => {
                let mut v = vec![r.liking.as_str(), &r.characteristics];
                v.extend(r.segments.as_ref().map(|s| s.dataset.as_str()));
                v
            }
        }
    }

    /// Long fits run as background jobs: conjoint models and anything
    /// with leave-one-out validation.
    pub fn is_long(&self) -> bool {
        match self {
            FitRequest::Summary(_) => false,
            FitRequest::Pca(r) => r.validate,
            FitRequest::Plsr(r) | FitRequest::Pcr(r) => r.validate,
            FitRequest::Prefmap(r) => r.validate,
            FitRequest::Conjoint(_) => true,
            FitRequest::Inddiff(r) => r.validate,
        }
    }

    /// The dataset whose columns are consumers, used to check segment
    /// assignments against a model.
    pub fn consumer_dataset(&self) -> &str {
        match self {
            FitRequest::Summary(r) => &r.dataset,
            FitRequest::Pca(r) => &r.dataset,
            FitRequest::Plsr(r) | FitRequest::Pcr(r) => &r.x,
            FitRequest::Prefmap(r) => &r.liking,
            FitRequest::Conjoint(r) => r.likings.first().map_or("", String::as_str),
            FitRequest::Inddiff(r) => &r.liking,
        }
    }

    /// Cheap input checks that do not need a fit: dataset existence,
    /// missing values where the method forbids them, and matching axes.
    pub fn check<F>(&self, resolve: F) -> Result<(), RunError>
    where
        F: Fn(&str) -> Option<Dataset>,
    {
        let get = |id: &str| resolve(id).ok_or_else(|| RunError::UnknownDataset(id.to_string()));
        for id in self.dataset_ids() {
            get(id)?;
        }
        let mut problems = Vec::new();
        let complete = |d: &Dataset, problems: &mut Vec<String>| {
            if let Err(v) = validate_for_method(d, &MethodNeeds::complete()) {
                problems.extend(v.iter().map(|v| format!("{}: {v}", d.name())));
            }
        };
        match self {
            FitRequest::Summary(r) => complete(&get(&r.dataset)?, &mut problems),
            FitRequest::Pca(r) => complete(&get(&r.dataset)?, &mut problems),
            FitRequest::Plsr(r) | FitRequest::Pcr(r) => {
                let (x, y) = (get(&r.x)?, get(&r.y)?);
                complete(&x, &mut problems);
                complete(&y, &mut problems);
                if x.nrows() != y.nrows() {
                    problems.push(format!("row counts differ ({} vs {})", x.nrows(), y.nrows()));
                }
            }
            FitRequest::Prefmap(r) => {
                let (l, d) = (get(&r.liking)?, get(&r.descriptive)?);
                complete(&l, &mut problems);
                complete(&d, &mut problems);
                if l.nrows() != d.nrows() {
                    problems.push(format!("row counts differ ({} vs {})", l.nrows(), d.nrows()));
                }
            }
            FitRequest::Conjoint(r) => {
                if r.likings.is_empty() {
                    problems.push("no liking dataset given".into());
                }
                let design = get(&r.design)?;
                complete(&design, &mut problems);
                let chars = r.characteristics.as_deref().map(get).transpose()?;
                if let Some(c) = &chars {
                    complete(c, &mut problems);
                }
                for id in &r.likings {
                    let l = get(id)?;
                    if l.nrows() != design.nrows() {
                        problems.push(format!(
                            "liking '{}' has {} products but design has {} rows",
                            l.name(),
                            l.nrows(),
                            design.nrows()
                        ));
                    }
                    if let Some(c) = &chars {
                        if c.nrows() != l.ncols() {
                            problems.push(format!(
                                "liking '{}' has {} consumers but characteristics has {} rows",
                                l.name(),
                                l.ncols(),
                                c.nrows()
                            ));
                        }
                    }
                }
            }
            FitRequest::Inddiff(r) => {
                let (l, c) = (get(&r.liking)?, get(&r.characteristics)?);
                complete(&l, &mut problems);
                complete(&c, &mut problems);
                if l.ncols() != c.nrows() {
                    problems.push(format!(
                        "liking has {} consumers but characteristics has {} rows",
                        l.ncols(),
                        c.nrows()
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(RunError::Invalid(problems))
        }
    }

    pub fn run<F>(&self, resolve: F) -> Result<ResultBundle, RunError>
    where
        F: Fn(&str) -> Option<Dataset>,
    {
        self.check(&resolve)?;
        let get = |id: &str| resolve(id).ok_or_else(|| RunError::UnknownDataset(id.to_string()));
        let results = match self {
            FitRequest::Summary(r) => vec![summary_result(&get(&r.dataset)?, r)?],
            FitRequest::Pca(r) => {
                let d = get(&r.dataset)?;
                let x = Block::from_dataset(&d)?;
                let spec = PreprocessSpec { standardise: r.standardise };
                let m = if r.validate {
                    fit_validated(ModelKind::Pca, &x, None, spec, PreprocessSpec::default(), r.components)?
                } else {
                    fit_pca(&x, spec, r.components)?
                };
                vec![latent_result(d.name(), &m, Vec::new())?]
            }
            FitRequest::Plsr(r) | FitRequest::Pcr(r) => {
                let (xd, yd) = (get(&r.x)?, get(&r.y)?);
                let (x, y) = (Block::from_dataset(&xd)?, Block::from_dataset(&yd)?);
                let sx = PreprocessSpec { standardise: r.standardise_x };
                let sy = PreprocessSpec { standardise: r.standardise_y };
                let kind = if matches!(self, FitRequest::Plsr(_)) { ModelKind::Plsr } else { ModelKind::Pcr };
                let m = match (r.validate, kind) {
                    (true, k) => fit_validated(k, &x, Some(&y), sx, sy, r.components)?,
                    (false, ModelKind::Plsr) => fit_plsr(&x, &y, sx, sy, r.components)?,
                    (false, _) => fit_pcr(&x, &y, sx, sy, r.components)?,
                };
                vec![latent_result(&format!("{}~{}", yd.name(), xd.name()), &m, Vec::new())?]
            }
            FitRequest::Prefmap(r) => vec![prefmap_result(&get(&r.liking)?, &get(&r.descriptive)?, r)?],
            FitRequest::Conjoint(r) => {
                let likings = r.likings.iter().map(|id| get(id)).collect::<Result<Vec<_>, _>>()?;
                let design = get(&r.design)?;
                let chars = r.characteristics.as_deref().map(get).transpose()?;
                let spec = build_terms(&r.factors, r.structure)?;
                let refs: Vec<&Dataset> = likings.iter().collect();
                let mut out = Vec::with_capacity(likings.len());
                for a in analyze_many(&refs, &design, chars.as_ref(), &spec, r.options) {
                    let a = a?;
                    let names = ["lsmeans", "fixed", "random", "pairwise"];
                    let tables = a
                        .tables()
                        .into_iter()
                        .zip(names)
                        .map(|(mut t, n)| {
                            t.name = n.to_string();
                            t
                        })
                        .collect();
                    let plots = a
                        .plots
                        .iter()
                        .map(|p| NamedPlot {
                            name: effect_plot_name(p),
                            plot: Plot::Effect(p.clone()),
                        })
                        .collect();
                    out.push(SubResult {
                        name: a.response.clone(),
                        tables,
                        plots,
                        warnings: a.warnings.clone(),
                        model: serde_json::to_value(&a).expect("analysis is serialisable"),
                    });
                }
                out
            }
            FitRequest::Inddiff(r) => vec![inddiff_result(&get(&r.liking)?, &get(&r.characteristics)?, r, &get)?],
        };
        Ok(ResultBundle {
            method: self.method().to_string(),
            results,
        })
    }
}

fn effect_plot_name(p: &EffectPlot) -> String {
    match p {
        EffectPlot::Main { term, .. } => format!("main_{term}"),
        EffectPlot::Interaction { term, .. } => format!("interaction_{}", term.replace(':', "_")),
    }
}

/// Tables and plots common to every latent-variable model.
fn latent_result(name: &str, m: &LatentModel, warnings: Vec<String>) -> Result<SubResult, RunError> {
    let e = m.export();
    let mut tables = vec![e.x_scores.to_table("scores"), e.x_loadings.to_table("loadings")];
    if let Some(w) = &e.x_weights {
        tables.push(w.to_table("weights"));
    }
    if let Some(q) = &e.y_loadings {
        tables.push(q.to_table("y_loadings"));
    }
    tables.push(e.x_corr_loadings.to_table("corrloadings"));
    if let Some(c) = &e.y_corr_loadings {
        tables.push(c.to_table("y_corrloadings"));
    }
    tables.push(explvar_table(&e));
    tables.push(e.rmse_calib.to_table("rmse_calibrated"));
    if let Some(r) = &e.rmse_cv {
        tables.push(r.to_table("rmse_validated"));
    }
    let mut plots = Vec::new();
    for (file, internal) in [
        ("scores", "scores"),
        ("loadings", "loadings"),
        ("corrloadings", "corr_loadings"),
        ("explvar", "explvar"),
    ] {
        plots.push(NamedPlot {
            name: file.into(),
            plot: Plot::Latent(m.plot(internal)?),
        });
    }
    Ok(SubResult {
        name: name.to_string(),
        tables,
        plots,
        model: serde_json::to_value(&e).expect("export is serialisable"),
        warnings,
    })
}

fn explvar_table(e: &sensolab_core::latent::ModelExport) -> Table {
    let mut series: Vec<(&str, &[f64])> = vec![("calibrated_x", &e.calib_explvar_x)];
    if let Some(v) = &e.valid_explvar_x {
        series.push(("validated_x", v));
    }
    if !e.calib_explvar_y.is_empty() {
        series.push(("calibrated_y", &e.calib_explvar_y));
    }
    if let Some(v) = &e.valid_explvar_y {
        series.push(("validated_y", v));
    }
    let mut cols = vec![""];
    cols.extend(series.iter().map(|s| s.0));
    let mut t = Table::new("explvar", &cols);
    for a in 0..e.n_components {
        let mut row = vec![Cell::from(format!("PC{}", a + 1))];
        row.extend(series.iter().map(|s| Cell::from(s.1.get(a).copied().unwrap_or(f64::NAN))));
        t.push(row);
    }
    t
}

fn summary_result(d: &Dataset, r: &SummaryRequest) -> Result<SubResult, RunError> {
    let stats = box_stats(d, r.axis)?;
    let hist = stacked_histogram(
        d,
        r.axis,
        HistogramOptions {
            as_percent: r.as_percent,
            scale: r.scale,
        },
    )?;
    Ok(SubResult {
        name: d.name().to_string(),
        tables: vec![box_table(&stats), hist.to_table("histogram")],
        plots: vec![
            NamedPlot {
                name: "box".into(),
                plot: Plot::Box(stats.clone()),
            },
            NamedPlot {
                name: "histogram".into(),
                plot: Plot::Histogram {
                    table: hist.clone(),
                    stacked: false,
                },
            },
            NamedPlot {
                name: "stacked".into(),
                plot: Plot::Histogram {
                    table: hist.clone(),
                    stacked: true,
                },
            },
        ],
        model: serde_json::json!({ "box": stats, "histogram": hist }),
        warnings: Vec::new(),
    })
}

fn prefmap_result(liking: &Dataset, descriptive: &Dataset, r: &PrefmapRequest) -> Result<SubResult, RunError> {
    let spec = PrefmapSpec {
        direction: r.direction,
        engine: r.engine,
        standardise_x: r.standardise_x,
        standardise_y: r.standardise_y,
        n_components: r.components,
        validate: r.validate,
    };
    let pm = build_prefmap(liking, descriptive, spec)?;
    let mut out = latent_result(liking.name(), &pm.model, Vec::new())?;
    let mut sectors = None;
    if let Some(n) = r.sectors {
        let (a, b) = r.sector_components;
        if a == 0 || b == 0 {
            return Err(RunError::Invalid(vec!["component numbers start at 1".into()]));
        }
        let s = pm.sectors(n, (a - 1, b - 1))?;
        let c = pm.consumer_loadings();
        let points = LabeledMatrix {
            row_labels: c.labels.clone(),
            col_labels: vec![format!("PC{a}"), format!("PC{b}")],
            values: (0..c.values.nrows())
                .map(|j| vec![c.values[(j, a - 1)], c.values[(j, b - 1)]])
                .collect(),
        };
        let mut t = Table::new("sectors", &["sector", "start_angle", "count"]);
        for k in 0..s.sector_counts.len() {
            t.push(vec![Cell::from(k + 1), Cell::from(s.sector_boundaries[k]), Cell::from(s.sector_counts[k])]);
        }
        out.tables.push(t);
        out.plots.push(NamedPlot {
            name: "sectors".into(),
            plot: Plot::Sectors {
                points,
                sectors: s.clone(),
            },
        });
        sectors = Some(s);
    }
    out.model = serde_json::json!({
        "spec": spec,
        "export": out.model,
        "sectors": sectors,
    });
    Ok(out)
}

fn inddiff_result<G>(liking: &Dataset, chars: &Dataset, r: &IndDiffRequest, get: &G) -> Result<SubResult, RunError>
where
    G: Fn(&str) -> Result<Dataset, RunError>,
{
    let spec = IndDiffSpec {
        categorical: r.categorical.clone(),
        standardise_x: r.standardise_x,
        standardise_y: r.standardise_y,
        n_components: r.components,
        validate: r.validate,
    };
    let fitted = match &r.segments {
        Some(s) => {
            let set = SegmentSet::from_column(&get(&s.dataset)?, &s.column)?;
            segment_discriminant(&set, chars, &spec)?
        }
        None => pls_individual(liking, chars, &r.mode, &spec)?,
    };
    let mut out = latent_result(liking.name(), &fitted.model, fitted.warnings)?;
    if let Some(col) = &r.color_by {
        let j = chars
            .col_index(col)
            .ok_or_else(|| RunError::Invalid(vec![format!("no column '{col}' in '{}'", chars.name())]))?;
        let m = &fitted.model;
        if m.n_components < 2 {
            return Err(RunError::Invalid(vec!["colouring needs at least 2 components".into()]));
        }
        // Scores rows are the consumers that entered the model.
        let values: Vec<f64> = m
            .row_labels
            .iter()
            .map(|l| chars.row_index(l).and_then(|i| chars.values().get(i, j)).unwrap_or(f64::NAN))
            .collect();
        let points: Vec<(f64, f64)> = (0..m.x_scores.nrows()).map(|i| (m.x_scores[(i, 0)], m.x_scores[(i, 1)])).collect();
        let payload = apriori_color_payload(&m.row_labels, &points, &values)?;
        out.plots.push(NamedPlot {
            name: "apriori".into(),
            plot: Plot::Colored(payload),
        });
    }
    Ok(out)
}
