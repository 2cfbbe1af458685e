//! Static SVG figures.

use plotters::coord::Shift;
use plotters::prelude::*;

use vhil_core::{Error, Result};

const COLORS: [RGBColor; 4] =
    [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

pub struct Trace {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Trace {
    pub fn new(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.to_string(), points }
    }
}

pub struct Pane {
    pub title: String,
    pub y_label: String,
    pub traces: Vec<Trace>,
}

pub struct Figure {
    pub x_label: String,
    pub log_x: bool,
    pub panes: Vec<Pane>,
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Scenario(format!("plot: {e}"))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.05 };
    (lo - pad, hi + pad)
}

fn draw_pane(area: &DrawingArea<SVGBackend, Shift>, pane: &Pane, fig: &Figure) -> Result<()> {
    let xs = pane.traces.iter().flat_map(|t| t.points.iter().map(|p| p.0));
    let ys = pane.traces.iter().flat_map(|t| t.points.iter().map(|p| p.1));
    let (y0, y1) = bounds(ys);
    let mut builder = ChartBuilder::on(area);
    builder.caption(&pane.title, ("sans-serif", 18)).margin(10).x_label_area_size(35).y_label_area_size(60);
    if fig.log_x {
        let (x0, x1) = xs.filter(|x| *x > 0.0).fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
        let mut chart = builder.build_cartesian_2d((x0..x1).log_scale(), y0..y1).map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(&fig.x_label)
            .y_desc(&pane.y_label)
            .x_label_formatter(&|x| format!("{x:.0e}"))
            .draw()
            .map_err(plot_err)?;
        for (k, t) in pane.traces.iter().enumerate() {
            let c = COLORS[k % COLORS.len()];
            chart
                .draw_series(LineSeries::new(t.points.iter().copied(), &c))
                .map_err(plot_err)?
                .label(&t.name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
        }
        chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(plot_err)?;
    } else {
        let (x0, x1) = bounds(xs);
        let mut chart = builder.build_cartesian_2d(x0..x1, y0..y1).map_err(plot_err)?;
        chart.configure_mesh().x_desc(&fig.x_label).y_desc(&pane.y_label).draw().map_err(plot_err)?;
        for (k, t) in pane.traces.iter().enumerate() {
            let c = COLORS[k % COLORS.len()];
            chart
                .draw_series(LineSeries::new(t.points.iter().copied(), &c))
                .map_err(plot_err)?
                .label(&t.name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c));
        }
        chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(plot_err)?;
    }
    Ok(())
}

/// Renders the panes stacked vertically.
pub fn render(fig: &Figure) -> Result<String> {
    let mut svg = String::new();
    {
        let height = 320 * fig.panes.len().max(1) as u32;
        let root = SVGBackend::with_string(&mut svg, (900, height)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let areas = root.split_evenly((fig.panes.len().max(1), 1));
        for (area, pane) in areas.iter().zip(&fig.panes) {
            draw_pane(area, pane, fig)?;
        }
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}
