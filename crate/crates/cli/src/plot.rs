//! Generated plotting scripts. The binary never plots; the script needs
//! matplotlib.

use crate::config::{Experiment, OutputFormat};

fn axes(kind: Experiment) -> (&'static str, &'static str, &'static str, bool) {
    match kind {
        Experiment::TwistedSweep => ("T", "abs", "lambda", true),
        Experiment::GapSweep => ("lambda", "alpha_hat", "", false),
        Experiment::Spectral => ("r", "mass_upper", "lambda", true),
        Experiment::Weakmix => ("T", "decay_value", "", true),
        Experiment::KzExponents => ("index", "exponent", "", false),
        Experiment::StratumInfo => ("d", "genus", "", false),
    }
}

pub fn plot_script(kind: Experiment, format: OutputFormat, files: &[String]) -> String {
    let (x, y, group, log) = axes(kind);
    let loader = match format {
        OutputFormat::Csv => "rows = list(csv.DictReader(open(path)))",
        OutputFormat::Json => "rows = json.load(open(path))",
    };
    let list = files.iter().map(|f| format!("    \"{f}\",\n")).collect::<String>();
    format!(
        r#"#!/usr/bin/env python3
# {name}: plots every data file of the run next to this script.
import csv, json, os, sys
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

FILES = [
{list}]
here = os.path.dirname(os.path.abspath(__file__))
fig, ax = plt.subplots()
for name in FILES:
    path = os.path.join(here, name)
    {loader}
    groups = {{}}
    for r in rows:
        key = r.get("{group}", "") if "{group}" else ""
        groups.setdefault(key, []).append((float(r["{x}"]), float(r["{y}"])))
    for key, pts in sorted(groups.items()):
        pts.sort()
        label = name if not key else f"{{name}} {group}={{key}}"
        ax.plot([p[0] for p in pts], [abs(p[1]) if {log_py} else p[1] for p in pts], marker=".", label=label)
if {log_py}:
    ax.set_xscale("log")
    ax.set_yscale("log")
ax.set_xlabel("{x}")
ax.set_ylabel("{y}")
ax.legend(fontsize="x-small")
fig.savefig(os.path.join(here, sys.argv[1] if len(sys.argv) > 1 else "{name}.png"), dpi=150)
"#,
        name = kind.name(),
        log_py = if log { "True" } else { "False" },
    )
}
