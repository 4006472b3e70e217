"""CSV and gnuplot-script writers. All file output goes through this module."""

from __future__ import annotations

import datetime as _dt
import math
from pathlib import Path
from typing import Any

from satim import __version__
from satim.lab.commands import Table
from satim.lab.config import LabConfig


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def metadata_line(cfg: LabConfig, command: str, timestamp: str | None = None) -> str:
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return (
        f"# satim {__version__} command={command} config_sha256={cfg.digest()} "
        f"generated={timestamp}"
    )


def render_csv(table: Table, meta: str) -> str:
    lines = [meta, ",".join(table.columns)]
    lines += [",".join(format_cell(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def write_csv(table: Table, out_dir: Path, cfg: LabConfig, command: str) -> Path:
    path = out_dir / f"{table.name}.csv"
    path.write_text(render_csv(table, metadata_line(cfg, command)))
    return path


_HEAD = """\
# gnuplot script written by satim; run with: gnuplot {name}.gp
set datafile separator ','
set datafile commentschars '#'
set terminal pngcairo size 1000,{height}
set output '{name}.png'
set grid
"""


def _levels(table: Table, col: int) -> list[float]:
    seen: list[float] = []
    for row in table.rows:
        if row[col] not in seen:
            seen.append(row[col])
    return seen


def plot_script(table: Table) -> str:
    """A gnuplot script that reads ``<name>.csv`` from its own directory."""
    name = table.name
    csv = f"'{name}.csv'"
    if name == "characterize":
        levels = " ".join(format_cell(f) for f in _levels(table, 0))
        out = _HEAD.format(name=name, height=1000) + "set multiplot layout 3,1\n"
        out += "set key outside right\nset xlabel 'omega_s (rad/s)'\n"
        for label, direct, sim in (("a (1/H)", 4, 7), ("b (1/H)", 5, 8), ("sigma (rad)", 6, 9)):
            out += (
                f"set ylabel '{label}'\n"
                f"plot for [f in \"{levels}\"] {csv} every ::1 "
                f"using 2:(abs($1-real(f))<1e-12 ? ${direct} : 1/0) with lines "
                f"title sprintf('direct %.3g Wb', real(f)), \\\n"
                f"     for [f in \"{levels}\"] {csv} every ::1 "
                f"using 2:(abs($1-real(f))<1e-12 ? ${sim} : 1/0) with points pt 6 "
                f"title sprintf('simulated %.3g Wb', real(f))\n"
            )
        return out + "unset multiplot\n"
    if name == "observability":
        levels = " ".join(format_cell(f) for f in _levels(table, 0))
        out = _HEAD.format(name=name, height=600)
        out += "set logscale y\nset xlabel 'load torque (N.m)'\nset ylabel 'condition number'\n"
        out += (
            f"plot for [f in \"{levels}\"] {csv} every ::1 "
            f"using 2:(($1==real(f) && $6==1) ? $3 : 1/0) with lines "
            f"title sprintf('Os, %s%%', f), \\\n"
            f"     for [f in \"{levels}\"] {csv} every ::1 "
            f"using 2:(($1==real(f) && $6==1) ? $4 : 1/0) with lines dt 2 "
            f"title sprintf(\"Os', %s%%\", f)\n"
        )
        return out
    if name == "convergence":
        out = _HEAD.format(name=name, height=600)
        out += "set logscale xy\nset xlabel 'injection frequency (Hz)'\nset ylabel 'error'\n"
        out += (
            f"plot {csv} every ::1 using 1:2 with linespoints title 'is_hf relative error', \\\n"
            f"     {csv} every ::1 using 1:3 with linespoints title 'mean state error (Wb)', \\\n"
            f"     {csv} every ::1 using 1:(1/$1**2) with lines dt 3 title '1/Omega^2 slope'\n"
        )
        return out
    out = _HEAD.format(name=name, height=900) + "set multiplot layout 3,1\nset xlabel 't (s)'\n"
    out += (
        f"set ylabel 'flux (Wb)'\n"
        f"plot {csv} every ::1 using 1:2 with lines title 'phis_d', "
        f"'' every ::1 using 1:3 with lines title 'phis_q', "
        f"'' every ::1 using 1:4 with lines title 'phir_d', "
        f"'' every ::1 using 1:5 with lines title 'phir_q'\n"
        f"set ylabel 'current (A)'\n"
        f"plot {csv} every ::1 using 1:7 with lines title 'is_d', "
        f"'' every ::1 using 1:9 with lines title 'is_lf_d'\n"
        f"set ylabel 'is_hf (A/s)'\n"
        f"plot {csv} every ::1 using 1:11 with lines title 'is_hf_d', "
        f"'' every ::1 using 1:12 with lines title 'is_hf_q'\n"
        "unset multiplot\n"
    )
    return out


def write_plot_script(table: Table, out_dir: Path) -> Path:
    path = out_dir / f"{table.name}.gp"
    path.write_text(plot_script(table))
    return path
