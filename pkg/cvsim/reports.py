"""
Report writers: every file is named <out>/<command>.<ext> and carries the
run configuration in its header so a file alone is enough to reproduce it.
"""
import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from rest_framework.renderers import JSONRenderer

from .experiments import ExperimentResult, RunConfig, provenance
from .gkp_threshold import SqueezingLevel
from .models import OutputFormat

logger = logging.getLogger(__name__)

SVG_SIZE = 480
SVG_MARGIN = 48
SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def render_csv(result: ExperimentResult, config: RunConfig) -> bytes:
    header = provenance(config)
    buf = io.StringIO()
    buf.write(f"# version: {header['version']}\n")
    buf.write(f"# command: {header['command']}\n")
    buf.write(f"# seed: {header['seed']}\n")
    buf.write(f"# tolerance: {_cell(header['tolerance'])}\n")
    buf.write(f"# config: {json.dumps(header['config'], sort_keys=True)}\n")
    for note in result.notes:
        buf.write(f"# note: {note}\n")
    writer = csv.DictWriter(buf, fieldnames=result.columns, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in result.rows:
        writer.writerow({k: _cell(row[k]) for k in result.columns})
    return buf.getvalue().encode("utf-8")


def result_document(result: ExperimentResult, config: RunConfig) -> Dict[str, Any]:
    document = {
        "provenance": provenance(config),
        "passed": result.passed,
        "breaches": list(result.breaches),
        "metrics": result.metrics,
        "rows": result.rows,
    }
    if result.notes:
        document["notes"] = list(result.notes)
    document.update(result.payload)
    return document


def render_json(data: Any) -> bytes:
    return JSONRenderer().render(data, renderer_context={"indent": 2}) + b"\n"


def render_svg(result: ExperimentResult, config: RunConfig) -> bytes:
    """One 1-sigma ellipse per state: semi-axes sqrt(kappa) along q, sqrt(epsilon) along p."""
    half = 1.25 * max(max(np.sqrt(r["kappa"]), np.sqrt(r["epsilon"])) for r in result.rows)
    scale = (SVG_SIZE / 2 - SVG_MARGIN) / half
    c = SVG_SIZE / 2
    config_text = json.dumps(provenance(config), sort_keys=True).replace("--", "- -")
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
        f'viewBox="0 0 {SVG_SIZE} {SVG_SIZE}">',
        f"<!-- {config_text} -->",
        f'<rect x="0" y="0" width="{SVG_SIZE}" height="{SVG_SIZE}" fill="white"/>',
        f'<line x1="{SVG_MARGIN / 2:.2f}" y1="{c:.2f}" x2="{SVG_SIZE - SVG_MARGIN / 2:.2f}" y2="{c:.2f}" stroke="black"/>',
        f'<line x1="{c:.2f}" y1="{SVG_MARGIN / 2:.2f}" x2="{c:.2f}" y2="{SVG_SIZE - SVG_MARGIN / 2:.2f}" stroke="black"/>',
        f'<text x="{SVG_SIZE - SVG_MARGIN / 2:.2f}" y="{c - 6:.2f}" text-anchor="end" font-size="14">q</text>',
        f'<text x="{c + 6:.2f}" y="{SVG_MARGIN / 2 + 12:.2f}" font-size="14">p</text>',
    ]
    tick = float(np.floor(half))
    if tick >= 1:
        for sign in (-1, 1):
            x = c + sign * tick * scale
            y = c - sign * tick * scale
            lines.append(f'<text x="{x:.2f}" y="{c + 16:.2f}" text-anchor="middle" font-size="11">{sign * tick:g}</text>')
            lines.append(f'<text x="{c - 6:.2f}" y="{y + 4:.2f}" text-anchor="end" font-size="11">{sign * tick:g}</text>')
    for idx, row in enumerate(result.rows):
        color = SVG_COLORS[idx % len(SVG_COLORS)]
        dash = ' stroke-dasharray="6,4"' if row["dashed"] else ""
        lines.append(
            f'<ellipse cx="{c:.2f}" cy="{c:.2f}" rx="{np.sqrt(row["kappa"]) * scale:.4f}" '
            f'ry="{np.sqrt(row["epsilon"]) * scale:.4f}" fill="none" stroke="{color}" stroke-width="2"{dash}/>'
        )
        p_level = SqueezingLevel.from_variance(row["epsilon"]).decibels
        q_level = SqueezingLevel.from_variance(row["kappa"]).decibels
        label = f"s={row['s']:g}, delta={row['delta']:g}: p {p_level:+.2f} dB, q {q_level:+.2f} dB"
        y = SVG_MARGIN / 2 + 16 * idx
        lines.append(
            f'<line x1="{SVG_MARGIN / 2:.2f}" y1="{y:.2f}" x2="{SVG_MARGIN / 2 + 24:.2f}" y2="{y:.2f}" '
            f'stroke="{color}" stroke-width="2"{dash}/>'
        )
        lines.append(f'<text x="{SVG_MARGIN / 2 + 30:.2f}" y="{y + 4:.2f}" font-size="11">{label}</text>')
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _write(path: Path, payload: bytes) -> Path:
    path.write_bytes(payload)
    logger.info(f"Wrote {path}")
    return path


def write_reports(result: ExperimentResult, config: RunConfig) -> List[Path]:
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = config.command.value
    written = []
    for fmt in config.formats:
        if fmt == OutputFormat.CSV:
            written.append(_write(out_dir / f"{stem}.csv", render_csv(result, config)))
        elif fmt == OutputFormat.JSON:
            written.append(_write(out_dir / f"{stem}.json", render_json(result_document(result, config))))
        elif fmt == OutputFormat.SVG:
            written.append(_write(out_dir / f"{stem}.svg", render_svg(result, config)))
        elif fmt == OutputFormat.BIN:
            for name, grid in sorted(result.grids.items()):
                written.append(_write(out_dir / f"{stem}_{name}.bin", grid.to_bytes()))
                sidecar = {"grid": grid.spec.as_dict(), "n_modes": grid.n_modes, "provenance": provenance(config)}
                written.append(_write(out_dir / f"{stem}_{name}.json", render_json(sidecar)))
    return written
