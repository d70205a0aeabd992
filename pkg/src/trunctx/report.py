"""Merge the summaries of many runs into ``report.json`` and ``report.md``."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .io import write_json

log = logging.getLogger(__name__)

__all__ = ["Report", "emit_reports"]

_ENVELOPE = ("experiment", "version", "config_hash", "geometry_hash", "seed",
             "resolution", "columns", "rows")


@dataclass
class Report:
    json_path: Path
    md_path: Path
    runs: list
    skipped: int
    links: list


def _load_run(manifest_path: Path) -> dict:
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    for key in ("experiment", "config_hash", "geometry_hash"):
        if key not in manifest:
            raise ValueError(f"manifest lacks {key!r}")
    summary = json.loads((manifest_path.parent / "summary.json").read_text(encoding="utf-8"))
    return {"dir": str(manifest_path.parent), "experiment": manifest["experiment"],
            "config_hash": manifest["config_hash"], "geometry_hash": manifest["geometry_hash"],
            "summary": summary}


def _links(runs: list) -> list:
    """Pair svd and cost-curve runs that share a geometry."""
    by_geom: dict[str, dict[str, list]] = {}
    for r in runs:
        by_geom.setdefault(r["geometry_hash"], {}).setdefault(r["experiment"], []).append(r)
    out = []
    for geom, kinds in sorted(by_geom.items()):
        for svd in kinds.get("svd", []):
            for cost in kinds.get("cost-curve", []):
                out.append({
                    "geometry_hash": geom,
                    "svd_run": svd["dir"],
                    "cost_curve_run": cost["dir"],
                    "decay_rate": svd["summary"].get("c"),
                    "cost_C": cost["summary"].get("C"),
                    "cost_sigma": cost["summary"].get("sigma"),
                    "cost_power_slope": cost["summary"].get("power_slope"),
                })
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return "" if v is None else str(v)


def _markdown(runs: list, links: list, skipped: int) -> str:
    lines = ["# trunctx report", "", f"Runs: {len(runs)}; skipped manifests: {skipped}", ""]
    kinds = sorted({r["experiment"] for r in runs})
    for kind in kinds:
        group = [r for r in runs if r["experiment"] == kind]
        keys = sorted({k for r in group for k in r["summary"] if k not in _ENVELOPE})
        lines += [f"## {kind}", "", "| run | resolution | " + " | ".join(keys) + " |",
                  "|" + "---|" * (len(keys) + 2)]
        for r in group:
            s = r["summary"]
            cells = [Path(r["dir"]).name, _fmt(s.get("resolution"))]
            cells += [_fmt(s.get(k)) for k in keys]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
    if links:
        lines += ["## Decay rate vs cost growth", "",
                  "| geometry | svd run | cost-curve run | decay rate c | C | sigma | power slope |",
                  "|---|---|---|---|---|---|---|"]
        for ln in links:
            lines.append("| " + " | ".join([
                ln["geometry_hash"][:12], Path(ln["svd_run"]).name,
                Path(ln["cost_curve_run"]).name, _fmt(ln["decay_rate"]), _fmt(ln["cost_C"]),
                _fmt(ln["cost_sigma"]), _fmt(ln["cost_power_slope"])]) + " |")
        lines.append("")
    return "\n".join(lines)


def emit_reports(results_dir) -> Report:
    """Collect every ``manifest.json`` below ``results_dir``.

    Unreadable runs are skipped with a warning and counted. Raises
    :class:`ValidationError` if there is no manifest at all.
    """
    root = Path(results_dir)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    manifests = sorted(root.rglob("manifest.json"))
    if not manifests:
        raise ValidationError(f"no manifest.json found under {root}")
    runs, skipped = [], 0
    for m in manifests:
        try:
            runs.append(_load_run(m))
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", m.parent, exc)
            skipped += 1
    links = _links(runs)
    json_path = write_json(root / "report.json", {"runs": runs, "skipped": skipped,
                                                  "links": links})
    md_path = root / "report.md"
    md_path.write_text(_markdown(runs, links, skipped), encoding="utf-8")
    return Report(json_path, md_path, runs, skipped, links)
