"""``toneaudit`` command line: tones -> audit -> report, plus compare.

Exit codes: 0 success, 1 run failure (nothing usable, or warnings under
``--strict``), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from collections import Counter
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .dataset_io import (
    AuditConfig,
    ConfigError,
    ManifestError,
    SCHEMA_VERSION,
    atomic_writer,
    emit_heatmap_data,
    list_images,
    load_config,
    load_manifest,
    read_report_json,
    read_tone_csv,
    report_document,
    write_gaps_csv,
    write_report_json,
    write_tone_csv,
)
from .pipeline import TAXONOMIES, audit, estimate_tones
from .stratification import ALL_GROUPS, compare_taxonomies

log = logging.getLogger("toneaudit")

CONFIG_ENV = "TONEAUDIT_CONFIG"


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _resolve_config(path: str | None) -> AuditConfig:
    path = path or os.environ.get(CONFIG_ENV) or None
    if path is not None and not Path(path).is_file():
        raise CliError(f"config file not found: {path}", code=2)
    try:
        return load_config(path)
    except ConfigError as exc:
        raise CliError(str(exc), code=2) from exc


def _taxonomies(choice: str) -> tuple[str, ...]:
    return TAXONOMIES if choice == "both" else (choice,)


def _write_sidecar(path: Path, command: str, args: argparse.Namespace, extra: dict | None = None) -> None:
    meta = {
        "command": command,
        "tool_version": __version__,
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "threads": args.threads,
        "taxonomy": args.taxonomy,
        "config": args.config or os.environ.get(CONFIG_ENV),
        **(extra or {}),
    }
    with atomic_writer(path, newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_for(out: Path) -> Path:
    return out.with_name(out.name + ".run.json")


def _group_summary(records, taxonomies) -> str:
    lines = []
    for name in taxonomies:
        attr = {"ita": "group_ita", "hl": "group_hl"}[name]
        counts = Counter(getattr(r, attr) for r in records if not r.exclusion_reason)
        parts = ", ".join(f"{g.value}={counts.get(g, 0)}" for g in ALL_GROUPS)
        lines.append(f"{name}: {parts}")
    reasons = Counter(r.exclusion_reason for r in records if r.exclusion_reason)
    lines.append("excluded: " + (", ".join(f"{k}={v}" for k, v in sorted(reasons.items())) or "none"))
    return "\n".join(lines)


def cmd_tones(args: argparse.Namespace) -> int:
    config = _resolve_config(args.config)
    root = Path(args.image_dir)
    if not root.is_dir():
        raise CliError(f"not a directory: {root}")
    paths = list_images(root)
    if not paths:
        raise CliError(f"no images found in {root}")
    records = estimate_tones(paths, root, config, threads=args.threads)
    failed = [r.sample_id for r in records if r.exclusion_reason == "decode_error"]
    if failed and args.strict:
        raise CliError(f"{len(failed)} image(s) could not be decoded: {', '.join(failed[:5])}")
    out = Path(args.out)
    write_tone_csv(records, out)
    _write_sidecar(_sidecar_for(out), "tones", args, {"images": len(records)})
    classified = sum(1 for r in records if not r.exclusion_reason)
    print(f"{len(records)} images, {classified} classified")
    print(_group_summary(records, _taxonomies(args.taxonomy)))
    return 0


def cmd_audit(args: argparse.Namespace) -> int:
    config = _resolve_config(args.config)
    tones = read_tone_csv(args.tone_csv)
    try:
        manifest = load_manifest(args.manifest, config)
    except ManifestError as exc:
        raise CliError("manifest rejected:\n  " + "\n  ".join(exc.problems), code=2) from exc
    result = audit(tones, manifest, config, _taxonomies(args.taxonomy))
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if result.joined == 0:
        raise CliError("no manifest row joined a classified tone record")
    if result.warnings and args.strict:
        raise CliError("warnings treated as errors (--strict)")
    doc = report_document(result.reports, config, result.excluded, result.warnings)
    out = Path(args.out)
    write_report_json(doc, out)
    _write_sidecar(_sidecar_for(out), "audit", args, {"joined": result.joined})
    for name, rep in result.reports.items():
        gaps = {k: getattr(rep, k) for k in ("f1_gap", "accuracy_equality", "tpr_disparity")}
        shown = ", ".join(f"{k}={'undefined' if g is None else f'{g.value:.3f}'}" for k, g in gaps.items())
        print(f"{name}: {rep.n_records} records; {shown}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    tones = read_tone_csv(args.tone_csv)
    cmp = compare_taxonomies((t.group_ita, t.group_hl) for t in tones if not t.exclusion_reason)
    doc = {"schema_version": SCHEMA_VERSION, **cmp.to_dict()}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        with atomic_writer(out, newline="\n") as fh:
            fh.write(text)
        _write_sidecar(_sidecar_for(out), "compare", args)
    header = "ITA \\ H*L*".ljust(14) + "".join(g.value.rjust(14) for g in ALL_GROUPS)
    print(header)
    for r in ALL_GROUPS:
        print(r.value.ljust(14) + "".join(str(cmp.counts[r][c]).rjust(14) for c in ALL_GROUPS))
    rate = cmp.agreement_rate
    print(f"agreement rate: {'undetermined' if rate is None else f'{rate:.4f}'} over {cmp.total}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    doc = read_report_json(args.report_json)
    wanted = set(_taxonomies(args.taxonomy))
    doc = {**doc, "taxonomies": {k: v for k, v in doc["taxonomies"].items() if k in wanted}}
    out_dir = Path(args.out)
    written = []
    try:
        for name, writer in (("heatmap.csv", emit_heatmap_data), ("gaps.csv", write_gaps_csv)):
            writer(doc, out_dir / name)
            written.append(out_dir / name)
    except BaseException:
        for p in written:
            with contextlib.suppress(FileNotFoundError):
                p.unlink()
        raise
    _write_sidecar(out_dir / "run.json", "report", args, {"source": str(args.report_json)})
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON audit config (falls back to ${CONFIG_ENV})")
    common.add_argument("--threads", type=int, default=1, help="worker threads for per-image work")
    common.add_argument("--taxonomy", choices=("ita", "hl", "both"), default="both")
    common.add_argument("--strict", action="store_true", help="treat warnings as errors")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="toneaudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tones", parents=[common], help="estimate skin tone groups for a directory of face crops")
    p.add_argument("image_dir")
    p.add_argument("--out", required=True, help="tone CSV to write")
    p.set_defaults(func=cmd_tones)

    p = sub.add_parser("audit", parents=[common], help="score predictions per tone group")
    p.add_argument("tone_csv")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="report JSON to write")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("compare", parents=[common], help="cross-tabulate ITA against H*-L* groups")
    p.add_argument("tone_csv")
    p.add_argument("--out", help="comparison JSON to write (table is always printed)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", parents=[common], help="export heatmap and gap CSVs from a report")
    p.add_argument("report_json")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("toneaudit: error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except CliError as exc:
        print(f"toneaudit: error: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError) as exc:
        print(f"toneaudit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
