"""``trayforge`` command line.

Exit codes: 0 ok, 1 I/O or malformed input, 2 width or depth overflow,
3 length overflow, 4 invalid layout, 5 empty mask, 6 singular calibration,
7 incomplete replay, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .catalog import load_catalog, load_checklist, load_padding, load_policy, load_tray
from .errors import (
    DepthOverflow, EmptyMask, InvalidLayout, LengthOverflow, SingularCalibration,
    TrayforgeError, WidthOverflow,
)
from .packer import (
    DIVIDER_ENTRY, HOLDER_ENTRY, dumps_layout, load_layout, pack, placement_order,
)
from .pose import estimate_pose, load_calibration, mask_from_contour, read_contour_csv, read_pgm
from .render import render_svg
from .sequencer import DISCARD, DONE, HOLD, Action, on_detected, read_events, start
from .simkit import (
    HUMAN_LOOSE, NO_ALGORITHM, ExcitationProfile, baseline_from_layout, run_study, scene_from_layout,
)

EXIT_OK, EXIT_IO, EXIT_WIDTH, EXIT_LENGTH, EXIT_LAYOUT = 0, 1, 2, 3, 4
EXIT_MASK, EXIT_CALIBRATION, EXIT_INCOMPLETE, EXIT_USAGE = 5, 6, 7, 64

SEED_ENV = "TRAYFORGE_SEED"

# most specific first
_EXIT_CODES = (
    (WidthOverflow, EXIT_WIDTH),
    (DepthOverflow, EXIT_WIDTH),
    (LengthOverflow, EXIT_LENGTH),
    (InvalidLayout, EXIT_LAYOUT),
    (EmptyMask, EXIT_MASK),
    (SingularCalibration, EXIT_CALIBRATION),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _seed_default() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# -- subcommands --------------------------------------------------------------

def cmd_pack(args) -> int:
    catalog = load_catalog(args.catalog)
    checklist = load_checklist(args.checklist)
    tray = load_tray(args.tray)
    padding = load_padding(args.padding) if args.padding else None
    policy = load_policy(args.policy) if args.policy else None
    layout = pack(checklist, catalog, tray, padding, policy)
    _write(args.out, dumps_layout(layout))
    if args.svg:
        Path(args.svg).write_text(render_svg(layout))
    return EXIT_OK


def _layout_from_args(args):
    if args.layout:
        return load_layout(args.layout)
    missing = [f"--{n}" for n in ("catalog", "checklist", "tray") if getattr(args, n) is None]
    if missing:
        raise UsageError(f"simulate needs --layout or all of --catalog --checklist --tray (missing {' '.join(missing)})")
    return pack(load_checklist(args.checklist), load_catalog(args.catalog), load_tray(args.tray))


def format_table(reports) -> str:
    """Condition rows against one mode column, ``mean (std.)`` cells."""
    reports = list(reports)
    mode = reports[0].mode if reports else ""
    header = f"{'condition':<10} {mode + ' mean collision (std.)':<36} cohen's d vs A"
    lines = [header, "-" * len(header)]
    for r in reports:
        d = "-" if r.cohens_d_vs_A is None else f"{r.cohens_d_vs_A:.3f}"
        lines.append(f"{r.condition:<10} {f'{r.mean:.2f} ({r.std:.2f})':<36} {d}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    layout = _layout_from_args(args)
    seed = args.seed if args.seed is not None else _seed_default()
    baselines = args.baseline or ["a", "b"]
    conditions = {}
    # fixed A, B, C order regardless of flag order
    for kind in (HUMAN_LOOSE, NO_ALGORITHM):
        if kind.lower() in baselines:
            conditions[kind] = (lambda k: lambda s: baseline_from_layout(layout, k, s))(kind)
    conditions["C"] = scene_from_layout(layout)
    profile = ExcitationProfile(args.mode)
    reports = run_study(conditions, profile, args.trials, base_seed=seed, workers=args.workers)
    if args.trials == 1:
        print("warning: a single trial has zero spread; Cohen's d is not reported", file=sys.stderr)
    payload = [r.to_dict() for r in reports.values()]
    _write(args.out, json.dumps(payload, indent=2) + "\n")
    sys.stdout.write(format_table(reports.values()))
    return EXIT_OK


def cmd_pose(args) -> int:
    calib = load_calibration(args.calib)
    if args.mask.lower().endswith(".csv"):
        mask = mask_from_contour(read_contour_csv(args.mask), resolution=args.scale)
    else:
        mask = read_pgm(args.mask)
    sys.stdout.write(json.dumps(estimate_pose(mask, calib).to_dict()) + "\n")
    return EXIT_OK


def _action_record(action: Action, layout, placements, holders) -> dict:
    rec = {"action": action.kind}
    if action.kind == DONE:
        return rec
    rec["id"] = action.id
    if action.kind in (HOLD, DISCARD):
        return rec
    rec["instance"] = action.instance
    if action.id == DIVIDER_ENTRY:
        d = layout.dividers[action.instance]
        rec.update(x_mm=round(d.x_mm, 6), y_mm=round(d.y_mm, 6))
    elif action.id == HOLDER_ENTRY:
        rec["y_mm"] = round(holders[action.instance].y_mm, 6)
    else:
        p = placements[(action.id, action.instance)]
        rec.update(x_mm=round(p.x_mm, 6), y_mm=round(p.y_mm, 6), z_mm=round(p.z_mm, 6), layer=p.layer)
    return rec


def cmd_replay(args) -> int:
    layout = load_layout(args.layout)
    with open(args.events) as fh:
        detections = read_events(fh)
    placements = {p.key: p for p in layout.placements}
    holders = {h.column: h for h in layout.holders}
    state, actions = start(placement_order(layout))
    for d in detections:
        if state.complete:
            # nothing left to place; the robot sets it aside
            actions.append(Action(DISCARD, d))
            continue
        state, acts = on_detected(state, d)
        actions.extend(acts)
    if state.complete and not any(a.kind == DONE for a in actions):
        actions.append(Action(DONE))  # empty plan
    lines = [json.dumps(_action_record(a, layout, placements, holders)) for a in actions]
    _write(args.out, "".join(line + "\n" for line in lines))
    if not state.complete:
        missing = ", ".join(f"{i}#{k}" for i, k in state.remaining())
        print(f"incomplete: missing {missing}", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trayforge", description="Sterile tray layout, pose, sequencing and collision simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{pack,simulate,pose,replay}")
    sub.required = True

    p = sub.add_parser("pack", help="compute a tray layout")
    p.add_argument("--catalog", required=True, metavar="F", help="instrument catalog JSON")
    p.add_argument("--checklist", required=True, metavar="F", help="procedure checklist JSON")
    p.add_argument("--tray", required=True, metavar="F", help="tray dimensions JSON")
    p.add_argument("--padding", metavar="F", help="padding JSON (default 5 mm each axis)")
    p.add_argument("--policy", metavar="F", help="merge policy JSON (default ring/needle/thumb/gun levels)")
    p.add_argument("--out", required=True, metavar="F", help="layout JSON output ('-' for stdout)")
    p.add_argument("--svg", metavar="F", help="optional SVG top view")
    p.set_defaults(func=cmd_pack)

    s = sub.add_parser("simulate", help="collision study over seeded trials")
    s.add_argument("--layout", metavar="F", help="layout JSON for condition C")
    s.add_argument("--catalog", metavar="F", help="catalog JSON (packs a layout when --layout is absent)")
    s.add_argument("--checklist", metavar="F", help="checklist JSON (with --catalog and --tray)")
    s.add_argument("--tray", metavar="F", help="tray JSON (with --catalog and --checklist)")
    s.add_argument("--baseline", action="append", choices=("a", "b"),
                   help="baseline condition to include; repeatable (default: a and b)")
    s.add_argument("--trials", type=_positive_int, default=5, metavar="N", help="trials per condition (default 5)")
    s.add_argument("--mode", choices=("displacement", "tilt"), default="displacement", help="excitation mode")
    s.add_argument("--seed", type=int, metavar="S", help=f"base seed (default ${SEED_ENV} or 0)")
    s.add_argument("--workers", type=_positive_int, default=1, metavar="N", help="worker threads (default 1)")
    s.add_argument("--out", required=True, metavar="F", help="study report JSON output ('-' for stdout)")
    s.set_defaults(func=cmd_simulate)

    q = sub.add_parser("pose", help="estimate an instrument pose from a mask")
    q.add_argument("--mask", required=True, metavar="F", help="binary PGM (P5) or contour CSV")
    q.add_argument("--calib", required=True, metavar="F", help="calibration JSON with a 3x3 homography")
    q.add_argument("--scale", type=float, default=1.0, metavar="PX", help="pixels per contour unit for CSV input")
    q.set_defaults(func=cmd_pose)

    r = sub.add_parser("replay", help="replay detection events against a layout")
    r.add_argument("--layout", required=True, metavar="F", help="layout JSON")
    r.add_argument("--events", required=True, metavar="F", help="detection events, JSON lines")
    r.add_argument("--out", required=True, metavar="F", help="action JSON lines output ('-' for stdout)")
    r.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"trayforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrayforgeError as exc:
        code = next((c for cls, c in _EXIT_CODES if isinstance(exc, cls)), EXIT_IO)
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    except (OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
