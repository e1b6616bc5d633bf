"""Command-line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error. Stochastic
subcommands require an explicit --seed; machine-readable output goes to
files or stdout, prose to stderr.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .errors import LgeToolsError, ValidationError
from .metrics import MetricRow, evaluate_pair
from .perturb import PerturbationConfig, apply_perturbations
from .phantom import AngleRange, MvoCore, PhantomSpec, ScarWedge, make_phantom
from .roi import extract_roi_stack, lv_mask_from_labels, normalize
from .seg5sd import RemoteRoi, report_to_csv, report_to_json, segment_volume_5sd
from .stats import bland_altman, lin_ccc, wilcoxon_signed_rank
from .volume import INFARCT_CLASSES, ClassId, Spacing, load_volume, save_volume


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ValidationError(f"{what} needs {n} comma-separated values, got {len(parts)}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"{what}: {exc}")


def _ints(text: str, n: int, what: str) -> tuple[int, ...]:
    return tuple(int(v) for v in _floats(text, n, what))


@click.group()
@click.option(
    "--config",
    "config_file",
    default=None,
    type=click.Path(),
    help="JSON file with per-subcommand flag defaults, e.g. {\"phantom\": {\"dims\": \"32,32,4\"}}",
)
@click.pass_context
def cli(ctx, config_file):
    """Segmentation mask tooling: phantoms, ROI excision, 5-SD thresholding,
    perturbation, evaluation metrics, agreement statistics, rating service."""
    if config_file:
        try:
            defaults = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"--config is not valid JSON: {exc}")
        if not isinstance(defaults, dict):
            raise ValidationError("--config must hold an object of per-subcommand defaults")
        ctx.default_map = defaults


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", required=True, type=int)
@click.option("--dims", default="64,64,8", show_default=True)
@click.option("--spacing", default="2.2,1.6,8.0,2.0", show_default=True, help="dx,dy,thickness,gap in mm")
@click.option("--inner-radius", default=10.0, show_default=True)
@click.option("--outer-radius", default=16.0, show_default=True)
@click.option("--center", default=None, help="cx,cy in px; defaults to the image center")
@click.option("--wedge", default="0.0,1.0472,2,6", show_default=True, help="start_rad,end_rad,z0,z1")
@click.option("--mvo", default=None, help="astart,aend,r0,r1,z0,z1 nested inside the wedge")
@click.option("--intensities", default="500,100,300,50", show_default=True, help="blood,remote,scar,mvo")
@click.option("--noise-sd", default=0.0, show_default=True)
def phantom(out_dir, seed, dims, spacing, inner_radius, outer_radius, center, wedge, mvo, intensities, noise_sd):
    """Generate a synthetic annulus phantom with exact ground truth."""
    nx, ny, nz = _ints(dims, 3, "--dims")
    dx, dy, th, gap = _floats(spacing, 4, "--spacing")
    cx, cy = _floats(center, 2, "--center") if center else ((nx - 1) / 2.0, (ny - 1) / 2.0)
    ws, we, wz0, wz1 = _floats(wedge, 4, "--wedge")
    mvo_core = None
    if mvo:
        a0, a1, r0, r1, z0, z1 = _floats(mvo, 6, "--mvo")
        mvo_core = MvoCore(angles=AngleRange(a0, a1), radial_band=(r0, r1), slice_range=(int(z0), int(z1)))
    spec = PhantomSpec(
        dims=(nx, ny, nz),
        spacing=Spacing(dx, dy, th, gap),
        inner_radius_px=inner_radius,
        outer_radius_px=outer_radius,
        center_px=(cx, cy),
        scar_wedge=ScarWedge(angles=AngleRange(ws, we), slice_range=(int(wz0), int(wz1))),
        mvo_core=mvo_core,
        intensities=_floats(intensities, 4, "--intensities"),
        noise_sd=noise_sd,
        seed=seed,
    )
    volume, truth = make_phantom(spec)
    save_volume(volume, out_dir)
    gt = {
        "counts": {str(int(c)): n for c, n in truth.counts.items()},
        "volumes_ml": {str(int(c)): v for c, v in truth.volumes_ml.items()},
    }
    (Path(out_dir) / "ground_truth.json").write_text(json.dumps(gt, indent=2, sort_keys=True) + "\n")
    click.echo(f"phantom written to {out_dir}", err=True)


@cli.command()
@click.option("--volume", "volume_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--size", default="128,128", show_default=True, help="w,h of the excised stack")
@click.option("--lv-mask", "lv_mask_dir", default=None, type=click.Path(), help="volume whose non-background labels are the LV detector output")
@click.option("--normalize", "do_normalize", is_flag=True, help="zero-mean/unit-std the excised image stack")
def roi(volume_dir, out_dir, size, lv_mask_dir, do_normalize):
    """Excise a centered stack around the LV and optionally normalize it."""
    vol = load_volume(volume_dir)
    w, h = _ints(size, 2, "--size")
    if lv_mask_dir:
        mask_vol = load_volume(lv_mask_dir)
        if mask_vol.dims != vol.dims:
            raise ValidationError("--lv-mask volume dims differ from --volume")
        lv = mask_vol.labels != int(ClassId.BACKGROUND)
    else:
        lv = lv_mask_from_labels(vol)
    out = extract_roi_stack(vol, lv, (w, h))
    if do_normalize:
        out = out.with_arrays(image=normalize(out.image).astype(np.float32))
    save_volume(out, out_dir)
    click.echo(f"ROI stack written to {out_dir}", err=True)


@cli.command()
@click.option("--volume", "volume_dir", required=True, type=click.Path())
@click.option("--roi", "roi_file", required=True, type=click.Path(), help='JSON {"slice_index": z, "pixels": [[x,y],...]}')
@click.option("--k", default=5.0, show_default=True)
@click.option("--min-component", default=1, show_default=True)
@click.option("--sd-floor", default=0.0, show_default=True)
@click.option("--out-json", default=None, type=click.Path())
@click.option("--out-csv", default=None, type=click.Path())
@click.option("--out-mask", default=None, type=click.Path(), help="write the thresholded volume (labels=scar) here")
def seg5sd(volume_dir, roi_file, k, min_component, sd_floor, out_json, out_csv, out_mask):
    """Threshold hyperenhanced myocardium at remote mean + k*SD."""
    vol = load_volume(volume_dir)
    roi_spec = json.loads(Path(roi_file).read_text(encoding="utf-8"))
    roi_obj = RemoteRoi(
        slice_index=int(roi_spec["slice_index"]),
        pixels=frozenset((int(x), int(y)) for x, y in roi_spec["pixels"]),
    )
    masks, report = segment_volume_5sd(
        vol, roi_obj, k=k, min_component_px=min_component, sd_floor=sd_floor
    )
    payload = report_to_json(report)
    if out_json:
        Path(out_json).write_text(payload + "\n")
    if out_csv:
        Path(out_csv).write_text(report_to_csv(report))
    if out_mask:
        labels = np.where(masks, np.uint8(ClassId.SCAR), np.uint8(ClassId.BACKGROUND))
        save_volume(vol.with_arrays(labels=labels), out_mask)
    if not (out_json or out_csv or out_mask):
        click.echo(payload)


@cli.command()
@click.option("--volume", "volume_dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--log", "log_file", required=True, type=click.Path())
@click.option("--seed", required=True, type=int)
@click.option("--p-delete", default=0.10, show_default=True)
@click.option("--p-nullify", default=0.10, show_default=True)
@click.option("--p-false-scar", default=0.10, show_default=True)
@click.option("--p-false-mvo", default=0.02, show_default=True)
@click.option("--p-intensity", default=0.10, show_default=True)
@click.option("--scar-percentile", default=85.0, show_default=True)
@click.option("--mvo-radius", default=1, show_default=True)
@click.option("--nullify-whole-volume", is_flag=True)
def perturb(volume_dir, out_dir, log_file, seed, p_delete, p_nullify, p_false_scar, p_false_mvo,
            p_intensity, scar_percentile, mvo_radius, nullify_whole_volume):
    """Apply seeded mask/intensity perturbations and write the replayable log."""
    vol = load_volume(volume_dir)
    config = PerturbationConfig(
        seed=seed,
        p_delete_class=p_delete,
        p_nullify=p_nullify,
        p_false_scar=p_false_scar,
        p_false_mvo=p_false_mvo,
        p_intensity=p_intensity,
        scar_percentile=scar_percentile,
        mvo_neighbor_radius_px=mvo_radius,
        nullify_whole_volume=nullify_whole_volume,
    )
    out, log = apply_perturbations(vol, config)
    save_volume(out, out_dir)
    Path(log_file).write_text(log.to_json() + "\n")
    click.echo(f"{len(log.events)} perturbation event(s) applied", err=True)


_METRIC_FIELDS = ("dice", "avd_ml", "avdr", "infarct_pct_pred", "infarct_pct_gt")


@cli.command("eval")
@click.option("--manifest", "manifest_file", required=True, type=click.Path(), help="CSV: patient_id,pred_path,gt_path")
@click.option("--out", "out_csv", required=True, type=click.Path())
@click.option("--summary", "summary_json", default=None, type=click.Path())
def eval_cmd(manifest_file, out_csv, summary_json):
    """Per-examination metrics for the infarct and MVO class sets."""
    with open(manifest_file, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError("manifest has no rows")
    required = {"patient_id", "pred_path", "gt_path"}
    if not required.issubset(rows[0].keys()):
        raise ValidationError(f"manifest needs columns {sorted(required)}")
    ids = [r["patient_id"] for r in rows]
    if len(set(ids)) != len(ids):
        raise ValidationError("manifest patient_id values must be unique")

    targets = {"infarct": INFARCT_CLASSES, "mvo": {ClassId.MVO}}
    results: list[MetricRow] = []
    for row in rows:
        pred = load_volume(row["pred_path"])
        truth = load_volume(row["gt_path"])
        for name, classes in targets.items():
            m = evaluate_pair(pred, truth, classes, name)
            results.append(dataclasses.replace(m, patient_id=row["patient_id"]))

    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "target", *_METRIC_FIELDS])
        for m in results:
            w.writerow([m.patient_id, m.target, *(repr(getattr(m, f)) for f in _METRIC_FIELDS)])

    if summary_json:
        summary = {}
        for name in targets:
            rows_t = [m for m in results if m.target == name]
            summary[name] = {
                f: {
                    "mean": float(np.mean([getattr(m, f) for m in rows_t])),
                    "sd": float(np.std([getattr(m, f) for m in rows_t], ddof=1)) if len(rows_t) > 1 else 0.0,
                }
                for f in _METRIC_FIELDS
            }
        Path(summary_json).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(f"{len(results)} metric rows written to {out_csv}", err=True)


@cli.command("stats")
@click.option("--in", "in_csv", required=True, type=click.Path())
@click.option("--pair", required=True, help="x_column,y_column")
@click.option("--out", "out_json", default=None, type=click.Path())
@click.option("--points-csv", default=None, type=click.Path(), help="paired points + Bland-Altman coordinates for plotting")
def stats_cmd(in_csv, pair, out_json, points_csv):
    """Concordance, Bland-Altman, and Wilcoxon on two CSV columns."""
    xcol, ycol = (p.strip() for p in pair.split(",", 1))
    with open(in_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValidationError("input CSV has no rows")
    for col in (xcol, ycol):
        if col not in rows[0]:
            raise ValidationError(f"column {col!r} not in {sorted(rows[0])}")
    x = [float(r[xcol]) for r in rows]
    y = [float(r[ycol]) for r in rows]
    ccc = lin_ccc(x, y)
    ba = bland_altman(x, y)
    report = {
        "n": len(x),
        "x_column": xcol,
        "y_column": ycol,
        "ccc": {"rho_c": ccc.rho_c, "ci_low": ccc.ci_low, "ci_high": ccc.ci_high},
        "bland_altman": dataclasses.asdict(ba),
        "wilcoxon_p": wilcoxon_signed_rank(x, y),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_json:
        Path(out_json).write_text(text + "\n")
    else:
        click.echo(text)
    if points_csv:
        with open(points_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "pair_mean", "pair_diff"])
            for xi, yi in zip(x, y):
                w.writerow([repr(xi), repr(yi), repr((xi + yi) / 2.0), repr(yi - xi)])


@cli.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--admin-token", required=True)
def serve(data_dir, port, host, admin_token):
    """Run the blinded rating service."""
    import uvicorn

    from .rating.service import create_app

    uvicorn.run(create_app(data_dir, admin_token), host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except LgeToolsError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
