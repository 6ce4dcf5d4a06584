"""File-artifact pipeline stages behind the command-line interface.

Each stage reads the artifacts of earlier stages under the output directory
and writes its own; no stage modifies its inputs. Stage functions take a
:class:`~hsirecon.config.PipelineConfig` and return the list of paths they
wrote.
"""

from __future__ import annotations

import csv
import logging
import time
from pathlib import Path

import numpy as np

from .chemometrics import (
    TABLE_COLUMNS,
    PLSRegression,
    SpectraTable,
    SplitAssignment,
    dry_matter_percent,
    evaluate_splits,
    fit_plsr,
    random_split,
    select_lv_loocv,
)
from .explain import mean_abs_shap
from .ga import read_wavelengths, run_ga
from .hypercube import Hypercube, calibrate_reflectance, read_bil, render_rgb, select_bands, write_bil
from .nets import build_network, count_params_flops
from .segmentation import band_difference_mask, mean_spectrum, read_pbm, write_pbm
from .synth import generate_scene, reference_panels, scene_seed, to_raw
from .training import METRIC_COLUMNS, ReconPair, evaluate, train, write_metrics_table
from .viz import colorize, default_range, prediction_map, write_map_csv, write_ppm

log = logging.getLogger(__name__)


class MissingArtifact(FileNotFoundError):
    def __init__(self, path, producer):
        super().__init__(f"missing input {path}; run `hsirecon {producer}` first")
        self.path = path
        self.producer = producer


# artifact locations, relative to the output directory
LAYOUT = {
    "manifest": ("data/manifest.csv", "synth"),
    "white": ("data/white.hdr", "synth"),
    "dark": ("data/dark.hdr", "synth"),
    "raw": ("data/{id}.hdr", "synth"),
    "truth": ("data/{id}_truth.pbm", "synth"),
    "reflectance": ("calibrated/{id}.hdr", "calibrate"),
    "clamp_stats": ("calibrated/clamp_stats.csv", "calibrate"),
    "mask": ("masks/{id}.pbm", "segment"),
    "gt_spectra": ("spectra/gt.csv", "extract-spectra"),
    "rgb_features": ("spectra/rgb.csv", "extract-spectra"),
    "split": ("spectra/split.csv", "extract-spectra"),
    "ga_history": ("ga/history.csv", "ga-select"),
    "ga_wavelengths": ("ga/wavelengths.txt", "ga-select"),
    "plsr_model": ("plsr/{name}.model", "fit-plsr"),
    "plsr_table": ("tables/plsr_{name}.csv", "fit-plsr"),
    "shap_csv": ("shap/importance.csv", "shap"),
    "shap_svg": ("shap/importance.svg", "shap"),
    "net_params": ("recon/{arch}.params", "train-recon"),
    "net_history": ("recon/{arch}_history.csv", "train-recon"),
    "net_timing": ("recon/{arch}_seconds.txt", "train-recon"),
    "recon_metrics": ("tables/recon_metrics.csv", "eval-recon"),
    "recon_spectra": ("spectra/recon_{arch}.csv", "recon-spectra"),
    "recon_model": ("plsr/recon_{name}.model", "fit-plsr-recon"),
    "recon_table": ("tables/recon_plsr.csv", "fit-plsr-recon"),
    "map_ppm": ("maps/{id}_{name}.ppm", "predict-map"),
    "map_csv": ("maps/{id}_{name}.csv", "predict-map"),
    "map_range": ("maps/range.txt", "predict-map"),
    "report_table1": ("report/table1_plsr.csv", "report"),
    "report_table2": ("report/table2_reconstruction.csv", "report"),
    "report_table3": ("report/table3_recon_plsr.csv", "report"),
    "report_params": ("report/params_flops.csv", "report"),
}


class Artifacts:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, key, **fmt):
        return self.root / LAYOUT[key][0].format(**fmt)

    def output(self, key, **fmt):
        p = self.path(key, **fmt)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def input(self, key, **fmt):
        p = self.path(key, **fmt)
        if not p.exists():
            raise MissingArtifact(p, LAYOUT[key][1])
        return p


def _scene_ids(art):
    with open(art.input("manifest"), newline="") as fh:
        return [row["id"] for row in csv.DictReader(fh)]


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _read_split(art, ids):
    index = {sid: i for i, sid in enumerate(ids)}
    parts = {"train": [], "validation": [], "test": []}
    for row in _read_rows(art.input("split")):
        parts[row["split"]].append(index[row["id"]])
    return SplitAssignment(*(np.array(sorted(parts[k]), dtype=int) for k in ("train", "validation", "test")))


# stages


def synth(cfg):
    """Raw scenes, white/dark references, true masks and a weight manifest."""
    art = Artifacts(cfg.out_dir)
    scene_cfg = cfg.scene_config()
    seed = cfg.getint("synth", "seed")
    n = cfg.getint("synth", "n_scenes")
    shape = (scene_cfg.height, scene_cfg.width, scene_cfg.bands)
    white, dark = reference_panels(shape, scene_cfg.wavelengths, seed)
    written = [art.output("white"), art.output("dark")]
    write_bil(white, written[0])
    write_bil(dark, written[1])
    rng = np.random.default_rng([seed, 31337])
    rows = []
    for i in range(n):
        sid = f"scene_{i:03d}"
        scene = generate_scene(scene_cfg, scene_seed(seed, i))
        write_bil(to_raw(scene.cube, white, dark), art.output("raw", id=sid))
        write_pbm(scene.mask, art.output("truth", id=sid))
        # fresh and oven-dry weights whose ratio gives the planted attribute
        total = float(rng.uniform(150.0, 450.0))
        rows.append((sid, total, total * scene.attribute / 100.0))
    _write_rows(art.output("manifest"), ["id", "weight_total_g", "weight_dry_g"], rows)
    written.append(art.path("manifest"))
    return written


def calibrate(cfg):
    """Raw counts to reflectance for every scene."""
    art = Artifacts(cfg.out_dir)
    white = read_bil(art.input("white"))
    dark = read_bil(art.input("dark"))
    rows, written = [], []
    for sid in _scene_ids(art):
        cube, stats = calibrate_reflectance(read_bil(art.input("raw", id=sid)), white, dark, return_stats=True)
        out = art.output("reflectance", id=sid)
        write_bil(cube, out)
        written.append(out)
        rows.append((sid, stats["clamped_low"], stats["clamped_high"]))
    _write_rows(art.output("clamp_stats"), ["id", "clamped_low", "clamped_high"], rows)
    return written + [art.path("clamp_stats")]


def segment(cfg):
    """Band-difference foreground masks of the calibrated scenes."""
    art = Artifacts(cfg.out_dir)
    written = []
    for sid in _scene_ids(art):
        cube = read_bil(art.input("reflectance", id=sid))
        mask = band_difference_mask(
            cube,
            cfg.getfloat("segment", "wl_a"),
            cfg.getfloat("segment", "wl_b"),
            cfg.optional_float("segment", "threshold"),
            cfg.getbool("segment", "largest_only"),
        )
        out = art.output("mask", id=sid)
        write_pbm(mask, out)
        written.append(out)
    return written


def _roi_rgb(cube, mask):
    rgb = render_rgb(cube) / 255.0
    return rgb[mask].mean(axis=0)


def extract_spectra(cfg):
    """ROI mean spectra, ROI mean RGB features, and the train/validation/test split."""
    art = Artifacts(cfg.out_dir)
    ids = _scene_ids(art)
    y = [dry_matter_percent(float(r["weight_dry_g"]), float(r["weight_total_g"]))
         for r in _read_rows(art.input("manifest"))]
    spectra, rgb = [], []
    for sid in ids:
        cube = read_bil(art.input("reflectance", id=sid))
        mask = read_pbm(art.input("mask", id=sid))
        spectra.append(mean_spectrum(cube, mask).values)
        rgb.append(_roi_rgb(cube, mask))
        wavelengths = cube.wavelengths
    SpectraTable(ids, np.array(spectra), y, wavelengths).to_csv(art.output("gt_spectra"))
    SpectraTable(ids, np.array(rgb), y, [599.0, 549.0, 449.0]).to_csv(art.output("rgb_features"))
    split = random_split(len(ids), cfg.split_ratios(), cfg.getint("split", "seed"))
    labels = {}
    for name, idx in (("train", split.train), ("validation", split.validation), ("test", split.test)):
        for i in idx:
            labels[i] = name
    _write_rows(art.output("split"), ["id", "split"], [(sid, labels[i]) for i, sid in enumerate(ids)])
    return [art.path("gt_spectra"), art.path("rgb_features"), art.path("split")]


def ga_select(cfg):
    """Genetic band selection on the calibration rows of the GT spectra."""
    art = Artifacts(cfg.out_dir)
    table = SpectraTable.from_csv(art.input("gt_spectra"))
    split = _read_split(art, table.ids)
    result = run_ga(table.subset(split.train), cfg.ga_config())
    result.write(art.output("ga_history"), art.output("ga_wavelengths"))
    return [art.path("ga_history"), art.path("ga_wavelengths")]


def _band_columns(table, wavelengths):
    cols = [int(np.argmin(np.abs(table.wavelengths - w))) for w in wavelengths]
    return sorted(cols)


def _fit_table_model(table, split, max_lv):
    train_rows = table.subset(split.train)
    max_lv = max(1, min(max_lv, table.n_bands, len(split.train) - 2))
    best, _ = select_lv_loocv(train_rows, max_lv)
    model = fit_plsr(train_rows, best)
    return model, evaluate_splits(model, table, split)


def fit_plsr_stage(cfg):
    """PLSR on GT spectra: full range and GA-selected bands."""
    art = Artifacts(cfg.out_dir)
    table = SpectraTable.from_csv(art.input("gt_spectra"))
    split = _read_split(art, table.ids)
    ga_wl = read_wavelengths(art.input("ga_wavelengths"))
    variants = {"full": table, "ga": table.subset(columns=_band_columns(table, ga_wl))}
    written = []
    for name, sub in variants.items():
        model, row = _fit_table_model(sub, split, cfg.getint("plsr", "max_lv"))
        model.save(art.output("plsr_model", name=name))
        _write_rows(art.output("plsr_table", name=name), TABLE_COLUMNS, [[row[c] for c in TABLE_COLUMNS]])
        written += [art.path("plsr_model", name=name), art.path("plsr_table", name=name)]
    return written


def shap_stage(cfg):
    """Mean |SHAP| per wavelength of the full-range model on the test rows."""
    art = Artifacts(cfg.out_dir)
    table = SpectraTable.from_csv(art.input("gt_spectra"))
    split = _read_split(art, table.ids)
    model = PLSRegression.load(art.input("plsr_model", name="full"))
    report = mean_abs_shap(model, table.X[split.train], table.X[split.test], table.wavelengths)
    report.write_csv(art.output("shap_csv"))
    report.write_svg(art.output("shap_svg"), top=15)
    return [art.path("shap_csv"), art.path("shap_svg")]


def _recon_pairs(art, ids, idx):
    pairs = []
    for i in idx:
        cube = read_bil(art.input("reflectance", id=ids[i]))
        pairs.append(ReconPair.from_cube(cube, read_pbm(art.input("mask", id=ids[i]))))
    return pairs


def train_recon(cfg):
    """Train every configured network on the training scenes."""
    art = Artifacts(cfg.out_dir)
    ids = _scene_ids(art)
    art.input("gt_spectra")
    split = _read_split(art, ids)
    train_pairs = _recon_pairs(art, ids, split.train)
    val_pairs = _recon_pairs(art, ids, split.validation)
    bands = train_pairs[0].cube.shape[0]
    written = []
    for arch in cfg.architectures():
        net = build_network(cfg.model_spec(arch, bands), seed=cfg.getint("train", "seed"))
        start = time.perf_counter()
        history = train(net, train_pairs, cfg.train_config(arch), val_pairs,
                        log=lambda e, h, a=arch: log.info("%s epoch %d loss %.5f", a, e, h.loss[-1]))
        elapsed = time.perf_counter() - start
        net.save(art.output("net_params", arch=arch))
        history.write_csv(art.output("net_history", arch=arch))
        written += [art.path("net_params", arch=arch), art.path("net_history", arch=arch)]
        timing = art.path("net_timing", arch=arch)
        if cfg.getbool("report", "timing"):
            timing.write_text(f"{elapsed:.1f}\n")
            written.append(timing)
        elif timing.exists():
            timing.unlink()  # stale from an earlier timed run
        log.info("%s: best epoch %d, knee epoch %d", arch, history.best_epoch, history.knee_epoch)
    return written


def _load_network(cfg, art, arch, bands):
    net = build_network(cfg.model_spec(arch, bands), seed=cfg.getint("train", "seed"))
    return net.load(art.input("net_params", arch=arch))


def eval_recon(cfg):
    """Masked MRAE/RMSE/PSNR of each trained network on validation and test scenes."""
    art = Artifacts(cfg.out_dir)
    ids = _scene_ids(art)
    split = _read_split(art, ids)
    val_pairs = _recon_pairs(art, ids, split.validation)
    test_pairs = _recon_pairs(art, ids, split.test)
    bands = test_pairs[0].cube.shape[0]
    rows = []
    for arch in cfg.architectures():
        net = _load_network(cfg, art, arch, bands)
        val, test = evaluate(net, val_pairs), evaluate(net, test_pairs)
        row = {"method": arch, "MRAE_val": val["mrae"], "RMSE_val": val["rmse"],
               "MRAE_test": test["mrae"], "RMSE_test": test["rmse"], "PSNR": test["psnr"]}
        timing = art.path("net_timing", arch=arch)
        if cfg.getbool("report", "timing") and timing.exists():
            row["wall_clock_s"] = timing.read_text().strip()
        rows.append(row)
    write_metrics_table(rows, art.output("recon_metrics"))
    return [art.path("recon_metrics")]


def recon_spectra(cfg):
    """ROI mean spectra of the cubes each network reconstructs from RGB renders."""
    art = Artifacts(cfg.out_dir)
    gt = SpectraTable.from_csv(art.input("gt_spectra"))
    written = []
    nets = {arch: _load_network(cfg, art, arch, gt.n_bands) for arch in cfg.architectures()}
    spectra = {arch: [] for arch in nets}
    for sid in gt.ids:
        pair = ReconPair.from_cube(read_bil(art.input("reflectance", id=sid)), read_pbm(art.input("mask", id=sid)))
        for arch, net in nets.items():
            spectra[arch].append(net.predict(pair.rgb)[:, pair.mask].mean(axis=1))
    for arch in nets:
        out = art.output("recon_spectra", arch=arch)
        SpectraTable(gt.ids, np.array(spectra[arch]), gt.y, gt.wavelengths).to_csv(out)
        written.append(out)
    return written


def fit_plsr_recon(cfg):
    """GA-band PLSR on GT and reconstructed spectra, plus the 3-feature RGB baseline."""
    art = Artifacts(cfg.out_dir)
    gt = SpectraTable.from_csv(art.input("gt_spectra"))
    split = _read_split(art, gt.ids)
    cols = _band_columns(gt, read_wavelengths(art.input("ga_wavelengths")))
    sources = {"RGB": SpectraTable.from_csv(art.input("rgb_features")), "GT": gt.subset(columns=cols)}
    for arch in cfg.architectures():
        sources[arch] = SpectraTable.from_csv(art.input("recon_spectra", arch=arch)).subset(columns=cols)
    rows, written = [], []
    for name, table in sources.items():
        model, row = _fit_table_model(table, split, cfg.getint("plsr", "max_lv"))
        model.save(art.output("recon_model", name=name))
        written.append(art.path("recon_model", name=name))
        rows.append([name] + [row[c] for c in TABLE_COLUMNS])
    _write_rows(art.output("recon_table"), ("input",) + TABLE_COLUMNS, rows)
    return written + [art.path("recon_table")]


def predict_map(cfg):
    """Per-pixel attribute maps of one scene from GT and reconstructed cubes."""
    art = Artifacts(cfg.out_dir)
    ids = _scene_ids(art)
    split = _read_split(art, ids)
    sid = cfg.get("map", "sample").strip() or ids[int(split.test[0])]
    if sid not in ids:
        raise ValueError(f"map.sample {sid!r} is not a scene id")
    cube = read_bil(art.input("reflectance", id=sid))
    mask = read_pbm(art.input("mask", id=sid))
    ga_wl = read_wavelengths(art.input("ga_wavelengths"))
    maps = {"GT": prediction_map(select_bands(cube, ga_wl), PLSRegression.load(art.input("plsr_model", name="ga")), mask)}
    pair = ReconPair.from_cube(cube, mask)
    for arch in cfg.architectures():
        net = _load_network(cfg, art, arch, cube.bands)
        recon = Hypercube(net.predict(pair.rgb).transpose(1, 2, 0), cube.wavelengths)
        model = PLSRegression.load(art.input("recon_model", name=arch))
        maps[arch] = prediction_map(select_bands(recon, ga_wl), model, mask)
    value_range = cfg.map_range() or default_range(*maps.values())
    written = []
    for name, amap in maps.items():
        write_ppm(colorize(amap, value_range), art.output("map_ppm", id=sid, name=name))
        write_map_csv(amap, art.output("map_csv", id=sid, name=name))
        written += [art.path("map_ppm", id=sid, name=name), art.path("map_csv", id=sid, name=name)]
    art.output("map_range").write_text(f"{value_range[0]!r} {value_range[1]!r}\n")
    return written + [art.path("map_range")]


def report(cfg):
    """Collect stage outputs into summary tables."""
    art = Artifacts(cfg.out_dir)
    rows = []
    for name in ("full", "ga"):
        row = _read_rows(art.input("plsr_table", name=name))[0]
        rows.append([name] + [row[c] for c in TABLE_COLUMNS])
    _write_rows(art.output("report_table1"), ("model",) + TABLE_COLUMNS, rows)

    metrics = _read_rows(art.input("recon_metrics"))
    _write_rows(art.output("report_table2"), METRIC_COLUMNS, [[r[c] for c in METRIC_COLUMNS] for r in metrics])

    recon = _read_rows(art.input("recon_table"))
    _write_rows(art.output("report_table3"), ("input",) + TABLE_COLUMNS,
                [[r["input"]] + [r[c] for c in TABLE_COLUMNS] for r in recon])

    psnr = {r["method"]: r["PSNR"] for r in metrics}
    scene_cfg = cfg.scene_config()
    prow = []
    for arch in cfg.architectures():
        counts = count_params_flops(cfg.model_spec(arch, scene_cfg.bands), scene_cfg.height, scene_cfg.width)
        prow.append([arch, counts["params"], counts["macs"], psnr.get(arch, "")])
    _write_rows(art.output("report_params"), ("method", "params", "macs", "PSNR"), prow)
    return [art.path(k) for k in ("report_table1", "report_table2", "report_table3", "report_params")]


STAGES = {
    "synth": synth,
    "calibrate": calibrate,
    "segment": segment,
    "extract-spectra": extract_spectra,
    "ga-select": ga_select,
    "fit-plsr": fit_plsr_stage,
    "shap": shap_stage,
    "train-recon": train_recon,
    "eval-recon": eval_recon,
    "recon-spectra": recon_spectra,
    "fit-plsr-recon": fit_plsr_recon,
    "predict-map": predict_map,
    "report": report,
}


def run_all(cfg):
    written = []
    for name, stage in STAGES.items():
        log.info("stage %s", name)
        written += stage(cfg)
    return written
