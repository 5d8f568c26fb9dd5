"""End-to-end experiment: corpus -> features/targets -> EigenTongues -> MLPs -> quality reports.

Output directory layout (``cfg.out``)::

    corpus/                      generated .utr/.wav pairs + manifest.tsv
    prepared/features/<id>.feat  raw 50-dim MFCC+delta rows
    prepared/pixels/<id>.feat    64x64 bicubic-resized frames, one 4096 row per frame
    prepared/et/<id>.feat        128 EigenTongue coefficients per frame
    prepared/eigentongue.etb     basis fitted on training frames only
    prepared/feature_scaler.feat feature mean/std over training frames (2 x 50)
    prepared/split.tsv           per-utterance partition and validation tail length
    prepared/provenance.json     ids that fed basis and scaler fitting
    models/<system>.mlp, models/<system>.train.tsv, models/<system>.timing.json
    predictions/<system>/<id>.feat (+ frames/<id>/NNNN.pgm)
    reports/<system>/frames.csv, reports/table.txt, reports/table.csv, reports/baseline.txt
    sweep/ranking.txt, sweep/ranking.csv
"""

import hashlib
import json
import logging
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import eigentongue as et
from . import metrics
from .config import SystemSpec
from .dataio import load_utterance, read_manifest, validation_tail
from .errors import ConfigError, UltraTongueError
from .features import encode_matrix, read_matrix, utterance_feature_matrix
from .imaging import FRAME_SHAPE, RAW255, Frame, resize_stack, write_pgm
from .mlp import MlpSpec, Scaler, init_model, load_model, predict_matrix, save_model, train
from .synthetic import generate_corpus

log = logging.getLogger(__name__)

PREP_VERSION = "1"


def derived_seed(base, *keys):
    """Stable per-task seed: the base seed mixed with a CRC of the task keys."""
    return (int(base) * 1_000_003 + zlib.crc32("|".join(map(str, keys)).encode())) % (2 ** 31 - 1)


def _write_if_changed(path, data):
    path = Path(path)
    if path.exists() and path.read_bytes() == data:
        return False
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return True


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------

def run_gen(cfg, force=False):
    """Generate the synthetic corpus into ``cfg.corpus_dir`` unless a manifest is already there."""
    root = cfg.corpus_dir
    if (root / "manifest.tsv").exists() and not force:
        return read_manifest(root / "manifest.tsv")
    log.info("generating %d synthetic utterances in %s", cfg.n_utterances, root)
    return generate_corpus(root, cfg.seed, cfg.n_utterances, cfg.frames_per_utterance, cfg.noise)


def load_corpus_manifest(cfg, generate=True):
    path = cfg.corpus_dir / "manifest.tsv"
    if not path.exists():
        if generate and cfg.corpus_path is None:
            return run_gen(cfg)
        raise ConfigError(f"no corpus manifest at {path}")
    return read_manifest(path)


# ---------------------------------------------------------------------------
# prepare / fit-et
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prepared:
    root: Path
    manifest: object
    frame_counts: dict
    val_tail: dict

    def features(self, uid):
        return read_matrix(self.root / "features" / f"{uid}.feat")

    def pixels(self, uid):
        return read_matrix(self.root / "pixels" / f"{uid}.feat")

    def et(self, uid):
        return read_matrix(self.root / "et" / f"{uid}.feat")

    def basis(self):
        return et.load_basis(self.root / "eigentongue.etb")

    def targets(self, uid, target):
        return self.et(uid) if target == "et" else self.pixels(uid)

    def fit_rows(self, uid):
        """Row slice of a training utterance used for fitting (everything but the validation tail)."""
        return slice(0, self.frame_counts[uid] - self.val_tail.get(uid, 0))

    def val_rows(self, uid):
        n = self.frame_counts[uid]
        return slice(n - self.val_tail.get(uid, 0), n)


def _prep_stamp(cfg, manifest):
    h = hashlib.sha256()
    h.update(f"v{PREP_VERSION}|{cfg.mfcc!r}|{cfg.n_components}|{cfg.validation_fraction!r}".encode())
    h.update((manifest.root_path / "manifest.tsv").read_bytes())
    for uid in sorted(manifest.all_ids):
        for suffix in (".utr", ".wav"):
            h.update((manifest.root_path / f"{uid}{suffix}").read_bytes())
    return h.hexdigest()


def _split_table(manifest, frame_counts, fraction):
    val_tail = {}
    lines = []
    for part in ("train", "validation", "test"):
        for uid in manifest.partition(part):
            tail = validation_tail(frame_counts[uid], fraction) if part == "train" else 0
            if part == "train":
                val_tail[uid] = tail
            lines.append(f"{part}\t{uid}\t{frame_counts[uid]}\t{tail}\n")
    return val_tail, "".join(lines)


def _read_split(root):
    counts, tails = {}, {}
    for line in (root / "split.tsv").read_text(encoding="utf-8").splitlines():
        part, uid, n, tail = line.split("\t")
        counts[uid] = int(n)
        if part == "train":
            tails[uid] = int(tail)
    return counts, tails


def load_prepared(cfg):
    root = Path(cfg.out) / "prepared"
    if not (root / "split.tsv").exists():
        raise ConfigError(f"{root} has not been prepared; run 'prepare' first")
    manifest = load_corpus_manifest(cfg, generate=False)
    counts, tails = _read_split(root)
    return Prepared(root, manifest, counts, tails)


def run_fit_et(cfg, prepared=None):
    """Fit the EigenTongue basis on training frames and write ET targets for every utterance."""
    p = prepared or load_prepared(cfg)
    fit = np.vstack([p.pixels(uid)[p.fit_rows(uid)] for uid in p.manifest.train_ids])
    basis = et.fit_basis(fit, cfg.n_components)
    changed = _write_if_changed(p.root / "eigentongue.etb", et.encode_basis(basis))
    for uid in p.manifest.all_ids:
        changed |= _write_if_changed(p.root / "et" / f"{uid}.feat", encode_matrix(et.project_many(p.pixels(uid), basis)))
    return basis, changed


def run_prepare(cfg):
    """Write features and both target representations; a no-op when inputs are unchanged.

    Returns ``(Prepared, rewritten)`` where ``rewritten`` tells whether any file changed.
    """
    manifest = load_corpus_manifest(cfg)
    root = Path(cfg.out) / "prepared"
    stamp = _prep_stamp(cfg, manifest)
    stamp_path = root / "stamp.txt"
    if stamp_path.exists() and stamp_path.read_text() == stamp:
        counts, tails = _read_split(root)
        return Prepared(root, manifest, counts, tails), False

    counts = {}
    rewritten = False
    for uid in manifest.all_ids:
        u = load_utterance(manifest.path_of(uid))
        counts[uid] = u.n_frames
        feats = utterance_feature_matrix(u, cfg.mfcc)
        pix = resize_stack(u.ultrasound.frames, *FRAME_SHAPE[::-1]).reshape(u.n_frames, -1)
        rewritten |= _write_if_changed(root / "features" / f"{uid}.feat", encode_matrix(feats))
        rewritten |= _write_if_changed(root / "pixels" / f"{uid}.feat", encode_matrix(pix))
    tails, split_text = _split_table(manifest, counts, cfg.validation_fraction)
    rewritten |= _write_if_changed(root / "split.tsv", split_text.encode())
    p = Prepared(root, manifest, counts, tails)

    fit_feats = np.vstack([p.features(uid)[p.fit_rows(uid)] for uid in manifest.train_ids])
    scaler = Scaler.fit(fit_feats)
    rewritten |= _write_if_changed(root / "feature_scaler.feat", encode_matrix(np.vstack([scaler.mean, scaler.std])))
    _, changed = run_fit_et(cfg, p)
    rewritten |= changed
    provenance = {
        "basis_ids": list(manifest.train_ids),
        "scaler_ids": list(manifest.train_ids),
        "test_ids": list(manifest.test_ids),
        "fit_frames": int(fit_feats.shape[0]),
    }
    rewritten |= _write_if_changed(root / "provenance.json", (json.dumps(provenance, indent=1) + "\n").encode())
    rewritten |= _write_if_changed(stamp_path, stamp.encode())
    return p, rewritten


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def training_sets(p, target):
    """((X_fit, Y_fit), (X_val, Y_val)) from frame-level tails plus any validation utterances."""
    xs, ys, xv, yv = [], [], [], []
    for uid in p.manifest.train_ids:
        f, t = p.features(uid), p.targets(uid, target)
        xs.append(f[p.fit_rows(uid)])
        ys.append(t[p.fit_rows(uid)])
        xv.append(f[p.val_rows(uid)])
        yv.append(t[p.val_rows(uid)])
    for uid in p.manifest.validation_ids:
        xv.append(p.features(uid))
        yv.append(p.targets(uid, target))
    return (np.vstack(xs), np.vstack(ys)), (np.vstack(xv), np.vstack(yv))


def train_system(cfg, system, p=None, train_cfg=None, tag=None):
    p = p or load_prepared(cfg)
    tag = tag or system.name
    train_cfg = train_cfg or replace(cfg.train, seed=derived_seed(cfg.seed, "train", tag))
    (xs, ys), (xv, yv) = training_sets(p, system.target)
    spec = MlpSpec(xs.shape[1], system.hidden, ys.shape[1])
    model = init_model(spec, derived_seed(cfg.seed, "init", tag), system.target)
    log.info("training %s: %s, %d fit / %d validation frames", tag, spec.layer_dims, len(xs), len(xv))
    model, report = train(model, (xs, ys), (xv, yv), train_cfg,
                          log=lambda e, tl, vl: log.debug("%s epoch %d train %.5f val %.5f", tag, e, tl, vl))
    return model, report


def _train_log_text(report, p):
    lines = [f"# best_epoch\t{report.best_epoch}\n",
             f"# train_ids\t{','.join(p.manifest.train_ids)}\n",
             f"# validation_ids\t{','.join(p.manifest.validation_ids)}\n",
             "epoch\ttrain_loss\tvalidation_loss\n"]
    lines += [f"{i}\t{tl!r}\t{vl!r}\n" for i, (tl, vl) in enumerate(zip(report.train_loss, report.validation_loss))]
    return "".join(lines)


def run_train(cfg, system_name):
    system = cfg.system(system_name)
    p = load_prepared(cfg)
    try:
        model, report = train_system(cfg, system, p)
    except UltraTongueError as exc:
        raise type(exc)(f"system {system.name}: {exc}") from exc
    models = Path(cfg.out) / "models"
    models.mkdir(parents=True, exist_ok=True)
    save_model(models / f"{system.name}.mlp", model)
    (models / f"{system.name}.train.tsv").write_text(_train_log_text(report, p), encoding="utf-8")
    (models / f"{system.name}.timing.json").write_text(json.dumps({"wall_time": report.wall_time}) + "\n")
    return model, report


# ---------------------------------------------------------------------------
# prediction / evaluation
# ---------------------------------------------------------------------------

def predict_test(model, p, basis):
    """``{uid: (F, 4096) predicted raw255 rows}`` for every test utterance."""
    use_basis = basis if model.mode == "et" else None
    return {uid: predict_matrix(model, p.features(uid), use_basis) for uid in p.manifest.test_ids}


def run_predict(cfg, system_name):
    system = cfg.system(system_name)
    p = load_prepared(cfg)
    path = Path(cfg.out) / "models" / f"{system.name}.mlp"
    if not path.exists():
        raise ConfigError(f"no trained model at {path}; run 'train' first")
    preds = predict_test(load_model(path), p, p.basis())
    out = Path(cfg.out) / "predictions" / system.name
    for uid, rows in preds.items():
        _write_if_changed(out / f"{uid}.feat", encode_matrix(rows))
        if cfg.dump_frames:
            fdir = out / "frames" / uid
            fdir.mkdir(parents=True, exist_ok=True)
            for i, row in enumerate(rows):
                write_pgm(fdir / f"{i:04d}.pgm", Frame(row.reshape(FRAME_SHAPE), RAW255))
    return preds


def evaluate_predictions(preds, p, basis, system_label, cfg=None):
    """Curves per test utterance and a :class:`QualityReport` per pairing."""
    curves = {uid: metrics.utterance_curves(p.pixels(uid), preds[uid], basis) for uid in p.manifest.test_ids}
    reports = {pairing: metrics.aggregate({uid: c[pairing] for uid, c in curves.items()}, system_label, pairing)
               for pairing in metrics.PAIRINGS}
    return curves, reports


def run_evaluate(cfg, system_name):
    system = cfg.system(system_name)
    p = load_prepared(cfg)
    basis = p.basis()
    pred_dir = Path(cfg.out) / "predictions" / system.name
    if all((pred_dir / f"{uid}.feat").exists() for uid in p.manifest.test_ids):
        preds = {uid: read_matrix(pred_dir / f"{uid}.feat") for uid in p.manifest.test_ids}
    else:
        preds = run_predict(cfg, system_name)
    curves, reports = evaluate_predictions(preds, p, basis, system.name)
    rdir = Path(cfg.out) / "reports" / system.name
    rdir.mkdir(parents=True, exist_ok=True)
    metrics.write_frame_csv(rdir / "frames.csv", curves)
    rows = [(system.hidden_text, system.features_text(basis.n_components), reports[k]) for k in metrics.PAIRINGS]
    metrics.write_summary_csv(rdir / "summary.csv", rows)
    return reports


def baseline_reports(p, basis, label="mean image"):
    """Reports for predicting the training-mean image for every test frame."""
    preds = {uid: np.repeat(np.clip(basis.mean, 0, 255)[None], p.frame_counts[uid], axis=0)
             for uid in p.manifest.test_ids}
    return evaluate_predictions(preds, p, basis, label)[1]


def table_text(rows_by_pairing):
    parts = []
    for pairing, rows in rows_by_pairing.items():
        parts.append(f"[{pairing}]\n")
        parts.append(metrics.format_table(rows))
        parts.append("\n")
    return "".join(parts)


def run_table(cfg, reports_by_system):
    """Write the system-comparison table (one row per system) for every pairing."""
    p = load_prepared(cfg)
    basis = p.basis()
    rdir = Path(cfg.out) / "reports"
    rdir.mkdir(parents=True, exist_ok=True)
    by_pairing = {}
    for pairing in metrics.PAIRINGS:
        by_pairing[pairing] = [(s.hidden_text, s.features_text(basis.n_components), reports_by_system[s.name][pairing])
                               for s in cfg.systems if s.name in reports_by_system]
    (rdir / "table.txt").write_text(table_text(by_pairing), encoding="utf-8")
    metrics.write_summary_csv(rdir / "table.csv", [r for rows in by_pairing.values() for r in rows])
    base = baseline_reports(p, basis)
    base_rows = {k: [("-", "mean image", base[k])] for k in metrics.PAIRINGS}
    (rdir / "baseline.txt").write_text(table_text(base_rows), encoding="utf-8")
    return by_pairing, base


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cell_name(optimizer, batch_size, widths):
    return f"{optimizer}-b{batch_size}-{'x'.join(map(str, widths))}"


def run_sweep(cfg, grid=None):
    """Train and evaluate every grid cell; failures are recorded and the sweep continues.

    Returns a list of ``(cell, QualityReport | None, error | None)`` ranked by
    descending O_rec CW-SSIM mean (failed cells last).
    """
    grid = grid or cfg.sweep
    p = load_prepared(cfg)
    basis = p.basis()
    results = []
    for optimizer, batch, widths in grid.cells():
        name = cell_name(optimizer, batch, widths)
        system = SystemSpec(name, tuple(widths), grid.target)
        tcfg = replace(cfg.train, optimizer=optimizer, batch_size=batch,
                       seed=derived_seed(cfg.seed, "sweep", name))
        try:
            model, _ = train_system(cfg, system, p, tcfg, tag=f"sweep/{name}")
            preds = predict_test(model, p, basis)
            rep = evaluate_predictions(preds, p, basis, name)[1]["O_rec"]
            results.append((name, rep, None))
        except (UltraTongueError, FloatingPointError) as exc:
            log.warning("sweep cell %s failed: %s", name, exc)
            results.append((name, None, f"{getattr(exc, 'category', 'error')}: {exc}"))
    ranked = sorted(results, key=lambda r: (r[1] is None, -(r[1].mean[2] if r[1] is not None else 0.0), r[0]))
    sdir = Path(cfg.out) / "sweep"
    sdir.mkdir(parents=True, exist_ok=True)
    lines = ["rank\tcell\tmse_mean\tssim_mean\tcwssim_mean\tstatus\n"]
    for i, (name, rep, err) in enumerate(ranked, 1):
        if rep is None:
            lines.append(f"{i}\t{name}\t\t\t\tfailed: {err}\n")
        else:
            m = rep.mean
            lines.append(f"{i}\t{name}\t{m[0]:.4f}\t{m[1]:.4f}\t{m[2]:.4f}\tok\n")
    (sdir / "ranking.txt").write_text("".join(lines), encoding="utf-8")
    metrics.write_summary_csv(sdir / "ranking.csv",
                              [(name, grid.target, rep) for name, rep, _ in ranked if rep is not None])
    return ranked


def run_all(cfg):
    """gen -> prepare -> train/evaluate every system -> comparison table."""
    run_gen(cfg)
    run_prepare(cfg)
    reports = {}
    for s in cfg.systems:
        run_train(cfg, s.name)
        run_predict(cfg, s.name)
        reports[s.name] = run_evaluate(cfg, s.name)
    return run_table(cfg, reports)
