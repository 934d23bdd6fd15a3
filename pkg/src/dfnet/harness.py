"""Training loop, evaluation, and the three experiment sweeps.

Every artifact a run writes (loss trace, weight log, metrics CSVs) is a
pure function of the config, so reruns produce bit-identical files; wall
clock goes to report.txt only. Sweeps append one CSV row per completed
run and can resume by skipping rows already present.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, backward
from .config import write_config
from .errors import ConfigError, TrainingDiverged
from .metrics import ConfusionMatrix, MetricsReport, report
from .model import SGD, build_model, forward, load_checkpoint, save_checkpoint, training_loss
from .pnm import write_pgm
from .rfb import STRUCTURES, RFBSpec
from .synthdata import generate, load_dataset, split
from .weights import WeightConfig, WeightVector, dynamic_weights, histogram, uniform_weights

CHECKPOINT_NAME = "checkpoint.dfnk"

_BATCH_STREAM = 999983  # keeps the sampling rng clear of per-scene streams


@dataclass
class RunReport:
    loss_trace: np.ndarray
    val: MetricsReport
    test: MetricsReport
    wall_clock: float


def build_dataset(cfg):
    """Synthesize scenes, or load a PPM/PGM directory when data.dir is set."""
    if cfg.data_dir:
        dataset = load_dataset(cfg.data_dir, class_count=cfg.model.class_count)
        h, w = cfg.model.input_size
        for i, (image, _) in enumerate(dataset):
            if image.shape[1:] != (h, w):
                raise ConfigError(
                    f"{cfg.data_dir}: scene {i} is {image.shape[1:]}, model expects {(h, w)}"
                )
        return dataset
    return generate(cfg.data, cfg.num_scenes)


def _stack(pairs):
    images = np.stack([img for img, _ in pairs])
    labels = np.stack([lab for _, lab in pairs])
    return Tensor(images), labels


def _weight_plan(cfg, train_set):
    """Returns a callable labels -> WeightVector for the configured mode."""
    c = cfg.model.class_count
    if cfg.weight_mode == "uniform":
        w = uniform_weights(c)
        return lambda labels: w
    wcfg = WeightConfig(cfg.beta, cfg.alpha)
    if cfg.weight_mode == "global":
        all_labels = np.stack([lab for _, lab in train_set])
        w = dynamic_weights(histogram(all_labels, c), wcfg)
        return lambda labels: w
    return lambda labels: dynamic_weights(histogram(labels, c), wcfg)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(row + "\n")


def _snapshot(params):
    return {name: p.data.copy() for name, p in params.items()}


def _restore(params, snapshot):
    for name, p in params.items():
        p.data = snapshot[name]


def train(cfg, out_dir=None, log=None):
    """Run cfg end to end; writes artifacts to out_dir and returns a RunReport."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config(out / "config.txt", cfg)

    started = time.perf_counter()
    dataset = build_dataset(cfg)
    train_set, val_set, test_set = split(dataset, cfg.splits)
    if not train_set:
        raise ConfigError(f"training split is empty ({cfg.num_scenes} scenes, splits {cfg.splits})")

    model = build_model(cfg.model, cfg.seed)
    params = model.parameters()
    opt = SGD(params, cfg.lr, cfg.momentum)
    pick_weights = _weight_plan(cfg, train_set)
    rng = np.random.default_rng((cfg.seed, _BATCH_STREAM))
    h, w = cfg.model.input_size

    losses = []
    weight_rows = []
    snapshot = _snapshot(params)
    for it in range(cfg.iterations):
        idx = rng.integers(0, len(train_set), size=cfg.batch_size)
        images, labels = _stack([train_set[i] for i in idx])
        wv = pick_weights(labels)
        output = forward(model, images)
        if output.aux_logits is not None and output.aux_logits.shape[2:] != (h, w):
            raise ConfigError(
                f"aux branch produced {output.aux_logits.shape[2:]}, expected {(h, w)}"
            )
        loss = training_loss(output, labels, wv, cfg.model, cfg.loss)
        value = loss.item()
        if not np.isfinite(value):
            _restore(params, snapshot)
            save_checkpoint(out / CHECKPOINT_NAME, model)
            _dump_traces(out, losses, weight_rows, cfg.model.class_count)
            raise TrainingDiverged(
                f"loss became non-finite at iteration {it}; "
                f"last-good checkpoint written to {out / CHECKPOINT_NAME}"
            )
        snapshot = _snapshot(params)
        backward(loss)
        opt.step()
        opt.zero_grad()
        losses.append(value)
        weight_rows.append(wv.csv_row(it))
        if log is not None and (it % 100 == 0 or it == cfg.iterations - 1):
            log(f"iter {it:5d}  loss {value:.6f}")

    save_checkpoint(out / CHECKPOINT_NAME, model)
    _dump_traces(out, losses, weight_rows, cfg.model.class_count)

    header = MetricsReport.csv_header(cfg.model.class_count)
    val_report = evaluate(model, val_set) if val_set else None
    test_report = evaluate(model, test_set) if test_set else None
    if val_report is not None:
        _write_csv(out / "metrics_val.csv", header, [val_report.csv_row("val")])
    if test_report is not None:
        _write_csv(out / "metrics_test.csv", header, [test_report.csv_row("test")])

    wall = time.perf_counter() - started
    with open(out / "report.txt", "w", encoding="utf-8") as f:
        f.write(f"iterations: {cfg.iterations}\n")
        f.write(f"final loss: {losses[-1]!r}\n")
        if val_report is not None:
            f.write(f"val pacc: {val_report.pixel_acc!r}  mpacc: {val_report.mean_class_acc!r}  miou: {val_report.mean_iou!r}\n")
        if test_report is not None:
            f.write(f"test pacc: {test_report.pixel_acc!r}  mpacc: {test_report.mean_class_acc!r}  miou: {test_report.mean_iou!r}\n")
        f.write(f"wall clock: {wall:.3f} s\n")
    return RunReport(np.array(losses), val_report, test_report, wall)


def _dump_traces(out, losses, weight_rows, class_count):
    _write_csv(
        out / "loss_trace.csv",
        "iteration,loss",
        [f"{i},{v!r}" for i, v in enumerate(losses)],
    )
    _write_csv(
        out / "weights_log.csv",
        "iteration," + ",".join(f"w_{i}" for i in range(class_count)),
        weight_rows,
    )


def evaluate(model, dataset, batch_size=8, dump_dir=None):
    """Argmax predictions -> confusion matrix -> MetricsReport.

    With dump_dir set, writes each predicted label map as pred_%05d.pgm.
    """
    c = model.cfg.class_count
    for i, (_, labels) in enumerate(dataset):
        top = int(labels.max())
        if top >= c:
            raise ConfigError(f"scene {i} holds class {top}, model has {c} classes")
    if dump_dir is not None:
        dump_dir = Path(dump_dir)
        dump_dir.mkdir(parents=True, exist_ok=True)
    cm = ConfusionMatrix(c)
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start:start + batch_size]
        images, labels = _stack(chunk)
        probs = forward(model, images).probs.data
        pred = np.argmax(probs, axis=1)
        cm.accumulate(pred, labels)
        if dump_dir is not None:
            for j in range(len(chunk)):
                write_pgm(dump_dir / f"pred_{start + j:05d}.pgm", pred[j])
    return report(cm)


def evaluate_checkpoint(cfg, checkpoint_path, dataset, dump_dir=None):
    model = build_model(cfg.model, cfg.seed)
    load_checkpoint(checkpoint_path, model)
    return evaluate(model, dataset, dump_dir=dump_dir)


# ---------------------------------------------------------------------------
# sweeps


def _completed_rows(csv_path):
    if not csv_path.exists():
        return set()
    with open(csv_path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    return {line.split(",", 1)[0] for line in lines[1:]}


def _sweep(out_dir, csv_name, key_column, rows, resume, log=None):
    """rows: list of (label, RunConfig). Appends label,pacc,mpacc,miou per run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / csv_name
    done = _completed_rows(csv_path) if resume else set()
    if not csv_path.exists() or not resume:
        with open(csv_path, "w", encoding="utf-8") as f:
            f.write(f"{key_column},pacc,mpacc,miou\n")
    for label, run_cfg in rows:
        if label in done:
            if log is not None:
                log(f"{label}: already done, skipped")
            continue
        rep = train(run_cfg, log=log)
        m = rep.test if rep.test is not None else rep.val
        with open(csv_path, "a", encoding="utf-8") as f:
            f.write(f"{label},{m.pixel_acc!r},{m.mean_class_acc!r},{m.mean_iou!r}\n")
        if log is not None:
            log(f"{label}: pacc {m.pixel_acc:.4f}  mpacc {m.mean_class_acc:.4f}  miou {m.mean_iou:.4f}")
    return csv_path


def sweep_alpha(base, out_dir, alphas=(3, 5, 7, 10, 50), resume=False, log=None):
    """Uniform baseline plus one dynamic-weight run per alpha; 6 rows by default."""
    out = Path(out_dir)
    rows = [("uniform", replace(base, weight_mode="uniform", out_dir=str(out / "uniform")))]
    for a in alphas:
        rows.append((
            f"alpha_{a:g}",
            replace(base, weight_mode="dynamic", alpha=float(a), out_dir=str(out / f"alpha_{a:g}")),
        ))
    return _sweep(out, "sweep_alpha.csv", "alpha", rows, resume, log)


def sweep_rfb(base, out_dir, resume=False, log=None):
    """No-block baseline plus the six structures; 7 rows."""
    out = Path(out_dir)
    rows = [("none", replace(base, model=replace(base.model, rfb=None), out_dir=str(out / "none")))]
    for s in STRUCTURES:
        cfg = replace(base, model=replace(base.model, rfb=RFBSpec(s)), out_dir=str(out / s))
        rows.append((s, cfg))
    return _sweep(out, "sweep_rfb.csv", "rfb", rows, resume, log)


def sweep_aux(base, out_dir, resume=False, include_none=False, log=None):
    """One run per aux tap; an untapped control row is opt-in."""
    out = Path(out_dir)
    taps = ["after_layer2", "after_layer3"] + (["none"] if include_none else [])
    rows = [
        (tap, replace(base, model=replace(base.model, aux_tap=tap), out_dir=str(out / tap)))
        for tap in taps
    ]
    return _sweep(out, "sweep_aux.csv", "aux_tap", rows, resume, log)
