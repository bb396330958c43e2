"""Command-line interface for the full pipeline.

Typical flow: ``synth`` (or an existing dataset) -> ``preprocess`` ->
``train`` -> ``evaluate`` -> ``chart``; plus ``extract-features`` for the
classical baseline, ``ablate`` for grid studies, and the ``graph`` /
``model`` export helpers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import analysis, features, training
from .dataset import load_dataset, synthesize_dataset, write_dataset
from .graph import build_adjacency_set
from .model.network import (
    ModelConfig,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .preprocess import StreamConfig


@click.group()
def main():
    """Kinetic age estimation from skeleton sequences."""


@main.command()
@click.option("--out", type=click.Path(), required=True)
@click.option("--subjects", type=int, default=20, show_default=True)
@click.option("--age-min", type=float, default=50.0, show_default=True)
@click.option("--age-max", type=float, default=150.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mni-fraction", type=float, default=0.0, show_default=True)
def synth(out, subjects, age_min, age_max, seed, mni_fraction):
    """Generate a synthetic dataset on disk."""
    manifest = synthesize_dataset(subjects, (age_min, age_max), seed=seed,
                                  mni_fraction=mni_fraction)
    write_dataset(manifest, out)
    click.echo(f"wrote {subjects} subjects to {out}")


@main.command()
@click.option("--input", "input_dir", type=click.Path(exists=True), required=True)
@click.option("--output", type=click.Path(), required=True)
@click.option("--dims", type=click.Choice(["2d", "3d"]), default="3d", show_default=True)
@click.option("--rotate", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--streams", type=click.Choice(["j", "jb", "jbv", "jbva"]), default="j",
              show_default=True)
@click.option("--target-len", type=int, default=600, show_default=True)
def preprocess(input_dir, output, dims, rotate, streams, target_len):
    """Canonicalize a dataset into a model-ready window bundle (.npz)."""
    manifest = load_dataset(input_dir)
    bundle = training.build_windows(manifest, streams=streams.upper(), dims=dims,
                                    rotate=(rotate == "on"), target_len=target_len)
    bundle.save(output)
    click.echo(f"wrote {len(bundle.x)} windows "
               f"({bundle.x.shape[1]} channels x {bundle.x.shape[2]} frames) to {output}")


@main.group()
def graph():
    """Skeleton graph utilities."""


@graph.command("export")
@click.option("--init", "init_kind",
              type=click.Choice(["physical", "coordination", "fully_connected"]),
              default="coordination", show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--dataset", type=click.Path(exists=True), default=None,
              help="Optional dataset root; its average pose becomes the partition template.")
def graph_export(init_kind, out_dir, dataset):
    """Write the three normalized adjacency matrices as CSV."""
    template = None
    if dataset is not None:
        manifest = load_dataset(dataset)
        frames = [seg.coords.mean(axis=1) for s in manifest.subjects for seg in s.segments]
        template = np.stack(frames).mean(axis=0).T  # (V, C)
    adj = build_adjacency_set(init_kind, template)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = ("self", "centripetal", "centrifugal")
    for k, name in enumerate(names):
        np.savetxt(out / f"adjacency_{k + 1}_{name}.csv", adj.matrices[k],
                   delimiter=",", fmt="%.17g")
    click.echo(f"wrote 3 matrices to {out}")


@main.command("extract-features")
@click.option("--input", "input_dir", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
def extract_features(input_dir, out_dir):
    """Compute the 20 kinematic indexes per subject plus the Spearman table."""
    manifest = load_dataset(input_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, ages = [], []
    for subject in manifest.subjects:
        vec = features.subject_features(subject)
        rows.append((subject.subject_id, vec.as_array(), subject.corrected_age_days,
                     subject.site, subject.group))
        ages.append(subject.corrected_age_days)
    with open(out / "features.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", *features.FEATURE_NAMES, "age", "site", "group"])
        for sid, arr, age, site, group in rows:
            writer.writerow([sid, *[repr(float(v)) for v in arr], repr(float(age)),
                             site, group])
    mat = np.stack([r[1] for r in rows])
    table = features.spearman_table(mat, np.array(ages))
    with open(out / "spearman.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "rho_hands_age", "rho_feet_age"])
        for name, rh, rf in table:
            writer.writerow([name, f"{rh:.6f}", f"{rf:.6f}"])
    click.echo(f"wrote features for {len(rows)} subjects to {out}")


def _load_feature_map(path) -> tuple[dict[str, np.ndarray], int]:
    gf = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            vec = np.array([float(row[name]) for name in features.FEATURE_NAMES])
            gf[row["subject_id"]] = np.nan_to_num(vec, nan=0.0)
    return gf, len(features.FEATURE_NAMES)


def _model_config_from_flags(bundle, variant, kt, init, gf_dim, latent, dropout, dtype):
    coord_dims = 2 if bundle.dims == "2d" else 3
    cin = StreamConfig(bundle.streams).input_channels(coord_dims)
    return ModelConfig(in_channels=cin, variant=variant, kernel_t=kt, graph_init=init,
                       latent_dim=latent, dropout=dropout,
                       global_feature_dim=gf_dim, dtype=dtype)


@main.command()
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), default=None,
              help="Preprocessed window bundle from `preprocess`.")
@click.option("--input", "input_dir", type=click.Path(exists=True), default=None,
              help="Raw dataset root (preprocessed on the fly).")
@click.option("--dims", type=click.Choice(["2d", "3d"]), default="3d", show_default=True)
@click.option("--rotate", type=click.Choice(["on", "off"]), default="on", show_default=True)
@click.option("--streams", type=click.Choice(["j", "jb", "jbv", "jbva"]), default="j",
              show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file with model/training overrides.")
@click.option("--folds", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--variant", type=click.Choice(["stgcn", "agcn", "aagcn"]), default="aagcn",
              show_default=True)
@click.option("--kt", type=int, default=13, show_default=True)
@click.option("--init", "init_kind",
              type=click.Choice(["physical", "coordination", "fully_connected"]),
              default="coordination", show_default=True)
@click.option("--latent", type=int, default=256, show_default=True)
@click.option("--dropout", type=float, default=0.5, show_default=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--optimizer", type=click.Choice(sorted(training.OPTIMIZERS)),
              default="momentum_sgd", show_default=True)
@click.option("--dtype", type=click.Choice(["float32", "float64"]), default="float32",
              show_default=True)
@click.option("--features-csv", type=click.Path(exists=True), default=None,
              help="features.csv to concatenate as global head features.")
def train(bundle_path, input_dir, dims, rotate, streams, out_dir, config_path, folds,
          seed, variant, kt, init_kind, latent, dropout, epochs, batch_size, lr,
          optimizer, dtype, features_csv):
    """Train one model per fold with subject-wise cross-validation."""
    if (bundle_path is None) == (input_dir is None):
        raise click.UsageError("provide exactly one of --bundle or --input")
    if bundle_path is not None:
        bundle = training.WindowBundle.load(bundle_path)
    else:
        manifest = load_dataset(input_dir)
        bundle = training.build_windows(manifest, streams=streams.upper(), dims=dims,
                                        rotate=(rotate == "on"))

    gfeatures, gf_dim = (None, 0)
    if features_csv is not None:
        gfeatures, gf_dim = _load_feature_map(features_csv)

    model_cfg = _model_config_from_flags(bundle, variant, kt, init_kind, gf_dim,
                                         latent, dropout, dtype)
    train_cfg = training.TrainConfig(epochs=epochs, batch_size=batch_size,
                                     learning_rate=lr, optimizer=optimizer, seed=seed)
    if config_path is not None:
        with open(config_path) as fh:
            overrides = json.load(fh)
        model_cfg = replace(model_cfg, **overrides.get("model", {}))
        train_cfg = replace(train_cfg, **overrides.get("train", {}))

    typical = [s for s, g in zip(bundle.subject_ids, bundle.groups) if g == "Typical"]
    plan_manifest_ids = set(typical)
    plan = training.make_folds_from_ids(sorted(plan_manifest_ids), k=folds, seed=seed)

    adjacency = build_adjacency_set(model_cfg.graph_init)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    histories = {}
    for fold in range(plan.k):
        val_subjects = plan.fold_subjects(fold)
        train_subjects = sorted(set(plan.assignment) - set(val_subjects))
        fold_cfg = replace(train_cfg, seed=train_cfg.seed + fold)
        net, hist = training.train_fold(bundle, train_subjects, val_subjects,
                                        model_cfg, fold_cfg, gfeatures, adjacency)
        save_checkpoint(net, out / f"fold_{fold}.npz")
        histories[fold] = {"best_epoch": hist.best_epoch,
                           "best_val_rmse": hist.best_val_rmse,
                           "val_rmse": hist.val_rmse}
        click.echo(f"fold {fold}: best val RMSE {hist.best_val_rmse:.2f} days "
                   f"(epoch {hist.best_epoch})")
    with open(out / "folds.json", "w") as fh:
        json.dump({"k": plan.k, "seed": plan.seed, "assignment": plan.assignment,
                   "history": histories}, fh, indent=2)
    click.echo(f"wrote {plan.k} checkpoints to {out}")


@main.command()
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoints", "ckpt_dir", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--features-csv", type=click.Path(exists=True), default=None)
def evaluate(bundle_path, ckpt_dir, out_dir, features_csv):
    """Emit metrics.csv and predictions.csv from trained fold checkpoints.

    Held-out subjects are predicted by their fold's model; subjects outside
    the fold plan (e.g. the MNI cohort) get bagged predictions from all fold
    models, marked fold=-1.
    """
    bundle = training.WindowBundle.load(bundle_path)
    ckpt_root = Path(ckpt_dir)
    with open(ckpt_root / "folds.json") as fh:
        plan_doc = json.load(fh)
    plan = training.FoldPlan(k=plan_doc["k"], assignment=plan_doc["assignment"],
                             seed=plan_doc["seed"])
    gfeatures = None
    if features_csv is not None:
        gfeatures, _ = _load_feature_map(features_csv)

    nets = [load_checkpoint(ckpt_root / f"fold_{fold}.npz") for fold in range(plan.k)]
    sub_index = {sid: i for i, sid in enumerate(bundle.subject_ids)}

    predictions = []
    per_fold = []
    for fold in range(plan.k):
        val_subjects = plan.fold_subjects(fold)
        preds = training.predict_subject_ages(nets[fold], bundle, val_subjects, gfeatures)
        ages = np.array([bundle.ages[sub_index[s]] for s in val_subjects])
        per_fold.append(training.compute_metrics(preds, ages))
        predictions.extend((s, fold, float(a), float(p))
                           for s, a, p in zip(val_subjects, ages, preds))
    for sid in bundle.subject_ids:
        if sid in plan.assignment:
            continue
        widx = bundle.subject_windows(sid)
        gf = None
        if gfeatures is not None:
            gf = np.repeat(gfeatures[sid][None], len(widx), axis=0)
        pred = training.bagged_predict(nets, bundle.x[widx], gf)
        predictions.append((sid, -1, float(bundle.ages[sub_index[sid]]), pred))

    report = training.EvalReport.from_folds(per_fold, predictions)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", *training.METRIC_KEYS])
        for fold, m in enumerate(per_fold):
            writer.writerow([fold, *[repr(getattr(m, k)) for k in training.METRIC_KEYS]])
        writer.writerow(["mean", *[repr(report.aggregate_mean[k]) for k in training.METRIC_KEYS]])
        writer.writerow(["sd", *[repr(report.aggregate_sd[k]) for k in training.METRIC_KEYS]])
    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "fold", "actual", "predicted"])
        for sid, fold, actual, pred in sorted(predictions):
            writer.writerow([sid, fold, repr(actual), repr(pred)])
    click.echo(f"aggregate RMSE {report.aggregate_mean['rmse']:.2f} "
               f"+/- {report.aggregate_sd['rmse']:.2f} days")


@main.command()
@click.option("--input", "input_dir", type=click.Path(exists=True), required=True)
@click.option("--grid", "grid_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--folds", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--latent", type=int, default=256, show_default=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--dtype", type=click.Choice(["float32", "float64"]), default="float32")
def ablate(input_dir, grid_path, out_path, folds, seed, latent, epochs, lr, dtype):
    """Cross-validate a grid of configurations; one CSV row per cell."""
    manifest = load_dataset(input_dir)
    with open(grid_path) as fh:
        grid = json.load(fh)
    model_cfg = ModelConfig(in_channels=3, latent_dim=latent, dtype=dtype)
    train_cfg = training.TrainConfig(epochs=epochs, learning_rate=lr, seed=seed)
    rows = training.run_ablation(manifest, grid, folds, model_cfg, train_cfg, seed=seed)
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} ablation rows to {out_path}")


@main.group()
def model():
    """Model inspection utilities."""


@model.command("export-graphs")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--sample", type=int, default=0, show_default=True,
              help="Window index whose per-sample graphs are exported.")
def model_export_graphs(checkpoint, bundle_path, out_dir, sample):
    """Dump learned global graphs B_k and one sample's C_k graphs as CSV."""
    net = load_checkpoint(checkpoint)
    bundle = training.WindowBundle.load(bundle_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x = bundle.x[sample : sample + 1].astype(net.config.np_dtype())
    from .model.network import ForwardTrace

    trace = ForwardTrace()
    net.forward(x, training=False, trace=trace)
    exported = 0
    for bi, block in enumerate(net.blocks):
        gcn = block.gcn
        if not hasattr(gcn, "bmat"):
            continue
        for k in range(gcn.k_v):
            np.savetxt(out / f"block{bi}_B{k + 1}.csv", gcn.bmat.data[k],
                       delimiter=",", fmt="%.17g")
            exported += 1
    for bi, cks in enumerate(trace.sample_graphs):
        for k in range(cks.shape[1]):
            np.savetxt(out / f"block{bi}_C{k + 1}_sample{sample}.csv", cks[0, k],
                       delimiter=",", fmt="%.17g")
            exported += 1
    click.echo(f"wrote {exported} graph matrices to {out}")


@model.command("count-params")
@click.option("--variant", type=click.Choice(["stgcn", "agcn", "aagcn"]), default="aagcn")
@click.option("--kt", type=int, default=13)
@click.option("--in-channels", type=int, default=3)
@click.option("--latent", type=int, default=256)
@click.option("--global-features", type=int, default=0)
def model_count_params(variant, kt, in_channels, latent, global_features):
    """Print the exact learnable-parameter count for a configuration."""
    cfg = ModelConfig(in_channels=in_channels, variant=variant, kernel_t=kt,
                      latent_dim=latent, global_feature_dim=global_features)
    click.echo(count_parameters(cfg))


@main.command()
@click.option("--predictions", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--out-dir", type=click.Path(), required=True)
@click.option("--dataset", type=click.Path(exists=True), default=None,
              help="Dataset root used to attach cohort groups (default: all Typical).")
@click.option("--min-age", type=float, default=80.0, show_default=True)
@click.option("--svg", is_flag=True, help="Also render ka_chart.svg (needs matplotlib).")
def chart(pred_path, out_dir, dataset, min_age, svg):
    """Build the KA growth chart, KA-gaps, and the cohort comparison."""
    rows = []
    with open(pred_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            rows.append((row["subject_id"], float(row["actual"]), float(row["predicted"])))
    groups = {sid: "Typical" for sid, _, _ in rows}
    if dataset is not None:
        manifest = load_dataset(dataset)
        groups.update({s.subject_id: s.group for s in manifest.subjects})

    ages = np.array([a for _, a, _ in rows])
    ka = analysis.ka_index(np.array([p for _, _, p in rows]))
    labels = [groups.get(sid, "Typical") for sid, _, _ in rows]
    typical_mask = np.array([g == "Typical" for g in labels])
    if typical_mask.sum() < 8:
        raise click.ClickException("need at least 8 typically developing subjects to fit the chart")
    chart_fit = analysis.fit_sigmoid(ages[typical_mask], ka[typical_mask])
    gaps = analysis.ka_gap(ka, ages, chart_fit)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ka_chart.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "age", "ka", "group", "residual"])
        for (sid, age, _), k, g, gap in zip(rows, ka, labels, gaps):
            writer.writerow([sid, repr(age), repr(float(k)), g, repr(float(gap))])
    with open(out / "sigmoid.json", "w") as fh:
        json.dump(chart_fit.params(), fh, indent=2)

    mni_mask = ~typical_mask
    test_doc: dict
    if mni_mask.any():
        try:
            cmp_result = analysis.compare_groups(
                gaps[typical_mask], gaps[mni_mask],
                ages_typical=ages[typical_mask], ages_mni=ages[mni_mask],
                min_age=min_age)
            test_doc = cmp_result.as_dict()
        except analysis.SingularityError as exc:
            test_doc = {"error": str(exc)}
    else:
        test_doc = {"error": "no MNI subjects in predictions"}
    with open(out / "group_test.json", "w") as fh:
        json.dump(test_doc, fh, indent=2)

    if svg:
        _render_chart_svg(out / "ka_chart.svg", ages, ka, labels, chart_fit)
    click.echo(f"chart written to {out} "
               f"(sigmoid x0={chart_fit.x0:.1f} d, s={chart_fit.s:.1f})")


def _render_chart_svg(path, ages, ka, labels, chart_fit):
    try:
        import matplotlib
        matplotlib.use("svg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise click.ClickException(f"matplotlib is required for --svg: {exc}")
    fig, ax = plt.subplots(figsize=(7, 5))
    labels = np.asarray(labels)
    for group, color in (("Typical", "tab:blue"), ("MNI", "tab:orange")):
        mask = labels == group
        if mask.any():
            ax.scatter(np.asarray(ages)[mask], np.asarray(ka)[mask], s=18, c=color,
                       label=group, alpha=0.8)
    grid_ages = np.linspace(min(ages), max(ages), 200)
    ax.plot(grid_ages, chart_fit.predict(grid_ages), "r-", label="growth chart")
    ax.set_xlabel("corrected age (days)")
    ax.set_ylabel("kinetic age index")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)


if __name__ == "__main__":
    main()
